mod common;

use proptest::prelude::*;
use tdm_core::dsl::{parse_model, serialize};

fn assert_fixpoint(text: &str) {
    let first = parse_model(text).unwrap_or_else(|d| panic!("{d:?}\n{text}"));
    let printed = serialize(&first);
    let second = parse_model(&printed).unwrap_or_else(|d| panic!("{d:?}\n{printed}"));
    assert_eq!(first, second, "{printed}");
    assert_eq!(serialize(&second), printed);
}

#[test]
fn fixtures_are_fixpoints() {
    assert_fixpoint(&common::fixture("healthcare.tdm"));
    assert_fixpoint(&common::fixture("confichair.tdm"));
}

#[test]
fn generated_text_parses() {
    for seed in 0..50 {
        let text = common::random_model_text(seed);
        parse_model(&text).unwrap_or_else(|d| panic!("seed {seed}: {d:?}\n{text}"));
    }
}

proptest! {
    #[test]
    fn random_models_are_fixpoints(seed in any::<u64>()) {
        assert_fixpoint(&common::random_model_text(seed));
    }

    #[test]
    fn declaration_order_is_irrelevant(seed in any::<u64>()) {
        let text = common::random_model_text(seed);
        let mut lines: Vec<&str> = text.lines().collect();
        // single-line declarations only; policy bodies stay intact
        let (singles, rest): (Vec<&str>, Vec<&str>) = lines
            .drain(1..)
            .partition(|l| !l.starts_with("policy") && !l.starts_with("  ") && !l.starts_with('}'));
        let mut reordered = vec![text.lines().next().unwrap().to_string()];
        reordered.extend(singles.iter().rev().map(|s| s.to_string()));
        reordered.extend(rest.iter().map(|s| s.to_string()));
        let a = parse_model(&text).unwrap();
        let b = parse_model(&(reordered.join("\n") + "\n")).unwrap();
        prop_assert_eq!(a, b);
    }
}
