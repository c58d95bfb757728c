use std::collections::BTreeSet;
use std::path::PathBuf;

use tdm_cli::{run, EXIT_FINDINGS, EXIT_OK, EXIT_USAGE};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .display()
        .to_string()
}

struct Outcome {
    code: i32,
    out: String,
    err: String,
}

fn tdm(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("tdm").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Outcome {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn records(out: &str) -> Vec<serde_json::Value> {
    out.lines()
        .map(|l| serde_json::from_str(l).expect("one JSON record per line"))
        .collect()
}

#[test]
fn validate_clean_fixture() {
    let r = tdm(&["validate", &fixture("healthcare.tdm")]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("0 violations"));
    assert!(r.out.contains("9 axioms checked"));
    assert!(r.err.contains("AX12 not checked"));
}

#[test]
fn validate_with_requests_checks_all_axioms() {
    let r = tdm(&[
        "validate",
        &fixture("confichair.tdm"),
        "--requests",
        &fixture("confichair-requests.txt"),
    ]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("12 axioms checked, 0 violations"));
}

#[test]
fn reach_golden() {
    let hc = fixture("healthcare.tdm");
    let r = tdm(&["reach", &hc, "SS3.Births", "SS3.Demographics"]);
    assert_eq!(r.code, EXIT_FINDINGS);
    assert_eq!(r.out.trim(), "unreachable");
    let r = tdm(&["reach", &hc, "SS3.Demographics", "SS3.Births"]);
    assert_eq!(r.code, EXIT_OK);
    assert_eq!(r.out.trim(), "SS3.Demographics -> SS3.Births (length 1)");
    let r = tdm(&["reach", &hc, "SS3.Births", "Nowhere"]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("Nowhere"));
}

#[test]
fn domains_golden() {
    let r = tdm(&[
        "--format",
        "structured",
        "domains",
        &fixture("confichair.tdm"),
    ]);
    assert_eq!(r.code, EXIT_OK);
    let names: Vec<String> = records(&r.out)
        .iter()
        .map(|v| v["name"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(
        names,
        vec![
            "Author-ConfiChairSystem-ConferenceChair",
            "Author-ConfiChairSystem-Reviewer",
            "ConferenceChair-ConfiChairSystem-ConferenceSystemAdministrator",
            "ConferenceChair-ConfiChairSystem-Reviewer",
        ]
    );
    let text = tdm(&["domains", &fixture("confichair.tdm")]);
    for n in &names {
        assert!(text.out.contains(n.as_str()));
    }
}

#[test]
fn checkflow_text_and_structured_agree() {
    let args = [fixture("healthcare.tdm"), fixture("healthcare-flows.log")];
    let text = tdm(&["checkflow", &args[0], &args[1]]);
    assert_eq!(text.code, EXIT_FINDINGS);
    let text_seqs: BTreeSet<u64> = text
        .out
        .lines()
        .filter_map(|l| l.strip_prefix("seq ")?.split(':').next()?.parse().ok())
        .collect();
    let structured = tdm(&["checkflow", &args[0], &args[1], "--format", "structured"]);
    assert_eq!(structured.code, EXIT_FINDINGS);
    let json_seqs: BTreeSet<u64> = records(&structured.out)
        .iter()
        .filter(|r| r["record"] == "flow-violation")
        .map(|r| r["seq"].as_u64().unwrap())
        .collect();
    assert_eq!(text_seqs, BTreeSet::from([6, 7]));
    assert_eq!(text_seqs, json_seqs);
}

#[test]
fn validate_text_and_structured_agree() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("faulty.tdm");
    let mut text = std::fs::read_to_string(fixture("healthcare.tdm")).unwrap();
    text.push_str("published-policy-to SS2.Admin SS3-Internal-Store\n");
    text.push_str("agent Temp owner SS2\nasset SS2.Scratch : Resource owner SS2 provisioned-by Temp state x\n");
    std::fs::write(&path, text).unwrap();
    let path = path.display().to_string();

    let t = tdm(&["validate", &path]);
    assert_eq!(t.code, EXIT_FINDINGS);
    let text_axioms: Vec<&str> = t
        .out
        .lines()
        .filter(|l| l.starts_with("AX"))
        .map(|l| l.split(' ').next().unwrap())
        .collect();
    let s = tdm(&["validate", &path, "--format", "structured"]);
    assert_eq!(s.code, EXIT_FINDINGS);
    let json_axioms: Vec<String> = records(&s.out)
        .iter()
        .filter(|r| r["record"] == "violation")
        .map(|r| r["axiom"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(text_axioms, vec!["AX2", "AX10"]);
    assert_eq!(text_axioms, json_axioms);
}

#[test]
fn simulate_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("cc.audit");
    let store_s = store.display().to_string();
    let r = tdm(&[
        "simulate",
        &fixture("confichair.tdm"),
        &fixture("confichair-requests.txt"),
        "--audit-out",
        &store_s,
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r
        .out
        .contains("D14 Denial Sam read-content Papers [P-secrecy] blocked"));

    let v = tdm(&["audit", "verify", &store_s]);
    assert_eq!(v.code, EXIT_OK);
    assert!(v.out.starts_with("chain ok"));

    let mut bytes = std::fs::read(&store).unwrap();
    let pos = bytes.len() - 10;
    bytes[pos] ^= 0x01;
    std::fs::write(&store, bytes).unwrap();
    let v = tdm(&["--format", "structured", "audit", "verify", &store_s]);
    assert_eq!(v.code, EXIT_FINDINGS);
    assert_eq!(records(&v.out)[0]["ok"], false);

    assert_eq!(
        tdm(&[
            "audit",
            "verify",
            &dir.path().join("missing").display().to_string()
        ])
        .code,
        EXIT_USAGE
    );
}

#[test]
fn simulate_reports_failed_requests() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("req.txt");
    std::fs::write(
        &script,
        "request Nobody read Papers\nrequest Alice upload Papers\n",
    )
    .unwrap();
    let r = tdm(&[
        "simulate",
        &fixture("confichair.tdm"),
        &script.display().to_string(),
    ]);
    assert_eq!(r.code, EXIT_FINDINGS);
    assert!(r.out.starts_with("error Nobody read Papers"));
    assert!(r.out.contains("1 decisions, 1 actions"));

    std::fs::write(&script, "request Alice upload\n").unwrap();
    let r = tdm(&[
        "simulate",
        &fixture("confichair.tdm"),
        &script.display().to_string(),
    ]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("line 1"));
}

#[test]
fn fmt_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["healthcare.tdm", "confichair.tdm"] {
        let once = tdm(&["fmt", &fixture(name)]);
        assert_eq!(once.code, EXIT_OK);
        let path = dir.path().join(name);
        std::fs::write(&path, &once.out).unwrap();
        let twice = tdm(&["fmt", &path.display().to_string()]);
        assert_eq!(once.out, twice.out);
    }
}

#[test]
fn graph_is_dot() {
    let r = tdm(&["graph", &fixture("healthcare.tdm")]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.starts_with("digraph flows {"));
    assert!(r
        .out
        .contains("\"SS3.Demographics\" -> \"SS3.Births\" [label=\"P-internal\"];"));
}

#[test]
fn usage_and_parse_errors() {
    assert_eq!(tdm(&[]).code, EXIT_USAGE);
    assert_eq!(tdm(&["frobnicate"]).code, EXIT_USAGE);
    assert_eq!(
        tdm(&["validate", &fixture("healthcare.tdm"), "--bogus"]).code,
        EXIT_USAGE
    );
    assert_eq!(
        tdm(&["--format", "xml", "validate", &fixture("healthcare.tdm")]).code,
        EXIT_USAGE
    );
    assert_eq!(tdm(&["validate", "/no/such/file.tdm"]).code, EXIT_USAGE);
    let help = tdm(&["--help"]);
    assert_eq!(help.code, EXIT_OK);
    assert!(help.out.contains("simulate"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tdm");
    std::fs::write(&bad, "domain D\npolicy P by Nobody scope D {\n}\n").unwrap();
    let r = tdm(&["validate", &bad.display().to_string()]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("2:1: error:"), "{}", r.err);
    assert!(r.err.contains("Nobody"));
}
