//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tdm_core::audit::CentralAuditStore;
use tdm_core::decisions::{parse_request_script, DecisionLog, Runtime};
use tdm_core::dsl::parse_model;
use tdm_core::model::TrustDomainModel;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn load(name: &str) -> TrustDomainModel {
    parse_model(&fixture(name)).unwrap_or_else(|d| panic!("{name}: {d:?}"))
}

/// Runs a request script with the model's first pdp, pep and audit agent.
pub fn run_script(
    model: TrustDomainModel,
    script: &str,
) -> (TrustDomainModel, DecisionLog, CentralAuditStore) {
    let first = |kw: &str| {
        model
            .controls
            .values()
            .find(|c| c.kind.keyword() == kw)
            .map(|c| c.id.clone())
            .expect(kw)
    };
    let (pdp, pep, aud) = (first("pdp"), first("pep"), first("audit"));
    let mut rt = Runtime::new(model, &aud).expect("runtime");
    for req in parse_request_script(script).expect("script") {
        rt.request(req, &pdp, &pep).expect("request");
    }
    rt.into_parts()
}

pub fn health_run() -> (TrustDomainModel, DecisionLog, CentralAuditStore) {
    run_script(load("healthcare.tdm"), &fixture("healthcare-requests.txt"))
}

pub fn confichair_run() -> (TrustDomainModel, DecisionLog, CentralAuditStore) {
    run_script(load("confichair.tdm"), &fixture("confichair-requests.txt"))
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &'a [String]) -> &'a String {
    items.choose(rng).expect("non-empty")
}

fn subset(rng: &mut ChaCha8Rng, items: &[String]) -> Vec<String> {
    items
        .iter()
        .filter(|_| rng.gen_bool(0.4))
        .cloned()
        .collect()
}

/// A structurally valid `.tdm` text with declarations in shuffled order.
pub fn random_model_text(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut units: Vec<String> = Vec::new();
    let domains: Vec<String> = (0..rng.gen_range(1..=4))
        .map(|i| format!("Dom-{i}"))
        .collect();
    let roles: Vec<String> = (0..rng.gen_range(1..=4))
        .map(|i| format!("Role{i}"))
        .collect();
    let central = rng.gen_bool(0.5).then(|| format!("Vault.{}", seed % 97));

    let mut header = format!("model Gen{seed}");
    if let Some(c) = &central {
        header.push_str(&format!(" central-store {c}"));
    }
    units.extend(domains.iter().map(|d| format!("domain {d}")));
    units.extend(roles.iter().map(|r| format!("role {r}")));

    let types = [
        "Person",
        "Organization",
        "System",
        "Process",
        "Resource",
        "Agent",
    ];
    let entities: Vec<String> = (0..rng.gen_range(0..6))
        .map(|i| format!("ent_{i}"))
        .collect();
    for e in &entities {
        let mut line = format!("entity {e} : {}", types.choose(&mut rng).unwrap());
        let ins = subset(&mut rng, &domains);
        if !ins.is_empty() {
            line.push_str(&format!(" in {}", ins.join(",")));
        }
        let rs = subset(&mut rng, &roles);
        if !rs.is_empty() {
            line.push_str(&format!(" role {}", rs.join(",")));
        }
        units.push(line);
    }

    let data: Vec<String> = (0..rng.gen_range(1..6))
        .map(|i| format!("data.{i}"))
        .collect();
    for d in &data {
        units.push(format!("asset {d} : Data owner {}", pick(&mut rng, &roles)));
    }
    let resources: Vec<String> = (0..rng.gen_range(0..3))
        .map(|i| format!("res-{i}"))
        .collect();
    for r in &resources {
        let mut line = format!("asset {r} : Resource owner {}", pick(&mut rng, &roles));
        if rng.gen_bool(0.5) {
            line.push_str(&format!(
                " provisioned-by Mgr state s{}",
                rng.gen_range(0..5)
            ));
        }
        units.push(line);
    }
    for i in 0..rng.gen_range(0..3) {
        let mut line = format!("asset svc{i} : Service owner {}", pick(&mut rng, &roles));
        if !resources.is_empty() && rng.gen_bool(0.5) {
            line.push_str(&format!(" provided-by {}", pick(&mut rng, &resources)));
        }
        units.push(line);
    }

    units.push(format!(
        "agent Mgr owner {} kind management",
        pick(&mut rng, &roles)
    ));
    for i in 0..rng.gen_range(0..3) {
        let mut line = format!("agent bot{i} owner {}", pick(&mut rng, &roles));
        if rng.gen_bool(0.5) {
            line.push_str(&format!(" for {}", pick(&mut rng, &roles)));
        }
        units.push(line);
    }

    units.push(format!("control Pdp : pdp in {}", pick(&mut rng, &domains)));
    units.push(format!("control Pep : pep in {}", pick(&mut rng, &domains)));
    if let Some(c) = &central {
        units.push(format!(
            "control Aud : audit in {} central-store {c}",
            pick(&mut rng, &domains)
        ));
    }
    if rng.gen_bool(0.5) {
        units.push(format!(
            "control Mg : management in {}",
            pick(&mut rng, &domains)
        ));
    }
    let stores: Vec<String> = (0..rng.gen_range(0..3))
        .map(|i| format!("Store{i}"))
        .collect();
    for s in &stores {
        units.push(format!("store {s} in {}", pick(&mut rng, &domains)));
    }

    let policies: Vec<String> = (0..rng.gen_range(0..5))
        .map(|i| format!("Pol{i}"))
        .collect();
    let mut endpoints = data.clone();
    endpoints.extend(policies.iter().cloned());
    let mut subjects: Vec<String> = roles.clone();
    subjects.extend(entities.iter().cloned());
    subjects.push("*".into());
    let mut published_to = std::collections::BTreeSet::new();
    for (i, p) in policies.iter().enumerate() {
        let mut text = format!(
            "policy {p} by {} scope {}",
            pick(&mut rng, &roles),
            pick(&mut rng, &domains)
        );
        if rng.gen_bool(0.2) {
            text.push_str(" delivery");
        }
        if rng.gen_bool(0.3) {
            text.push_str(&format!(" tag T{}-x", rng.gen_range(0..9)));
        }
        if i > 0 && rng.gen_bool(0.3) {
            text.push_str(&format!(" equivalent-to {}", policies[rng.gen_range(0..i)]));
        }
        text.push_str(" {\n");
        for _ in 0..rng.gen_range(0..5) {
            if rng.gen_bool(0.4) {
                let arrow = if rng.gen_bool(0.5) { "->" } else { "<->" };
                text.push_str(&format!(
                    "  flow {} {arrow} {}\n",
                    pick(&mut rng, &endpoints),
                    pick(&mut rng, &endpoints)
                ));
            } else {
                let effect = ["permit", "deny", "oblige"].choose(&mut rng).unwrap();
                let kind = ["read", "write", "use-it"].choose(&mut rng).unwrap();
                let target = if rng.gen_bool(0.3) {
                    "*".to_string()
                } else {
                    pick(&mut rng, &data).clone()
                };
                text.push_str(&format!(
                    "  {effect} {} on {kind} target {target}",
                    pick(&mut rng, &subjects)
                ));
                if rng.gen_bool(0.3) {
                    let neg = if rng.gen_bool(0.5) { "!" } else { "" };
                    text.push_str(&format!(" when {neg}flag{}", rng.gen_range(0..3)));
                }
                if rng.gen_bool(0.2) {
                    text.push_str(&format!(" enables st{}", rng.gen_range(0..3)));
                }
                text.push('\n');
            }
        }
        text.push('}');
        if rng.gen_bool(0.3) {
            text.push_str(" published-by Mgr");
            if !stores.is_empty() {
                let s = pick(&mut rng, &stores).clone();
                text.push_str(&format!(" to {s}"));
                published_to.insert(s);
            }
        }
        units.push(text);
    }
    for s in published_to {
        if rng.gen_bool(0.7) {
            units.push(format!("published-policy-to Mgr {s}"));
        }
    }

    units.shuffle(&mut rng);
    let mut out = header;
    out.push('\n');
    for u in units {
        out.push_str(&u);
        out.push('\n');
    }
    out
}

/// A model together with the logs of one run over it.
#[derive(Debug, Clone)]
pub struct Run {
    pub model: TrustDomainModel,
    pub log: DecisionLog,
    pub store: CentralAuditStore,
}

pub fn clean_health_run() -> Run {
    let (model, log, store) = health_run();
    Run { model, log, store }
}

fn decision_on(run: &mut Run, requester: &str, target: &str) -> usize {
    run.log
        .decisions
        .iter()
        .position(|d| {
            d.request.requester_entity_id == requester && d.request.target_asset_id == target
        })
        .expect("decision in the health run")
}

/// Axiom id and a mutation that violates it.
pub type Fault = (&'static str, fn(&mut Run));

/// One mutation per axiom, each injecting a single fault into the clean health run.
pub fn axiom_faults() -> Vec<Fault> {
    vec![
        ("AX1", |r| {
            r.model
                .policies
                .get_mut("P-demo")
                .unwrap()
                .published_by
                .insert("SS3.Admin".into());
        }),
        ("AX2", |r| {
            r.model
                .published_policy_to
                .insert(("SS2.Admin".into(), "SS3-Internal-Store".into()));
        }),
        ("AX3", |r| {
            for d in &mut r.log.decisions {
                d.consumed_policy_ids.remove("P-monitor-ms2");
            }
        }),
        ("AX4", |r| {
            r.model
                .roles
                .get_mut("SS2")
                .unwrap()
                .established_policy_ids
                .insert("P-stats".into());
        }),
        ("AX5", |r| {
            r.model
                .policies
                .get_mut("P-findings")
                .unwrap()
                .scope_domain_ids
                .insert("MS1-Monitoring".into());
        }),
        ("AX6", |r| {
            r.model
                .entities
                .get_mut("MS1.Service")
                .unwrap()
                .entity_types
                .insert(tdm_core::model::EntityType::Person);
        }),
        ("AX7", |r| {
            r.model
                .roles
                .get_mut("SS2")
                .unwrap()
                .owned_asset_ids
                .insert("MS1.Statistics".into());
        }),
        ("AX8", |r| {
            r.model
                .roles
                .get_mut("SS2")
                .unwrap()
                .owned_agent_ids
                .insert("MS1.Collector".into());
        }),
        ("AX9", |r| {
            r.log.messages[0].receiver_ids.clear();
        }),
        ("AX10", |r| {
            r.model
                .assets
                .get_mut("SS3.RecordsServer")
                .unwrap()
                .provisioned_by = Some("MS1.Collector".into());
        }),
        ("AX11", |r| {
            let i = decision_on(r, "SS1.Service", "SS3.Demographics");
            let d = &mut r.log.decisions[i];
            d.influenced_policy_ids.insert("P-stats".into());
            d.consumed_policy_ids.insert("P-stats".into());
        }),
        ("AX12", |r| {
            let mut ghost = r.log.actions[0].clone();
            ghost.id = "A-unaudited".into();
            ghost.seq = 99;
            r.log.actions.push(ghost);
        }),
    ]
}
