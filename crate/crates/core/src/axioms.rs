//! The fixed catalog of relational axioms and a validator over models and run logs.
//!
//! AX3 and AX11 need a decision log and AX12 needs the audit store as well;
//! without them those axioms are reported as unchecked. AX9 ranges over the
//! messages in the decision log and holds vacuously when there is none.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::CentralAuditStore;
use crate::decisions::{scope_covers, DecisionLog};
use crate::model::{AssetType, ControlKind, Id, TrustDomainModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AxiomId {
    AX1,
    AX2,
    AX3,
    AX4,
    AX5,
    AX6,
    AX7,
    AX8,
    AX9,
    AX10,
    AX11,
    AX12,
}

impl AxiomId {
    pub const ALL: [AxiomId; 12] = [
        AxiomId::AX1,
        AxiomId::AX2,
        AxiomId::AX3,
        AxiomId::AX4,
        AxiomId::AX5,
        AxiomId::AX6,
        AxiomId::AX7,
        AxiomId::AX8,
        AxiomId::AX9,
        AxiomId::AX10,
        AxiomId::AX11,
        AxiomId::AX12,
    ];

    pub fn axiom(self) -> Axiom {
        let (name, description, citation) = match self {
            AxiomId::AX1 => (
                "unique-publisher",
                "at most one management agent publishes any policy",
                "(d1, p) ∈ publishes ∧ (d2, p) ∈ publishes ⇔ d2 = d1",
            ),
            AxiomId::AX2 => (
                "published-store consistency",
                "an agent is linked to a policy store only through a policy it published there",
                "(m, s) ∈ publishedPolicyTo ⇔ (∃ p : Policy • publishedTo p = s ∧ (m, p) ∈ publishes)",
            ),
            AxiomId::AX3 => (
                "influence-provenance",
                "every policy influencing a decision was consumed by the decision point that created it",
                "(p, x) ∈ influenced ⇒ (∃ y : PolicyDecisionPoint • (y, p) ∈ consumes ∧ (y, x) ∈ creates",
            ),
            AxiomId::AX4 => ("single-establisher", "each policy is established by exactly one role", "any given policy can only be established by one role"),
            AxiomId::AX5 => ("single-scope", "each policy scopes exactly one domain", "scopeOf : Policy → Domain"),
            AxiomId::AX6 => ("single-entity-type", "each domain entity has exactly one type", "has exactly one of the following types"),
            AxiomId::AX7 => ("single-asset-owner", "each asset is owned by exactly one role", "individual assets and agents must be owned by exactly one Role"),
            AxiomId::AX8 => ("single-agent-owner", "each agent is owned by exactly one role", "individual assets and agents must be owned by exactly one Role"),
            AxiomId::AX9 => ("message well-formedness", "a message has one sender and at least one receiver", "a Sender and one or more Receivers"),
            AxiomId::AX10 => (
                "provisioning consistency",
                "resources are provisioned by domain management agents",
                "can be provisioned or de-provisioned in the Provider domain by the ProviderDomainManagementAgent",
            ),
            AxiomId::AX11 => (
                "scope-locality",
                "a policy influencing a decision scopes a domain holding the requester or the target's owning role",
                "a policy is only effective within the domain",
            ),
            AxiomId::AX12 => (
                "monitored-evidence",
                "every recorded action is referenced by at least one audit event",
                "these controls produce evidence to ensure that actions have been performed",
            ),
        };
        Axiom {
            id: self,
            name,
            description,
            citation,
        }
    }
}

impl fmt::Display for AxiomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for AxiomId {
    type Err = AxiomError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AxiomId::ALL
            .into_iter()
            .find(|a| a.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| AxiomError::UnknownAxiom(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Axiom {
    pub id: AxiomId,
    pub name: &'static str,
    pub description: &'static str,
    pub citation: &'static str,
}

pub fn axiom_catalog() -> Vec<Axiom> {
    AxiomId::ALL.into_iter().map(AxiomId::axiom).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AxiomError {
    #[error("unknown axiom `{0}` (expected AX1..AX12)")]
    UnknownAxiom(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AxiomViolation {
    pub axiom_id: AxiomId,
    pub offending_element_ids: Vec<Id>,
    pub explanation: String,
}

impl AxiomViolation {
    fn new(
        axiom_id: AxiomId,
        elements: impl IntoIterator<Item = impl Into<Id>>,
        explanation: String,
    ) -> Self {
        Self {
            axiom_id,
            offending_element_ids: elements.into_iter().map(Into::into).collect(),
            explanation,
        }
    }

    pub fn citation(&self) -> &'static str {
        self.axiom_id.axiom().citation
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UncheckedNotice {
    pub axiom_id: AxiomId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub model_name: String,
    pub checked_axioms: Vec<AxiomId>,
    /// Warnings: axioms that needed logs which were not supplied.
    pub unchecked: Vec<UncheckedNotice>,
    pub violations: Vec<AxiomViolation>,
}

impl ValidationReport {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every axiom the supplied inputs allow.
pub fn validate(
    model: &TrustDomainModel,
    log: Option<&DecisionLog>,
    audit: Option<&CentralAuditStore>,
) -> ValidationReport {
    let mut report = ValidationReport {
        model_name: model.name.clone(),
        checked_axioms: Vec::new(),
        unchecked: Vec::new(),
        violations: Vec::new(),
    };
    for id in AxiomId::ALL {
        match run(id, model, log, audit) {
            Ok(v) => {
                report.checked_axioms.push(id);
                report.violations.extend(v);
            }
            Err(reason) => report.unchecked.push(UncheckedNotice {
                axiom_id: id,
                reason: reason.to_string(),
            }),
        }
    }
    report
}

/// Violations of one axiom; an axiom whose logs are missing yields none.
pub fn check_axiom(
    model: &TrustDomainModel,
    axiom_id: &str,
    log: Option<&DecisionLog>,
    audit: Option<&CentralAuditStore>,
) -> Result<Vec<AxiomViolation>, AxiomError> {
    let id: AxiomId = axiom_id.parse()?;
    Ok(run(id, model, log, audit).unwrap_or_default())
}

fn run(
    id: AxiomId,
    m: &TrustDomainModel,
    log: Option<&DecisionLog>,
    audit: Option<&CentralAuditStore>,
) -> Result<Vec<AxiomViolation>, &'static str> {
    let mut out = match id {
        AxiomId::AX1 => ax1(m),
        AxiomId::AX2 => ax2(m),
        AxiomId::AX3 => ax3(m, log.ok_or("needs a decision log")?),
        AxiomId::AX4 => functional(
            id,
            m.policies.keys(),
            |p| m.policy_establishers(p),
            "policy",
            "establishing roles",
        ),
        AxiomId::AX5 => functional(
            id,
            m.policies.keys(),
            |p| m.policies[p].scope_domain_ids.iter().collect(),
            "policy",
            "scope domains",
        ),
        AxiomId::AX6 => m
            .entities
            .values()
            .filter(|e| e.entity_types.len() != 1)
            .map(|e| {
                let types: Vec<&str> = e.entity_types.iter().map(|t| t.as_str()).collect();
                AxiomViolation::new(
                    id,
                    [&e.id],
                    format!(
                        "entity `{}` has {} types ({}), expected exactly one",
                        e.id,
                        types.len(),
                        types.join(", ")
                    ),
                )
            })
            .collect(),
        AxiomId::AX7 => functional(
            id,
            m.assets.keys(),
            |a| m.asset_owners(a),
            "asset",
            "owning roles",
        ),
        AxiomId::AX8 => functional(
            id,
            m.agents.keys(),
            |a| m.agent_owners(a),
            "agent",
            "owning roles",
        ),
        AxiomId::AX9 => ax9(log),
        AxiomId::AX10 => ax10(m),
        AxiomId::AX11 => ax11(m, log.ok_or("needs a decision log")?),
        AxiomId::AX12 => ax12(
            log.ok_or("needs a decision log")?,
            audit.ok_or("needs the audit store")?,
        ),
    };
    out.sort();
    Ok(out)
}

fn ax1(m: &TrustDomainModel) -> Vec<AxiomViolation> {
    m.policies
        .values()
        .filter(|p| p.published_by.len() > 1)
        .map(|p| {
            let agents: Vec<&str> = p.published_by.iter().map(String::as_str).collect();
            AxiomViolation::new(
                AxiomId::AX1,
                std::iter::once(p.id.as_str()).chain(agents.iter().copied()),
                format!(
                    "policy `{}` is published by {} agents: {}",
                    p.id,
                    agents.len(),
                    agents.join(", ")
                ),
            )
        })
        .collect()
}

fn ax2(m: &TrustDomainModel) -> Vec<AxiomViolation> {
    let derived = m.derived_published_policy_to();
    m.published_policy_to
        .difference(&derived)
        .map(|(agent, store)| {
            AxiomViolation::new(
                AxiomId::AX2,
                [agent, store],
                format!("`{agent}` is recorded as publishing to `{store}` but published no policy there"),
            )
        })
        .collect()
}

fn ax3(m: &TrustDomainModel, log: &DecisionLog) -> Vec<AxiomViolation> {
    let mut consumes: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for d in &log.decisions {
        consumes
            .entry(d.created_by_pdp_id.as_str())
            .or_default()
            .extend(d.consumed_policy_ids.iter().map(String::as_str));
    }
    let mut out = Vec::new();
    for d in &log.decisions {
        let creator = d.created_by_pdp_id.as_str();
        let is_pdp = m
            .controls
            .get(creator)
            .is_some_and(|c| c.kind == ControlKind::PolicyDecisionPoint);
        for p in &d.influenced_policy_ids {
            let witnessed = is_pdp
                && consumes
                    .get(creator)
                    .is_some_and(|c| c.contains(p.as_str()));
            if !witnessed {
                let why = if is_pdp {
                    format!("decision point `{creator}` never consumed it")
                } else {
                    format!("its creator `{creator}` is not a decision point")
                };
                out.push(AxiomViolation::new(
                    AxiomId::AX3,
                    [p, &d.id],
                    format!("policy `{p}` influenced decision `{}` but {why}", d.id),
                ));
            }
        }
    }
    out
}

fn functional<'a, V: AsRef<str>>(
    id: AxiomId,
    subjects: impl Iterator<Item = &'a Id>,
    values: impl Fn(&str) -> Vec<V>,
    noun: &str,
    what: &str,
) -> Vec<AxiomViolation> {
    subjects
        .filter_map(|s| {
            let vals = values(s);
            (vals.len() != 1).then(|| {
                let names: Vec<&str> = vals.iter().map(AsRef::as_ref).collect();
                AxiomViolation::new(
                    id,
                    std::iter::once(s.as_str()).chain(names.iter().copied()),
                    format!(
                        "{noun} `{s}` has {} {what}, expected exactly one",
                        names.len()
                    ),
                )
            })
        })
        .collect()
}

fn ax9(log: Option<&DecisionLog>) -> Vec<AxiomViolation> {
    log.map(|l| l.messages.as_slice())
        .unwrap_or_default()
        .iter()
        .filter_map(|msg| {
            msg.malformation().map(|why| {
                AxiomViolation::new(
                    AxiomId::AX9,
                    [&msg.id],
                    format!("message `{}`: {why}", msg.id),
                )
            })
        })
        .collect()
}

fn ax10(m: &TrustDomainModel) -> Vec<AxiomViolation> {
    m.assets
        .values()
        .filter(|a| a.asset_type == AssetType::Resource)
        .filter_map(|a| {
            let agent = a.provisioned_by.as_ref()?;
            (!m.is_management_agent(agent)).then(|| {
                AxiomViolation::new(
                    AxiomId::AX10,
                    [&a.id, agent],
                    format!("resource `{}` is provisioned by `{agent}`, which is not a domain management agent", a.id),
                )
            })
        })
        .collect()
}

fn ax11(m: &TrustDomainModel, log: &DecisionLog) -> Vec<AxiomViolation> {
    let mut out = Vec::new();
    for d in &log.decisions {
        let (who, target) = (&d.request.requester_entity_id, &d.request.target_asset_id);
        for p in &d.influenced_policy_ids {
            let local = m.policies.get(p).is_some_and(|pol| {
                pol.scope_domain_ids
                    .iter()
                    .any(|dom| scope_covers(m, dom, who, target))
            });
            if !local {
                out.push(AxiomViolation::new(
                    AxiomId::AX11,
                    [p, &d.id],
                    format!("policy `{p}` influenced decision `{}` outside its scope (requester `{who}`, target `{target}`)", d.id),
                ));
            }
        }
    }
    out
}

fn ax12(log: &DecisionLog, audit: &CentralAuditStore) -> Vec<AxiomViolation> {
    let referenced: BTreeSet<&str> = audit
        .events()
        .iter()
        .filter_map(|e| e.action_id.as_deref())
        .collect();
    log.actions
        .iter()
        .filter(|a| !referenced.contains(a.id.as_str()))
        .map(|a| {
            AxiomViolation::new(
                AxiomId::AX12,
                [&a.id],
                format!("action `{}` has no audit event", a.id),
            )
        })
        .collect()
}
