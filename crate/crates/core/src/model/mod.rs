//! In-memory trust-domain configuration.
//!
//! A [`TrustDomainModel`] is an immutable value: lifecycle operations in
//! [`lifecycle`] take a model by reference and hand back a new one. Relations
//! that the taxonomy constrains to be functional (entity type, policy scope,
//! policy publisher, asset/agent ownership, policy establishment) are stored
//! set-valued so that the axiom checker can observe and report cardinality
//! faults; [`build_model`] only ever produces singletons for them.

mod build;
pub mod lifecycle;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use build::{build_model, BuildError};
pub use lifecycle::{
    clone_policy, deprovision_resource, domain_members, provision_resource, validate_state,
};

/// Case-sensitive dotted identifier, e.g. `SS3.Demographics`.
pub type Id = String;

/// Model name used when no `model` header is declared.
pub const DEFAULT_MODEL_NAME: &str = "untitled";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityType {
    Person,
    Organization,
    System,
    Process,
    Resource,
    Agent,
}

impl EntityType {
    pub const ALL: [EntityType; 6] = [
        EntityType::Person,
        EntityType::Organization,
        EntityType::System,
        EntityType::Process,
        EntityType::Resource,
        EntityType::Agent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Person => "Person",
            EntityType::Organization => "Organization",
            EntityType::System => "System",
            EntityType::Process => "Process",
            EntityType::Resource => "Resource",
            EntityType::Agent => "Agent",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AssetType {
    Data,
    Resource,
    Service,
}

impl AssetType {
    pub const ALL: [AssetType; 3] = [AssetType::Data, AssetType::Resource, AssetType::Service];

    pub fn as_str(self) -> &'static str {
        match self {
            AssetType::Data => "Data",
            AssetType::Resource => "Resource",
            AssetType::Service => "Service",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    DomainManagementAgent,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ControlKind {
    PolicyEnforcementPoint,
    PolicyDecisionPoint,
    DomainAuditAgent,
    DomainManagementAgent,
}

impl ControlKind {
    pub const ALL: [ControlKind; 4] = [
        ControlKind::PolicyEnforcementPoint,
        ControlKind::PolicyDecisionPoint,
        ControlKind::DomainAuditAgent,
        ControlKind::DomainManagementAgent,
    ];

    /// Keyword used in `.tdm` files.
    pub fn keyword(self) -> &'static str {
        match self {
            ControlKind::PolicyEnforcementPoint => "pep",
            ControlKind::PolicyDecisionPoint => "pdp",
            ControlKind::DomainAuditAgent => "audit",
            ControlKind::DomainManagementAgent => "management",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.keyword() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub id: Id,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainEntity {
    pub id: Id,
    /// `typeOf`; exactly one element in a consistent model.
    pub entity_types: BTreeSet<EntityType>,
    /// `memberOf`.
    pub memberships: BTreeSet<Id>,
    /// `hasRole`.
    pub role_ids: BTreeSet<Id>,
}

impl DomainEntity {
    pub fn entity_type(&self) -> Option<EntityType> {
        single(&self.entity_types).copied()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Role {
    pub id: Id,
    pub owned_asset_ids: BTreeSet<Id>,
    pub owned_agent_ids: BTreeSet<Id>,
    pub established_policy_ids: BTreeSet<Id>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agent {
    pub id: Id,
    pub acts_on_behalf_of: Id,
    pub kind: AgentKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Asset {
    pub id: Id,
    pub asset_type: AssetType,
    /// `hasState`; only meaningful for resources.
    pub state: Option<String>,
    pub provisioned_by: Option<Id>,
    /// `providedBy`; only meaningful for services.
    pub provided_by: Option<Id>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Control {
    pub id: Id,
    pub kind: ControlKind,
    pub domain_id: Id,
    pub central_store_id: Option<Id>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Uni,
    Bi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Effect {
    Permit,
    Deny,
    Oblige,
}

impl Effect {
    pub fn keyword(self) -> &'static str {
        match self {
            Effect::Permit => "permit",
            Effect::Deny => "deny",
            Effect::Oblige => "oblige",
        }
    }
}

/// Subject or target of an action rule: a concrete id or `*`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selector {
    Any,
    Id(Id),
}

impl Selector {
    pub fn matches_id(&self, id: &str) -> bool {
        match self {
            Selector::Any => true,
            Selector::Id(s) => s == id,
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Any => f.write_str("*"),
            Selector::Id(id) => f.write_str(id),
        }
    }
}

/// Named boolean flag looked up in the request context; `negated` inverts it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guard {
    pub flag: String,
    pub negated: bool,
}

impl Guard {
    pub fn holds(&self, context: &BTreeMap<String, String>) -> bool {
        let set = context.get(&self.flag).is_some_and(|v| v == "true");
        set != self.negated
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            write!(f, "!{}", self.flag)
        } else {
            f.write_str(&self.flag)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRule {
    pub source: Id,
    pub dest: Id,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRule {
    pub effect: Effect,
    pub subject: Selector,
    pub action_kind: String,
    pub target: Selector,
    pub guard: Option<Guard>,
    /// State label a permission moves its target resource into.
    pub enables_state: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    Flow(FlowRule),
    Action(ActionRule),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub id: Id,
    /// `scopeOf`; exactly one domain in a consistent model.
    pub scope_domain_ids: BTreeSet<Id>,
    pub rules: Vec<Rule>,
    /// `publishes` (inverse); at most one agent in a consistent model.
    pub published_by: BTreeSet<Id>,
    pub published_to: Option<Id>,
    /// Symmetric, irreflexive links to clones.
    pub equivalent_to: BTreeSet<Id>,
    pub is_delivery_policy: bool,
    /// Label appended to the names of trust domains derived from this policy.
    pub tag: Option<String>,
}

impl Policy {
    pub fn scope(&self) -> Option<&Id> {
        single(&self.scope_domain_ids)
    }

    pub fn flow_rules(&self) -> impl Iterator<Item = &FlowRule> {
        self.rules.iter().filter_map(|r| match r {
            Rule::Flow(f) => Some(f),
            Rule::Action(_) => None,
        })
    }

    /// Action rules with their index in the full rule list.
    pub fn action_rules(&self) -> impl Iterator<Item = (usize, &ActionRule)> {
        self.rules.iter().enumerate().filter_map(|(i, r)| match r {
            Rule::Action(a) => Some((i, a)),
            Rule::Flow(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainPolicyStore {
    pub id: Id,
    pub domain_id: Id,
}

/// Which table an identifier lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ElementKind {
    CentralStore,
    Domain,
    Role,
    Entity,
    Asset,
    Agent,
    Control,
    PolicyStore,
    Policy,
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ElementKind::CentralStore => "central audit store",
            ElementKind::Domain => "domain",
            ElementKind::Role => "role",
            ElementKind::Entity => "entity",
            ElementKind::Asset => "asset",
            ElementKind::Agent => "agent",
            ElementKind::Control => "control",
            ElementKind::PolicyStore => "policy store",
            ElementKind::Policy => "policy",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustDomainModel {
    pub name: String,
    pub central_audit_store_id: Option<Id>,
    pub domains: BTreeMap<Id, Domain>,
    pub entities: BTreeMap<Id, DomainEntity>,
    pub roles: BTreeMap<Id, Role>,
    pub assets: BTreeMap<Id, Asset>,
    pub agents: BTreeMap<Id, Agent>,
    pub controls: BTreeMap<Id, Control>,
    pub policies: BTreeMap<Id, Policy>,
    pub policy_stores: BTreeMap<Id, DomainPolicyStore>,
    /// Stored copies of `publishedPolicyTo`; the relation itself is derived.
    pub published_policy_to: BTreeSet<(Id, Id)>,
}

impl Default for TrustDomainModel {
    fn default() -> Self {
        Self::named(DEFAULT_MODEL_NAME)
    }
}

impl TrustDomainModel {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            central_audit_store_id: None,
            domains: BTreeMap::new(),
            entities: BTreeMap::new(),
            roles: BTreeMap::new(),
            assets: BTreeMap::new(),
            agents: BTreeMap::new(),
            controls: BTreeMap::new(),
            policies: BTreeMap::new(),
            policy_stores: BTreeMap::new(),
            published_policy_to: BTreeSet::new(),
        }
    }

    pub fn element_count(&self) -> usize {
        self.central_audit_store_id.iter().count()
            + self.domains.len()
            + self.entities.len()
            + self.roles.len()
            + self.assets.len()
            + self.agents.len()
            + self.controls.len()
            + self.policies.len()
            + self.policy_stores.len()
    }

    pub fn kind_of(&self, id: &str) -> Option<ElementKind> {
        if self.central_audit_store_id.as_deref() == Some(id) {
            Some(ElementKind::CentralStore)
        } else if self.domains.contains_key(id) {
            Some(ElementKind::Domain)
        } else if self.roles.contains_key(id) {
            Some(ElementKind::Role)
        } else if self.entities.contains_key(id) {
            Some(ElementKind::Entity)
        } else if self.assets.contains_key(id) {
            Some(ElementKind::Asset)
        } else if self.agents.contains_key(id) {
            Some(ElementKind::Agent)
        } else if self.controls.contains_key(id) {
            Some(ElementKind::Control)
        } else if self.policy_stores.contains_key(id) {
            Some(ElementKind::PolicyStore)
        } else if self.policies.contains_key(id) {
            Some(ElementKind::Policy)
        } else {
            None
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.kind_of(id).is_some()
    }

    /// Data assets and policies (a policy is a form of data).
    pub fn is_data(&self, id: &str) -> bool {
        self.assets
            .get(id)
            .is_some_and(|a| a.asset_type == AssetType::Data)
            || self.policies.contains_key(id)
    }

    /// True for agents and controls of the domain-management kind.
    pub fn is_management_agent(&self, id: &str) -> bool {
        self.agents
            .get(id)
            .is_some_and(|a| a.kind == AgentKind::DomainManagementAgent)
            || self
                .controls
                .get(id)
                .is_some_and(|c| c.kind == ControlKind::DomainManagementAgent)
    }

    /// Roles whose ownership set contains `asset_id`.
    pub fn asset_owners(&self, asset_id: &str) -> Vec<&Id> {
        self.roles
            .values()
            .filter(|r| r.owned_asset_ids.contains(asset_id))
            .map(|r| &r.id)
            .collect()
    }

    pub fn asset_owner(&self, asset_id: &str) -> Option<&Id> {
        match self.asset_owners(asset_id).as_slice() {
            [one] => Some(one),
            _ => None,
        }
    }

    pub fn agent_owners(&self, agent_id: &str) -> Vec<&Id> {
        self.roles
            .values()
            .filter(|r| r.owned_agent_ids.contains(agent_id))
            .map(|r| &r.id)
            .collect()
    }

    pub fn agent_owner(&self, agent_id: &str) -> Option<&Id> {
        match self.agent_owners(agent_id).as_slice() {
            [one] => Some(one),
            _ => None,
        }
    }

    pub fn policy_establishers(&self, policy_id: &str) -> Vec<&Id> {
        self.roles
            .values()
            .filter(|r| r.established_policy_ids.contains(policy_id))
            .map(|r| &r.id)
            .collect()
    }

    pub fn policy_establisher(&self, policy_id: &str) -> Option<&Id> {
        match self.policy_establishers(policy_id).as_slice() {
            [one] => Some(one),
            _ => None,
        }
    }

    /// Entities holding `role_id`.
    pub fn role_holders(&self, role_id: &str) -> BTreeSet<&Id> {
        self.entities
            .values()
            .filter(|e| e.role_ids.contains(role_id))
            .map(|e| &e.id)
            .collect()
    }

    pub fn is_member(&self, entity_id: &str, domain_id: &str) -> bool {
        self.entities
            .get(entity_id)
            .is_some_and(|e| e.memberships.contains(domain_id))
    }

    /// Policies held by a store (inverse of `publishedTo`), in id order.
    pub fn store_policies(&self, store_id: &str) -> Vec<&Id> {
        self.policies
            .values()
            .filter(|p| p.published_to.as_deref() == Some(store_id))
            .map(|p| &p.id)
            .collect()
    }

    /// `publishedPolicyTo` derived from publications.
    pub fn derived_published_policy_to(&self) -> BTreeSet<(Id, Id)> {
        let mut out = BTreeSet::new();
        for p in self.policies.values() {
            if let Some(store) = &p.published_to {
                for agent in &p.published_by {
                    out.insert((agent.clone(), store.clone()));
                }
            }
        }
        out
    }

    /// Every `(referencing id, referenced id)` pair in the model.
    pub fn references(&self) -> Vec<(&Id, &Id)> {
        let mut out = Vec::new();
        for e in self.entities.values() {
            out.extend(e.memberships.iter().map(|d| (&e.id, d)));
            out.extend(e.role_ids.iter().map(|r| (&e.id, r)));
        }
        for r in self.roles.values() {
            out.extend(r.owned_asset_ids.iter().map(|a| (&r.id, a)));
            out.extend(r.owned_agent_ids.iter().map(|a| (&r.id, a)));
            out.extend(r.established_policy_ids.iter().map(|p| (&r.id, p)));
        }
        for a in self.agents.values() {
            out.push((&a.id, &a.acts_on_behalf_of));
        }
        for a in self.assets.values() {
            out.extend(a.provisioned_by.iter().map(|m| (&a.id, m)));
            out.extend(a.provided_by.iter().map(|m| (&a.id, m)));
        }
        for c in self.controls.values() {
            out.push((&c.id, &c.domain_id));
            out.extend(c.central_store_id.iter().map(|s| (&c.id, s)));
        }
        for s in self.policy_stores.values() {
            out.push((&s.id, &s.domain_id));
        }
        for p in self.policies.values() {
            out.extend(p.scope_domain_ids.iter().map(|d| (&p.id, d)));
            out.extend(p.published_by.iter().map(|a| (&p.id, a)));
            out.extend(p.published_to.iter().map(|s| (&p.id, s)));
            out.extend(p.equivalent_to.iter().map(|q| (&p.id, q)));
            for rule in &p.rules {
                match rule {
                    Rule::Flow(f) => {
                        out.push((&p.id, &f.source));
                        out.push((&p.id, &f.dest));
                    }
                    Rule::Action(a) => {
                        if let Selector::Id(s) = &a.subject {
                            out.push((&p.id, s));
                        }
                        if let Selector::Id(t) = &a.target {
                            out.push((&p.id, t));
                        }
                    }
                }
            }
        }
        for (agent, store) in &self.published_policy_to {
            out.push((agent, store));
        }
        out
    }
}

fn single<T>(set: &BTreeSet<T>) -> Option<&T> {
    if set.len() == 1 {
        set.iter().next()
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("duplicate identifier `{id}`")]
    DuplicateIdentifier { id: Id },
    #[error("`{from}` references unknown identifier `{missing}`")]
    DanglingReference { from: Id, missing: Id },
    #[error("`{id}`: {message}")]
    TypeMismatch { id: Id, message: String },
    #[error("unknown policy `{0}`")]
    UnknownPolicy(Id),
    #[error("unknown domain `{0}`")]
    UnknownDomain(Id),
    #[error("unknown role `{0}`")]
    UnknownRole(Id),
    #[error("`{0}` is not a domain management agent")]
    NotManagementAgent(Id),
    #[error("`{0}` is not a resource asset")]
    NotAResource(Id),
    #[error("resource `{0}` is already provisioned")]
    AlreadyProvisioned(Id),
    #[error("resource `{0}` is not provisioned")]
    NotProvisioned(Id),
    #[error("`{agent}` did not provision `{resource}`")]
    NotProvisioner { agent: Id, resource: Id },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_semantics() {
        let mut ctx = BTreeMap::new();
        let g = Guard {
            flag: "own-review-submitted".into(),
            negated: false,
        };
        let not_g = Guard {
            negated: true,
            ..g.clone()
        };
        assert!(!g.holds(&ctx));
        assert!(not_g.holds(&ctx));
        ctx.insert("own-review-submitted".to_string(), "true".to_string());
        assert!(g.holds(&ctx));
        assert!(!not_g.holds(&ctx));
        ctx.insert("own-review-submitted".to_string(), "false".to_string());
        assert!(!g.holds(&ctx));
    }

    #[test]
    fn keyword_tables_round_trip() {
        for k in ControlKind::ALL {
            assert_eq!(ControlKind::from_keyword(k.keyword()), Some(k));
        }
        for t in EntityType::ALL {
            assert_eq!(EntityType::parse(t.as_str()), Some(t));
        }
        assert_eq!(EntityType::parse("Bogus"), None);
    }
}
