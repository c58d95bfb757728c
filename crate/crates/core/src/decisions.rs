//! Policy decision and enforcement.
//!
//! The free functions are pure. [`Runtime`] strings them together over a model,
//! keeps the decision/action log and forwards every enforcement through a
//! domain audit agent into the central audit store.
//!
//! Evaluation scans the action rules of every policy whose scope domain holds
//! the requester or an entity with the target's owning role. Policies are taken
//! in id order and rules in declaration order. The effect of the first match
//! decides, and every matching policy is recorded as having influenced the
//! decision. No match is a denial with no influence.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{self, AuditError, CentralAuditStore, EventKind, NewEvent};
use crate::model::{
    self, AssetType, ControlKind, Effect, Id, ModelError, Selector, TrustDomainModel,
};

/// Action kind checked against delivery policies.
pub const DELIVER_ACTION: &str = "deliver";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub requester_entity_id: Id,
    pub action_kind: String,
    pub target_asset_id: Id,
    /// Guard flags; a flag holds when its value is `true`.
    pub context: BTreeMap<String, String>,
}

impl Request {
    pub fn new(
        requester: impl Into<Id>,
        action_kind: impl Into<String>,
        target: impl Into<Id>,
    ) -> Self {
        Self {
            requester_entity_id: requester.into(),
            action_kind: action_kind.into(),
            target_asset_id: target.into(),
            context: BTreeMap::new(),
        }
    }

    pub fn with_flag(mut self, flag: &str, value: bool) -> Self {
        self.context.insert(flag.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: Id,
    pub sender_id: Id,
    pub receiver_ids: BTreeSet<Id>,
    pub transport: String,
    pub delivery_policy_id: Option<Id>,
    pub payload: Request,
}

impl Message {
    /// Well-formed: exactly one (non-empty) sender and at least one receiver.
    pub fn malformation(&self) -> Option<&'static str> {
        if self.sender_id.is_empty() {
            Some("message has no sender")
        } else if self.receiver_ids.is_empty() {
            Some("message has no receivers")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionKind {
    Permission,
    Obligation,
    Denial,
}

impl DecisionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionKind::Permission => "Permission",
            DecisionKind::Obligation => "Obligation",
            DecisionKind::Denial => "Denial",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatchedRule {
    pub policy_id: Id,
    pub rule_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub id: Id,
    pub kind: DecisionKind,
    /// `influenced`: every policy with a matching rule.
    pub influenced_policy_ids: BTreeSet<Id>,
    /// Matching rules in scan order; the first one decided.
    pub matched_rules: Vec<MatchedRule>,
    /// `consumes`: policies the decision point scanned for this request.
    pub consumed_policy_ids: BTreeSet<Id>,
    /// `creates`.
    pub created_by_pdp_id: Id,
    /// `enableState`.
    pub enables_state: Option<String>,
    pub request: Request,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub id: Id,
    pub kind: String,
    pub performed_by: Id,
    pub performed_on: Id,
    pub decision_id: Id,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Enforcement {
    Performed(Action),
    Blocked { decision_id: Id },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecisionError {
    #[error("`{0}` is not a policy decision point")]
    UnknownPdp(Id),
    #[error("`{0}` is not a policy enforcement point")]
    UnknownPep(Id),
    #[error("unknown {kind} `{id}`")]
    UnknownElement { kind: &'static str, id: Id },
    #[error("resource `{0}` is not provisioned")]
    UnprovisionedResource(Id),
    #[error("decision `{0}` refers to elements no longer usable in the model")]
    StaleDecision(Id),
    #[error("malformed message `{id}`: {reason}")]
    MalformedMessage { id: Id, reason: &'static str },
    #[error("delivery of message `{message}` to `{receiver}` refused by policy `{policy}`")]
    DeliveryRefused {
        message: Id,
        receiver: Id,
        policy: Id,
    },
    #[error("`{0}` is not a delivery policy")]
    NotDeliveryPolicy(Id),
    #[error("unknown decision `{0}`")]
    UnknownDecision(Id),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Audit(#[from] AuditError),
}

/// True when `selector` names `subject` directly, `*`, or a role `subject` holds
/// (an entity's roles, an agent's owner or principal).
pub fn subject_matches(model: &TrustDomainModel, selector: &Selector, subject: &str) -> bool {
    let Selector::Id(sel) = selector else {
        return true;
    };
    if sel == subject {
        return true;
    }
    if let Some(e) = model.entities.get(subject) {
        return e.role_ids.contains(sel);
    }
    if let Some(a) = model.agents.get(subject) {
        return &a.acts_on_behalf_of == sel || model.agent_owners(subject).contains(&sel);
    }
    false
}

/// Checks a message and releases its request.
pub fn deliver(model: &TrustDomainModel, message: &Message) -> Result<Request, DecisionError> {
    if let Some(reason) = message.malformation() {
        return Err(DecisionError::MalformedMessage {
            id: message.id.clone(),
            reason,
        });
    }
    if let Some(pid) = &message.delivery_policy_id {
        let policy = model
            .policies
            .get(pid)
            .ok_or_else(|| DecisionError::Model(ModelError::UnknownPolicy(pid.clone())))?;
        if !policy.is_delivery_policy {
            return Err(DecisionError::NotDeliveryPolicy(pid.clone()));
        }
        for receiver in &message.receiver_ids {
            let effect = policy
                .action_rules()
                .find(|(_, r)| {
                    r.action_kind == DELIVER_ACTION
                        && subject_matches(model, &r.subject, &message.sender_id)
                        && r.target.matches_id(receiver)
                })
                .map(|(_, r)| r.effect);
            if !matches!(effect, Some(Effect::Permit | Effect::Oblige)) {
                return Err(DecisionError::DeliveryRefused {
                    message: message.id.clone(),
                    receiver: receiver.clone(),
                    policy: pid.clone(),
                });
            }
        }
    }
    Ok(message.payload.clone())
}

fn check_target_usable(model: &TrustDomainModel, target: &str) -> Result<(), DecisionError> {
    let Some(asset) = model.assets.get(target) else {
        if model.policies.contains_key(target) {
            return Ok(());
        }
        return Err(DecisionError::UnknownElement {
            kind: "asset",
            id: target.to_string(),
        });
    };
    let resource = match asset.asset_type {
        AssetType::Resource => Some(asset),
        AssetType::Service => asset
            .provided_by
            .as_ref()
            .and_then(|p| model.assets.get(p))
            .filter(|p| p.asset_type == AssetType::Resource),
        AssetType::Data => None,
    };
    match resource {
        Some(r) if r.provisioned_by.is_none() => {
            Err(DecisionError::UnprovisionedResource(r.id.clone()))
        }
        _ => Ok(()),
    }
}

/// Owner role of a target asset or policy.
fn target_owner<'m>(model: &'m TrustDomainModel, target: &str) -> Option<&'m Id> {
    if model.policies.contains_key(target) {
        model.policy_establisher(target)
    } else {
        model.asset_owner(target)
    }
}

/// Whether `domain_id` holds the requester or some entity with the target's owning role.
pub fn scope_covers(
    model: &TrustDomainModel,
    domain_id: &str,
    requester: &str,
    target: &str,
) -> bool {
    if model.is_member(requester, domain_id) {
        return true;
    }
    target_owner(model, target).is_some_and(|owner| {
        model
            .role_holders(owner)
            .iter()
            .any(|e| model.is_member(e, domain_id))
    })
}

pub fn evaluate(
    model: &TrustDomainModel,
    request: &Request,
    pdp_id: &str,
    decision_id: impl Into<Id>,
) -> Result<PolicyDecision, DecisionError> {
    if model
        .controls
        .get(pdp_id)
        .is_none_or(|c| c.kind != ControlKind::PolicyDecisionPoint)
    {
        return Err(DecisionError::UnknownPdp(pdp_id.to_string()));
    }
    if !model.entities.contains_key(&request.requester_entity_id) {
        return Err(DecisionError::UnknownElement {
            kind: "entity",
            id: request.requester_entity_id.clone(),
        });
    }
    check_target_usable(model, &request.target_asset_id)?;

    let mut consumed = BTreeSet::new();
    let mut matched = Vec::new();
    let mut first: Option<(Effect, Option<String>)> = None;
    for policy in model.policies.values() {
        let applicable = policy.scope_domain_ids.iter().any(|d| {
            scope_covers(
                model,
                d,
                &request.requester_entity_id,
                &request.target_asset_id,
            )
        });
        if !applicable {
            continue;
        }
        consumed.insert(policy.id.clone());
        for (index, rule) in policy.action_rules() {
            let hit = rule.action_kind == request.action_kind
                && rule.target.matches_id(&request.target_asset_id)
                && subject_matches(model, &rule.subject, &request.requester_entity_id)
                && rule
                    .guard
                    .as_ref()
                    .is_none_or(|g| g.holds(&request.context));
            if hit {
                matched.push(MatchedRule {
                    policy_id: policy.id.clone(),
                    rule_index: index,
                });
                first.get_or_insert((rule.effect, rule.enables_state.clone()));
            }
        }
    }
    let (kind, enables_state) = match first {
        None => (DecisionKind::Denial, None),
        Some((Effect::Deny, _)) => (DecisionKind::Denial, None),
        Some((Effect::Permit, s)) => (DecisionKind::Permission, s),
        Some((Effect::Oblige, s)) => (DecisionKind::Obligation, s),
    };
    Ok(PolicyDecision {
        id: decision_id.into(),
        kind,
        influenced_policy_ids: matched.iter().map(|m| m.policy_id.clone()).collect(),
        matched_rules: matched,
        consumed_policy_ids: consumed,
        created_by_pdp_id: pdp_id.to_string(),
        enables_state,
        request: request.clone(),
    })
}

/// What [`enforce`] produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enforced {
    /// The model after any state change enabled by the decision.
    pub model: TrustDomainModel,
    pub outcome: Enforcement,
    /// Event to forward to the central audit store.
    pub event: NewEvent,
}

pub fn enforce(
    model: &TrustDomainModel,
    decision: &PolicyDecision,
    pep_id: &str,
    action_id: impl Into<Id>,
    seq: u64,
) -> Result<Enforced, DecisionError> {
    if model
        .controls
        .get(pep_id)
        .is_none_or(|c| c.kind != ControlKind::PolicyEnforcementPoint)
    {
        return Err(DecisionError::UnknownPep(pep_id.to_string()));
    }
    let req = &decision.request;
    if !model.entities.contains_key(&req.requester_entity_id)
        || check_target_usable(model, &req.target_asset_id).is_err()
    {
        return Err(DecisionError::StaleDecision(decision.id.clone()));
    }
    let policies: Vec<&str> = decision
        .influenced_policy_ids
        .iter()
        .map(String::as_str)
        .collect();
    let base = |kind: EventKind| {
        NewEvent::new(kind, pep_id)
            .decision(decision.id.clone())
            .detail("requester", req.requester_entity_id.clone())
            .detail("action-kind", req.action_kind.clone())
            .detail("target", req.target_asset_id.clone())
            .detail("decision-kind", decision.kind.as_str())
            .detail("pdp", decision.created_by_pdp_id.clone())
            .detail("policies", policies.join(","))
    };

    if decision.kind == DecisionKind::Denial {
        return Ok(Enforced {
            model: model.clone(),
            outcome: Enforcement::Blocked {
                decision_id: decision.id.clone(),
            },
            event: base(EventKind::ActionBlocked),
        });
    }

    let action = Action {
        id: action_id.into(),
        kind: req.action_kind.clone(),
        performed_by: req.requester_entity_id.clone(),
        performed_on: req.target_asset_id.clone(),
        decision_id: decision.id.clone(),
        seq,
    };
    let kind = match decision.kind {
        DecisionKind::Obligation => EventKind::ObligationPending,
        _ => EventKind::ActionPerformed,
    };
    let mut event = base(kind).action(action.id.clone());
    let mut next = model.clone();
    if let Some(state) = &decision.enables_state {
        if let Some(asset) = next
            .assets
            .get_mut(&req.target_asset_id)
            .filter(|a| a.asset_type == AssetType::Resource)
        {
            asset.state = Some(state.clone());
            event = event.detail("enabled-state", state.clone());
        }
    }
    Ok(Enforced {
        model: next,
        outcome: Enforcement::Performed(action),
        event,
    })
}

/// Messages, decisions and actions of a run, in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionLog {
    pub messages: Vec<Message>,
    pub decisions: Vec<PolicyDecision>,
    pub actions: Vec<Action>,
}

impl DecisionLog {
    pub fn decision(&self, id: &str) -> Option<&PolicyDecision> {
        self.decisions.iter().find(|d| d.id == id)
    }

    /// One structured record per decision, echoing the request.
    pub fn export_records(&self) -> Vec<serde_json::Value> {
        self.decisions
            .iter()
            .map(|d| {
                serde_json::json!({
                    "decision": d.id,
                    "kind": d.kind.as_str(),
                    "influenced": d.influenced_policy_ids,
                    "pdp": d.created_by_pdp_id,
                    "request": {
                        "requester": d.request.requester_entity_id,
                        "action": d.request.action_kind,
                        "target": d.request.target_asset_id,
                        "context": d.request.context,
                    },
                })
            })
            .collect()
    }
}

/// The deciding PDP and every matched `(policy, rule index)` of a logged decision.
pub fn decision_provenance(
    log: &DecisionLog,
    decision_id: &str,
) -> Result<(Id, Vec<(Id, usize)>), DecisionError> {
    let d = log
        .decision(decision_id)
        .ok_or_else(|| DecisionError::UnknownDecision(decision_id.to_string()))?;
    Ok((
        d.created_by_pdp_id.clone(),
        d.matched_rules
            .iter()
            .map(|m| (m.policy_id.clone(), m.rule_index))
            .collect(),
    ))
}

/// Result of one request through [`Runtime::submit`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub decision: PolicyDecision,
    pub outcome: Enforcement,
}

/// Stateful pipeline over a model: single writer for the decision log and audit store.
#[derive(Debug, Clone)]
pub struct Runtime {
    model: TrustDomainModel,
    log: DecisionLog,
    store: CentralAuditStore,
    audit_agent_id: Id,
}

impl Runtime {
    /// Events are forwarded by `audit_agent_id` into a fresh store named after its central store.
    pub fn new(model: TrustDomainModel, audit_agent_id: &str) -> Result<Self, DecisionError> {
        let agent = model
            .controls
            .get(audit_agent_id)
            .filter(|c| c.kind == ControlKind::DomainAuditAgent)
            .ok_or_else(|| AuditError::UnknownAgent(audit_agent_id.to_string()))?;
        let store_id = agent
            .central_store_id
            .clone()
            .ok_or_else(|| AuditError::NoCentralStore(audit_agent_id.to_string()))?;
        Ok(Self {
            model,
            log: DecisionLog::default(),
            store: CentralAuditStore::new(store_id),
            audit_agent_id: audit_agent_id.to_string(),
        })
    }

    pub fn model(&self) -> &TrustDomainModel {
        &self.model
    }

    pub fn log(&self) -> &DecisionLog {
        &self.log
    }

    pub fn store(&self) -> &CentralAuditStore {
        &self.store
    }

    pub fn into_parts(self) -> (TrustDomainModel, DecisionLog, CentralAuditStore) {
        (self.model, self.log, self.store)
    }

    /// Delivers, evaluates and enforces one message.
    pub fn submit(
        &mut self,
        message: Message,
        pdp_id: &str,
        pep_id: &str,
    ) -> Result<Step, DecisionError> {
        let request = deliver(&self.model, &message)?;
        let decision_id = format!("D{}", self.log.decisions.len() + 1);
        let decision = evaluate(&self.model, &request, pdp_id, decision_id)?;
        let seq = self.log.actions.len() as u64 + 1;
        let enforced = enforce(&self.model, &decision, pep_id, format!("A{seq}"), seq)?;
        audit::forward(
            &self.audit_agent_id,
            enforced.event,
            &self.model,
            &mut self.store,
        )?;
        self.model = enforced.model;
        self.log.messages.push(message);
        self.log.decisions.push(decision.clone());
        if let Enforcement::Performed(action) = &enforced.outcome {
            self.log.actions.push(action.clone());
        }
        Ok(Step {
            decision,
            outcome: enforced.outcome,
        })
    }

    /// Wraps a request in a message from the requester to the PDP.
    pub fn request(
        &mut self,
        request: Request,
        pdp_id: &str,
        pep_id: &str,
    ) -> Result<Step, DecisionError> {
        let message = Message {
            id: format!("M{}", self.log.messages.len() + 1),
            sender_id: request.requester_entity_id.clone(),
            receiver_ids: BTreeSet::from([pdp_id.to_string()]),
            transport: "local".to_string(),
            delivery_policy_id: None,
            payload: request,
        };
        self.submit(message, pdp_id, pep_id)
    }

    pub fn provision(
        &mut self,
        agent: &str,
        resource: &str,
        state: &str,
    ) -> Result<(), DecisionError> {
        let next = model::provision_resource(&self.model, agent, resource, state)?;
        let ev = NewEvent::new(EventKind::Provision, agent)
            .detail("resource", resource)
            .detail("state", state);
        audit::forward(&self.audit_agent_id, ev, &next, &mut self.store)?;
        self.model = next;
        Ok(())
    }

    pub fn deprovision(&mut self, agent: &str, resource: &str) -> Result<(), DecisionError> {
        let next = model::deprovision_resource(&self.model, agent, resource)?;
        let ev = NewEvent::new(EventKind::Deprovision, agent).detail("resource", resource);
        audit::forward(&self.audit_agent_id, ev, &next, &mut self.store)?;
        self.model = next;
        Ok(())
    }

    /// Validates a resource's state and records the outcome.
    pub fn validate_state(
        &mut self,
        agent: &str,
        resource: &str,
        expected: &str,
    ) -> Result<bool, DecisionError> {
        let matched = model::validate_state(&self.model, agent, resource, expected)?;
        let ev = NewEvent::state_validated(agent, resource, expected, matched);
        audit::forward(&self.audit_agent_id, ev, &self.model, &mut self.store)?;
        Ok(matched)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

/// Reads `request <ENTITY> <KIND> <ASSET> [ctx k=v,...]` lines; `#` comments and blank lines are skipped.
pub fn parse_request_script(text: &str) -> Result<Vec<Request>, ScriptError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| ScriptError { line, message };
        let fields: Vec<&str> = content.split_whitespace().collect();
        let (head, rest) = fields.split_at(fields.len().min(4));
        let [kw, entity, kind, asset] = head else {
            return Err(err(
                "expected `request <ENTITY> <KIND> <ASSET> [ctx k=v,...]`".into(),
            ));
        };
        if *kw != "request" {
            return Err(err(format!("unknown command `{kw}`")));
        }
        let mut req = Request::new(*entity, *kind, *asset);
        match rest {
            [] => {}
            ["ctx", pairs @ ..] if !pairs.is_empty() => {
                for pair in pairs.concat().split(',').filter(|p| !p.is_empty()) {
                    let (k, v) = pair
                        .split_once('=')
                        .ok_or_else(|| err(format!("context entry `{pair}` is not k=v")))?;
                    req.context.insert(k.to_string(), v.to_string());
                }
            }
            _ => return Err(err("expected `ctx k=v,...` after the target".into())),
        }
        out.push(req);
    }
    Ok(out)
}
