//! Hash-chained central audit store.
//!
//! Each appended event carries `chain_hash = SHA-256(previous chain_hash || canonical event bytes)`,
//! starting from [`GENESIS_DIGEST`]. Canonical bytes are the compact JSON
//! encoding of the event without its `chain_hash`, keys sorted.
//!
//! Persisted form is line-delimited JSON: one header record naming the digest
//! algorithm and genesis value, then one record per event, each line ending in LF.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{ControlKind, Id, TrustDomainModel};

pub const STORE_FORMAT: &str = "tdm-audit";
pub const STORE_VERSION: u32 = 1;
pub const DIGEST_ALGORITHM: &str = "sha256";
/// Chain value preceding the first event.
pub const GENESIS_DIGEST: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    ActionPerformed,
    ActionBlocked,
    ObligationPending,
    StateValidated,
    Provision,
    Deprovision,
    Alert,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ActionPerformed => "action-performed",
            EventKind::ActionBlocked => "action-blocked",
            EventKind::ObligationPending => "obligation-pending",
            EventKind::StateValidated => "state-validated",
            EventKind::Provision => "provision",
            EventKind::Deprovision => "deprovision",
            EventKind::Alert => "alert",
        }
    }
}

/// Fields of an event before it is placed in a store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewEvent {
    pub emitting_control_id: Id,
    pub action_id: Option<Id>,
    pub decision_id: Option<Id>,
    pub kind: EventKind,
    pub critical: bool,
    pub details: BTreeMap<String, String>,
}

impl NewEvent {
    /// Blocked actions and deprovisioning are critical; see [`NewEvent::state_validated`] for the third case.
    pub fn new(kind: EventKind, emitting_control_id: impl Into<Id>) -> Self {
        Self {
            emitting_control_id: emitting_control_id.into(),
            action_id: None,
            decision_id: None,
            kind,
            critical: matches!(kind, EventKind::ActionBlocked | EventKind::Deprovision),
            details: BTreeMap::new(),
        }
    }

    /// A failed validation is critical.
    pub fn state_validated(
        agent: impl Into<Id>,
        resource: &str,
        expected: &str,
        matched: bool,
    ) -> Self {
        let mut ev = Self::new(EventKind::StateValidated, agent)
            .detail("resource", resource)
            .detail("expected", expected)
            .detail("result", if matched { "pass" } else { "fail" });
        ev.critical = !matched;
        ev
    }

    pub fn action(mut self, id: impl Into<Id>) -> Self {
        self.action_id = Some(id.into());
        self
    }

    pub fn decision(mut self, id: impl Into<Id>) -> Self {
        self.decision_id = Some(id.into());
        self
    }

    pub fn detail(mut self, key: &str, value: impl Into<String>) -> Self {
        self.details.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEvent {
    pub seq: u64,
    pub id: Id,
    pub emitting_control_id: Id,
    pub action_id: Option<Id>,
    pub decision_id: Option<Id>,
    pub kind: EventKind,
    pub critical: bool,
    pub details: BTreeMap<String, String>,
    pub forwarded_to: Id,
    pub chain_hash: String,
}

impl AuditEvent {
    /// Sorted-key JSON of every field except `chain_hash`.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_value(self).expect("event serializes");
        v.as_object_mut()
            .expect("event is an object")
            .remove("chain_hash");
        serde_json::to_vec(&v).expect("value serializes")
    }

    pub fn references(&self, id: &str) -> bool {
        self.action_id.as_deref() == Some(id) || self.decision_id.as_deref() == Some(id)
    }
}

pub fn chain_digest(previous: &str, canonical: &[u8]) -> String {
    let prev = hex::decode(previous).unwrap_or_else(|_| previous.as_bytes().to_vec());
    let mut h = Sha256::new();
    h.update(&prev);
    h.update(canonical);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("unknown control `{0}`")]
    UnknownControl(Id),
    #[error("`{0}` is not a domain audit agent")]
    UnknownAgent(Id),
    #[error("audit agent `{0}` has no central-store")]
    NoCentralStore(Id),
    #[error("audit agent `{agent}` forwards to `{expected}`, not `{actual}`")]
    WrongStore { agent: Id, expected: Id, actual: Id },
    #[error("audit store line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Append-only event chain. Events can only be added through [`record_event`] and [`forward`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CentralAuditStore {
    id: Id,
    events: Vec<AuditEvent>,
    head_hash: String,
}

impl CentralAuditStore {
    pub fn new(id: impl Into<Id>) -> Self {
        Self {
            id: id.into(),
            events: Vec::new(),
            head_hash: GENESIS_DIGEST.to_string(),
        }
    }

    pub fn id(&self) -> &Id {
        &self.id
    }

    pub fn events(&self) -> &[AuditEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn head_hash(&self) -> &str {
        &self.head_hash
    }

    fn append(&mut self, fields: NewEvent) -> &AuditEvent {
        let seq = self.events.len() as u64 + 1;
        let mut ev = AuditEvent {
            seq,
            id: format!("ev-{seq:06}"),
            emitting_control_id: fields.emitting_control_id,
            action_id: fields.action_id,
            decision_id: fields.decision_id,
            kind: fields.kind,
            critical: fields.critical,
            details: fields.details,
            forwarded_to: self.id.clone(),
            chain_hash: String::new(),
        };
        ev.chain_hash = chain_digest(&self.head_hash, &ev.canonical_bytes());
        self.head_hash = ev.chain_hash.clone();
        self.events.push(ev);
        self.events.last().expect("just pushed")
    }

    /// Line-delimited persisted form.
    pub fn save(&self) -> String {
        let header = StoreHeader {
            digest: DIGEST_ALGORITHM.to_string(),
            format: STORE_FORMAT.to_string(),
            genesis: GENESIS_DIGEST.to_string(),
            store: self.id.clone(),
            version: STORE_VERSION,
        };
        let mut out = to_canonical_line(&header);
        for ev in &self.events {
            out.push_str(&to_canonical_line(ev));
        }
        out
    }

    /// Parses the persisted form without checking the chain; see [`verify_persisted`].
    pub fn load(text: &str) -> Result<Self, AuditError> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or(AuditError::Malformed {
            line: 1,
            message: "missing header".into(),
        })?;
        let header: StoreHeader =
            serde_json::from_str(first).map_err(|e| AuditError::Malformed {
                line: 1,
                message: e.to_string(),
            })?;
        header
            .check()
            .map_err(|message| AuditError::Malformed { line: 1, message })?;
        let mut events = Vec::new();
        for (i, line) in lines {
            let ev: AuditEvent = serde_json::from_str(line).map_err(|e| AuditError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            events.push(ev);
        }
        let head_hash = events
            .last()
            .map_or_else(|| GENESIS_DIGEST.to_string(), |e| e.chain_hash.clone());
        Ok(Self {
            id: header.store,
            events,
            head_hash,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreHeader {
    digest: String,
    format: String,
    genesis: String,
    store: Id,
    version: u32,
}

impl StoreHeader {
    fn check(&self) -> Result<(), String> {
        if self.format != STORE_FORMAT || self.version != STORE_VERSION {
            return Err(format!(
                "unsupported store format `{}` v{}",
                self.format, self.version
            ));
        }
        if self.digest != DIGEST_ALGORITHM {
            return Err(format!("unsupported digest `{}`", self.digest));
        }
        if self.genesis != GENESIS_DIGEST {
            return Err("unexpected genesis digest".to_string());
        }
        Ok(())
    }
}

fn to_canonical_line<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializes");
    let mut s = serde_json::to_string(&v).expect("serializes");
    s.push('\n');
    s
}

/// Appends an event emitted by a control (or a management agent).
pub fn record_event(
    store: &mut CentralAuditStore,
    model: &TrustDomainModel,
    fields: NewEvent,
) -> Result<(Id, String), AuditError> {
    let emitter = &fields.emitting_control_id;
    if !model.controls.contains_key(emitter) && !model.is_management_agent(emitter) {
        return Err(AuditError::UnknownControl(emitter.clone()));
    }
    let ev = store.append(fields);
    Ok((ev.id.clone(), ev.chain_hash.clone()))
}

/// Result of [`forward`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Forwarded {
    pub event_id: Id,
    pub alert_id: Option<Id>,
}

/// Records `fields` through `audit_agent_id` into its central store; a critical
/// event also produces an alert naming the domain's management agent.
pub fn forward(
    audit_agent_id: &str,
    fields: NewEvent,
    model: &TrustDomainModel,
    store: &mut CentralAuditStore,
) -> Result<Forwarded, AuditError> {
    let agent = model
        .controls
        .get(audit_agent_id)
        .filter(|c| c.kind == ControlKind::DomainAuditAgent)
        .ok_or_else(|| AuditError::UnknownAgent(audit_agent_id.to_string()))?;
    let target = agent
        .central_store_id
        .as_ref()
        .ok_or_else(|| AuditError::NoCentralStore(audit_agent_id.to_string()))?;
    if target != store.id() {
        return Err(AuditError::WrongStore {
            agent: audit_agent_id.to_string(),
            expected: target.clone(),
            actual: store.id().clone(),
        });
    }
    let critical = fields.critical;
    let alert_refs = (
        fields.action_id.clone(),
        fields.decision_id.clone(),
        fields.kind,
    );
    let (event_id, _) = record_event(store, model, fields)?;
    let alert_id = if critical {
        let mut alert = NewEvent::new(EventKind::Alert, audit_agent_id)
            .detail("about", event_id.clone())
            .detail("about-kind", alert_refs.2.as_str());
        alert.action_id = alert_refs.0;
        alert.decision_id = alert_refs.1;
        if let Some(m) = domain_management_agent(model, &agent.domain_id) {
            alert = alert.detail("management-agent", m.clone());
        }
        Some(record_event(store, model, alert)?.0)
    } else {
        None
    };
    Ok(Forwarded { event_id, alert_id })
}

/// Lowest-id management control in a domain.
pub fn domain_management_agent<'m>(model: &'m TrustDomainModel, domain_id: &str) -> Option<&'m Id> {
    model
        .controls
        .values()
        .find(|c| c.kind == ControlKind::DomainManagementAgent && c.domain_id == domain_id)
        .map(|c| &c.id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceKind {
    AuditLog,
    ProvenanceRecord,
    /// Representable only; nothing in this crate produces it.
    IntegrityMeasurementList,
    /// Representable only; nothing in this crate produces it.
    DigitalCertificate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub kind: EvidenceKind,
    pub payload: BTreeMap<String, String>,
}

/// Evidence about an action or decision id: every event referencing it (or the
/// decision behind the action), in chain order, plus one provenance record.
pub fn evidence_for(store: &CentralAuditStore, id: &str) -> Vec<Evidence> {
    let decision_ids: Vec<&Id> = store
        .events()
        .iter()
        .filter(|e| e.action_id.as_deref() == Some(id))
        .filter_map(|e| e.decision_id.as_ref())
        .collect();
    let related: Vec<&AuditEvent> = store
        .events()
        .iter()
        .filter(|e| {
            e.references(id)
                || e.decision_id
                    .as_ref()
                    .is_some_and(|d| decision_ids.contains(&d))
        })
        .collect();
    if related.is_empty() {
        return Vec::new();
    }
    let mut out: Vec<Evidence> = related
        .iter()
        .map(|e| {
            let mut payload = e.details.clone();
            payload.insert("event".into(), e.id.clone());
            payload.insert("event-kind".into(), e.kind.as_str().into());
            payload.insert("emitter".into(), e.emitting_control_id.clone());
            payload.insert("chain-hash".into(), e.chain_hash.clone());
            if let Some(a) = &e.action_id {
                payload.insert("action".into(), a.clone());
            }
            if let Some(d) = &e.decision_id {
                payload.insert("decision".into(), d.clone());
            }
            Evidence {
                kind: EvidenceKind::AuditLog,
                payload,
            }
        })
        .collect();

    let source = related
        .iter()
        .find(|e| e.details.contains_key("requester"))
        .copied()
        .unwrap_or(related[0]);
    let mut prov = BTreeMap::new();
    if let (Some(r), Some(k), Some(t)) = (
        source.details.get("requester"),
        source.details.get("action-kind"),
        source.details.get("target"),
    ) {
        prov.insert("request".into(), format!("{r} {k} {t}"));
    }
    for key in ["decision-kind", "pdp", "policies"] {
        if let Some(v) = source.details.get(key) {
            prov.insert(key.into(), v.clone());
        }
    }
    prov.insert(
        "decision".into(),
        source.decision_id.clone().unwrap_or_else(|| "-".into()),
    );
    prov.insert(
        "action".into(),
        related
            .iter()
            .find_map(|e| e.action_id.clone())
            .unwrap_or_else(|| "-".into()),
    );
    out.push(Evidence {
        kind: EvidenceKind::ProvenanceRecord,
        payload: prov,
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainVerification {
    pub ok: bool,
    /// 0-based position of the first event whose chain does not verify.
    pub first_bad_index: Option<usize>,
}

impl ChainVerification {
    const OK: Self = Self {
        ok: true,
        first_bad_index: None,
    };

    fn bad(index: usize) -> Self {
        Self {
            ok: false,
            first_bad_index: Some(index),
        }
    }
}

/// Recomputes the chain of an in-memory store from genesis.
pub fn verify_chain(store: &CentralAuditStore) -> ChainVerification {
    let mut prev = GENESIS_DIGEST.to_string();
    for (i, ev) in store.events().iter().enumerate() {
        if ev.forwarded_to != *store.id()
            || chain_digest(&prev, &ev.canonical_bytes()) != ev.chain_hash
        {
            return ChainVerification::bad(i);
        }
        prev = ev.chain_hash.clone();
    }
    if prev != store.head_hash() {
        return ChainVerification {
            ok: false,
            first_bad_index: store.len().checked_sub(1),
        };
    }
    ChainVerification::OK
}

/// Verifies persisted bytes exactly: every record must be in canonical form and
/// the chain must recompute. A damaged header is reported at index 0, since no
/// event can be anchored without it.
pub fn verify_persisted(bytes: &[u8]) -> ChainVerification {
    let mut lines: Vec<&[u8]> = bytes.split(|b| *b == b'\n').collect();
    let terminated = lines.last().is_some_and(|l| l.is_empty());
    if terminated {
        lines.pop();
    }
    let Some((header_line, event_lines)) = lines.split_first() else {
        return ChainVerification {
            ok: false,
            first_bad_index: None,
        };
    };
    let header_bad = || ChainVerification {
        ok: false,
        first_bad_index: if event_lines.is_empty() {
            None
        } else {
            Some(0)
        },
    };
    let header: StoreHeader = match parse_canonical(header_line) {
        Some(h) => h,
        None => return header_bad(),
    };
    if header.check().is_err() {
        return header_bad();
    }
    let mut prev = header.genesis.clone();
    for (i, line) in event_lines.iter().enumerate() {
        let Some(ev) = parse_canonical::<AuditEvent>(line) else {
            return ChainVerification::bad(i);
        };
        if ev.forwarded_to != header.store
            || chain_digest(&prev, &ev.canonical_bytes()) != ev.chain_hash
        {
            return ChainVerification::bad(i);
        }
        prev = ev.chain_hash;
    }
    if !terminated {
        return match event_lines.len() {
            0 => header_bad(),
            n => ChainVerification::bad(n - 1),
        };
    }
    ChainVerification::OK
}

fn parse_canonical<T: Serialize + for<'de> Deserialize<'de>>(line: &[u8]) -> Option<T> {
    let value: T = serde_json::from_slice(line).ok()?;
    let again = serde_json::to_vec(&serde_json::to_value(&value).ok()?).ok()?;
    (again == line).then_some(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_model;
    use proptest::prelude::*;

    fn model() -> TrustDomainModel {
        parse_model(
            "model T central-store CAS\ndomain D\ncontrol PEP : pep in D\ncontrol AUD : audit in D central-store CAS\n\
control MGT : management in D\n\
             control LOOSE : pdp in D\n",
        )
        .unwrap_or_else(|e| panic!("{e:?}"))
    }

    fn filled(n: usize) -> (TrustDomainModel, CentralAuditStore) {
        let m = model();
        let mut s = CentralAuditStore::new("CAS");
        for i in 0..n {
            let kind = if i % 3 == 0 {
                EventKind::ActionBlocked
            } else {
                EventKind::ActionPerformed
            };
            forward(
                "AUD",
                NewEvent::new(kind, "PEP")
                    .action(format!("A{i}"))
                    .detail("n", i.to_string()),
                &m,
                &mut s,
            )
            .unwrap();
        }
        (m, s)
    }

    #[test]
    fn genesis_and_first_event() {
        let m = model();
        let mut s = CentralAuditStore::new("CAS");
        assert_eq!(s.head_hash(), GENESIS_DIGEST);
        assert_eq!(verify_chain(&s), ChainVerification::OK);
        let (id, hash) =
            record_event(&mut s, &m, NewEvent::new(EventKind::ActionPerformed, "PEP")).unwrap();
        assert_eq!(id, "ev-000001");
        assert_eq!(
            hash,
            chain_digest(GENESIS_DIGEST, &s.events()[0].canonical_bytes())
        );
        assert_eq!(s.head_hash(), hash);
    }

    #[test]
    fn identical_payloads_chain_differently() {
        let m = model();
        let mut s = CentralAuditStore::new("CAS");
        let ev = NewEvent::new(EventKind::ActionPerformed, "PEP").detail("x", "1");
        let (_, h1) = record_event(&mut s, &m, ev.clone()).unwrap();
        let (_, h2) = record_event(&mut s, &m, ev).unwrap();
        assert_ne!(h1, h2);
    }

    #[test]
    fn unknown_emitter() {
        let m = model();
        let mut s = CentralAuditStore::new("CAS");
        assert_eq!(
            record_event(
                &mut s,
                &m,
                NewEvent::new(EventKind::ActionPerformed, "nobody")
            ),
            Err(AuditError::UnknownControl("nobody".into()))
        );
        assert!(s.is_empty());
    }

    #[test]
    fn forwarding_and_alerts() {
        let m = model();
        let mut s = CentralAuditStore::new("CAS");
        let f = forward(
            "AUD",
            NewEvent::new(EventKind::ActionPerformed, "PEP"),
            &m,
            &mut s,
        )
        .unwrap();
        assert!(f.alert_id.is_none());
        assert_eq!(s.len(), 1);
        let f = forward(
            "AUD",
            NewEvent::new(EventKind::ActionBlocked, "PEP").decision("D1"),
            &m,
            &mut s,
        )
        .unwrap();
        let alert = s
            .events()
            .iter()
            .find(|e| Some(&e.id) == f.alert_id.as_ref())
            .unwrap();
        assert_eq!(alert.kind, EventKind::Alert);
        assert_eq!(alert.details["management-agent"], "MGT");
        assert_eq!(alert.decision_id.as_deref(), Some("D1"));
        assert!(!alert.critical);
        assert_eq!(s.len(), 3);
        assert_eq!(
            forward("PEP", NewEvent::new(EventKind::Alert, "PEP"), &m, &mut s),
            Err(AuditError::UnknownAgent("PEP".into()))
        );
        let mut other = CentralAuditStore::new("Other");
        assert!(matches!(
            forward(
                "AUD",
                NewEvent::new(EventKind::Alert, "PEP"),
                &m,
                &mut other
            ),
            Err(AuditError::WrongStore { .. })
        ));
    }

    #[test]
    fn missing_central_store() {
        let mut m = model();
        m.controls.get_mut("AUD").unwrap().central_store_id = None;
        let mut s = CentralAuditStore::new("CAS");
        assert_eq!(
            forward(
                "AUD",
                NewEvent::new(EventKind::ActionPerformed, "PEP"),
                &m,
                &mut s
            ),
            Err(AuditError::NoCentralStore("AUD".into()))
        );
    }

    #[test]
    fn failed_validation_is_critical() {
        assert!(NewEvent::state_validated("MGT", "R1", "clean", false).critical);
        assert!(!NewEvent::state_validated("MGT", "R1", "clean", true).critical);
        assert!(NewEvent::new(EventKind::Deprovision, "MGT").critical);
        assert!(!NewEvent::new(EventKind::Provision, "MGT").critical);
    }

    #[test]
    fn alert_count_matches_critical_count() {
        let (_, s) = filled(10);
        let alerts = s
            .events()
            .iter()
            .filter(|e| e.kind == EventKind::Alert)
            .count();
        let critical = s.events().iter().filter(|e| e.critical).count();
        assert_eq!(alerts, critical);
        assert_eq!(alerts, 4);
    }

    #[test]
    fn evidence_queries() {
        let (_, s) = filled(4);
        assert!(evidence_for(&s, "unknown").is_empty());
        let ev = evidence_for(&s, "A1");
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[0].kind, EvidenceKind::AuditLog);
        assert_eq!(ev[1].kind, EvidenceKind::ProvenanceRecord);
        assert_eq!(ev[1].payload["action"], "A1");
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let (_, s) = filled(7);
        let text = s.save();
        let loaded = CentralAuditStore::load(&text).unwrap();
        assert_eq!(loaded, s);
        assert_eq!(loaded.save(), text);
        assert_eq!(verify_chain(&loaded), ChainVerification::OK);
        assert_eq!(verify_persisted(text.as_bytes()), ChainVerification::OK);
        let empty = CentralAuditStore::new("CAS").save();
        assert_eq!(verify_persisted(empty.as_bytes()), ChainVerification::OK);
        assert_eq!(
            CentralAuditStore::load(&empty).unwrap(),
            CentralAuditStore::new("CAS")
        );
    }

    #[test]
    fn tampered_in_memory_chain_is_detected() {
        let (_, s) = filled(5);
        let mut text = s.save();
        text = text.replacen("\"n\":\"2\"", "\"n\":\"9\"", 1);
        let tampered = CentralAuditStore::load(&text).unwrap();
        let k = tampered
            .events()
            .iter()
            .position(|e| e.details.get("n").map(String::as_str) == Some("9"))
            .unwrap();
        assert_eq!(verify_chain(&tampered), ChainVerification::bad(k));
    }

    proptest! {
        #[test]
        fn any_single_byte_change_is_detected(pos_seed in any::<prop::sample::Index>(), mask in 1u8..=255) {
            let (_, s) = filled(6);
            let mut bytes = s.save().into_bytes();
            let pos = pos_seed.index(bytes.len());
            let header_len = bytes.iter().position(|b| *b == b'\n').unwrap() + 1;
            let expected = if pos < header_len {
                0
            } else {
                bytes[header_len..pos].iter().filter(|b| **b == b'\n').count()
            };
            bytes[pos] ^= mask;
            let v = verify_persisted(&bytes);
            prop_assert!(!v.ok);
            prop_assert_eq!(v.first_bad_index, Some(expected));
        }
    }
}
