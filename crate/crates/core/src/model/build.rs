use std::collections::{BTreeMap, BTreeSet};

use crate::dsl::ast::{DeclItem, Declaration, PolicyDecl, Span};
use crate::model::{
    Agent, AgentKind, Asset, AssetType, Control, ControlKind, Domain, DomainEntity,
    DomainPolicyStore, ElementKind, Id, ModelError, Policy, Role, Rule, Selector, TrustDomainModel,
    DEFAULT_MODEL_NAME,
};

/// A structural error located at the declaration that caused it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildError {
    pub error: ModelError,
    pub span: Span,
    /// Second location involved, e.g. the first declaration of a duplicated id.
    pub related: Option<Span>,
}

impl BuildError {
    fn at(error: ModelError, span: Span) -> Self {
        Self {
            error,
            span,
            related: None,
        }
    }
}

struct Registry<'a> {
    kinds: BTreeMap<&'a str, (ElementKind, Span)>,
    asset_types: BTreeMap<&'a str, AssetType>,
    agent_kinds: BTreeMap<&'a str, AgentKind>,
    control_kinds: BTreeMap<&'a str, ControlKind>,
}

impl Registry<'_> {
    fn kind(&self, id: &str) -> Option<ElementKind> {
        self.kinds.get(id).map(|(k, _)| *k)
    }

    fn is_management(&self, id: &str) -> bool {
        self.agent_kinds.get(id) == Some(&AgentKind::DomainManagementAgent)
            || self.control_kinds.get(id) == Some(&ControlKind::DomainManagementAgent)
    }

    fn is_data(&self, id: &str) -> bool {
        self.asset_types.get(id) == Some(&AssetType::Data)
            || self.kind(id) == Some(ElementKind::Policy)
    }
}

struct Checker<'a> {
    reg: Registry<'a>,
    errors: Vec<BuildError>,
}

impl Checker<'_> {
    /// Reports a dangling reference or a kind mismatch; true when `target` resolves to one of `expected`.
    fn expect(&mut self, from: &str, target: &str, expected: &[ElementKind], span: Span) -> bool {
        match self.reg.kind(target) {
            None => {
                self.errors.push(BuildError::at(
                    ModelError::DanglingReference {
                        from: from.to_string(),
                        missing: target.to_string(),
                    },
                    span,
                ));
                false
            }
            Some(k) if expected.contains(&k) => true,
            Some(k) => {
                let wanted: Vec<String> = expected.iter().map(|e| e.to_string()).collect();
                self.mismatch(
                    from,
                    format!("`{target}` is a {k}, expected {}", wanted.join(" or ")),
                    span,
                );
                false
            }
        }
    }

    fn mismatch(&mut self, id: &str, message: String, span: Span) {
        self.errors.push(BuildError::at(
            ModelError::TypeMismatch {
                id: id.to_string(),
                message,
            },
            span,
        ));
    }

    fn check_policy(&mut self, p: &PolicyDecl, span: Span) {
        self.expect(&p.id, &p.establisher, &[ElementKind::Role], span);
        self.expect(&p.id, &p.scope, &[ElementKind::Domain], span);
        if let Some(agent) = &p.published_by {
            if self.expect(
                &p.id,
                agent,
                &[ElementKind::Agent, ElementKind::Control],
                span,
            ) && !self.reg.is_management(agent)
            {
                self.mismatch(
                    &p.id,
                    format!("publisher `{agent}` is not a domain management agent"),
                    span,
                );
            }
        }
        if let Some(store) = &p.published_to {
            self.expect(&p.id, store, &[ElementKind::PolicyStore], span);
        }
        for other in &p.equivalent_to {
            if other == &p.id {
                self.mismatch(
                    &p.id,
                    "a policy cannot be equivalent to itself".to_string(),
                    span,
                );
            } else {
                self.expect(&p.id, other, &[ElementKind::Policy], span);
            }
        }
        for r in &p.rules {
            match &r.rule {
                Rule::Flow(f) => {
                    for end in [&f.source, &f.dest] {
                        if self.reg.kind(end).is_none() {
                            self.expect(&p.id, end, &[], r.span);
                        } else if !self.reg.is_data(end) {
                            self.mismatch(
                                &p.id,
                                format!("flow endpoints must be Data assets (`{end}` is not)"),
                                r.span,
                            );
                        }
                    }
                }
                Rule::Action(a) => {
                    if let Selector::Id(s) = &a.subject {
                        self.expect(
                            &p.id,
                            s,
                            &[
                                ElementKind::Role,
                                ElementKind::Entity,
                                ElementKind::Agent,
                                ElementKind::Control,
                            ],
                            r.span,
                        );
                    }
                    if let Selector::Id(t) = &a.target {
                        if self.reg.kind(t).is_none() {
                            self.expect(&p.id, t, &[], r.span);
                        }
                    }
                }
            }
        }
    }
}

/// Assembles declarations into a referentially consistent model.
///
/// Only structure is checked here; taxonomy axioms are the job of [`crate::axioms`].
pub fn build_model(decls: &[Declaration]) -> Result<TrustDomainModel, Vec<BuildError>> {
    let mut errors = Vec::new();
    let mut reg = Registry {
        kinds: BTreeMap::new(),
        asset_types: BTreeMap::new(),
        agent_kinds: BTreeMap::new(),
        control_kinds: BTreeMap::new(),
    };
    let mut header: Option<(&Declaration, &crate::dsl::ast::ModelDecl)> = None;

    for decl in decls {
        let (id, kind): (&Id, ElementKind) = match &decl.item {
            DeclItem::Model(m) => {
                if let Some((first, _)) = header {
                    errors.push(BuildError {
                        error: ModelError::DuplicateIdentifier {
                            id: "model".to_string(),
                        },
                        span: decl.span,
                        related: Some(first.span),
                    });
                    continue;
                }
                header = Some((decl, m));
                match &m.central_store {
                    Some(cs) => (cs, ElementKind::CentralStore),
                    None => continue,
                }
            }
            DeclItem::PublishedPolicyTo(_) => continue,
            DeclItem::Domain(d) => (&d.id, ElementKind::Domain),
            DeclItem::Role(d) => (&d.id, ElementKind::Role),
            DeclItem::Entity(d) => (&d.id, ElementKind::Entity),
            DeclItem::Asset(d) => {
                reg.asset_types.entry(&d.id).or_insert(d.asset_type);
                (&d.id, ElementKind::Asset)
            }
            DeclItem::Agent(d) => {
                reg.agent_kinds.entry(&d.id).or_insert(d.kind);
                (&d.id, ElementKind::Agent)
            }
            DeclItem::Control(d) => {
                reg.control_kinds.entry(&d.id).or_insert(d.kind);
                (&d.id, ElementKind::Control)
            }
            DeclItem::Store(d) => (&d.id, ElementKind::PolicyStore),
            DeclItem::Policy(d) => (&d.id, ElementKind::Policy),
        };
        if let Some((_, first)) = reg.kinds.get(id.as_str()) {
            errors.push(BuildError {
                error: ModelError::DuplicateIdentifier { id: id.clone() },
                span: decl.span,
                related: Some(*first),
            });
        } else {
            reg.kinds.insert(id, (kind, decl.span));
        }
    }

    let mut ck = Checker { reg, errors };
    for decl in decls {
        let span = decl.span;
        match &decl.item {
            DeclItem::Model(_) | DeclItem::Domain(_) | DeclItem::Role(_) => {}
            DeclItem::Entity(e) => {
                for d in &e.domains {
                    ck.expect(&e.id, d, &[ElementKind::Domain], span);
                }
                for r in &e.roles {
                    ck.expect(&e.id, r, &[ElementKind::Role], span);
                }
            }
            DeclItem::Asset(a) => {
                ck.expect(&a.id, &a.owner, &[ElementKind::Role], span);
                if let Some(p) = &a.provided_by {
                    if a.asset_type != AssetType::Service {
                        ck.mismatch(
                            &a.id,
                            "only services may be provided by a resource".to_string(),
                            span,
                        );
                    } else if ck.expect(&a.id, p, &[ElementKind::Asset], span)
                        && !matches!(
                            ck.reg.asset_types.get(p.as_str()),
                            Some(AssetType::Resource | AssetType::Service)
                        )
                    {
                        ck.mismatch(
                            &a.id,
                            format!("provider `{p}` is not a Resource or Service asset"),
                            span,
                        );
                    }
                }
                if let Some(m) = &a.provisioned_by {
                    if a.asset_type != AssetType::Resource {
                        ck.mismatch(
                            &a.id,
                            "only Resource assets can be provisioned".to_string(),
                            span,
                        );
                    } else {
                        ck.expect(&a.id, m, &[ElementKind::Agent, ElementKind::Control], span);
                    }
                }
                if a.state.is_some() && a.asset_type != AssetType::Resource {
                    ck.mismatch(&a.id, "only Resource assets carry state".to_string(), span);
                }
            }
            DeclItem::Agent(a) => {
                ck.expect(&a.id, &a.owner, &[ElementKind::Role], span);
                if let Some(r) = &a.acts_for {
                    ck.expect(&a.id, r, &[ElementKind::Role], span);
                }
            }
            DeclItem::Control(c) => {
                ck.expect(&c.id, &c.domain, &[ElementKind::Domain], span);
                match (&c.central_store, c.kind) {
                    (Some(s), ControlKind::DomainAuditAgent) => {
                        ck.expect(&c.id, s, &[ElementKind::CentralStore], span);
                    }
                    (None, ControlKind::DomainAuditAgent) => ck.mismatch(
                        &c.id,
                        "audit agents must name a central-store".to_string(),
                        span,
                    ),
                    (Some(_), _) => ck.mismatch(
                        &c.id,
                        "only audit agents forward to a central-store".to_string(),
                        span,
                    ),
                    (None, _) => {}
                }
            }
            DeclItem::Store(s) => {
                ck.expect(&s.id, &s.domain, &[ElementKind::Domain], span);
            }
            DeclItem::Policy(p) => ck.check_policy(p, span),
            DeclItem::PublishedPolicyTo(l) => {
                if ck.expect(
                    &l.agent,
                    &l.agent,
                    &[ElementKind::Agent, ElementKind::Control],
                    span,
                ) && !ck.reg.is_management(&l.agent)
                {
                    ck.mismatch(
                        &l.agent,
                        "only domain management agents publish policies".to_string(),
                        span,
                    );
                }
                ck.expect(&l.agent, &l.store, &[ElementKind::PolicyStore], span);
            }
        }
    }

    if !ck.errors.is_empty() {
        return Err(ck.errors);
    }

    let mut model = match header {
        Some((_, m)) => {
            let mut model = TrustDomainModel::named(m.name.clone());
            model.central_audit_store_id = m.central_store.clone();
            model
        }
        None => TrustDomainModel::named(DEFAULT_MODEL_NAME),
    };

    // Roles first so ownership can be attached from any declaration order.
    for decl in decls {
        if let DeclItem::Role(r) = &decl.item {
            model.roles.insert(
                r.id.clone(),
                Role {
                    id: r.id.clone(),
                    ..Role::default()
                },
            );
        }
    }
    let mut equivalences: Vec<(Id, Id)> = Vec::new();
    for decl in decls {
        match &decl.item {
            DeclItem::Model(_) | DeclItem::Role(_) => {}
            DeclItem::Domain(d) => {
                model
                    .domains
                    .insert(d.id.clone(), Domain { id: d.id.clone() });
            }
            DeclItem::Entity(e) => {
                model.entities.insert(
                    e.id.clone(),
                    DomainEntity {
                        id: e.id.clone(),
                        entity_types: BTreeSet::from([e.entity_type]),
                        memberships: e.domains.iter().cloned().collect(),
                        role_ids: e.roles.iter().cloned().collect(),
                    },
                );
            }
            DeclItem::Asset(a) => {
                model.assets.insert(
                    a.id.clone(),
                    Asset {
                        id: a.id.clone(),
                        asset_type: a.asset_type,
                        state: a.state.clone(),
                        provisioned_by: a.provisioned_by.clone(),
                        provided_by: a.provided_by.clone(),
                    },
                );
                role_mut(&mut model, &a.owner)
                    .owned_asset_ids
                    .insert(a.id.clone());
            }
            DeclItem::Agent(a) => {
                model.agents.insert(
                    a.id.clone(),
                    Agent {
                        id: a.id.clone(),
                        acts_on_behalf_of: a.acts_for.clone().unwrap_or_else(|| a.owner.clone()),
                        kind: a.kind,
                    },
                );
                role_mut(&mut model, &a.owner)
                    .owned_agent_ids
                    .insert(a.id.clone());
            }
            DeclItem::Control(c) => {
                model.controls.insert(
                    c.id.clone(),
                    Control {
                        id: c.id.clone(),
                        kind: c.kind,
                        domain_id: c.domain.clone(),
                        central_store_id: c.central_store.clone(),
                    },
                );
            }
            DeclItem::Store(s) => {
                model.policy_stores.insert(
                    s.id.clone(),
                    DomainPolicyStore {
                        id: s.id.clone(),
                        domain_id: s.domain.clone(),
                    },
                );
            }
            DeclItem::Policy(p) => {
                model.policies.insert(
                    p.id.clone(),
                    Policy {
                        id: p.id.clone(),
                        scope_domain_ids: BTreeSet::from([p.scope.clone()]),
                        rules: p.rules.iter().map(|r| r.rule.clone()).collect(),
                        published_by: p.published_by.iter().cloned().collect(),
                        published_to: p.published_to.clone(),
                        equivalent_to: BTreeSet::new(),
                        is_delivery_policy: p.delivery,
                        tag: p.tag.clone(),
                    },
                );
                role_mut(&mut model, &p.establisher)
                    .established_policy_ids
                    .insert(p.id.clone());
                equivalences.extend(p.equivalent_to.iter().map(|q| (p.id.clone(), q.clone())));
            }
            DeclItem::PublishedPolicyTo(l) => {
                model
                    .published_policy_to
                    .insert((l.agent.clone(), l.store.clone()));
            }
        }
    }
    for (a, b) in equivalences {
        if let Some(p) = model.policies.get_mut(&a) {
            p.equivalent_to.insert(b.clone());
        }
        if let Some(q) = model.policies.get_mut(&b) {
            q.equivalent_to.insert(a);
        }
    }
    Ok(model)
}

fn role_mut<'m>(model: &'m mut TrustDomainModel, id: &str) -> &'m mut Role {
    model
        .roles
        .get_mut(id)
        .expect("role references are checked before assembly")
}
