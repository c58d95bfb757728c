use std::fmt::Write;

use crate::model::{AgentKind, Direction, Rule, TrustDomainModel};

/// Renders a model in canonical `.tdm` form: a `model` header, then declarations
/// grouped by kind and sorted by identifier within each group. Output uses LF.
///
/// Functional relations are written from their single value; a model with
/// cardinality faults (see [`crate::axioms`]) is not representable and is
/// written from the lowest-sorting value.
pub fn serialize(model: &TrustDomainModel) -> String {
    let mut out = String::new();
    out.push_str("model ");
    out.push_str(&model.name);
    if let Some(cs) = &model.central_audit_store_id {
        write!(out, " central-store {cs}").unwrap();
    }
    out.push('\n');

    for d in model.domains.keys() {
        writeln!(out, "domain {d}").unwrap();
    }
    for r in model.roles.keys() {
        writeln!(out, "role {r}").unwrap();
    }
    for e in model.entities.values() {
        let ty = e
            .entity_types
            .iter()
            .next()
            .map(|t| t.as_str())
            .unwrap_or("?");
        write!(out, "entity {} : {ty}", e.id).unwrap();
        if !e.memberships.is_empty() {
            write!(out, " in {}", join(e.memberships.iter())).unwrap();
        }
        if !e.role_ids.is_empty() {
            write!(out, " role {}", join(e.role_ids.iter())).unwrap();
        }
        out.push('\n');
    }
    for a in model.assets.values() {
        let owner = model
            .asset_owners(&a.id)
            .first()
            .map(|s| s.as_str())
            .unwrap_or("?");
        write!(
            out,
            "asset {} : {} owner {owner}",
            a.id,
            a.asset_type.as_str()
        )
        .unwrap();
        if let Some(p) = &a.provided_by {
            write!(out, " provided-by {p}").unwrap();
        }
        if let Some(m) = &a.provisioned_by {
            write!(out, " provisioned-by {m}").unwrap();
        }
        if let Some(s) = &a.state {
            write!(out, " state {s}").unwrap();
        }
        out.push('\n');
    }
    for a in model.agents.values() {
        let owner = model
            .agent_owners(&a.id)
            .first()
            .map(|s| s.as_str())
            .unwrap_or("?");
        write!(out, "agent {} owner {owner}", a.id).unwrap();
        if a.acts_on_behalf_of != owner {
            write!(out, " for {}", a.acts_on_behalf_of).unwrap();
        }
        if a.kind == AgentKind::DomainManagementAgent {
            out.push_str(" kind management");
        }
        out.push('\n');
    }
    for c in model.controls.values() {
        write!(
            out,
            "control {} : {} in {}",
            c.id,
            c.kind.keyword(),
            c.domain_id
        )
        .unwrap();
        if let Some(s) = &c.central_store_id {
            write!(out, " central-store {s}").unwrap();
        }
        out.push('\n');
    }
    for s in model.policy_stores.values() {
        writeln!(out, "store {} in {}", s.id, s.domain_id).unwrap();
    }
    for p in model.policies.values() {
        let by = model
            .policy_establishers(&p.id)
            .first()
            .map(|s| s.as_str())
            .unwrap_or("?");
        let scope = p
            .scope_domain_ids
            .iter()
            .next()
            .map(|s| s.as_str())
            .unwrap_or("?");
        write!(out, "policy {} by {by} scope {scope}", p.id).unwrap();
        if p.is_delivery_policy {
            out.push_str(" delivery");
        }
        if let Some(t) = &p.tag {
            write!(out, " tag {t}").unwrap();
        }
        if !p.equivalent_to.is_empty() {
            write!(out, " equivalent-to {}", join(p.equivalent_to.iter())).unwrap();
        }
        out.push_str(" {\n");
        for rule in &p.rules {
            out.push_str("  ");
            match rule {
                Rule::Flow(f) => {
                    let arrow = match f.direction {
                        Direction::Uni => "->",
                        Direction::Bi => "<->",
                    };
                    write!(out, "flow {} {arrow} {}", f.source, f.dest).unwrap();
                }
                Rule::Action(a) => {
                    write!(
                        out,
                        "{} {} on {} target {}",
                        a.effect.keyword(),
                        a.subject,
                        a.action_kind,
                        a.target
                    )
                    .unwrap();
                    if let Some(g) = &a.guard {
                        write!(out, " when {g}").unwrap();
                    }
                    if let Some(s) = &a.enables_state {
                        write!(out, " enables {s}").unwrap();
                    }
                }
            }
            out.push('\n');
        }
        out.push('}');
        if let Some(agent) = p.published_by.iter().next() {
            write!(out, " published-by {agent}").unwrap();
            if let Some(store) = &p.published_to {
                write!(out, " to {store}").unwrap();
            }
        }
        out.push('\n');
    }
    for (agent, store) in &model.published_policy_to {
        writeln!(out, "published-policy-to {agent} {store}").unwrap();
    }
    out
}

fn join<'a>(items: impl Iterator<Item = &'a String>) -> String {
    items.map(String::as_str).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_model;

    #[test]
    fn empty_model_is_header_only() {
        assert_eq!(serialize(&TrustDomainModel::default()), "model untitled\n");
        let m = parse_model("").unwrap();
        assert_eq!(m.element_count(), 0);
        assert_eq!(serialize(&m), "model untitled\n");
    }

    #[test]
    fn canonical_order_and_idempotence() {
        let text = "role Z\ndomain B\ndomain A\nrole Y\nentity E : System in B,A role Z\n";
        let m = parse_model(text).unwrap();
        let s = serialize(&m);
        assert_eq!(
            s,
            "model untitled\ndomain A\ndomain B\nrole Y\nrole Z\nentity E : System in A,B role Z\n"
        );
        assert_eq!(serialize(&parse_model(&s).unwrap()), s);
    }
}
