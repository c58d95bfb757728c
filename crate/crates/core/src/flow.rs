//! Data-flow analysis over policy flow rules.
//!
//! Every flow rule contributes directed edges between data stores. Each policy
//! with at least one flow rule induces its own trust domain, so domains that
//! share a store intersect without merging. Reachability is reported
//! transitively, but an observed transfer is only legal along a direct edge.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Direction, Id, TrustDomainModel};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowEdge {
    pub source: Id,
    pub dest: Id,
    pub policy_id: Id,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowGraph {
    pub nodes: BTreeSet<Id>,
    pub edges: BTreeSet<FlowEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowError {
    #[error("`{0}` is not a node of the flow graph")]
    UnknownNode(Id),
}

impl FlowGraph {
    /// Successor sets, collapsing parallel edges from different policies.
    pub fn adjacency(&self) -> BTreeMap<&Id, BTreeSet<&Id>> {
        let mut adj: BTreeMap<&Id, BTreeSet<&Id>> =
            self.nodes.iter().map(|n| (n, BTreeSet::new())).collect();
        for e in &self.edges {
            adj.entry(&e.source).or_default().insert(&e.dest);
        }
        adj
    }

    pub fn out_degree(&self, node: &str) -> usize {
        self.adjacency()
            .get(&node.to_string())
            .map_or(0, BTreeSet::len)
    }

    pub fn in_degree(&self, node: &str) -> usize {
        self.edges
            .iter()
            .filter(|e| e.dest == node)
            .map(|e| &e.source)
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn has_edge(&self, source: &str, dest: &str) -> bool {
        self.edges
            .iter()
            .any(|e| e.source == source && e.dest == dest)
    }

    /// Policies that generate the edge `source -> dest`.
    pub fn edge_policies(&self, source: &str, dest: &str) -> BTreeSet<&Id> {
        self.edges
            .iter()
            .filter(|e| e.source == source && e.dest == dest)
            .map(|e| &e.policy_id)
            .collect()
    }

    /// Graphviz rendering; edges are labelled with their generating policy.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph flows {\n");
        for n in &self.nodes {
            writeln!(out, "  {};", quote(n)).unwrap();
        }
        for e in &self.edges {
            writeln!(
                out,
                "  {} -> {} [label={}];",
                quote(&e.source),
                quote(&e.dest),
                quote(&e.policy_id)
            )
            .unwrap();
        }
        out.push_str("}\n");
        out
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn build_flow_graph(model: &TrustDomainModel) -> FlowGraph {
    let mut graph = FlowGraph::default();
    graph
        .nodes
        .extend(model.assets.keys().filter(|id| model.is_data(id)).cloned());
    for p in model.policies.values() {
        for f in p.flow_rules() {
            graph.nodes.insert(f.source.clone());
            graph.nodes.insert(f.dest.clone());
            graph.edges.insert(FlowEdge {
                source: f.source.clone(),
                dest: f.dest.clone(),
                policy_id: p.id.clone(),
            });
            if f.direction == Direction::Bi {
                graph.edges.insert(FlowEdge {
                    source: f.dest.clone(),
                    dest: f.source.clone(),
                    policy_id: p.id.clone(),
                });
            }
        }
    }
    graph
}

/// Shortest directed path from `src` to `dst`.
///
/// Among equally short paths the lexicographically smallest node sequence is
/// returned. `reachable(g, x, x)` is `[x]`.
pub fn reachable(graph: &FlowGraph, src: &str, dst: &str) -> Result<Option<Vec<Id>>, FlowError> {
    for n in [src, dst] {
        if !graph.nodes.contains(n) {
            return Err(FlowError::UnknownNode(n.to_string()));
        }
    }
    if src == dst {
        return Ok(Some(vec![src.to_string()]));
    }
    let adj = graph.adjacency();
    let mut parent: BTreeMap<&Id, &Id> = BTreeMap::new();
    let start = graph.nodes.get(src).expect("checked above");
    let mut seen: BTreeSet<&Id> = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    // FIFO order plus sorted successors makes first discovery the lexicographically least shortest path.
    while let Some(node) = queue.pop_front() {
        for &next in adj.get(node).into_iter().flatten() {
            if seen.insert(next) {
                parent.insert(next, node);
                if next == dst {
                    let mut path = vec![next.clone()];
                    let mut cur = next;
                    while let Some(&p) = parent.get(cur) {
                        path.push(p.clone());
                        cur = p;
                    }
                    path.reverse();
                    return Ok(Some(path));
                }
                queue.push_back(next);
            }
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionProfile {
    Bidirectional,
    OneDirectional,
    Mixed,
}

impl DirectionProfile {
    pub fn as_str(self) -> &'static str {
        match self {
            DirectionProfile::Bidirectional => "bidirectional",
            DirectionProfile::OneDirectional => "one-directional",
            DirectionProfile::Mixed => "mixed",
        }
    }
}

/// A trust domain induced by one policy's flow rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedDomain {
    pub name: String,
    pub member_store_ids: BTreeSet<Id>,
    /// Roles owning the member stores, in order of first appearance in the rules.
    pub owner_role_ids: Vec<Id>,
    /// Entities holding an owner role.
    pub member_entity_ids: BTreeSet<Id>,
    pub generating_policy_ids: BTreeSet<Id>,
    pub direction_profile: DirectionProfile,
}

/// One domain per policy with flow rules, sorted by name then policy.
///
/// The name joins the owner roles in order of first appearance in the policy's
/// flow rules, followed by the policy tag when one is declared.
pub fn derive_trust_domains(model: &TrustDomainModel) -> Vec<DerivedDomain> {
    let mut out = Vec::new();
    for p in model.policies.values() {
        let flows: Vec<_> = p.flow_rules().collect();
        if flows.is_empty() {
            continue;
        }
        let mut stores = BTreeSet::new();
        let mut owners: Vec<Id> = Vec::new();
        for f in &flows {
            for end in [&f.source, &f.dest] {
                stores.insert(end.clone());
                let owner = if model.policies.contains_key(end) {
                    model.policy_establisher(end)
                } else {
                    model.asset_owner(end)
                };
                if let Some(o) = owner {
                    if !owners.contains(o) {
                        owners.push(o.clone());
                    }
                }
            }
        }
        let directions: BTreeSet<_> = flows.iter().map(|f| f.direction == Direction::Bi).collect();
        let direction_profile = match (directions.contains(&true), directions.contains(&false)) {
            (true, false) => DirectionProfile::Bidirectional,
            (false, true) => DirectionProfile::OneDirectional,
            _ => DirectionProfile::Mixed,
        };
        let mut name = owners.join("-");
        if let Some(tag) = &p.tag {
            if !name.is_empty() {
                name.push('-');
            }
            name.push_str(tag);
        }
        let member_entity_ids = owners
            .iter()
            .flat_map(|r| model.role_holders(r))
            .cloned()
            .collect();
        out.push(DerivedDomain {
            name,
            member_store_ids: stores,
            owner_role_ids: owners,
            member_entity_ids,
            generating_policy_ids: BTreeSet::from([p.id.clone()]),
            direction_profile,
        });
    }
    out.sort_by(|a, b| {
        (&a.name, &a.generating_policy_ids).cmp(&(&b.name, &b.generating_policy_ids))
    });
    out
}

/// An observed transfer between two stores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowEvent {
    pub seq: u64,
    pub source: Id,
    pub dest: Id,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowViolationKind {
    /// An endpoint is not a data store of the model.
    UnknownEndpoint,
    /// No policy agrees to a direct flow from source to dest.
    NoAgreement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowViolation {
    pub event: FlowEvent,
    pub kind: FlowViolationKind,
    /// Policies that permit the opposite direction only.
    pub reverse_policy_ids: BTreeSet<Id>,
    /// Derived domains of those policies.
    pub reverse_domains: BTreeSet<String>,
    /// A transitive route that exists even though the direct transfer is not agreed.
    pub transitive_path: Option<Vec<Id>>,
}

/// Flags every event that is not a direct edge of the flow graph.
pub fn check_flow_log(model: &TrustDomainModel, events: &[FlowEvent]) -> Vec<FlowViolation> {
    let graph = build_flow_graph(model);
    let domains = derive_trust_domains(model);
    let mut out = Vec::new();
    for ev in events {
        if !graph.nodes.contains(&ev.source) || !graph.nodes.contains(&ev.dest) {
            out.push(FlowViolation {
                event: ev.clone(),
                kind: FlowViolationKind::UnknownEndpoint,
                reverse_policy_ids: BTreeSet::new(),
                reverse_domains: BTreeSet::new(),
                transitive_path: None,
            });
            continue;
        }
        if graph.has_edge(&ev.source, &ev.dest) {
            continue;
        }
        let reverse_policy_ids: BTreeSet<Id> = graph
            .edge_policies(&ev.dest, &ev.source)
            .into_iter()
            .cloned()
            .collect();
        let reverse_domains = domains
            .iter()
            .filter(|d| !d.generating_policy_ids.is_disjoint(&reverse_policy_ids))
            .map(|d| d.name.clone())
            .collect();
        let transitive_path = reachable(&graph, &ev.source, &ev.dest).expect("endpoints are nodes");
        out.push(FlowViolation {
            event: ev.clone(),
            kind: FlowViolationKind::NoAgreement,
            reverse_policy_ids,
            reverse_domains,
            transitive_path,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct FlowLogError {
    pub line: usize,
    pub message: String,
}

/// Reads `seq <n> flow <SRC> -> <DST>` records; `#` comments and blank lines are skipped.
/// Sequence numbers must strictly increase.
pub fn parse_flow_log(text: &str) -> Result<Vec<FlowEvent>, FlowLogError> {
    let mut out: Vec<FlowEvent> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| FlowLogError { line, message };
        let fields: Vec<&str> = content.split_whitespace().collect();
        let [kw_seq, n, kw_flow, src, arrow, dst] = fields.as_slice() else {
            return Err(err("expected `seq <n> flow <SRC> -> <DST>`".to_string()));
        };
        if *kw_seq != "seq" || *kw_flow != "flow" || *arrow != "->" {
            return Err(err("expected `seq <n> flow <SRC> -> <DST>`".to_string()));
        }
        let seq: u64 = n
            .parse()
            .map_err(|_| err(format!("invalid sequence number `{n}`")))?;
        if let Some(prev) = out.last() {
            if seq <= prev.seq {
                return Err(err(format!(
                    "sequence number {seq} does not follow {}",
                    prev.seq
                )));
            }
        }
        out.push(FlowEvent {
            seq,
            source: src.to_string(),
            dest: dst.to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn graph(nodes: &[&str], edges: &[(&str, &str)]) -> FlowGraph {
        FlowGraph {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            edges: edges
                .iter()
                .map(|(a, b)| FlowEdge {
                    source: a.to_string(),
                    dest: b.to_string(),
                    policy_id: "P".into(),
                })
                .collect(),
        }
    }

    #[test]
    fn bidirectional_rule_gives_two_edges() {
        let m = crate::dsl::parse_model(
            "domain D\nrole R\nasset A : Data owner R\nasset B : Data owner R\npolicy P by R scope D {\n  flow A <-> B\n}\n",
        )
        .unwrap();
        let g = build_flow_graph(&m);
        let pairs: Vec<_> = g
            .edges
            .iter()
            .map(|e| (e.source.as_str(), e.dest.as_str()))
            .collect();
        assert_eq!(pairs, vec![("A", "B"), ("B", "A")]);
    }

    #[test]
    fn no_rules_gives_isolated_nodes() {
        let m =
            crate::dsl::parse_model("role R\nasset A : Data owner R\nasset S : Service owner R\n")
                .unwrap();
        let g = build_flow_graph(&m);
        assert_eq!(g.nodes.len(), 1);
        assert!(g.edges.is_empty());
        assert!(derive_trust_domains(&m).is_empty());
    }

    #[test]
    fn reach_self_and_unknown() {
        let g = graph(&["a", "b"], &[]);
        assert_eq!(
            reachable(&g, "a", "a").unwrap(),
            Some(vec!["a".to_string()])
        );
        assert_eq!(reachable(&g, "a", "b").unwrap(), None);
        assert_eq!(
            reachable(&g, "a", "z"),
            Err(FlowError::UnknownNode("z".into()))
        );
    }

    #[test]
    fn ties_break_lexicographically() {
        let g = graph(
            &["s", "m", "b", "t"],
            &[("s", "m"), ("s", "b"), ("m", "t"), ("b", "t")],
        );
        assert_eq!(
            reachable(&g, "s", "t").unwrap().unwrap(),
            vec!["s", "b", "t"]
        );
    }

    #[test]
    fn flow_log_parsing() {
        let log = "# observed\nseq 1 flow A -> B\n\nseq 5 flow B -> A # late\n";
        let ev = parse_flow_log(log).unwrap();
        assert_eq!(ev.len(), 2);
        assert_eq!(
            ev[1],
            FlowEvent {
                seq: 5,
                source: "B".into(),
                dest: "A".into()
            }
        );
        assert_eq!(
            parse_flow_log("seq 2 flow A -> B\nseq 2 flow B -> A")
                .unwrap_err()
                .line,
            2
        );
        assert_eq!(parse_flow_log("seq x flow A -> B").unwrap_err().line, 1);
        assert_eq!(parse_flow_log("seq 1 flow A <-> B").unwrap_err().line, 1);
    }

    #[test]
    fn dot_export_lists_nodes_and_edges() {
        let dot = graph(&["a", "b"], &[("a", "b")]).to_dot();
        assert!(dot.starts_with("digraph flows {"));
        assert!(dot.contains("\"a\" -> \"b\" [label=\"P\"];"));
    }

    /// All shortest paths by exhaustive breadth-first enumeration.
    fn all_shortest_paths(g: &FlowGraph, src: &str, dst: &str) -> Vec<Vec<String>> {
        let adj = g.adjacency();
        let mut frontier = vec![vec![src.to_string()]];
        for _ in 0..=g.nodes.len() {
            let done: Vec<_> = frontier
                .iter()
                .filter(|p| p.last().unwrap() == dst)
                .cloned()
                .collect();
            if !done.is_empty() {
                return done;
            }
            let mut next = Vec::new();
            for p in &frontier {
                for n in adj.get(p.last().unwrap()).into_iter().flatten() {
                    if !p.contains(n) {
                        let mut q = p.clone();
                        q.push((*n).clone());
                        next.push(q);
                    }
                }
            }
            frontier = next;
        }
        Vec::new()
    }

    proptest! {
        #[test]
        fn path_is_valid_shortest_and_least(
            n in 1usize..9,
            raw in prop::collection::vec((0usize..9, 0usize..9), 0..24),
        ) {
            let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
            let edges: Vec<(&str, &str)> = raw
                .iter()
                .filter(|(a, b)| *a < n && *b < n)
                .map(|(a, b)| (names[*a].as_str(), names[*b].as_str()))
                .collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let g = graph(&refs, &edges);
            for s in &names {
                for t in &names {
                    let got = reachable(&g, s, t).unwrap();
                    let mut expected = all_shortest_paths(&g, s, t);
                    expected.sort();
                    match got {
                        None => prop_assert!(expected.is_empty()),
                        Some(path) => {
                            prop_assert_eq!(&path, &expected[0]);
                            for w in path.windows(2) {
                                prop_assert!(g.has_edge(&w[0], &w[1]));
                            }
                            let distinct: BTreeSet<_> = path.iter().collect();
                            prop_assert_eq!(distinct.len(), path.len());
                        }
                    }
                }
            }
        }
    }
}
