use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{AgentKind, AssetType, ControlKind, EntityType, Id, Rule};

/// 1-based line/column position.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

/// Inclusive start, exclusive end. A default span marks a programmatic declaration.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Span {
    pub start: Pos,
    pub end: Pos,
}

impl Span {
    pub fn new(start: Pos, end: Pos) -> Self {
        Self { start, end }
    }

    pub fn to(self, other: Span) -> Span {
        Span {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }

    pub fn is_synthetic(&self) -> bool {
        self.start.line == 0
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start.line, self.start.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Declaration {
    pub item: DeclItem,
    pub span: Span,
}

impl Declaration {
    pub fn new(item: DeclItem) -> Self {
        Self {
            item,
            span: Span::default(),
        }
    }

    /// Identifier introduced by this declaration, if any.
    pub fn declared_id(&self) -> Option<&Id> {
        match &self.item {
            DeclItem::Model(_) | DeclItem::PublishedPolicyTo(_) => None,
            DeclItem::Domain(d) => Some(&d.id),
            DeclItem::Role(d) => Some(&d.id),
            DeclItem::Entity(d) => Some(&d.id),
            DeclItem::Asset(d) => Some(&d.id),
            DeclItem::Agent(d) => Some(&d.id),
            DeclItem::Control(d) => Some(&d.id),
            DeclItem::Store(d) => Some(&d.id),
            DeclItem::Policy(d) => Some(&d.id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeclItem {
    Model(ModelDecl),
    Domain(DomainDecl),
    Role(RoleDecl),
    Entity(EntityDecl),
    Asset(AssetDecl),
    Agent(AgentDecl),
    Control(ControlDecl),
    Store(StoreDecl),
    Policy(PolicyDecl),
    PublishedPolicyTo(PublishedPolicyToDecl),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelDecl {
    pub name: String,
    pub central_store: Option<Id>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainDecl {
    pub id: Id,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleDecl {
    pub id: Id,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityDecl {
    pub id: Id,
    pub entity_type: EntityType,
    pub domains: Vec<Id>,
    pub roles: Vec<Id>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssetDecl {
    pub id: Id,
    pub asset_type: AssetType,
    pub owner: Id,
    pub provided_by: Option<Id>,
    pub provisioned_by: Option<Id>,
    pub state: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentDecl {
    pub id: Id,
    pub owner: Id,
    /// Defaults to the owner role.
    pub acts_for: Option<Id>,
    pub kind: AgentKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlDecl {
    pub id: Id,
    pub kind: ControlKind,
    pub domain: Id,
    pub central_store: Option<Id>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreDecl {
    pub id: Id,
    pub domain: Id,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleDecl {
    pub rule: Rule,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyDecl {
    pub id: Id,
    pub establisher: Id,
    pub scope: Id,
    pub delivery: bool,
    pub tag: Option<String>,
    pub equivalent_to: Vec<Id>,
    pub rules: Vec<RuleDecl>,
    pub published_by: Option<Id>,
    pub published_to: Option<Id>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublishedPolicyToDecl {
    pub agent: Id,
    pub store: Id,
}
