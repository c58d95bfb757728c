use crate::dsl::ast::*;
use crate::dsl::lexer::{is_ident, lex, Tok, Token};
use crate::dsl::{Diagnostic, Severity};
use crate::model::{
    ActionRule, AgentKind, AssetType, ControlKind, Direction, Effect, EntityType, FlowRule, Guard,
    Id, Rule, Selector,
};

type PResult<T> = Result<T, Diagnostic>;

const DECL_KEYWORDS: &[&str] = &[
    "model",
    "domain",
    "role",
    "entity",
    "asset",
    "agent",
    "control",
    "store",
    "policy",
    "published-policy-to",
];

pub(crate) struct Parser {
    toks: Vec<Token>,
    pos: usize,
    depth: usize,
    last: Span,
    pub(crate) diags: Vec<Diagnostic>,
}

impl Parser {
    pub(crate) fn new(text: &str) -> Self {
        Self {
            toks: lex(text),
            pos: 0,
            depth: 0,
            last: Span::new(Pos { line: 1, column: 1 }, Pos { line: 1, column: 1 }),
            diags: Vec::new(),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn peek_word(&self) -> Option<&str> {
        match self.peek() {
            Some(Token {
                tok: Tok::Word(w), ..
            }) => Some(w),
            _ => None,
        }
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned()?;
        self.pos += 1;
        match t.tok {
            Tok::LBrace => self.depth += 1,
            Tok::RBrace => self.depth = self.depth.saturating_sub(1),
            _ => {}
        }
        self.last = t.span;
        Some(t)
    }

    /// Span for an error at the current token, or just past the last one at end of line/input.
    fn here(&self) -> Span {
        match self.peek() {
            Some(t) if t.tok != Tok::Newline => t.span,
            _ => Span::new(self.last.end, self.last.end),
        }
    }

    fn error(&self, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            severity: Severity::Error,
            message: message.into(),
            span: self.here(),
        }
    }

    fn at_line_end(&self) -> bool {
        matches!(
            self.peek(),
            None | Some(Token {
                tok: Tok::Newline,
                ..
            })
        )
    }

    fn word(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek() {
            Some(Token {
                tok: Tok::Word(_), ..
            }) => {
                let t = self.bump().expect("peeked");
                match t.tok {
                    Tok::Word(w) => Ok((w, t.span)),
                    _ => unreachable!(),
                }
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    fn ident(&mut self, what: &str) -> PResult<Id> {
        let span = self.here();
        let (w, _) = self.word(what)?;
        if is_ident(&w) {
            Ok(w)
        } else {
            Err(Diagnostic {
                severity: Severity::Error,
                message: format!("expected {what}, found `{w}`"),
                span,
            })
        }
    }

    fn selector(&mut self, what: &str) -> PResult<Selector> {
        if self.peek_word() == Some("*") {
            self.bump();
            Ok(Selector::Any)
        } else {
            self.ident(what).map(Selector::Id)
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.peek_word() == Some(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            let found = self
                .peek_word()
                .map(|w| format!(", found `{w}`"))
                .unwrap_or_default();
            Err(self.error(format!("expected `{kw}`{found}")))
        }
    }

    fn expect_tok(&mut self, tok: Tok, shown: &str) -> PResult<()> {
        if self.peek().map(|t| &t.tok) == Some(&tok) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("expected `{shown}`")))
        }
    }

    fn ident_list(&mut self, what: &str) -> PResult<Vec<Id>> {
        let mut out = vec![self.ident(what)?];
        while self.peek().map(|t| &t.tok) == Some(&Tok::Comma) {
            self.bump();
            out.push(self.ident(what)?);
        }
        Ok(out)
    }

    fn expect_line_end(&mut self) -> PResult<()> {
        if self.at_line_end() {
            Ok(())
        } else {
            let shown = match &self.peek().expect("not at end").tok {
                Tok::Word(w) => format!("`{w}`"),
                Tok::LBrace => "`{`".to_string(),
                Tok::RBrace => "`}`".to_string(),
                Tok::Comma => "`,`".to_string(),
                Tok::Colon => "`:`".to_string(),
                Tok::Newline => unreachable!(),
            };
            Err(self.error(format!("unexpected {shown} at end of declaration")))
        }
    }

    fn skip_newlines(&mut self) {
        while matches!(
            self.peek(),
            Some(Token {
                tok: Tok::Newline,
                ..
            })
        ) {
            self.bump();
        }
    }

    /// Skips to the end of the current statement, including any brace-delimited body.
    fn recover(&mut self) {
        while let Some(t) = self.peek() {
            if t.tok == Tok::Newline && self.depth == 0 {
                break;
            }
            self.bump();
        }
        self.depth = 0;
    }

    pub(crate) fn parse_all(&mut self) -> Vec<Declaration> {
        let mut decls = Vec::new();
        loop {
            self.skip_newlines();
            if self.peek().is_none() {
                break;
            }
            match self.declaration() {
                Ok(d) => decls.push(d),
                Err(diag) => {
                    self.diags.push(diag);
                    self.recover();
                }
            }
        }
        decls
    }

    fn declaration(&mut self) -> PResult<Declaration> {
        let start = self.here();
        let (kw, _) = self.word("a declaration keyword")?;
        let item = match kw.as_str() {
            "model" => self.model_decl()?,
            "domain" => DeclItem::Domain(DomainDecl {
                id: self.ident("a domain identifier")?,
            }),
            "role" => DeclItem::Role(RoleDecl {
                id: self.ident("a role identifier")?,
            }),
            "entity" => self.entity_decl()?,
            "asset" => self.asset_decl()?,
            "agent" => self.agent_decl()?,
            "control" => self.control_decl()?,
            "store" => {
                let id = self.ident("a store identifier")?;
                self.expect_kw("in")?;
                DeclItem::Store(StoreDecl {
                    id,
                    domain: self.ident("a domain identifier")?,
                })
            }
            "policy" => self.policy_decl()?,
            "published-policy-to" => {
                let agent = self.ident("an agent identifier")?;
                DeclItem::PublishedPolicyTo(PublishedPolicyToDecl {
                    agent,
                    store: self.ident("a store identifier")?,
                })
            }
            other => {
                return Err(Diagnostic {
                    severity: Severity::Error,
                    message: format!(
                        "unknown declaration `{other}`; expected one of {}",
                        DECL_KEYWORDS.join(", ")
                    ),
                    span: start,
                })
            }
        };
        self.expect_line_end()?;
        Ok(Declaration {
            item,
            span: start.to(self.last),
        })
    }

    fn model_decl(&mut self) -> PResult<DeclItem> {
        let name = self.ident("a model name")?;
        let central_store = if self.eat_kw("central-store") {
            Some(self.ident("a central store identifier")?)
        } else {
            None
        };
        Ok(DeclItem::Model(ModelDecl {
            name,
            central_store,
        }))
    }

    fn entity_decl(&mut self) -> PResult<DeclItem> {
        let id = self.ident("an entity identifier")?;
        self.expect_tok(Tok::Colon, ":")?;
        let span = self.here();
        let (ty, _) = self.word("an entity type")?;
        let entity_type = EntityType::parse(&ty).ok_or_else(|| {
            let legal: Vec<&str> = EntityType::ALL.iter().map(|t| t.as_str()).collect();
            Diagnostic {
                severity: Severity::Error,
                message: format!(
                    "unknown entity type `{ty}`; expected one of {}",
                    legal.join(", ")
                ),
                span,
            }
        })?;
        let mut domains = None;
        let mut roles = None;
        while !self.at_line_end() {
            let span = self.here();
            if self.eat_kw("in") {
                set_once(
                    &mut domains,
                    self.ident_list("a domain identifier")?,
                    "in",
                    span,
                )?;
            } else if self.eat_kw("role") {
                set_once(
                    &mut roles,
                    self.ident_list("a role identifier")?,
                    "role",
                    span,
                )?;
            } else {
                break;
            }
        }
        Ok(DeclItem::Entity(EntityDecl {
            id,
            entity_type,
            domains: domains.unwrap_or_default(),
            roles: roles.unwrap_or_default(),
        }))
    }

    fn asset_decl(&mut self) -> PResult<DeclItem> {
        let id = self.ident("an asset identifier")?;
        self.expect_tok(Tok::Colon, ":")?;
        let span = self.here();
        let (ty, _) = self.word("an asset type")?;
        let asset_type = AssetType::parse(&ty).ok_or_else(|| Diagnostic {
            severity: Severity::Error,
            message: format!("unknown asset type `{ty}`; expected one of Data, Resource, Service"),
            span,
        })?;
        self.expect_kw("owner")?;
        let owner = self.ident("a role identifier")?;
        let mut provided_by = None;
        let mut provisioned_by = None;
        let mut state = None;
        while !self.at_line_end() {
            let span = self.here();
            if self.eat_kw("provided-by") {
                set_once(
                    &mut provided_by,
                    self.ident("an asset identifier")?,
                    "provided-by",
                    span,
                )?;
            } else if self.eat_kw("provisioned-by") {
                set_once(
                    &mut provisioned_by,
                    self.ident("an agent identifier")?,
                    "provisioned-by",
                    span,
                )?;
            } else if self.eat_kw("state") {
                set_once(&mut state, self.ident("a state label")?, "state", span)?;
            } else {
                break;
            }
        }
        Ok(DeclItem::Asset(AssetDecl {
            id,
            asset_type,
            owner,
            provided_by,
            provisioned_by,
            state,
        }))
    }

    fn agent_decl(&mut self) -> PResult<DeclItem> {
        let id = self.ident("an agent identifier")?;
        self.expect_kw("owner")?;
        let owner = self.ident("a role identifier")?;
        let mut acts_for = None;
        let mut kind = None;
        while !self.at_line_end() {
            let span = self.here();
            if self.eat_kw("for") {
                set_once(&mut acts_for, self.ident("a role identifier")?, "for", span)?;
            } else if self.eat_kw("kind") {
                let kspan = self.here();
                let (k, _) = self.word("an agent kind")?;
                let parsed = match k.as_str() {
                    "management" => AgentKind::DomainManagementAgent,
                    "generic" => AgentKind::Generic,
                    _ => {
                        return Err(Diagnostic {
                            severity: Severity::Error,
                            message: format!(
                                "unknown agent kind `{k}`; expected management or generic"
                            ),
                            span: kspan,
                        })
                    }
                };
                set_once(&mut kind, parsed, "kind", span)?;
            } else {
                break;
            }
        }
        Ok(DeclItem::Agent(AgentDecl {
            id,
            owner,
            acts_for,
            kind: kind.unwrap_or(AgentKind::Generic),
        }))
    }

    fn control_decl(&mut self) -> PResult<DeclItem> {
        let id = self.ident("a control identifier")?;
        self.expect_tok(Tok::Colon, ":")?;
        let span = self.here();
        let (k, _) = self.word("a control kind")?;
        let kind = ControlKind::from_keyword(&k).ok_or_else(|| Diagnostic {
            severity: Severity::Error,
            message: format!(
                "unknown control kind `{k}`; expected one of pep, pdp, audit, management"
            ),
            span,
        })?;
        self.expect_kw("in")?;
        let domain = self.ident("a domain identifier")?;
        let central_store = if self.eat_kw("central-store") {
            Some(self.ident("a central store identifier")?)
        } else {
            None
        };
        Ok(DeclItem::Control(ControlDecl {
            id,
            kind,
            domain,
            central_store,
        }))
    }

    fn policy_decl(&mut self) -> PResult<DeclItem> {
        let id = self.ident("a policy identifier")?;
        self.expect_kw("by")?;
        let establisher = self.ident("a role identifier")?;
        self.expect_kw("scope")?;
        let scope = self.ident("a domain identifier")?;
        let mut delivery = false;
        let mut tag = None;
        let mut equivalent_to = None;
        loop {
            let span = self.here();
            if self.eat_kw("delivery") {
                if delivery {
                    return Err(Diagnostic {
                        severity: Severity::Error,
                        message: "duplicate `delivery` clause".into(),
                        span,
                    });
                }
                delivery = true;
            } else if self.eat_kw("tag") {
                set_once(&mut tag, self.ident("a tag")?, "tag", span)?;
            } else if self.eat_kw("equivalent-to") {
                set_once(
                    &mut equivalent_to,
                    self.ident_list("a policy identifier")?,
                    "equivalent-to",
                    span,
                )?;
            } else {
                break;
            }
        }
        self.expect_tok(Tok::LBrace, "{")?;
        let rules = self.policy_body();
        self.expect_tok(Tok::RBrace, "}")?;
        let mut published_by = None;
        let mut published_to = None;
        if self.eat_kw("published-by") {
            published_by = Some(self.ident("an agent identifier")?);
            if self.eat_kw("to") {
                published_to = Some(self.ident("a store identifier")?);
            }
        }
        if rules.is_empty() {
            self.diags.push(Diagnostic {
                severity: Severity::Warning,
                message: format!("policy `{id}` has no rules"),
                span: self.last,
            });
        }
        Ok(DeclItem::Policy(PolicyDecl {
            id,
            establisher,
            scope,
            delivery,
            tag,
            equivalent_to: equivalent_to.unwrap_or_default(),
            rules,
            published_by,
            published_to,
        }))
    }

    /// Parses rules up to (not including) the closing brace; bad rules are reported and skipped.
    fn policy_body(&mut self) -> Vec<RuleDecl> {
        let mut rules = Vec::new();
        loop {
            self.skip_newlines();
            match self.peek().map(|t| &t.tok) {
                None | Some(Tok::RBrace) => break,
                _ => {}
            }
            let start = self.here();
            match self.rule() {
                Ok(rule) => {
                    let span = start.to(self.last);
                    if matches!(
                        self.peek().map(|t| &t.tok),
                        None | Some(Tok::Newline) | Some(Tok::RBrace)
                    ) {
                        rules.push(RuleDecl { rule, span });
                    } else {
                        let d = self.error("unexpected token after rule");
                        self.diags.push(d);
                        self.skip_rule_line();
                    }
                }
                Err(d) => {
                    self.diags.push(d);
                    self.skip_rule_line();
                }
            }
        }
        rules
    }

    fn skip_rule_line(&mut self) {
        while let Some(t) = self.peek() {
            if matches!(t.tok, Tok::Newline | Tok::RBrace) {
                break;
            }
            self.bump();
        }
    }

    fn rule(&mut self) -> PResult<Rule> {
        let span = self.here();
        let (kw, _) = self.word("a rule (`flow`, `permit`, `deny` or `oblige`)")?;
        let effect = match kw.as_str() {
            "flow" => {
                let source = self.ident("a data asset identifier")?;
                let aspan = self.here();
                let (arrow, _) = self.word("`->` or `<->`")?;
                let direction = match arrow.as_str() {
                    "->" => Direction::Uni,
                    "<->" => Direction::Bi,
                    other => {
                        return Err(Diagnostic {
                            severity: Severity::Error,
                            message: format!("expected `->` or `<->`, found `{other}`"),
                            span: aspan,
                        })
                    }
                };
                let dest = self.ident("a data asset identifier")?;
                return Ok(Rule::Flow(FlowRule {
                    source,
                    dest,
                    direction,
                }));
            }
            "permit" => Effect::Permit,
            "deny" => Effect::Deny,
            "oblige" => Effect::Oblige,
            other => {
                return Err(Diagnostic {
                    severity: Severity::Error,
                    message: format!(
                        "unknown rule `{other}`; expected flow, permit, deny or oblige"
                    ),
                    span,
                })
            }
        };
        let subject = self.selector("a subject (role, entity, agent or `*`)")?;
        self.expect_kw("on")?;
        let action_kind = self.ident("an action kind")?;
        self.expect_kw("target")?;
        let target = self.selector("a target identifier or `*`")?;
        let mut guard = None;
        let mut enables_state = None;
        loop {
            let span = self.here();
            if self.eat_kw("when") {
                let gspan = self.here();
                let (w, _) = self.word("a guard flag")?;
                let (negated, flag) = match w.strip_prefix('!') {
                    Some(rest) => (true, rest.to_string()),
                    None => (false, w),
                };
                if !is_ident(&flag) {
                    return Err(Diagnostic {
                        severity: Severity::Error,
                        message: format!("invalid guard flag `{flag}`"),
                        span: gspan,
                    });
                }
                set_once(&mut guard, Guard { flag, negated }, "when", span)?;
            } else if self.eat_kw("enables") {
                set_once(
                    &mut enables_state,
                    self.ident("a state label")?,
                    "enables",
                    span,
                )?;
            } else {
                break;
            }
        }
        Ok(Rule::Action(ActionRule {
            effect,
            subject,
            action_kind,
            target,
            guard,
            enables_state,
        }))
    }
}

fn set_once<T>(slot: &mut Option<T>, value: T, clause: &str, span: Span) -> PResult<()> {
    if slot.is_some() {
        return Err(Diagnostic {
            severity: Severity::Error,
            message: format!("duplicate `{clause}` clause"),
            span,
        });
    }
    *slot = Some(value);
    Ok(())
}
