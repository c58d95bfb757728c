//! The `.tdm` trust-domain description format.
//!
//! Line-oriented: one declaration per line, `#` comments, and brace-delimited
//! policy bodies with one rule per line.
//!
//! ```text
//! model Clinic central-store CAS
//! domain Ward
//! role Nurse
//! entity Ann : Person in Ward role Nurse
//! asset Charts : Data owner Nurse
//! policy P-charts by Nurse scope Ward {
//!   permit Nurse on read target Charts
//! }
//! ```

pub mod ast;
mod lexer;
mod parser;
mod serialize;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{build_model, BuildError, ModelError, TrustDomainModel};

pub use ast::{Declaration, Pos, Span};
pub use lexer::is_ident;
pub use serialize::serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub span: Span,
}

impl Diagnostic {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{}:{}: {sev}: {}",
            self.span.start.line, self.span.start.column, self.message
        )
    }
}

impl From<BuildError> for Diagnostic {
    fn from(e: BuildError) -> Self {
        let message = match (&e.error, e.related) {
            (ModelError::DuplicateIdentifier { id }, Some(first)) => {
                format!(
                    "duplicate identifier `{id}`: first declared at {first}, declared again at {}",
                    e.span
                )
            }
            (err, _) => err.to_string(),
        };
        Diagnostic {
            severity: Severity::Error,
            message,
            span: e.span,
        }
    }
}

/// Parses `.tdm` text.
///
/// Syntax errors are reported first; when the text is syntactically clean the
/// declarations are also checked structurally (duplicates, dangling references,
/// kind mismatches) so that zero error diagnostics means [`build_model`] succeeds.
pub fn parse(text: &str) -> (Vec<Declaration>, Vec<Diagnostic>) {
    let mut p = parser::Parser::new(text);
    let decls = p.parse_all();
    let mut diags = std::mem::take(&mut p.diags);
    if !diags.iter().any(Diagnostic::is_error) {
        if let Err(errors) = build_model(&decls) {
            diags.extend(errors.into_iter().map(Diagnostic::from));
        }
    }
    diags.sort_by_key(|d| d.span.start);
    (decls, diags)
}

pub fn diagnostics(text: &str) -> Vec<Diagnostic> {
    parse(text).1
}

/// Parses and builds in one step; warnings are dropped on success.
pub fn parse_model(text: &str) -> Result<TrustDomainModel, Vec<Diagnostic>> {
    let (decls, diags) = parse(text);
    if diags.iter().any(Diagnostic::is_error) {
        return Err(diags.into_iter().filter(Diagnostic::is_error).collect());
    }
    build_model(&decls).map_err(|errs| errs.into_iter().map(Diagnostic::from).collect())
}
