//! Front end for the two small languages of a knowledge package: the fuzzy
//! rule base (`rules.frl`) and EnPI expressions.
//!
//! Both are parsed by hand-written recursive descent with one token of
//! lookahead. Parsing stops at the first error, which always carries a
//! line/column position.

mod enpi;
mod lexer;
mod rules;

use std::fmt;

pub use enpi::{parse_enpi, AggregateCall, AggregateFn, BinOp, EnpiExpr};
pub use lexer::{is_identifier, is_keyword, Keyword, Span};
pub use rules::{parse_rules, print_rule, print_rules, Atom, RuleAst, RuleExpr};

/// A positioned diagnostic from either parser.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ParseError {
    pub span: Span,
    pub message: String,
    /// Token descriptions that would have been accepted at `span`.
    pub expected: Vec<String>,
}

impl ParseError {
    pub(crate) fn new(span: Span, message: impl Into<String>) -> Self {
        Self {
            span,
            message: message.into(),
            expected: Vec::new(),
        }
    }

    pub(crate) fn expected(span: Span, expected: &[&str], found: &str) -> Self {
        let list = expected.join(", ");
        let message = if expected.len() == 1 {
            format!("expected {list}, found {found}")
        } else {
            format!("expected one of {list}, found {found}")
        };
        Self {
            span,
            message,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}
