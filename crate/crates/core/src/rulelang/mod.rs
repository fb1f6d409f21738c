//! The MLM rule language: parser, pretty printer, validator, compiler and
//! decision-table front end.

mod ast;
mod compile;
mod eval;
mod lexer;
mod parser;
mod printer;
mod table;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use ast::*;
pub use compile::{
    check_stack_balance, compile_expr, compile_rule, execute, CompileError, CompiledRule,
    Instruction,
};
pub use eval::{interpret, EvalError};
pub use parser::parse_expr;
pub use printer::{pretty_print, print_expr};
pub use table::{
    check_completeness, parse_decision_table, render_vector, table_to_rules, Completeness,
    ConditionEntry, ConditionVector, DecisionTable, TableColumn, TableError, TableHeader,
};
pub use validate::{canonicalize, check_mlm, has_errors, infer_type, validate_rulebase, Canon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IssueKind {
    Syntax,
    UnknownConcept,
    UnitMismatch,
    DuplicateRule,
    ConflictingRule,
    DanglingRefines,
    UnboundVariable,
}

/// A finding of the parser or validator. Errors block compilation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RuleIssue {
    pub severity: Severity,
    pub kind: IssueKind,
    pub mlm_name: String,
    pub location: Option<Location>,
    pub detail: String,
}

impl RuleIssue {
    pub fn error(kind: IssueKind, mlm_name: &str, detail: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            kind,
            mlm_name: mlm_name.to_string(),
            location: None,
            detail: detail.into(),
        }
    }

    pub fn warning(kind: IssueKind, mlm_name: &str, detail: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            ..Self::error(kind, mlm_name, detail)
        }
    }

    pub fn at(mut self, loc: Location) -> Self {
        self.location = Some(loc);
        self
    }

    pub(crate) fn named(mut self, name: &str) -> Self {
        if self.mlm_name.is_empty() {
            self.mlm_name = name.to_string();
        }
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for RuleIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{:?}]", self.kind)?;
        if !self.mlm_name.is_empty() {
            write!(f, " {}", self.mlm_name)?;
        }
        if let Some(loc) = self.location {
            write!(f, " at {loc}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

impl std::error::Error for RuleIssue {}

/// Parses exactly one MLM and checks its structural invariants.
pub fn parse_mlm(text: &str) -> Result<Mlm, RuleIssue> {
    let mut all = parse_mlm_file(text)?;
    match all.len() {
        1 => Ok(all.pop().expect("one module")),
        0 => Err(RuleIssue::error(IssueKind::Syntax, "", "no MLM found")),
        _ => Err(RuleIssue::error(
            IssueKind::Syntax,
            &all[1].name,
            "expected a single MLM, found several",
        )),
    }
}

/// Parses every MLM in a file, in order.
pub fn parse_mlm_file(text: &str) -> Result<Vec<Mlm>, RuleIssue> {
    let mut p = parser::Parser::new(text, Location { line: 1, column: 1 })?;
    let mut out = Vec::new();
    while !p.at_eof() {
        let mlm = p.mlm()?;
        if let Some(issue) = check_mlm(&mlm).into_iter().find(RuleIssue::is_error) {
            return Err(issue);
        }
        out.push(mlm);
    }
    Ok(out)
}
