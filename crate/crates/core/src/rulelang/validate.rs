//! Rulebase validation: per-module invariants, static unit typing, ontology
//! resolution, and duplicate/conflict detection.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::ontology::Ontology;
use crate::value::{Value, ValueKind};

use super::ast::*;
use super::eval::arith_unit;
use super::printer::print_expr;
use super::{IssueKind, RuleIssue, Severity};

/// Structural invariants of a single module.
pub fn check_mlm(mlm: &Mlm) -> Vec<RuleIssue> {
    let mut issues = Vec::new();
    let name = mlm.name.as_str();
    let syntax = |msg: &str| RuleIssue::error(IssueKind::Syntax, name, msg);

    match mlm.kind {
        RuleKind::Criterion => {
            if mlm.criterion_class.is_none() {
                issues.push(syntax("criterion needs a criterion class"));
            }
            if !mlm.actions.is_empty() {
                issues.push(syntax("actions are only allowed on classification rules"));
            }
        }
        RuleKind::Classification => {
            if mlm.criterion_class.is_some() {
                issues.push(syntax("classification rules have no criterion class"));
            }
            if mlm.actions.is_empty() {
                issues.push(syntax("classification rule needs at least one action"));
            }
            if mlm.mode == Mode::Manual {
                issues.push(syntax("classification rules are always automatic"));
            }
        }
    }
    if mlm.mode == Mode::Manual && mlm.message.trim().is_empty() {
        issues.push(syntax(
            "manual criterion needs a message (the question asked)",
        ));
    }
    if mlm.priority > 100 {
        issues.push(syntax("priority must be within 0..=100"));
    }

    let mut seen = HashSet::new();
    for b in &mlm.data {
        if !seen.insert(b.var.as_str()) {
            issues.push(syntax(&format!(
                "variable `{}` is bound more than once",
                b.var
            )));
        }
        if let DataSource::Metric(m) = &b.source {
            if let Err(e) = m.check_arity() {
                issues.push(syntax(&e));
            }
        }
    }
    for var in mlm.logic.variables() {
        if !seen.contains(var) {
            issues.push(RuleIssue::error(
                IssueKind::UnboundVariable,
                name,
                format!("variable `{var}` is used in logic but has no data binding"),
            ));
        }
    }
    issues
}

/// Static type of `expr`; `None` means unknown until run time (fact values).
pub fn infer_type(
    expr: &Expr,
    env: &dyn Fn(&str) -> Option<ValueKind>,
) -> Result<Option<ValueKind>, String> {
    let bool_operand = |op: &str, k: Option<ValueKind>| match k {
        Some(ValueKind::Bool) | None => Ok(()),
        Some(other) => Err(format!("`{op}` needs boolean operands, found {other}")),
    };
    match expr {
        Expr::Lit(v) => Ok(Some(v.kind())),
        Expr::Var(n) => Ok(env(n)),
        Expr::Cmp { op, lhs, rhs } => {
            let a = infer_type(lhs, env)?;
            let b = infer_type(rhs, env)?;
            match (a, b) {
                (Some(ValueKind::Number(ua)), Some(ValueKind::Number(ub))) if ua != ub => {
                    Err(format!(
                        "`{}` compares {} with {}",
                        op.symbol(),
                        a.unwrap(),
                        b.unwrap()
                    ))
                }
                (Some(ka), Some(kb))
                    if !matches!(ka, ValueKind::Number(_))
                        || !matches!(kb, ValueKind::Number(_)) =>
                {
                    if op.is_ordering() {
                        Err(format!("`{}` cannot order {ka} and {kb}", op.symbol()))
                    } else if ka != kb {
                        Err(format!("`{}` compares {ka} with {kb}", op.symbol()))
                    } else {
                        Ok(Some(ValueKind::Bool))
                    }
                }
                (Some(k), None) | (None, Some(k))
                    if op.is_ordering() && !matches!(k, ValueKind::Number(_)) =>
                {
                    Err(format!("`{}` cannot order {k}", op.symbol()))
                }
                _ => Ok(Some(ValueKind::Bool)),
            }
        }
        Expr::In { item, list } => {
            let item_kind = infer_type(item, env)?;
            let mut kinds = list.iter().map(Value::kind);
            if let Some(first) = kinds.next() {
                if let Some(other) = kinds.find(|k| *k != first) {
                    return Err(format!("`in` list mixes {first} and {other}"));
                }
                if let Some(k) = item_kind {
                    if k != first {
                        return Err(format!("`in` tests {k} against a list of {first}"));
                    }
                }
            }
            Ok(Some(ValueKind::Bool))
        }
        Expr::And(a, b) | Expr::Or(a, b) => {
            let op = if matches!(expr, Expr::And(..)) {
                "and"
            } else {
                "or"
            };
            bool_operand(op, infer_type(a, env)?)?;
            bool_operand(op, infer_type(b, env)?)?;
            Ok(Some(ValueKind::Bool))
        }
        Expr::Not(a) => {
            bool_operand("not", infer_type(a, env)?)?;
            Ok(Some(ValueKind::Bool))
        }
        Expr::Arith { op, lhs, rhs } => {
            let a = infer_type(lhs, env)?;
            let b = infer_type(rhs, env)?;
            for k in [a, b].into_iter().flatten() {
                if !matches!(k, ValueKind::Number(_)) {
                    return Err(format!(
                        "`{}` needs numeric operands, found {k}",
                        op.symbol()
                    ));
                }
            }
            match (a, b) {
                (Some(ValueKind::Number(ua)), Some(ValueKind::Number(ub))) => {
                    match arith_unit(*op, ua, ub) {
                        Some(u) => Ok(Some(ValueKind::Number(u))),
                        None => Err(format!(
                            "`{}` cannot combine {} and {}",
                            op.symbol(),
                            a.unwrap(),
                            b.unwrap()
                        )),
                    }
                }
                _ => Ok(None),
            }
        }
    }
}

fn binding_kinds(mlm: &Mlm) -> HashMap<&str, Option<ValueKind>> {
    mlm.data
        .iter()
        .map(|b| {
            let kind = match &b.source {
                DataSource::Fact(_) => None,
                DataSource::Metric(m) => Some(m.result_kind()),
            };
            (b.var.as_str(), kind)
        })
        .collect()
}

fn check_types(mlm: &Mlm) -> Option<RuleIssue> {
    let kinds = binding_kinds(mlm);
    let env = |n: &str| kinds.get(n).copied().flatten();
    match infer_type(&mlm.logic, &env) {
        Err(detail) => Some(RuleIssue::error(IssueKind::UnitMismatch, &mlm.name, detail)),
        Ok(Some(k)) if k != ValueKind::Bool => Some(RuleIssue::error(
            IssueKind::UnitMismatch,
            &mlm.name,
            format!("logic must evaluate to boolean, found {k}"),
        )),
        Ok(_) => None,
    }
}

fn check_concepts(mlm: &Mlm, ontology: &Ontology) -> Vec<RuleIssue> {
    let mut values: Vec<&Value> = Vec::new();
    mlm.logic.visit(&mut |e| match e {
        Expr::Lit(v) => values.push(v),
        Expr::In { list, .. } => values.extend(list),
        _ => {}
    });
    for a in &mlm.actions {
        if let Action::Assert { value, .. } = a {
            values.push(value);
        }
    }
    let mut issues = Vec::new();
    for v in values {
        if let Value::Concept { concept } = v {
            if let Err(e) = ontology.resolve_concept(concept.system, &concept.code) {
                issues.push(RuleIssue::error(
                    IssueKind::UnknownConcept,
                    &mlm.name,
                    e.to_string(),
                ));
            }
        }
    }
    for b in &mlm.data {
        let DataSource::Metric(MetricSpec {
            structure: Some(s), ..
        }) = &b.source
        else {
            continue;
        };
        match ontology.canonical_structure_name(s) {
            Ok(canonical) if canonical == *s => {}
            Ok(canonical) => issues.push(RuleIssue::error(
                IssueKind::UnknownConcept,
                &mlm.name,
                format!("structure {s:?} must be written by its canonical name {canonical:?}"),
            )),
            Err(e) => issues.push(RuleIssue::error(
                IssueKind::UnknownConcept,
                &mlm.name,
                e.to_string(),
            )),
        }
    }
    issues
}

// ---------------------------------------------------------------------------
// Canonical form for duplicate / conflict detection
// ---------------------------------------------------------------------------

/// Canonical expression tree: variables replaced by their data source,
/// associative chains flattened, commutative operands sorted, `>`/`>=`
/// rewritten as mirrored `<`/`<=`.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
pub enum Canon {
    Lit(String),
    Source(String),
    Cmp(&'static str, Vec<Canon>),
    In(Box<Canon>, Vec<String>),
    And(Vec<Canon>),
    Or(Vec<Canon>),
    Not(Box<Canon>),
    Arith(&'static str, Vec<Canon>),
}

fn sort_canon(v: &mut [Canon]) {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
}

pub fn canonicalize(expr: &Expr, bindings: &[DataBinding]) -> Canon {
    let source = |v: &str| {
        bindings
            .iter()
            .find(|b| b.var == v)
            .map(|b| b.source.to_string())
            .unwrap_or_else(|| format!("var {v}"))
    };
    fn flatten<'a>(e: &'a Expr, and: bool, out: &mut Vec<&'a Expr>) {
        match (e, and) {
            (Expr::And(a, b), true) | (Expr::Or(a, b), false) => {
                flatten(a, and, out);
                flatten(b, and, out);
            }
            _ => out.push(e),
        }
    }
    fn flatten_arith<'a>(e: &'a Expr, target: ArithOp, out: &mut Vec<&'a Expr>) {
        match e {
            Expr::Arith { op, lhs, rhs } if *op == target => {
                flatten_arith(lhs, target, out);
                flatten_arith(rhs, target, out);
            }
            _ => out.push(e),
        }
    }
    let recur = |e: &Expr| canonicalize(e, bindings);
    match expr {
        Expr::Lit(v) => Canon::Lit(v.to_string()),
        Expr::Var(v) => Canon::Source(source(v)),
        Expr::Cmp { op, lhs, rhs } => {
            let (sym, mut operands) = match op {
                CmpOp::Gt => ("<", vec![recur(rhs), recur(lhs)]),
                CmpOp::Ge => ("<=", vec![recur(rhs), recur(lhs)]),
                other => (other.symbol(), vec![recur(lhs), recur(rhs)]),
            };
            if matches!(op, CmpOp::Eq | CmpOp::Ne) {
                sort_canon(&mut operands);
            }
            Canon::Cmp(sym, operands)
        }
        Expr::In { item, list } => {
            let mut items: Vec<String> = list.iter().map(|v| v.to_string()).collect();
            items.sort();
            items.dedup();
            Canon::In(Box::new(recur(item)), items)
        }
        Expr::And(..) | Expr::Or(..) => {
            let is_and = matches!(expr, Expr::And(..));
            let mut parts = Vec::new();
            flatten(expr, is_and, &mut parts);
            let mut canon: Vec<Canon> = parts.into_iter().map(recur).collect();
            sort_canon(&mut canon);
            if is_and {
                Canon::And(canon)
            } else {
                Canon::Or(canon)
            }
        }
        Expr::Not(a) => Canon::Not(Box::new(recur(a))),
        Expr::Arith { op, lhs, rhs } => match op {
            ArithOp::Add | ArithOp::Mul => {
                let mut parts = Vec::new();
                flatten_arith(expr, *op, &mut parts);
                let mut canon: Vec<Canon> = parts.into_iter().map(recur).collect();
                sort_canon(&mut canon);
                Canon::Arith(op.symbol(), canon)
            }
            _ => Canon::Arith(op.symbol(), vec![recur(lhs), recur(rhs)]),
        },
    }
}

fn canonical_actions(actions: &[Action]) -> Vec<String> {
    let mut v: Vec<String> = actions.iter().map(|a| a.to_string()).collect();
    v.sort();
    v
}

/// Validates a whole rulebase. Issues are returned sorted, so the result does
/// not depend on the order of `mlms`.
pub fn validate_rulebase(mlms: &[Mlm], ontology: &Ontology) -> Vec<RuleIssue> {
    let mut issues = Vec::new();

    let mut by_name: BTreeMap<&str, usize> = BTreeMap::new();
    for m in mlms {
        *by_name.entry(m.name.as_str()).or_default() += 1;
    }
    for (name, count) in &by_name {
        if *count > 1 {
            issues.push(RuleIssue::error(
                IssueKind::DuplicateRule,
                name,
                format!("{count} rules share the name `{name}`"),
            ));
        }
    }

    for m in mlms {
        issues.extend(check_mlm(m));
        issues.extend(check_types(m));
        issues.extend(check_concepts(m, ontology));
        if let Some(target) = &m.refines {
            if target == &m.name || !by_name.contains_key(target.as_str()) {
                issues.push(RuleIssue::error(
                    IssueKind::DanglingRefines,
                    &m.name,
                    format!("refines `{target}`, which is not another rule in this rulebase"),
                ));
            }
        }
    }

    // Duplicate / conflict detection over canonical logic.
    struct Entry<'a> {
        mlm: &'a Mlm,
        logic: Canon,
        actions: Vec<String>,
    }
    let entries: Vec<Entry> = mlms
        .iter()
        .map(|m| Entry {
            mlm: m,
            logic: canonicalize(&m.logic, &m.data),
            actions: canonical_actions(&m.actions),
        })
        .collect();
    for (i, a) in entries.iter().enumerate() {
        for b in &entries[i + 1..] {
            let (ma, mb) = (a.mlm, b.mlm);
            if ma.name == mb.name || ma.kind != mb.kind || ma.applies_to != mb.applies_to {
                continue;
            }
            if ma.refines.as_deref() == Some(mb.name.as_str())
                || mb.refines.as_deref() == Some(ma.name.as_str())
            {
                continue;
            }
            // Manual criteria are never evaluated, so only their questions matter.
            let same_logic = if ma.mode == Mode::Manual || mb.mode == Mode::Manual {
                ma.mode == mb.mode && ma.message == mb.message
            } else {
                a.logic == b.logic
            };
            if !same_logic {
                continue;
            }
            let (first, second) = if ma.name < mb.name {
                (ma, mb)
            } else {
                (mb, ma)
            };
            if a.actions == b.actions {
                issues.push(RuleIssue::warning(
                    IssueKind::DuplicateRule,
                    &second.name,
                    format!(
                        "duplicates `{}`: same logic ({}) and same actions",
                        first.name,
                        print_expr(&second.logic)
                    ),
                ));
            } else {
                issues.push(RuleIssue::error(
                    IssueKind::ConflictingRule,
                    &second.name,
                    format!(
                        "conflicts with `{}`: same logic ({}) but different actions",
                        first.name,
                        print_expr(&second.logic)
                    ),
                ));
            }
        }
    }

    issues.sort();
    issues
}

pub fn has_errors(issues: &[RuleIssue]) -> bool {
    issues.iter().any(|i| i.severity == Severity::Error)
}
