use std::fmt::Write;

use crate::value::write_quoted;

use super::ast::*;

/// Canonical MLM text. Parsing the output yields a structurally equal module.
pub fn pretty_print(mlm: &Mlm) -> String {
    let mut out = String::new();
    let w = &mut out;
    w.push_str("mlm:\n");
    let _ = writeln!(w, "  name {};", mlm.name);
    w.push_str("  version ");
    let _ = write_quoted(w, &mlm.version);
    w.push_str(";\n  title ");
    let _ = write_quoted(w, &mlm.title);
    w.push_str(";\n");
    match (mlm.kind, mlm.criterion_class) {
        (RuleKind::Criterion, Some(class)) => {
            let _ = writeln!(w, "  kind criterion {class};");
        }
        _ => w.push_str("  kind classification;\n"),
    }
    let _ = writeln!(w, "  priority {};", mlm.priority);
    let _ = writeln!(w, "  applies_to {};", mlm.applies_to);
    let _ = writeln!(
        w,
        "  mode {};",
        match mlm.mode {
            Mode::Automatic => "automatic",
            Mode::Manual => "manual",
        }
    );
    if let Some(r) = &mlm.refines {
        let _ = writeln!(w, "  refines {r};");
    }
    w.push_str("data:\n");
    for b in &mlm.data {
        let _ = writeln!(w, "  {} := {};", b.var, b.source);
    }
    let _ = writeln!(w, "logic:\n  {};", print_expr(&mlm.logic));
    if !mlm.actions.is_empty() {
        w.push_str("action:\n");
        for a in &mlm.actions {
            let _ = writeln!(w, "  {a};");
        }
    }
    if !mlm.message.is_empty() {
        w.push_str("message:\n  ");
        let _ = write_quoted(w, &mlm.message);
        w.push_str(";\n");
    }
    w.push_str("end.\n");
    out
}

const PREC_OR: u8 = 1;
const PREC_AND: u8 = 2;
const PREC_NOT: u8 = 3;
const PREC_CMP: u8 = 4;
const PREC_ADD: u8 = 5;
const PREC_MUL: u8 = 6;
const PREC_ATOM: u8 = 7;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Or(..) => PREC_OR,
        Expr::And(..) => PREC_AND,
        Expr::Not(_) => PREC_NOT,
        Expr::Cmp { .. } | Expr::In { .. } => PREC_CMP,
        Expr::Arith {
            op: ArithOp::Add | ArithOp::Sub,
            ..
        } => PREC_ADD,
        Expr::Arith { .. } => PREC_MUL,
        Expr::Lit(_) | Expr::Var(_) => PREC_ATOM,
    }
}

/// Renders an expression with the minimal parentheses the grammar needs.
pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

fn write_expr(out: &mut String, e: &Expr, min_prec: u8) {
    let prec = precedence(e);
    let paren = prec < min_prec;
    if paren {
        out.push('(');
    }
    match e {
        Expr::Lit(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::Var(name) => out.push_str(name),
        Expr::Cmp { op, lhs, rhs } => {
            write_expr(out, lhs, PREC_ADD);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, rhs, PREC_ADD);
        }
        Expr::In { item, list } => {
            write_expr(out, item, PREC_ADD);
            out.push_str(" in [");
            for (i, v) in list.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{v}");
            }
            out.push(']');
        }
        Expr::And(a, b) => {
            write_expr(out, a, PREC_AND);
            out.push_str(" and ");
            write_expr(out, b, PREC_AND + 1);
        }
        Expr::Or(a, b) => {
            write_expr(out, a, PREC_OR);
            out.push_str(" or ");
            write_expr(out, b, PREC_OR + 1);
        }
        Expr::Not(a) => {
            out.push_str("not ");
            write_expr(out, a, PREC_NOT);
        }
        Expr::Arith { op, lhs, rhs } => {
            write_expr(out, lhs, prec);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, rhs, prec + 1);
        }
    }
    if paren {
        out.push(')');
    }
}
