//! Pairwise structural comparison of rules, independent of the validator.

use rtqa_core::rulelang::{DataSource, Expr, Mlm};

/// Logic with variables replaced by the text of their data source.
#[derive(Debug, PartialEq)]
enum Node {
    Leaf(String),
    Op(String, Vec<Node>),
}

fn resolve(m: &Mlm, e: &Expr) -> Node {
    match e {
        Expr::Lit(v) => Node::Leaf(format!("lit {v}")),
        Expr::Var(n) => Node::Leaf(
            match m.data.iter().find(|b| &b.var == n).map(|b| &b.source) {
                Some(DataSource::Fact(k)) => format!("fact {k}"),
                Some(DataSource::Metric(spec)) => format!("metric {spec}"),
                None => format!("free {n}"),
            },
        ),
        Expr::Cmp { op, lhs, rhs } => {
            Node::Op(op.symbol().into(), vec![resolve(m, lhs), resolve(m, rhs)])
        }
        Expr::Arith { op, lhs, rhs } => {
            Node::Op(op.symbol().into(), vec![resolve(m, lhs), resolve(m, rhs)])
        }
        Expr::In { item, list } => {
            let mut kids = vec![resolve(m, item)];
            kids.extend(list.iter().map(|v| Node::Leaf(format!("lit {v}"))));
            Node::Op("in".into(), kids)
        }
        Expr::And(a, b) => Node::Op("and".into(), vec![resolve(m, a), resolve(m, b)]),
        Expr::Or(a, b) => Node::Op("or".into(), vec![resolve(m, a), resolve(m, b)]),
        Expr::Not(a) => Node::Op("not".into(), vec![resolve(m, a)]),
    }
}

#[derive(Debug, Default, PartialEq)]
pub struct PairCounts {
    pub duplicates: usize,
    pub conflicts: usize,
}

/// Pairs of rules of the same kind with identical logic, split by whether
/// their actions also agree.
pub fn same_logic_pairs(mlms: &[Mlm]) -> PairCounts {
    let mut out = PairCounts::default();
    for (i, a) in mlms.iter().enumerate() {
        for b in &mlms[i + 1..] {
            if a.kind != b.kind || a.applies_to != b.applies_to {
                continue;
            }
            if resolve(a, &a.logic) != resolve(b, &b.logic) {
                continue;
            }
            if a.actions == b.actions {
                out.duplicates += 1;
            } else {
                out.conflicts += 1;
            }
        }
    }
    out
}
