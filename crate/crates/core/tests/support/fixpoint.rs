//! Random monotone rulebases and an exhaustive least-fixpoint oracle.

use std::collections::{BTreeMap, BTreeSet};

use proptest::collection::vec;
use proptest::prelude::*;
use rtqa_core::engine::{Fact, WorkingMemory};
use rtqa_core::rulelang::{
    compile_rule, Action, CmpOp, CompiledRule, DataBinding, Expr, Mlm, RuleKind,
};
use rtqa_core::Value;

pub const INPUTS: usize = 6;

/// Condition literal: an input fact with a required polarity, or a derived
/// fact that must be present (derived facts are only ever `true`).
#[derive(Debug, Clone, PartialEq)]
pub enum Lit {
    Input(usize, bool),
    Derived(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cond {
    Lit(Lit),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRule {
    pub name: String,
    pub priority: u8,
    pub cond: Cond,
    pub asserts: usize,
}

#[derive(Debug, Clone)]
pub struct GenRulebase {
    pub rules: Vec<GenRule>,
    /// Input facts present in working memory; absent inputs stay unbound.
    pub inputs: BTreeMap<usize, bool>,
}

pub fn input_key(i: usize) -> String {
    format!("in.f{i}")
}

pub fn derived_key(j: usize) -> String {
    format!("der.g{j}")
}

fn cond(derived: usize) -> BoxedStrategy<Cond> {
    let lit = prop_oneof![
        (0..INPUTS, any::<bool>()).prop_map(|(i, b)| Cond::Lit(Lit::Input(i, b))),
        (0..derived).prop_map(|j| Cond::Lit(Lit::Derived(j))),
    ];
    lit.prop_recursive(3, 8, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Cond::And(Box::new(a), Box::new(b))),
            (inner.clone(), inner).prop_map(|(a, b)| Cond::Or(Box::new(a), Box::new(b))),
        ]
    })
    .boxed()
}

pub fn rulebase(max_rules: usize) -> impl Strategy<Value = GenRulebase> {
    (1..=max_rules)
        .prop_flat_map(|n| {
            let derived = (n / 2).max(1);
            (
                vec((0..4u8, cond(derived), 0..derived), n),
                vec(proptest::option::weighted(0.85, any::<bool>()), INPUTS),
            )
        })
        .prop_map(|(rules, inputs)| GenRulebase {
            rules: rules
                .into_iter()
                .enumerate()
                .map(|(i, (priority, cond, asserts))| GenRule {
                    name: format!("r{i:03}"),
                    priority: 40 + priority,
                    cond,
                    asserts,
                })
                .collect(),
            inputs: inputs
                .into_iter()
                .enumerate()
                .filter_map(|(i, v)| v.map(|v| (i, v)))
                .collect(),
        })
}

fn lit_key(l: &Lit) -> String {
    match l {
        Lit::Input(i, _) => input_key(*i),
        Lit::Derived(j) => derived_key(*j),
    }
}

fn to_expr(c: &Cond, vars: &mut BTreeMap<String, String>) -> Expr {
    match c {
        Cond::Lit(l) => {
            let key = lit_key(l);
            let n = vars.len();
            let var = vars.entry(key).or_insert_with(|| format!("v{n}")).clone();
            let want = match l {
                Lit::Input(_, b) => *b,
                Lit::Derived(_) => true,
            };
            Expr::cmp(CmpOp::Eq, Expr::var(&var), Expr::Lit(Value::bool(want)))
        }
        Cond::And(a, b) => Expr::and(to_expr(a, vars), to_expr(b, vars)),
        Cond::Or(a, b) => Expr::or(to_expr(a, vars), to_expr(b, vars)),
    }
}

pub fn compile(rule: &GenRule) -> CompiledRule {
    let mut vars = BTreeMap::new();
    let mut m = Mlm::new(&rule.name, RuleKind::Classification);
    m.priority = rule.priority;
    m.logic = to_expr(&rule.cond, &mut vars);
    m.data = vars
        .iter()
        .map(|(key, var)| DataBinding::fact(var, key))
        .collect();
    m.actions = vec![Action::Assert {
        key: derived_key(rule.asserts),
        value: Value::bool(true),
    }];
    compile_rule(&m).expect("generated rule compiles")
}

pub fn working_memory(rb: &GenRulebase) -> WorkingMemory {
    let mut wm = WorkingMemory::new();
    for (i, v) in &rb.inputs {
        wm.assert_fact(Fact::input(&input_key(*i), Value::bool(*v)))
            .expect("distinct inputs");
    }
    wm
}

fn referenced(c: &Cond, out: &mut Vec<Lit>) {
    match c {
        Cond::Lit(l) => out.push(l.clone()),
        Cond::And(a, b) | Cond::Or(a, b) => {
            referenced(a, out);
            referenced(b, out);
        }
    }
}

fn holds(c: &Cond, inputs: &BTreeMap<usize, bool>, derived: &BTreeSet<usize>) -> bool {
    // Strict evaluation: every referenced fact must be known.
    let mut lits = Vec::new();
    referenced(c, &mut lits);
    let known = lits.iter().all(|l| match l {
        Lit::Input(i, _) => inputs.contains_key(i),
        Lit::Derived(j) => derived.contains(j),
    });
    known && truth(c, inputs)
}

fn truth(c: &Cond, inputs: &BTreeMap<usize, bool>) -> bool {
    match c {
        Cond::Lit(Lit::Input(i, b)) => inputs[i] == *b,
        Cond::Lit(Lit::Derived(_)) => true,
        Cond::And(a, b) => truth(a, inputs) && truth(b, inputs),
        Cond::Or(a, b) => truth(a, inputs) || truth(b, inputs),
    }
}

/// Smallest rule set `S` such that every rule whose condition holds given the
/// facts derived by `S` is itself in `S`, found by trying every subset.
pub fn least_fixpoint(rb: &GenRulebase) -> BTreeSet<String> {
    let n = rb.rules.len();
    assert!(n <= 12, "exhaustive oracle is exponential");
    let mut best: Option<u32> = None;
    for mask in 0u32..(1 << n) {
        let derived: BTreeSet<usize> = (0..n)
            .filter(|r| mask & (1 << r) != 0)
            .map(|r| rb.rules[r].asserts)
            .collect();
        let closed =
            (0..n).all(|r| mask & (1 << r) != 0 || !holds(&rb.rules[r].cond, &rb.inputs, &derived));
        if closed && best.is_none_or(|b| mask.count_ones() < b.count_ones()) {
            best = Some(mask);
        }
    }
    let best = best.expect("the full set is always closed");
    (0..n)
        .filter(|r| best & (1 << r) != 0)
        .map(|r| rb.rules[r].name.clone())
        .collect()
}
