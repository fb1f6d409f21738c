//! Random rule-logic trees and variable assignments.

use std::collections::BTreeMap;

use proptest::collection::vec;
use proptest::prelude::*;
use rtqa_core::rulelang::{ArithOp, CmpOp, Expr};
use rtqa_core::{Unit, Value};

pub const MAX_DEPTH: usize = 6;
pub const NUM_VARS: [&str; 3] = ["x", "y", "z"];
pub const BOOL_VARS: [&str; 2] = ["p", "q"];

fn quarter() -> impl Strategy<Value = f64> {
    (-40i32..400).prop_map(|k| f64::from(k) / 4.0)
}

fn unit() -> impl Strategy<Value = Option<Unit>> {
    prop_oneof![
        6 => Just(None),
        1 => Just(Some(Unit::Gy)),
        1 => Just(Some(Unit::Percent)),
    ]
}

pub fn number() -> impl Strategy<Value = Value> {
    (quarter(), unit()).prop_map(|(v, u)| Value::Number { value: v, unit: u })
}

fn cmp_op() -> impl Strategy<Value = CmpOp> {
    prop_oneof![
        Just(CmpOp::Eq),
        Just(CmpOp::Ne),
        Just(CmpOp::Lt),
        Just(CmpOp::Le),
        Just(CmpOp::Gt),
        Just(CmpOp::Ge),
    ]
}

fn arith_op() -> impl Strategy<Value = ArithOp> {
    prop_oneof![
        Just(ArithOp::Add),
        Just(ArithOp::Sub),
        Just(ArithOp::Mul),
        Just(ArithOp::Div),
    ]
}

/// Numeric-valued trees of depth at most 3.
pub fn num_expr() -> BoxedStrategy<Expr> {
    let leaf = prop_oneof![
        number().prop_map(Expr::Lit),
        prop::sample::select(&NUM_VARS[..]).prop_map(Expr::var),
    ];
    leaf.prop_recursive(2, 8, 2, |inner| {
        (arith_op(), inner.clone(), inner).prop_map(|(op, a, b)| Expr::arith(op, a, b))
    })
    .boxed()
}

/// Mostly boolean-valued trees. Mixed kinds appear often enough that type
/// errors are exercised too.
pub fn bool_expr() -> BoxedStrategy<Expr> {
    let atom = prop_oneof![
        any::<bool>().prop_map(|b| Expr::Lit(Value::bool(b))),
        prop::sample::select(&BOOL_VARS[..]).prop_map(Expr::var),
        (cmp_op(), num_expr(), num_expr()).prop_map(|(op, a, b)| Expr::cmp(op, a, b)),
        (num_expr(), vec(number(), 1..4)).prop_map(|(item, list)| Expr::In {
            item: Box::new(item),
            list,
        }),
    ];
    atom.prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::or(a, b)),
            inner.prop_map(Expr::not),
        ]
    })
    .prop_filter("depth bound", |e| e.depth() <= MAX_DEPTH)
    .boxed()
}

/// Any tree, including text and concept literals, for printer round trips.
pub fn any_expr() -> BoxedStrategy<Expr> {
    let text = "[a-z ]{0,6}".prop_map(|s| Expr::Lit(Value::text(s)));
    let concept = "[A-Z][0-9]{2}\\.[0-9]"
        .prop_map(|c| Expr::Lit(Value::concept(rtqa_core::ontology::CodeSystem::Icdo, &c)));
    prop_oneof![
        4 => bool_expr(),
        2 => num_expr(),
        1 => (text, concept).prop_map(|(a, b)| Expr::cmp(CmpOp::Ne, a, b)),
    ]
    .boxed()
}

pub type Assignment = BTreeMap<String, Value>;

/// Values for every variable; a variable is occasionally left unbound or
/// given a unit so the error paths are compared as well.
pub fn assignment() -> impl Strategy<Value = Assignment> {
    let num = prop_oneof![
        12 => quarter().prop_map(Value::number),
        1 => quarter().prop_map(|v| Value::quantity(v, Unit::Gy)),
    ];
    let boolean = any::<bool>().prop_map(Value::bool);
    (
        vec(proptest::option::weighted(0.97, num), NUM_VARS.len()),
        vec(proptest::option::weighted(0.97, boolean), BOOL_VARS.len()),
    )
        .prop_map(|(nums, bools)| {
            let mut a = Assignment::new();
            for (name, v) in NUM_VARS.iter().zip(nums).chain(BOOL_VARS.iter().zip(bools)) {
                if let Some(v) = v {
                    a.insert(name.to_string(), v);
                }
            }
            a
        })
}
