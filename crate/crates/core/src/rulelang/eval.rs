//! Value semantics of the rule operators and the tree-walking interpreter.
//!
//! Evaluation is strict (no short-circuit) and left-to-right so that the
//! interpreter and the stack machine observe errors in the same order.

use thiserror::Error;

use crate::value::{Unit, Value, ValueKind};

use super::ast::{ArithOp, CmpOp, Expr};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("variable `{0}` has no value")]
    Unbound(String),
    #[error("`{op}` cannot combine {lhs} and {rhs}")]
    TypeMismatch {
        op: &'static str,
        lhs: ValueKind,
        rhs: ValueKind,
    },
    #[error("`{op}` needs a boolean operand, found {found}")]
    NotBoolean { op: &'static str, found: ValueKind },
    #[error("division by zero")]
    DivisionByZero,
    #[error("stack underflow at instruction {0}")]
    StackUnderflow(usize),
    #[error("program left {0} values on the stack")]
    UnbalancedStack(usize),
}

pub fn compare(op: CmpOp, lhs: &Value, rhs: &Value) -> Result<Value, EvalError> {
    let mismatch = || EvalError::TypeMismatch {
        op: op.symbol(),
        lhs: lhs.kind(),
        rhs: rhs.kind(),
    };
    let result = match (lhs, rhs) {
        (Value::Number { value: a, unit: ua }, Value::Number { value: b, unit: ub }) => {
            if ua != ub {
                return Err(mismatch());
            }
            match op {
                CmpOp::Eq => a == b,
                CmpOp::Ne => a != b,
                CmpOp::Lt => a < b,
                CmpOp::Le => a <= b,
                CmpOp::Gt => a > b,
                CmpOp::Ge => a >= b,
            }
        }
        _ if op.is_ordering() => return Err(mismatch()),
        _ if lhs.kind() != rhs.kind() => return Err(mismatch()),
        _ => (lhs == rhs) == (op == CmpOp::Eq),
    };
    Ok(Value::bool(result))
}

pub fn member(item: &Value, list: &[Value]) -> Result<Value, EvalError> {
    let mut found = false;
    for candidate in list {
        if let Value::Bool { value: true } =
            compare(CmpOp::Eq, item, candidate).map_err(|_| EvalError::TypeMismatch {
                op: "in",
                lhs: item.kind(),
                rhs: candidate.kind(),
            })?
        {
            found = true;
        }
    }
    Ok(Value::bool(found))
}

fn as_bool(op: &'static str, v: &Value) -> Result<bool, EvalError> {
    v.as_bool().ok_or(EvalError::NotBoolean {
        op,
        found: v.kind(),
    })
}

pub fn and(lhs: &Value, rhs: &Value) -> Result<Value, EvalError> {
    let a = as_bool("and", lhs)?;
    let b = as_bool("and", rhs)?;
    Ok(Value::bool(a && b))
}

pub fn or(lhs: &Value, rhs: &Value) -> Result<Value, EvalError> {
    let a = as_bool("or", lhs)?;
    let b = as_bool("or", rhs)?;
    Ok(Value::bool(a || b))
}

pub fn not(v: &Value) -> Result<Value, EvalError> {
    Ok(Value::bool(!as_bool("not", v)?))
}

/// Unit algebra: `+`/`-` need equal units; `*` allows at most one unit;
/// `/` cancels equal units and keeps a numerator unit over a plain number.
pub fn arith_unit(op: ArithOp, ua: Option<Unit>, ub: Option<Unit>) -> Option<Option<Unit>> {
    match op {
        ArithOp::Add | ArithOp::Sub => (ua == ub).then_some(ua),
        ArithOp::Mul => match (ua, ub) {
            (Some(_), Some(_)) => None,
            (u, None) | (None, u) => Some(u),
        },
        ArithOp::Div => match (ua, ub) {
            (a, b) if a == b => Some(None),
            (a, None) => Some(a),
            _ => None,
        },
    }
}

pub fn arith(op: ArithOp, lhs: &Value, rhs: &Value) -> Result<Value, EvalError> {
    let mismatch = || EvalError::TypeMismatch {
        op: op.symbol(),
        lhs: lhs.kind(),
        rhs: rhs.kind(),
    };
    let (Some((a, ua)), Some((b, ub))) = (lhs.as_number(), rhs.as_number()) else {
        return Err(mismatch());
    };
    let unit = arith_unit(op, ua, ub).ok_or_else(mismatch)?;
    let value = match op {
        ArithOp::Add => a + b,
        ArithOp::Sub => a - b,
        ArithOp::Mul => a * b,
        ArithOp::Div => {
            if b == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            a / b
        }
    };
    Ok(Value::Number { value, unit })
}

/// Direct interpretation of the expression tree.
pub fn interpret(expr: &Expr, lookup: &dyn Fn(&str) -> Option<Value>) -> Result<Value, EvalError> {
    match expr {
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Var(name) => lookup(name).ok_or_else(|| EvalError::Unbound(name.clone())),
        Expr::Cmp { op, lhs, rhs } => {
            let a = interpret(lhs, lookup)?;
            let b = interpret(rhs, lookup)?;
            compare(*op, &a, &b)
        }
        Expr::In { item, list } => member(&interpret(item, lookup)?, list),
        Expr::And(lhs, rhs) => {
            let a = interpret(lhs, lookup)?;
            let b = interpret(rhs, lookup)?;
            and(&a, &b)
        }
        Expr::Or(lhs, rhs) => {
            let a = interpret(lhs, lookup)?;
            let b = interpret(rhs, lookup)?;
            or(&a, &b)
        }
        Expr::Not(inner) => not(&interpret(inner, lookup)?),
        Expr::Arith { op, lhs, rhs } => {
            let a = interpret(lhs, lookup)?;
            let b = interpret(rhs, lookup)?;
            arith(*op, &a, &b)
        }
    }
}
