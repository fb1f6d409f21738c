//! Translation of MLM logic into a flat postfix program and the stack
//! machine that runs it.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::Value;

use super::ast::*;
use super::eval::{self, EvalError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "arg", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Instruction {
    PushConst(Value),
    LoadVar(String),
    Cmp(CmpOp),
    InList(Vec<Value>),
    And,
    Or,
    Not,
    Add,
    Sub,
    Mul,
    Div,
}

impl Instruction {
    /// (values popped, values pushed)
    fn stack_effect(&self) -> (usize, usize) {
        match self {
            Instruction::PushConst(_) | Instruction::LoadVar(_) => (0, 1),
            Instruction::InList(_) | Instruction::Not => (1, 1),
            _ => (2, 1),
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::PushConst(v) => write!(f, "PUSH_CONST {v}"),
            Instruction::LoadVar(n) => write!(f, "LOAD_VAR {n}"),
            Instruction::Cmp(op) => write!(f, "CMP {}", op.symbol()),
            Instruction::InList(list) => {
                f.write_str("IN_LIST [")?;
                for (i, v) in list.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            Instruction::And => f.write_str("AND"),
            Instruction::Or => f.write_str("OR"),
            Instruction::Not => f.write_str("NOT"),
            Instruction::Add => f.write_str("ADD"),
            Instruction::Sub => f.write_str("SUB"),
            Instruction::Mul => f.write_str("MUL"),
            Instruction::Div => f.write_str("DIV"),
        }
    }
}

/// Executable form of an [`Mlm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledRule {
    pub mlm_name: String,
    pub title: String,
    pub kind: RuleKind,
    pub criterion_class: Option<CriterionClass>,
    pub priority: u8,
    pub specificity: usize,
    pub applies_to: AppliesTo,
    pub mode: Mode,
    pub refines: Option<String>,
    pub instructions: Vec<Instruction>,
    pub actions: Vec<Action>,
    pub data_bindings: Vec<DataBinding>,
    pub message: String,
}

impl CompiledRule {
    /// Runs the rule's program with variables resolved by `lookup`.
    pub fn evaluate(&self, lookup: &dyn Fn(&str) -> Option<Value>) -> Result<Value, EvalError> {
        execute(&self.instructions, lookup)
    }

    pub fn listing(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "rule {} (priority {}, specificity {})",
            self.mlm_name, self.priority, self.specificity
        );
        for b in &self.data_bindings {
            let _ = writeln!(s, "  bind {} := {}", b.var, b.source);
        }
        for (i, ins) in self.instructions.iter().enumerate() {
            let _ = writeln!(s, "  {i:04} {ins}");
        }
        for a in &self.actions {
            let _ = writeln!(s, "  then {a}");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("internal compile error in `{rule}`: {detail}")]
    Internal { rule: String, detail: String },
}

pub fn compile_expr(expr: &Expr) -> Vec<Instruction> {
    let mut out = Vec::new();
    emit(expr, &mut out);
    out
}

fn emit(expr: &Expr, out: &mut Vec<Instruction>) {
    match expr {
        Expr::Lit(v) => out.push(Instruction::PushConst(v.clone())),
        Expr::Var(n) => out.push(Instruction::LoadVar(n.clone())),
        Expr::Cmp { op, lhs, rhs } => {
            emit(lhs, out);
            emit(rhs, out);
            out.push(Instruction::Cmp(*op));
        }
        Expr::In { item, list } => {
            emit(item, out);
            out.push(Instruction::InList(list.clone()));
        }
        Expr::And(a, b) => {
            emit(a, out);
            emit(b, out);
            out.push(Instruction::And);
        }
        Expr::Or(a, b) => {
            emit(a, out);
            emit(b, out);
            out.push(Instruction::Or);
        }
        Expr::Not(a) => {
            emit(a, out);
            out.push(Instruction::Not);
        }
        Expr::Arith { op, lhs, rhs } => {
            emit(lhs, out);
            emit(rhs, out);
            out.push(match op {
                ArithOp::Add => Instruction::Add,
                ArithOp::Sub => Instruction::Sub,
                ArithOp::Mul => Instruction::Mul,
                ArithOp::Div => Instruction::Div,
            });
        }
    }
}

/// Simulates stack depth: never negative, ends at exactly one value.
pub fn check_stack_balance(program: &[Instruction]) -> Result<(), String> {
    let mut depth = 0usize;
    for (i, ins) in program.iter().enumerate() {
        let (pop, push) = ins.stack_effect();
        if depth < pop {
            return Err(format!("stack underflow at instruction {i} ({ins})"));
        }
        depth = depth - pop + push;
    }
    if depth != 1 {
        return Err(format!("program ends with stack depth {depth}"));
    }
    Ok(())
}

pub fn compile_rule(mlm: &Mlm) -> Result<CompiledRule, CompileError> {
    let instructions = compile_expr(&mlm.logic);
    check_stack_balance(&instructions).map_err(|detail| CompileError::Internal {
        rule: mlm.name.clone(),
        detail,
    })?;
    Ok(CompiledRule {
        mlm_name: mlm.name.clone(),
        title: mlm.title.clone(),
        kind: mlm.kind,
        criterion_class: mlm.criterion_class,
        priority: mlm.priority,
        specificity: mlm.logic.atomic_condition_count(),
        applies_to: mlm.applies_to.clone(),
        mode: mlm.mode,
        refines: mlm.refines.clone(),
        instructions,
        actions: mlm.actions.clone(),
        data_bindings: mlm.data.clone(),
        message: mlm.message.clone(),
    })
}

pub fn execute(
    program: &[Instruction],
    lookup: &dyn Fn(&str) -> Option<Value>,
) -> Result<Value, EvalError> {
    let mut stack: Vec<Value> = Vec::with_capacity(8);
    for (pc, ins) in program.iter().enumerate() {
        let underflow = || EvalError::StackUnderflow(pc);
        match ins {
            Instruction::PushConst(v) => stack.push(v.clone()),
            Instruction::LoadVar(n) => {
                stack.push(lookup(n).ok_or_else(|| EvalError::Unbound(n.clone()))?)
            }
            Instruction::InList(list) => {
                let v = stack.pop().ok_or_else(underflow)?;
                stack.push(eval::member(&v, list)?);
            }
            Instruction::Not => {
                let v = stack.pop().ok_or_else(underflow)?;
                stack.push(eval::not(&v)?);
            }
            binary => {
                let rhs = stack.pop().ok_or_else(underflow)?;
                let lhs = stack.pop().ok_or_else(underflow)?;
                let out = match binary {
                    Instruction::Cmp(op) => eval::compare(*op, &lhs, &rhs),
                    Instruction::And => eval::and(&lhs, &rhs),
                    Instruction::Or => eval::or(&lhs, &rhs),
                    Instruction::Add => eval::arith(ArithOp::Add, &lhs, &rhs),
                    Instruction::Sub => eval::arith(ArithOp::Sub, &lhs, &rhs),
                    Instruction::Mul => eval::arith(ArithOp::Mul, &lhs, &rhs),
                    Instruction::Div => eval::arith(ArithOp::Div, &lhs, &rhs),
                    _ => unreachable!("unary and nullary instructions handled above"),
                }?;
                stack.push(out);
            }
        }
    }
    match stack.len() {
        1 => Ok(stack.pop().expect("one value")),
        n => Err(EvalError::UnbalancedStack(n)),
    }
}
