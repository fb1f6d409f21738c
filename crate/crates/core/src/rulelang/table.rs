//! Decision tables: parsing, completeness analysis and expansion into MLMs.
//!
//! File layout (`.dtab`):
//!
//! ```text
//! # comments start with '#'
//! table: name psa_grid; kind classification; priority 40;
//! data: psa := fact "lab.psa"; gleason := fact "lab.gleason";
//! psa < 10ng/ml          | T | T | F | F
//! gleason <= 6           | T | F | T | F
//! ---
//! assert "risk.g" = "a"  | X |   |   |
//! load_criteria grid_b   |   | X | X | X
//! ```
//!
//! The first block holds condition rows (stub then entries `T`, `F`, `-`);
//! after the `---` separator come action rows (stub then `X` or blank).

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::*;
use super::parser::{parse_action_at, parse_expr_at, Parser};
use super::{IssueKind, Location, RuleIssue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConditionEntry {
    True,
    False,
    DontCare,
}

impl ConditionEntry {
    pub fn symbol(self) -> char {
        match self {
            ConditionEntry::True => 'T',
            ConditionEntry::False => 'F',
            ConditionEntry::DontCare => '-',
        }
    }

    pub fn matches(self, value: bool) -> bool {
        match self {
            ConditionEntry::True => value,
            ConditionEntry::False => !value,
            ConditionEntry::DontCare => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableColumn {
    pub condition_entries: Vec<ConditionEntry>,
    pub action_entries: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableHeader {
    pub name: String,
    pub kind: RuleKind,
    pub criterion_class: Option<CriterionClass>,
    pub priority: u8,
    pub applies_to: AppliesTo,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTable {
    pub header: Option<TableHeader>,
    pub data: Vec<DataBinding>,
    pub conditions: Vec<(String, Expr)>,
    pub actions: Vec<(String, Action)>,
    pub columns: Vec<TableColumn>,
}

/// Truth assignment to the table's conditions, in row order.
pub type ConditionVector = Vec<bool>;

pub fn render_vector(v: &[bool]) -> String {
    v.iter().map(|b| if *b { 'T' } else { 'F' }).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Completeness {
    pub balanced: bool,
    pub missing: Vec<ConditionVector>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("columns {columns:?} overlap on condition vector {}", render_vector(.vector))]
    Overlap {
        vector: ConditionVector,
        /// Zero-based column indices.
        columns: Vec<usize>,
    },
    #[error("completeness analysis supports at most {max} conditions, table has {found}")]
    TooManyConditions { max: usize, found: usize },
}

pub const MAX_ANALYSED_CONDITIONS: usize = 24;

/// Splits a row on `|`, ignoring bars inside string literals.
fn split_cells(line: &str) -> Vec<(usize, &str)> {
    let mut cells = Vec::new();
    let mut start = 0;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_str => escaped = true,
            '"' => in_str = !in_str,
            '|' if !in_str => {
                cells.push((start, &line[start..i]));
                start = i + 1;
            }
            _ => {}
        }
    }
    cells.push((start, &line[start..]));
    cells
}

pub fn parse_decision_table(text: &str) -> Result<DecisionTable, RuleIssue> {
    let mut header = None;
    let mut data = Vec::new();
    let mut conditions = Vec::new();
    let mut actions = Vec::new();
    let mut cond_cells: Vec<Vec<ConditionEntry>> = Vec::new();
    let mut action_cells: Vec<Vec<bool>> = Vec::new();
    let mut in_actions = false;
    let mut width: Option<usize> = None;
    let mut table_name = String::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let at = |column: usize| Location {
            line: line_no,
            column: column + 1,
        };
        let err = |column: usize, msg: String| {
            RuleIssue::error(IssueKind::Syntax, &table_name, msg).at(at(column))
        };
        let indent = raw.len() - raw.trim_start().len();

        if trimmed.starts_with("table:") && conditions.is_empty() && header.is_none() {
            let mut p = Parser::new(&format!("{trimmed}\ndata:"), at(indent))?;
            // Skip "table" ':' then reuse the MLM header-slot grammar.
            p_skip_section(&mut p)?;
            let h = p.header_slots(true)?;
            table_name = h.name.clone();
            header = Some(TableHeader {
                name: h.name,
                kind: h.kind,
                criterion_class: h.class,
                priority: h.priority.unwrap_or(DEFAULT_PRIORITY),
                applies_to: h.applies_to.unwrap_or(AppliesTo::Any),
                version: h.version.unwrap_or_else(|| "1.0".to_string()),
            });
            continue;
        }
        if trimmed.starts_with("data:") && conditions.is_empty() {
            let mut p = Parser::new(trimmed, at(indent))?;
            p_skip_section(&mut p)?;
            data.extend(p.bindings(|_| false)?);
            continue;
        }
        if trimmed.starts_with("---") && trimmed.chars().all(|c| c == '-') {
            if in_actions {
                return Err(err(indent, "second `---` separator".into()));
            }
            if conditions.is_empty() {
                return Err(err(indent, "separator before any condition row".into()));
            }
            in_actions = true;
            continue;
        }

        let cells = split_cells(raw);
        let (stub_off, stub) = cells[0];
        let entries = &cells[1..];
        if entries.is_empty() {
            return Err(err(indent, "row has no entries (missing `|`)".into()));
        }
        match width {
            None => width = Some(entries.len()),
            Some(w) if w != entries.len() => {
                return Err(err(
                    indent,
                    format!("ragged row: {} entries, expected {w}", entries.len()),
                ))
            }
            _ => {}
        }
        let stub_col = stub_off + (stub.len() - stub.trim_start().len());
        let stub = stub.trim();
        if stub.is_empty() {
            return Err(err(indent, "row is missing its stub".into()));
        }
        if !in_actions {
            let expr = parse_expr_at(stub, at(stub_col)).map_err(|e| e.named(&table_name))?;
            let mut row = Vec::with_capacity(entries.len());
            for (off, cell) in entries {
                row.push(match cell.trim() {
                    "T" | "t" | "Y" | "y" => ConditionEntry::True,
                    "F" | "f" | "N" | "n" => ConditionEntry::False,
                    "-" => ConditionEntry::DontCare,
                    other => {
                        return Err(err(
                            *off,
                            format!("illegal condition entry {other:?}; use T, F or -"),
                        ))
                    }
                });
            }
            conditions.push((stub.to_string(), expr));
            cond_cells.push(row);
        } else {
            let action = parse_action_at(stub, at(stub_col)).map_err(|e| e.named(&table_name))?;
            let mut row = Vec::with_capacity(entries.len());
            for (off, cell) in entries {
                row.push(match cell.trim() {
                    "X" | "x" => true,
                    "" => false,
                    other => {
                        return Err(err(
                            *off,
                            format!("illegal action entry {other:?}; use X or blank"),
                        ))
                    }
                });
            }
            actions.push((stub.to_string(), action));
            action_cells.push(row);
        }
    }

    if conditions.is_empty() {
        return Err(RuleIssue::error(
            IssueKind::Syntax,
            &table_name,
            "decision table has no condition rows",
        ));
    }
    let width = width.unwrap_or(0);
    let columns: Vec<TableColumn> = (0..width)
        .map(|c| TableColumn {
            condition_entries: cond_cells.iter().map(|r| r[c]).collect(),
            action_entries: action_cells.iter().map(|r| r[c]).collect(),
        })
        .collect();

    let mut seen: HashMap<&[ConditionEntry], usize> = HashMap::new();
    for (i, col) in columns.iter().enumerate() {
        if let Some(prev) = seen.insert(&col.condition_entries, i) {
            return Err(RuleIssue::error(
                IssueKind::Syntax,
                &table_name,
                format!(
                    "columns {} and {} have identical condition entries",
                    prev + 1,
                    i + 1
                ),
            ));
        }
    }

    Ok(DecisionTable {
        header,
        data,
        conditions,
        actions,
        columns,
    })
}

fn p_skip_section(p: &mut Parser) -> Result<(), RuleIssue> {
    // `<ident> :`
    p.skip_section_header()
}

/// Bit `n-1-i` set means condition `i` is false, so ascending indices
/// enumerate vectors in T-before-F lexicographic order (TT, TF, FT, FF).
fn index_vector(idx: usize, n: usize) -> ConditionVector {
    (0..n).map(|i| idx & (1 << (n - 1 - i)) == 0).collect()
}

/// Expands don't-care entries and checks that every one of the 2^n condition
/// vectors is covered exactly once.
pub fn check_completeness(table: &DecisionTable) -> Result<Completeness, TableError> {
    let n = table.conditions.len();
    if n > MAX_ANALYSED_CONDITIONS {
        return Err(TableError::TooManyConditions {
            max: MAX_ANALYSED_CONDITIONS,
            found: n,
        });
    }
    let mut first_cover: Vec<Option<u32>> = vec![None; 1 << n];
    let mut collisions: Option<usize> = None;

    for (c, col) in table.columns.iter().enumerate() {
        let mut fixed = 0usize;
        let mut free = 0usize;
        for (i, e) in col.condition_entries.iter().enumerate() {
            let bit = 1 << (n - 1 - i);
            match e {
                ConditionEntry::True => {}
                ConditionEntry::False => fixed |= bit,
                ConditionEntry::DontCare => free |= bit,
            }
        }
        // Enumerate all submasks of `free`.
        let mut sub = free;
        loop {
            let idx = fixed | sub;
            match first_cover[idx] {
                None => first_cover[idx] = Some(c as u32),
                Some(_) => collisions = Some(collisions.map_or(idx, |m| m.min(idx))),
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & free;
        }
    }

    if let Some(idx) = collisions {
        let vector = index_vector(idx, n);
        let columns = table
            .columns
            .iter()
            .enumerate()
            .filter(|(_, col)| {
                col.condition_entries
                    .iter()
                    .zip(&vector)
                    .all(|(e, v)| e.matches(*v))
            })
            .map(|(i, _)| i)
            .collect();
        return Err(TableError::Overlap { vector, columns });
    }

    let missing: Vec<ConditionVector> = first_cover
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_none())
        .map(|(idx, _)| index_vector(idx, n))
        .collect();
    Ok(Completeness {
        balanced: missing.is_empty(),
        missing,
    })
}

/// One MLM per column: the conjunction of each condition (negated for `F`,
/// omitted for `-`). Classification rules take the column's marked actions;
/// criteria carry no actions.
pub fn table_to_rules(
    table: &DecisionTable,
    base_name: &str,
    kind: RuleKind,
    class: Option<CriterionClass>,
) -> Vec<Mlm> {
    table
        .columns
        .iter()
        .enumerate()
        .map(|(c, col)| {
            let parts = table
                .conditions
                .iter()
                .zip(&col.condition_entries)
                .filter_map(|((_, expr), entry)| match entry {
                    ConditionEntry::True => Some(expr.clone()),
                    ConditionEntry::False => Some(Expr::not(expr.clone())),
                    ConditionEntry::DontCare => None,
                });
            let logic = Expr::conjunction(parts);
            let used = logic.variables();
            let data = table
                .data
                .iter()
                .filter(|b| used.contains(&b.var.as_str()))
                .cloned()
                .collect();
            let actions = match kind {
                RuleKind::Classification => table
                    .actions
                    .iter()
                    .zip(&col.action_entries)
                    .filter(|(_, marked)| **marked)
                    .map(|((_, a), _)| a.clone())
                    .collect(),
                RuleKind::Criterion => Vec::new(),
            };
            let mut mlm = Mlm::new(&format!("{base_name}_c{}", c + 1), kind);
            mlm.title = format!("{base_name} column {}", c + 1);
            mlm.criterion_class = class;
            if let Some(h) = &table.header {
                mlm.priority = h.priority;
                mlm.applies_to = h.applies_to.clone();
                mlm.version = h.version.clone();
            }
            mlm.data = data;
            mlm.logic = logic;
            mlm.actions = actions;
            mlm
        })
        .collect()
}

impl DecisionTable {
    /// Expands using the table's own header (name, kind and class).
    pub fn to_rules(&self) -> Option<Vec<Mlm>> {
        let h = self.header.as_ref()?;
        Some(table_to_rules(self, &h.name, h.kind, h.criterion_class))
    }
}

impl fmt::Display for Completeness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.balanced {
            f.write_str("balanced: every condition combination is covered exactly once")
        } else {
            let missing: Vec<String> = self.missing.iter().map(|v| render_vector(v)).collect();
            write!(f, "unbalanced: missing [{}]", missing.join(", "))
        }
    }
}
