//! Typed literal values shared by rule expressions, facts and metrics.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ontology::CodeSystem;

/// Physical units understood by the rule language. No conversion is ever
/// performed between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "Gy")]
    Gy,
    #[serde(rename = "cc")]
    Cc,
    #[serde(rename = "%")]
    Percent,
    #[serde(rename = "ng/ml")]
    NgPerMl,
}

impl Unit {
    pub const ALL: [Unit; 4] = [Unit::Gy, Unit::Cc, Unit::Percent, Unit::NgPerMl];

    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Gy => "Gy",
            Unit::Cc => "cc",
            Unit::Percent => "%",
            Unit::NgPerMl => "ng/ml",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Unit> {
        Unit::ALL.into_iter().find(|u| u.symbol() == s)
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// A reference to a coded concept, `(system, code)` with the code uppercased.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConceptRef {
    pub system: CodeSystem,
    pub code: String,
}

impl ConceptRef {
    pub fn new(system: CodeSystem, code: &str) -> Self {
        Self {
            system,
            code: crate::ontology::normalize_code(code),
        }
    }
}

impl fmt::Display for ConceptRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{:?}", self.system, self.code)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Value {
    Number {
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<Unit>,
    },
    Text {
        value: String,
    },
    Bool {
        value: bool,
    },
    Concept {
        #[serde(flatten)]
        concept: ConceptRef,
    },
}

impl Value {
    pub fn number(value: f64) -> Self {
        Value::Number { value, unit: None }
    }

    pub fn quantity(value: f64, unit: Unit) -> Self {
        Value::Number {
            value,
            unit: Some(unit),
        }
    }

    pub fn text(s: impl Into<String>) -> Self {
        Value::Text { value: s.into() }
    }

    pub fn bool(value: bool) -> Self {
        Value::Bool { value }
    }

    pub fn concept(system: CodeSystem, code: &str) -> Self {
        Value::Concept {
            concept: ConceptRef::new(system, code),
        }
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Number { unit, .. } => ValueKind::Number(*unit),
            Value::Text { .. } => ValueKind::Text,
            Value::Bool { .. } => ValueKind::Bool,
            Value::Concept { .. } => ValueKind::Concept,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool { value } => Some(*value),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text { value } => Some(value),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<(f64, Option<Unit>)> {
        match self {
            Value::Number { value, unit } => Some((*value, *unit)),
            _ => None,
        }
    }

    /// Total order used only for canonical sorting (never for rule semantics).
    pub fn canonical_cmp(&self, other: &Value) -> Ordering {
        fn rank(v: &Value) -> u8 {
            match v {
                Value::Number { .. } => 0,
                Value::Text { .. } => 1,
                Value::Bool { .. } => 2,
                Value::Concept { .. } => 3,
            }
        }
        match (self, other) {
            (Value::Number { value: a, unit: ua }, Value::Number { value: b, unit: ub }) => {
                ua.cmp(ub).then(a.total_cmp(b))
            }
            (Value::Text { value: a }, Value::Text { value: b }) => a.cmp(b),
            (Value::Bool { value: a }, Value::Bool { value: b }) => a.cmp(b),
            (Value::Concept { concept: a }, Value::Concept { concept: b }) => a.cmp(b),
            _ => rank(self).cmp(&rank(other)),
        }
    }
}

/// Renders the value in rule-language literal syntax.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number { value, unit } => {
                write!(f, "{value}")?;
                if let Some(u) = unit {
                    write!(f, "{u}")?;
                }
                Ok(())
            }
            Value::Text { value } => write_quoted(f, value),
            Value::Bool { value } => write!(f, "{value}"),
            Value::Concept { concept } => {
                write!(f, "{}:", concept.system)?;
                write_quoted(f, &concept.code)
            }
        }
    }
}

pub(crate) fn write_quoted(f: &mut impl fmt::Write, s: &str) -> fmt::Result {
    f.write_char('"')?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            c => f.write_char(c)?,
        }
    }
    f.write_char('"')
}

/// Fact keys are dotted lowercase paths such as `risk.class` or `lab.psa`.
pub fn is_valid_fact_key(key: &str) -> bool {
    !key.is_empty()
        && key.split('.').all(|seg| {
            !seg.is_empty()
                && seg
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        })
}

/// Static type of a value, as far as it is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Number(Option<Unit>),
    Text,
    Bool,
    Concept,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueKind::Number(None) => f.write_str("number"),
            ValueKind::Number(Some(u)) => write!(f, "number[{u}]"),
            ValueKind::Text => f.write_str("string"),
            ValueKind::Bool => f.write_str("boolean"),
            ValueKind::Concept => f.write_str("concept"),
        }
    }
}
