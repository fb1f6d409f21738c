use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::value::{Value, ValueKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [
        CmpOp::Eq,
        CmpOp::Ne,
        CmpOp::Lt,
        CmpOp::Le,
        CmpOp::Gt,
        CmpOp::Ge,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub const ALL: [ArithOp; 4] = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div];

    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

/// Rule logic. `and`/`or` and arithmetic are binary and left-associative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Lit(Value),
    Var(String),
    Cmp {
        op: CmpOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    In {
        item: Box<Expr>,
        list: Vec<Value>,
    },
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Arith {
        op: ArithOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

impl Expr {
    pub fn cmp(op: CmpOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Cmp {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn arith(op: ArithOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Arith {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn and(lhs: Expr, rhs: Expr) -> Expr {
        Expr::And(Box::new(lhs), Box::new(rhs))
    }

    pub fn or(lhs: Expr, rhs: Expr) -> Expr {
        Expr::Or(Box::new(lhs), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(inner: Expr) -> Expr {
        Expr::Not(Box::new(inner))
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    /// Left-nested conjunction; `true` when empty.
    pub fn conjunction(parts: impl IntoIterator<Item = Expr>) -> Expr {
        parts
            .into_iter()
            .reduce(Expr::and)
            .unwrap_or(Expr::Lit(Value::bool(true)))
    }

    /// Number of comparison and membership leaves.
    pub fn atomic_condition_count(&self) -> usize {
        match self {
            Expr::Lit(_) | Expr::Var(_) => 0,
            Expr::Cmp { lhs, rhs, .. } | Expr::Arith { lhs, rhs, .. } => {
                usize::from(matches!(self, Expr::Cmp { .. }))
                    + lhs.atomic_condition_count()
                    + rhs.atomic_condition_count()
            }
            Expr::In { item, .. } => 1 + item.atomic_condition_count(),
            Expr::And(a, b) | Expr::Or(a, b) => {
                a.atomic_condition_count() + b.atomic_condition_count()
            }
            Expr::Not(a) => a.atomic_condition_count(),
        }
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Lit(_) | Expr::Var(_) => {}
            Expr::Cmp { lhs, rhs, .. } | Expr::Arith { lhs, rhs, .. } => {
                lhs.visit(f);
                rhs.visit(f);
            }
            Expr::In { item, .. } => item.visit(f),
            Expr::And(a, b) | Expr::Or(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Not(a) => a.visit(f),
        }
    }

    /// Variables referenced, in first-occurrence order.
    pub fn variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Var(v) = e {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
        });
        out
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Lit(_) | Expr::Var(_) => 1,
            Expr::Cmp { lhs, rhs, .. } | Expr::Arith { lhs, rhs, .. } => {
                1 + lhs.depth().max(rhs.depth())
            }
            Expr::In { item, .. } => 1 + item.depth(),
            Expr::And(a, b) | Expr::Or(a, b) => 1 + a.depth().max(b.depth()),
            Expr::Not(a) => 1 + a.depth(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Classification,
    Criterion,
}

/// The five evaluation criterion classes, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionClass {
    Precondition,
    Convention,
    Structure,
    Dose,
    Quality,
}

impl CriterionClass {
    pub const ALL: [CriterionClass; 5] = [
        CriterionClass::Precondition,
        CriterionClass::Convention,
        CriterionClass::Structure,
        CriterionClass::Dose,
        CriterionClass::Quality,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            CriterionClass::Precondition => "precondition",
            CriterionClass::Convention => "convention",
            CriterionClass::Structure => "structure",
            CriterionClass::Dose => "dose",
            CriterionClass::Quality => "quality",
        }
    }
}

impl fmt::Display for CriterionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

impl FromStr for CriterionClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CriterionClass::ALL
            .into_iter()
            .find(|c| c.keyword().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown criterion class {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Automatic,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppliesTo {
    Any,
    Class(String),
}

impl AppliesTo {
    pub fn matches(&self, risk_class: &str) -> bool {
        match self {
            AppliesTo::Any => true,
            AppliesTo::Class(c) => c == risk_class,
        }
    }
}

impl fmt::Display for AppliesTo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppliesTo::Any => f.write_str("*"),
            AppliesTo::Class(c) => f.write_str(c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricOp {
    V,
    D,
    Mean,
    MaxPoint,
    Ci,
    Hi,
    ColdSpots,
    HotSpots,
    VolumeCc,
    Delineated,
    ContourColor,
}

impl MetricOp {
    pub const ALL: [MetricOp; 11] = [
        MetricOp::V,
        MetricOp::D,
        MetricOp::Mean,
        MetricOp::MaxPoint,
        MetricOp::Ci,
        MetricOp::Hi,
        MetricOp::ColdSpots,
        MetricOp::HotSpots,
        MetricOp::VolumeCc,
        MetricOp::Delineated,
        MetricOp::ContourColor,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            MetricOp::V => "v",
            MetricOp::D => "d",
            MetricOp::Mean => "mean",
            MetricOp::MaxPoint => "max_point",
            MetricOp::Ci => "ci",
            MetricOp::Hi => "hi",
            MetricOp::ColdSpots => "cold_spots",
            MetricOp::HotSpots => "hot_spots",
            MetricOp::VolumeCc => "volume",
            MetricOp::Delineated => "delineated",
            MetricOp::ContourColor => "color",
        }
    }

    pub fn from_keyword(s: &str) -> Option<MetricOp> {
        MetricOp::ALL.into_iter().find(|op| op.keyword() == s)
    }

    pub fn takes_structure(self) -> bool {
        !matches!(
            self,
            MetricOp::Ci | MetricOp::Hi | MetricOp::ColdSpots | MetricOp::HotSpots
        )
    }
}

/// Threshold or volume parameter of a metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    /// Absolute dose, e.g. `45Gy`.
    Gy(f64),
    /// Dose as a percentage of the prescribed total dose, e.g. `80%rx`.
    PercentRx(f64),
    /// Percentage of structure volume, e.g. `50%`.
    VolumePercent(f64),
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Gy(v) => write!(f, "{v}Gy"),
            Level::PercentRx(v) => write!(f, "{v}%rx"),
            Level::VolumePercent(v) => write!(f, "{v}%"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputUnit {
    Percent,
    Cc,
    Gy,
    RxPercent,
}

impl OutputUnit {
    pub fn keyword(self) -> &'static str {
        match self {
            OutputUnit::Percent => "percent",
            OutputUnit::Cc => "cc",
            OutputUnit::Gy => "gy",
            OutputUnit::RxPercent => "rx_percent",
        }
    }

    pub fn from_keyword(s: &str) -> Option<OutputUnit> {
        [
            OutputUnit::Percent,
            OutputUnit::Cc,
            OutputUnit::Gy,
            OutputUnit::RxPercent,
        ]
        .into_iter()
        .find(|o| o.keyword() == s)
    }
}

/// A derived dosimetric quantity requested from the plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub op: MetricOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputUnit>,
}

impl MetricSpec {
    pub fn new(op: MetricOp) -> Self {
        Self {
            op,
            structure: None,
            level: None,
            output: None,
        }
    }

    pub fn on(mut self, structure: &str) -> Self {
        self.structure = Some(structure.to_string());
        self
    }

    pub fn at(mut self, level: Level) -> Self {
        self.level = Some(level);
        self
    }

    pub fn output(mut self, output: OutputUnit) -> Self {
        self.output = Some(output);
        self
    }

    /// Checks that the parameters match the operator's arity.
    pub fn check_arity(&self) -> Result<(), String> {
        let op = self.op.keyword();
        if self.op.takes_structure() != self.structure.is_some() {
            return Err(if self.structure.is_some() {
                format!("metric {op} takes no structure")
            } else {
                format!("metric {op} needs a structure")
            });
        }
        match (self.op, self.level) {
            (MetricOp::V, Some(Level::Gy(_) | Level::PercentRx(_))) => {}
            (MetricOp::V, _) => return Err("metric v needs a dose level (Gy or %rx)".into()),
            (MetricOp::D, Some(Level::VolumePercent(p))) => {
                if !(p > 0.0 && p <= 100.0) {
                    return Err("metric d volume must be in (0, 100]%".into());
                }
            }
            (MetricOp::D, _) => return Err("metric d needs a volume level (%)".into()),
            (_, Some(_)) => return Err(format!("metric {op} takes no level")),
            (_, None) => {}
        }
        let allowed: &[OutputUnit] = match self.op {
            MetricOp::V => &[OutputUnit::Percent, OutputUnit::Cc],
            MetricOp::D | MetricOp::Mean | MetricOp::MaxPoint => {
                &[OutputUnit::Gy, OutputUnit::RxPercent]
            }
            _ => &[],
        };
        match self.output {
            None if self.op == MetricOp::V => Err("metric v needs `as percent` or `as cc`".into()),
            Some(o) if !allowed.contains(&o) => Err(format!(
                "metric {op} cannot be expressed as {}",
                o.keyword()
            )),
            _ => Ok(()),
        }
    }

    pub fn result_kind(&self) -> ValueKind {
        use crate::value::Unit;
        match (self.op, self.output) {
            (MetricOp::V, Some(OutputUnit::Cc)) => ValueKind::Number(Some(Unit::Cc)),
            (MetricOp::V, _) => ValueKind::Number(Some(Unit::Percent)),
            (MetricOp::D | MetricOp::Mean | MetricOp::MaxPoint, Some(OutputUnit::RxPercent)) => {
                ValueKind::Number(Some(Unit::Percent))
            }
            (MetricOp::D | MetricOp::Mean | MetricOp::MaxPoint, _) => {
                ValueKind::Number(Some(Unit::Gy))
            }
            (MetricOp::Ci | MetricOp::Hi | MetricOp::ColdSpots | MetricOp::HotSpots, _) => {
                ValueKind::Number(None)
            }
            (MetricOp::VolumeCc, _) => ValueKind::Number(Some(Unit::Cc)),
            (MetricOp::Delineated, _) => ValueKind::Bool,
            (MetricOp::ContourColor, _) => ValueKind::Text,
        }
    }
}

/// Renders the metric in rule-language syntax (without the `metric` keyword).
impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.op.keyword())?;
        if let Some(s) = &self.structure {
            f.write_char(' ')?;
            crate::value::write_quoted(f, s)?;
        }
        if let Some(level) = &self.level {
            write!(f, " at {level}")?;
        }
        if let Some(o) = self.output {
            write!(f, " as {}", o.keyword())?;
        }
        Ok(())
    }
}

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Fact(String),
    Metric(MetricSpec),
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Fact(key) => {
                f.write_str("fact ")?;
                crate::value::write_quoted(f, key)
            }
            DataSource::Metric(m) => write!(f, "metric {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataBinding {
    pub var: String,
    pub source: DataSource,
}

impl DataBinding {
    pub fn fact(var: &str, key: &str) -> Self {
        Self {
            var: var.to_string(),
            source: DataSource::Fact(key.to_string()),
        }
    }

    pub fn metric(var: &str, spec: MetricSpec) -> Self {
        Self {
            var: var.to_string(),
            source: DataSource::Metric(spec),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Assert { key: String, value: Value },
    LoadCriteria(String),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Assert { key, value } => {
                f.write_str("assert ")?;
                crate::value::write_quoted(f, key)?;
                write!(f, " = {value}")
            }
            Action::LoadCriteria(id) => write!(f, "load_criteria {id}"),
        }
    }
}

/// A parsed medical logic module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlm {
    pub name: String,
    pub version: String,
    pub title: String,
    pub kind: RuleKind,
    pub criterion_class: Option<CriterionClass>,
    pub priority: u8,
    pub applies_to: AppliesTo,
    pub mode: Mode,
    pub refines: Option<String>,
    pub data: Vec<DataBinding>,
    pub logic: Expr,
    pub actions: Vec<Action>,
    pub message: String,
}

pub const DEFAULT_PRIORITY: u8 = 50;

impl Mlm {
    /// Skeleton with default header slots and `true` logic.
    pub fn new(name: &str, kind: RuleKind) -> Self {
        Self {
            name: name.to_string(),
            version: "1.0".to_string(),
            title: name.to_string(),
            kind,
            criterion_class: None,
            priority: DEFAULT_PRIORITY,
            applies_to: AppliesTo::Any,
            mode: Mode::Automatic,
            refines: None,
            data: Vec::new(),
            logic: Expr::Lit(Value::bool(true)),
            actions: Vec::new(),
            message: String::new(),
        }
    }

    pub fn binding(&self, var: &str) -> Option<&DataBinding> {
        self.data.iter().find(|b| b.var == var)
    }
}
