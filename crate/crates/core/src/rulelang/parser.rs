//! Recursive-descent parser for MLM files.
//!
//! ```text
//! mlm: name <id>; version <string>; title <string>;
//!      kind classification | criterion <class>;
//!      [priority <int>;] [applies_to <id|*>;] [mode automatic|manual;] [refines <id>;]
//! data: <var> := fact "<dotted.key>" | metric <metric-spec> ; ...
//! logic: <expression> ;
//! [action: assert "<dotted.key>" = <literal> ; | load_criteria <id> ; ...]
//! [message: <string> ;]
//! end.
//! ```

use crate::ontology::CodeSystem;
use crate::value::{is_valid_fact_key, Value};

use super::ast::*;
use super::lexer::{tokenize, NumSuffix, Tok, Token};
use super::{IssueKind, Location, RuleIssue};

pub(crate) const RESERVED: &[&str] = &["and", "or", "not", "in", "true", "false"];

pub(crate) struct Parser {
    toks: Vec<Token>,
    pos: usize,
    current_name: String,
}

type PResult<T> = Result<T, RuleIssue>;

impl Parser {
    pub(crate) fn new(src: &str, origin: Location) -> PResult<Self> {
        let toks = tokenize(src, origin)
            .map_err(|e| RuleIssue::error(IssueKind::Syntax, "", e.msg).at(e.loc))?;
        Ok(Self {
            toks,
            pos: 0,
            current_name: String::new(),
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_n(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn loc(&self) -> Location {
        self.toks[self.pos].loc
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(RuleIssue::error(IssueKind::Syntax, &self.current_name, msg).at(self.loc()))
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        self.syntax(format!(
            "expected {wanted}, found {}",
            self.peek().describe()
        ))
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, wanted: &str) -> PResult<()> {
        if self.eat(&tok) {
            Ok(())
        } else {
            self.unexpected(wanted)
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.advance();
                Ok(s)
            }
            _ => self.unexpected(what),
        }
    }

    fn string(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.advance();
                Ok(s)
            }
            _ => self.unexpected(what),
        }
    }

    /// `<name>:` section header.
    fn is_section(&self, name: &str) -> bool {
        self.is_kw(name) && *self.peek_n(1) == Tok::Colon
    }

    fn section(&mut self, name: &str) -> PResult<()> {
        if self.is_section(name) {
            self.advance();
            self.advance();
            Ok(())
        } else {
            self.unexpected(&format!("`{name}:` section"))
        }
    }

    pub(crate) fn skip_section_header(&mut self) -> PResult<()> {
        if matches!(self.peek(), Tok::Ident(_)) && *self.peek_n(1) == Tok::Colon {
            self.advance();
            self.advance();
            Ok(())
        } else {
            self.unexpected("section header")
        }
    }

    pub(crate) fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    pub(crate) fn expect_eof(&self) -> PResult<()> {
        if self.at_eof() {
            Ok(())
        } else {
            self.syntax(format!(
                "unexpected trailing content: {}",
                self.peek().describe()
            ))
        }
    }

    pub(crate) fn mlm(&mut self) -> PResult<Mlm> {
        self.current_name.clear();
        self.section("mlm")?;
        let header = self.header_slots(false)?;
        self.section("data")?;
        let data = self.bindings(|p| p.is_section("logic"))?;
        self.section("logic")?;
        let logic = self.expr()?;
        self.expect(Tok::Semi, "`;` after logic")?;
        let mut actions = Vec::new();
        if self.is_section("action") {
            self.advance();
            self.advance();
            while !self.is_section("message") && !self.is_kw("end") {
                actions.push(self.action()?);
                self.expect(Tok::Semi, "`;` after action")?;
            }
        }
        let mut message = String::new();
        if self.is_section("message") {
            self.advance();
            self.advance();
            message = self.string("message string")?;
            self.expect(Tok::Semi, "`;` after message")?;
        }
        self.expect_kw("end")?;
        self.expect(Tok::Dot, "`.` after `end`")?;

        let Header {
            name,
            version,
            title,
            kind,
            class,
            priority,
            applies_to,
            mode,
            refines,
        } = header;
        Ok(Mlm {
            name,
            version: version.unwrap_or_default(),
            title: title.unwrap_or_default(),
            kind,
            criterion_class: class,
            priority: priority.unwrap_or(DEFAULT_PRIORITY),
            applies_to: applies_to.unwrap_or(AppliesTo::Any),
            mode: mode.unwrap_or(Mode::Automatic),
            refines,
            data,
            logic,
            actions,
            message,
        })
    }

    /// Header slots up to the next section. Decision tables reuse this with
    /// `table_header` set, where version and title are optional.
    pub(crate) fn header_slots(&mut self, table_header: bool) -> PResult<Header> {
        let mut name = None;
        let mut version = None;
        let mut title = None;
        let mut kind = None;
        let mut priority = None;
        let mut applies_to = None;
        let mut mode = None;
        let mut refines = None;
        let start = self.loc();
        while !self.is_section("data") && !self.at_eof() {
            let slot_loc = self.loc();
            let slot = self.ident("header slot")?;
            let dup = |p: &Self| {
                Err(RuleIssue::error(
                    IssueKind::Syntax,
                    &p.current_name,
                    format!("duplicate `{slot}` slot"),
                )
                .at(slot_loc))
            };
            match slot.as_str() {
                "name" => {
                    if name.is_some() {
                        return dup(self);
                    }
                    let n = self.ident("rule name")?;
                    self.current_name = n.clone();
                    name = Some(n);
                }
                "version" => {
                    if version.is_some() {
                        return dup(self);
                    }
                    version = Some(self.string("version string")?);
                }
                "title" => {
                    if title.is_some() {
                        return dup(self);
                    }
                    title = Some(self.string("title string")?);
                }
                "kind" => {
                    if kind.is_some() {
                        return dup(self);
                    }
                    let k = self.ident("`classification` or `criterion`")?;
                    kind = Some(match k.as_str() {
                        "classification" => (RuleKind::Classification, None),
                        "criterion" => {
                            let c = self.ident("criterion class")?;
                            match c.parse::<CriterionClass>() {
                                Ok(class) => (RuleKind::Criterion, Some(class)),
                                Err(e) => return self.syntax(e),
                            }
                        }
                        _ => return self.syntax(format!("unknown rule kind `{k}`")),
                    });
                }
                "priority" => {
                    if priority.is_some() {
                        return dup(self);
                    }
                    match self.advance() {
                        Tok::Num(v, None) if v.fract() == 0.0 => {
                            priority = Some(v.clamp(0.0, 100.0) as u8);
                        }
                        _ => return self.syntax("priority must be an integer"),
                    }
                }
                "applies_to" => {
                    if applies_to.is_some() {
                        return dup(self);
                    }
                    applies_to = Some(if self.eat(&Tok::Star) {
                        AppliesTo::Any
                    } else {
                        AppliesTo::Class(self.ident("risk class or `*`")?)
                    });
                }
                "mode" => {
                    if mode.is_some() {
                        return dup(self);
                    }
                    mode = Some(match self.ident("`automatic` or `manual`")?.as_str() {
                        "automatic" => Mode::Automatic,
                        "manual" => Mode::Manual,
                        other => return self.syntax(format!("unknown mode `{other}`")),
                    });
                }
                "refines" => {
                    if refines.is_some() {
                        return dup(self);
                    }
                    refines = Some(self.ident("refined rule name")?);
                }
                other => {
                    return Err(RuleIssue::error(
                        IssueKind::Syntax,
                        &self.current_name,
                        format!("unknown header slot `{other}`"),
                    )
                    .at(slot_loc))
                }
            }
            self.expect(Tok::Semi, "`;` after header slot")?;
        }
        let missing = |slot: &str| {
            Err(RuleIssue::error(
                IssueKind::Syntax,
                &self.current_name,
                format!("missing `{slot}` slot"),
            )
            .at(start))
        };
        let Some(name) = name else {
            return missing("name");
        };
        let Some((kind, class)) = kind else {
            return missing("kind");
        };
        if !table_header {
            if version.is_none() {
                return missing("version");
            }
            if title.is_none() {
                return missing("title");
            }
        }
        Ok(Header {
            name,
            version,
            title,
            kind,
            class,
            priority,
            applies_to,
            mode,
            refines,
        })
    }

    pub(crate) fn bindings(&mut self, end: impl Fn(&Self) -> bool) -> PResult<Vec<DataBinding>> {
        let mut out = Vec::new();
        while !end(self) && !self.at_eof() {
            let var_loc = self.loc();
            let var = self.ident("variable name")?;
            if RESERVED.contains(&var.as_str()) {
                return Err(RuleIssue::error(
                    IssueKind::Syntax,
                    &self.current_name,
                    format!("`{var}` is reserved and cannot name a variable"),
                )
                .at(var_loc));
            }
            self.expect(Tok::Assign, "`:=`")?;
            let source = if self.eat_kw("fact") {
                let key_loc = self.loc();
                let key = self.string("fact key string")?;
                if !is_valid_fact_key(&key) {
                    return Err(RuleIssue::error(
                        IssueKind::Syntax,
                        &self.current_name,
                        format!("fact key {key:?} must be a dotted lowercase path"),
                    )
                    .at(key_loc));
                }
                DataSource::Fact(key)
            } else if self.eat_kw("metric") {
                DataSource::Metric(self.metric_spec()?)
            } else {
                return self.unexpected("`fact` or `metric`");
            };
            self.expect(Tok::Semi, "`;` after binding")?;
            out.push(DataBinding { var, source });
        }
        Ok(out)
    }

    fn metric_spec(&mut self) -> PResult<MetricSpec> {
        let loc = self.loc();
        let kw = self.ident("metric name")?;
        let Some(op) = MetricOp::from_keyword(&kw) else {
            return self.syntax(format!("unknown metric `{kw}`"));
        };
        let mut spec = MetricSpec::new(op);
        if let Tok::Str(s) = self.peek().clone() {
            self.advance();
            spec.structure = Some(s);
        }
        if self.eat_kw("at") {
            spec.level = Some(match self.advance() {
                Tok::Num(v, Some(NumSuffix::Unit(crate::value::Unit::Gy))) => Level::Gy(v),
                Tok::Num(v, Some(NumSuffix::PercentRx)) => Level::PercentRx(v),
                Tok::Num(v, Some(NumSuffix::Unit(crate::value::Unit::Percent))) => {
                    Level::VolumePercent(v)
                }
                _ => return self.syntax("metric level must be <n>Gy, <n>%rx or <n>%"),
            });
        }
        if self.eat_kw("as") {
            let o = self.ident("output unit")?;
            match OutputUnit::from_keyword(&o) {
                Some(u) => spec.output = Some(u),
                None => return self.syntax(format!("unknown output unit `{o}`")),
            }
        }
        spec.check_arity()
            .map_err(|msg| RuleIssue::error(IssueKind::Syntax, &self.current_name, msg).at(loc))?;
        Ok(spec)
    }

    pub(crate) fn action(&mut self) -> PResult<Action> {
        if self.eat_kw("assert") {
            let key_loc = self.loc();
            let key = self.string("fact key string")?;
            if !is_valid_fact_key(&key) {
                return Err(RuleIssue::error(
                    IssueKind::Syntax,
                    &self.current_name,
                    format!("fact key {key:?} must be a dotted lowercase path"),
                )
                .at(key_loc));
            }
            self.expect(Tok::Eq, "`=`")?;
            let value = self.literal()?;
            Ok(Action::Assert { key, value })
        } else if self.eat_kw("load_criteria") {
            Ok(Action::LoadCriteria(self.ident("criteria set id")?))
        } else {
            self.unexpected("`assert` or `load_criteria`")
        }
    }

    // ----------------------------------------------------------------------
    // Expressions
    // ----------------------------------------------------------------------

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.eat_kw("or") {
            let rhs = self.and_expr()?;
            lhs = Expr::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.not_expr()?;
        while self.eat_kw("and") {
            let rhs = self.not_expr()?;
            lhs = Expr::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.eat_kw("not") {
            Ok(Expr::not(self.not_expr()?))
        } else {
            self.cmp_expr()
        }
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let lhs = self.add_expr()?;
        let op = match self.peek() {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            Tok::Ident(s) if s == "in" => {
                self.advance();
                self.expect(Tok::LBracket, "`[`")?;
                let mut list = Vec::new();
                if !self.eat(&Tok::RBracket) {
                    loop {
                        list.push(self.literal()?);
                        if self.eat(&Tok::RBracket) {
                            break;
                        }
                        self.expect(Tok::Comma, "`,` or `]`")?;
                    }
                }
                return Ok(Expr::In {
                    item: Box::new(lhs),
                    list,
                });
            }
            _ => return Ok(lhs),
        };
        self.advance();
        let rhs = self.add_expr()?;
        if matches!(
            self.peek(),
            Tok::Eq | Tok::Ne | Tok::Lt | Tok::Le | Tok::Gt | Tok::Ge
        ) {
            return self.syntax("comparisons do not chain; use parentheses");
        }
        Ok(Expr::cmp(op, lhs, rhs))
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.mul_expr()?;
            lhs = Expr::arith(op, lhs, rhs);
        }
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.primary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.primary()?;
            lhs = Expr::arith(op, lhs, rhs);
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) if !is_concept_prefix(self, &name) => {
                if RESERVED.contains(&name.as_str()) && name != "true" && name != "false" {
                    return self.unexpected("expression");
                }
                if name == "true" || name == "false" {
                    return Ok(Expr::Lit(self.literal()?));
                }
                self.advance();
                Ok(Expr::Var(name))
            }
            Tok::Ident(_) | Tok::Num(..) | Tok::Str(_) | Tok::Minus => {
                Ok(Expr::Lit(self.literal()?))
            }
            _ => self.unexpected("expression"),
        }
    }

    pub(crate) fn literal(&mut self) -> PResult<Value> {
        let loc = self.loc();
        match self.advance() {
            Tok::Minus => match self.advance() {
                Tok::Num(v, suffix) => self.number_literal(-v, suffix, loc),
                _ => self.syntax("`-` must be followed by a number"),
            },
            Tok::Num(v, suffix) => self.number_literal(v, suffix, loc),
            Tok::Str(s) => Ok(Value::text(s)),
            Tok::Ident(s) if s == "true" => Ok(Value::bool(true)),
            Tok::Ident(s) if s == "false" => Ok(Value::bool(false)),
            Tok::Ident(s) => {
                let Ok(system) = s.parse::<CodeSystem>() else {
                    return Err(RuleIssue::error(
                        IssueKind::Syntax,
                        &self.current_name,
                        format!("expected literal, found `{s}`"),
                    )
                    .at(loc));
                };
                self.expect(Tok::Colon, "`:` after code system")?;
                let code = self.string("concept code string")?;
                if code.trim().is_empty() {
                    return self.syntax("empty concept code");
                }
                Ok(Value::concept(system, &code))
            }
            other => Err(RuleIssue::error(
                IssueKind::Syntax,
                &self.current_name,
                format!("expected literal, found {}", other.describe()),
            )
            .at(loc)),
        }
    }

    fn number_literal(&self, v: f64, suffix: Option<NumSuffix>, loc: Location) -> PResult<Value> {
        match suffix {
            None => Ok(Value::number(v)),
            Some(NumSuffix::Unit(u)) => Ok(Value::quantity(v, u)),
            Some(NumSuffix::PercentRx) => Err(RuleIssue::error(
                IssueKind::Syntax,
                &self.current_name,
                "`%rx` is only valid as a metric level",
            )
            .at(loc)),
        }
    }
}

fn is_concept_prefix(p: &Parser, name: &str) -> bool {
    name.parse::<CodeSystem>().is_ok() && *p.peek_n(1) == Tok::Colon
}

pub(crate) struct Header {
    pub name: String,
    pub version: Option<String>,
    pub title: Option<String>,
    pub kind: RuleKind,
    pub class: Option<CriterionClass>,
    pub priority: Option<u8>,
    pub applies_to: Option<AppliesTo>,
    pub mode: Option<Mode>,
    pub refines: Option<String>,
}

/// Parses one expression from `src`, requiring all input to be consumed.
pub fn parse_expr(src: &str) -> Result<Expr, RuleIssue> {
    parse_expr_at(src, Location { line: 1, column: 1 })
}

pub(crate) fn parse_expr_at(src: &str, origin: Location) -> Result<Expr, RuleIssue> {
    let mut p = Parser::new(src, origin)?;
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

pub(crate) fn parse_action_at(src: &str, origin: Location) -> Result<Action, RuleIssue> {
    let mut p = Parser::new(src, origin)?;
    let a = p.action()?;
    p.eat(&Tok::Semi);
    p.expect_eof()?;
    Ok(a)
}
