//! Evaluation-criteria invoker: classification, criteria loading, verdicts,
//! manual confirmation and the accreditation report.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dosimetry::PlanModel;
use crate::engine::{
    run_forward, EngineError, Fact, FiredTrace, WorkingMemory, DEFAULT_MAX_CYCLES,
};
use crate::facts::{plan_facts, provide_fact, FactRequest};
use crate::ontology::Ontology;
use crate::rulelang::{CompiledRule, CriterionClass, Mode};
use crate::rulepack::Rulebase;
use crate::value::Value;

pub const RISK_CLASS_KEY: &str = "risk.class";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    #[serde(alias = "Pass", alias = "PASS")]
    Pass,
    #[serde(alias = "Fail", alias = "FAIL")]
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    ManualPending { question: String },
    ManualConfirmed { answer: Answer, answered_by: String },
    MissingData { missing: Vec<String> },
}

impl Outcome {
    fn rank(&self) -> u8 {
        match self {
            Outcome::Fail
            | Outcome::ManualConfirmed {
                answer: Answer::Fail,
                ..
            } => 0,
            Outcome::MissingData { .. } => 1,
            Outcome::ManualPending { .. } => 2,
            Outcome::Pass
            | Outcome::ManualConfirmed {
                answer: Answer::Pass,
                ..
            } => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub var: String,
    pub request: FactRequest,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub class: CriterionClass,
    pub mode: Mode,
    pub title: String,
    pub message: String,
    pub outcome: Outcome,
    pub evidence: Vec<Evidence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Evaluates one criterion against working memory and the plan. Never
/// fails: unavailable data becomes `MissingData`.
pub fn evaluate_criterion(
    rule: &CompiledRule,
    wm: &WorkingMemory,
    plan: Option<&PlanModel>,
) -> Verdict {
    let mut verdict = Verdict {
        criterion: rule.mlm_name.clone(),
        class: rule.criterion_class.unwrap_or(CriterionClass::Quality),
        mode: rule.mode,
        title: rule.title.clone(),
        message: rule.message.clone(),
        outcome: Outcome::Pass,
        evidence: Vec::new(),
        note: None,
    };
    if rule.mode == Mode::Manual {
        verdict.outcome = Outcome::ManualPending {
            question: rule.message.clone(),
        };
        return verdict;
    }
    let mut missing = Vec::new();
    for b in &rule.data_bindings {
        match provide_fact(&b.source, wm, plan) {
            Ok(value) => verdict.evidence.push(Evidence {
                var: b.var.clone(),
                request: b.source.clone(),
                value,
            }),
            Err(u) => {
                let subject = u.subject();
                if !missing.contains(&subject) {
                    missing.push(subject);
                }
            }
        }
    }
    if !missing.is_empty() {
        missing.sort();
        verdict.outcome = Outcome::MissingData { missing };
        return verdict;
    }
    verdict.outcome = match run_on_evidence(rule, &verdict.evidence) {
        Ok(true) => Outcome::Pass,
        Ok(false) => Outcome::Fail,
        Err(detail) => {
            verdict.note = Some(detail);
            let mut missing: Vec<String> = rule
                .data_bindings
                .iter()
                .map(|b| b.source.to_string())
                .collect();
            missing.sort();
            missing.dedup();
            Outcome::MissingData { missing }
        }
    };
    verdict
}

/// Executes the criterion's compiled logic with only `evidence` bound.
pub fn run_on_evidence(rule: &CompiledRule, evidence: &[Evidence]) -> Result<bool, String> {
    let lookup = |name: &str| {
        evidence
            .iter()
            .find(|e| e.var == name)
            .map(|e| e.value.clone())
    };
    match rule.evaluate(&lookup) {
        Ok(v) => v
            .as_bool()
            .ok_or_else(|| format!("logic produced {} instead of a boolean", v.kind())),
        Err(e) => Err(format!("evaluation failed: {e}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Classifying,
    Evaluating,
    AwaitingManual,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overall {
    Accredited,
    Rejected,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTally {
    pub class: CriterionClass,
    pub pass: usize,
    pub fail: usize,
    pub manual_pending: usize,
    pub missing: usize,
}

impl ClassTally {
    pub fn total(&self) -> usize {
        self.pass + self.fail + self.manual_pending + self.missing
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulepackRef {
    pub id: String,
    pub version: String,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rulepack: RulepackRef,
    pub risk_class: String,
    pub criteria_sets: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_filter: Vec<CriterionClass>,
    pub overall: Overall,
    pub tallies: Vec<ClassTally>,
    pub verdicts: Vec<Verdict>,
    pub trace: FiredTrace,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

pub fn tally(verdicts: &[Verdict]) -> Vec<ClassTally> {
    CriterionClass::ALL
        .into_iter()
        .map(|class| {
            let mut t = ClassTally {
                class,
                pass: 0,
                fail: 0,
                manual_pending: 0,
                missing: 0,
            };
            for v in verdicts.iter().filter(|v| v.class == class) {
                match &v.outcome {
                    Outcome::Pass
                    | Outcome::ManualConfirmed {
                        answer: Answer::Pass,
                        ..
                    } => t.pass += 1,
                    Outcome::Fail
                    | Outcome::ManualConfirmed {
                        answer: Answer::Fail,
                        ..
                    } => t.fail += 1,
                    Outcome::ManualPending { .. } => t.manual_pending += 1,
                    Outcome::MissingData { .. } => t.missing += 1,
                }
            }
            t
        })
        .collect()
}

/// Rejected on any failure; Accredited when everything passed; otherwise
/// Incomplete (missing data, open questions, or nothing evaluated).
pub fn overall(tallies: &[ClassTally]) -> Overall {
    let sum = |f: fn(&ClassTally) -> usize| tallies.iter().map(f).sum::<usize>();
    if sum(|t| t.fail) > 0 {
        Overall::Rejected
    } else if sum(|t| t.missing) == 0
        && sum(|t| t.manual_pending) == 0
        && sum(ClassTally::total) > 0
    {
        Overall::Accredited
    } else {
        Overall::Incomplete
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("no classification rule asserted {RISK_CLASS_KEY}")]
    NoApplicableClass,
    #[error("ambiguous classification: {0}")]
    AmbiguousClass(String),
    #[error("facts contradict each other: {0}")]
    ContradictoryFacts(String),
    #[error("classification failed: {0}")]
    Engine(String),
    #[error("session is {found:?}, operation needs {expected}")]
    WrongStatus {
        expected: &'static str,
        found: SessionStatus,
    },
    #[error("unknown criterion {0}")]
    UnknownCriterion(String),
    #[error("criterion {0} is not awaiting a manual answer")]
    NotPending(String),
    #[error("criterion {criterion} was already answered {previous:?}")]
    ConflictingAnswer { criterion: String, previous: Answer },
    #[error("unanswered manual criteria: {}", .0.join(", "))]
    PendingManualAnswers(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualAnswer {
    pub criterion: String,
    pub answer: Answer,
    #[serde(default)]
    pub answered_by: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionSummary {
    pub name: String,
    pub class: CriterionClass,
    pub mode: Mode,
    pub title: String,
    pub message: String,
}

/// One plan evaluation. Owned by a single caller at a time.
#[derive(Debug, Clone)]
pub struct EvaluationSession {
    rulebase: Arc<Rulebase>,
    plan: Option<Arc<PlanModel>>,
    wm: WorkingMemory,
    status: SessionStatus,
    trace: FiredTrace,
    risk_class: Option<String>,
    criteria_sets: Vec<String>,
    class_filter: Vec<CriterionClass>,
    criteria: Vec<CompiledRule>,
    verdicts: BTreeMap<String, Verdict>,
    report: Option<Report>,
}

impl EvaluationSession {
    /// Loads patient facts and, when a plan is given, its prescription facts.
    pub fn new(
        rulebase: Arc<Rulebase>,
        ontology: &Ontology,
        facts: Vec<Fact>,
        plan: Option<Arc<PlanModel>>,
    ) -> Result<Self, SessionError> {
        let mut wm = WorkingMemory::new();
        let derived = plan
            .as_deref()
            .map(|p| plan_facts(p, ontology))
            .unwrap_or_default();
        for f in facts.into_iter().chain(derived) {
            wm.assert_fact(f)
                .map_err(|e| SessionError::ContradictoryFacts(e.to_string()))?;
        }
        Ok(Self {
            rulebase,
            plan,
            wm,
            status: SessionStatus::Classifying,
            trace: Vec::new(),
            risk_class: None,
            criteria_sets: Vec::new(),
            class_filter: Vec::new(),
            criteria: Vec::new(),
            verdicts: BTreeMap::new(),
            report: None,
        })
    }

    fn expect(&self, expected: &'static str, ok: &[SessionStatus]) -> Result<(), SessionError> {
        if ok.contains(&self.status) {
            Ok(())
        } else {
            Err(SessionError::WrongStatus {
                expected,
                found: self.status,
            })
        }
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn risk_class(&self) -> Option<&str> {
        self.risk_class.as_deref()
    }

    pub fn criteria_sets(&self) -> &[String] {
        &self.criteria_sets
    }

    pub fn trace(&self) -> &FiredTrace {
        &self.trace
    }

    pub fn working_memory(&self) -> &WorkingMemory {
        &self.wm
    }

    pub fn rulebase(&self) -> &Rulebase {
        &self.rulebase
    }

    pub fn report(&self) -> Option<&Report> {
        self.report.as_ref()
    }

    /// Runs the classification rules to fixpoint and reads `risk.class`.
    pub fn classify(&mut self) -> Result<String, SessionError> {
        self.expect("classifying", &[SessionStatus::Classifying])?;
        let run = run_forward(
            &self.rulebase.classification,
            self.wm.clone(),
            DEFAULT_MAX_CYCLES,
        )
        .map_err(|e| match e {
            EngineError::ContradictoryAssertion { .. } => {
                SessionError::AmbiguousClass(e.to_string())
            }
            other => SessionError::Engine(other.to_string()),
        })?;
        let class = match run.wm.get(RISK_CLASS_KEY) {
            Some(Value::Text { value }) => value.clone(),
            Some(other) => other.to_string(),
            None => return Err(SessionError::NoApplicableClass),
        };
        self.wm = run.wm;
        self.trace = run.trace;
        self.criteria_sets = run.loaded_criteria;
        self.risk_class = Some(class.clone());
        self.status = SessionStatus::Evaluating;
        Ok(class)
    }

    /// Selects criteria for the risk class, any loaded criteria set, or the
    /// wildcard, ordered by (class, name). Returns false when none apply.
    pub fn load_criteria(&mut self, class_filter: &[CriterionClass]) -> Result<bool, SessionError> {
        self.expect("evaluating", &[SessionStatus::Evaluating])?;
        let class = self.risk_class.clone().unwrap_or_default();
        let mut filter = class_filter.to_vec();
        filter.sort();
        filter.dedup();
        let mut criteria: Vec<CompiledRule> = self
            .rulebase
            .criteria
            .iter()
            .filter(|r| {
                r.applies_to.matches(&class)
                    || self.criteria_sets.iter().any(|s| r.applies_to.matches(s))
            })
            .filter(|r| filter.is_empty() || r.criterion_class.is_some_and(|c| filter.contains(&c)))
            .cloned()
            .collect();
        criteria.sort_by(|a, b| {
            (a.criterion_class, &a.mlm_name).cmp(&(b.criterion_class, &b.mlm_name))
        });
        self.class_filter = filter;
        self.criteria = criteria;
        self.verdicts.clear();
        Ok(!self.criteria.is_empty())
    }

    pub fn criteria(&self) -> Vec<CriterionSummary> {
        self.criteria
            .iter()
            .map(|r| CriterionSummary {
                name: r.mlm_name.clone(),
                class: r.criterion_class.unwrap_or(CriterionClass::Quality),
                mode: r.mode,
                title: r.title.clone(),
                message: r.message.clone(),
            })
            .collect()
    }

    /// Evaluates every loaded criterion; manual ones become pending.
    pub fn evaluate_all(&mut self) -> Result<(), SessionError> {
        self.expect("evaluating", &[SessionStatus::Evaluating])?;
        let plan = self.plan.as_deref();
        for rule in &self.criteria {
            let v = evaluate_criterion(rule, &self.wm, plan);
            self.verdicts.insert(rule.mlm_name.clone(), v);
        }
        self.status = if self.pending().is_empty() {
            SessionStatus::Evaluating
        } else {
            SessionStatus::AwaitingManual
        };
        Ok(())
    }

    pub fn pending(&self) -> Vec<String> {
        self.verdicts
            .values()
            .filter(|v| matches!(v.outcome, Outcome::ManualPending { .. }))
            .map(|v| v.criterion.clone())
            .collect()
    }

    /// Verdicts ordered by (class, name).
    pub fn verdicts(&self) -> Vec<Verdict> {
        let mut v: Vec<Verdict> = self.verdicts.values().cloned().collect();
        v.sort_by(|a, b| (a.class, &a.criterion).cmp(&(b.class, &b.criterion)));
        v
    }

    pub fn verdict(&self, criterion: &str) -> Option<&Verdict> {
        self.verdicts.get(criterion)
    }

    pub fn answer_manual(&mut self, answer: &ManualAnswer) -> Result<Verdict, SessionError> {
        self.expect(
            "evaluating",
            &[SessionStatus::Evaluating, SessionStatus::AwaitingManual],
        )?;
        let v = self
            .verdicts
            .get_mut(&answer.criterion)
            .ok_or_else(|| SessionError::UnknownCriterion(answer.criterion.clone()))?;
        match &v.outcome {
            Outcome::ManualPending { .. } => {
                v.outcome = Outcome::ManualConfirmed {
                    answer: answer.answer,
                    answered_by: answer.answered_by.clone(),
                };
            }
            Outcome::ManualConfirmed {
                answer: previous, ..
            } => {
                if *previous != answer.answer {
                    return Err(SessionError::ConflictingAnswer {
                        criterion: answer.criterion.clone(),
                        previous: *previous,
                    });
                }
            }
            _ => return Err(SessionError::NotPending(answer.criterion.clone())),
        }
        let out = v.clone();
        if self.pending().is_empty() {
            self.status = SessionStatus::Evaluating;
        }
        Ok(out)
    }

    /// Builds the report and freezes the session. Finalizing again returns
    /// the same report.
    pub fn finalize(&mut self) -> Result<Report, SessionError> {
        if let Some(r) = &self.report {
            return Ok(r.clone());
        }
        self.expect(
            "evaluating",
            &[SessionStatus::Evaluating, SessionStatus::AwaitingManual],
        )?;
        let pending = self.pending();
        if !pending.is_empty() {
            return Err(SessionError::PendingManualAnswers(pending));
        }
        let verdicts = self.verdicts();
        let tallies = tally(&verdicts);
        let report = Report {
            rulepack: RulepackRef {
                id: self.rulebase.id.clone(),
                version: self.rulebase.version.clone(),
                content_hash: self.rulebase.content_hash.clone(),
            },
            risk_class: self.risk_class.clone().unwrap_or_default(),
            criteria_sets: self.criteria_sets.clone(),
            class_filter: self.class_filter.clone(),
            overall: overall(&tallies),
            tallies,
            verdicts,
            trace: self.trace.clone(),
        };
        self.report = Some(report.clone());
        self.status = SessionStatus::Finalized;
        Ok(report)
    }
}

/// Orders verdicts for display: failures first, then missing data, open
/// questions and passes.
pub fn by_severity(verdicts: &mut [Verdict]) {
    verdicts.sort_by(|a, b| {
        (a.outcome.rank(), a.class, &a.criterion).cmp(&(b.outcome.rank(), b.class, &b.criterion))
    });
}

/// Full non-interactive run: classify, load, evaluate, apply answers,
/// finalize.
pub fn evaluate_batch(
    rulebase: Arc<Rulebase>,
    ontology: &Ontology,
    facts: Vec<Fact>,
    plan: Option<Arc<PlanModel>>,
    class_filter: &[CriterionClass],
    answers: &[ManualAnswer],
) -> Result<(EvaluationSession, Report), SessionError> {
    let mut s = EvaluationSession::new(rulebase, ontology, facts, plan)?;
    s.classify()?;
    s.load_criteria(class_filter)?;
    s.evaluate_all()?;
    for a in answers {
        // Answers for criteria outside the filter are ignored.
        if s.verdict(&a.criterion).is_some() {
            s.answer_manual(a)?;
        }
    }
    let report = s.finalize()?;
    Ok((s, report))
}
