//! Forward-chaining production system: working memory, pattern matcher,
//! agenda and execution engine, plus a depth-first backward goal query.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rulelang::{Action, CompiledRule, DataSource};
use crate::value::Value;

pub const DEFAULT_MAX_CYCLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", content = "rule", rename_all = "snake_case")]
pub enum Provenance {
    Input,
    Derived(String),
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub key: String,
    pub value: Value,
    pub provenance: Provenance,
}

impl Fact {
    pub fn input(key: &str, value: Value) -> Self {
        Self {
            key: key.to_string(),
            value,
            provenance: Provenance::Input,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("contradictory assertion for {key}: holds {existing}, got {attempted}")]
    ContradictoryAssertion {
        key: String,
        existing: Value,
        attempted: Value,
    },
    #[error("no fixpoint after {0} cycles")]
    CycleLimitExceeded(usize),
    #[error("goal cycle through {}", .0.join(" -> "))]
    GoalCycle(Vec<String>),
    #[error("duplicate rule name {0}")]
    DuplicateRule(String),
}

/// Single-valued fact store with an append-only assertion log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkingMemory {
    facts: BTreeMap<String, Fact>,
    log: Vec<Fact>,
}

impl WorkingMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `Ok(true)` when the fact is new, `Ok(false)` when the same value
    /// was already present.
    pub fn assert_fact(&mut self, fact: Fact) -> Result<bool, EngineError> {
        if let Some(existing) = self.facts.get(&fact.key) {
            if existing.value == fact.value {
                return Ok(false);
            }
            return Err(EngineError::ContradictoryAssertion {
                key: fact.key,
                existing: existing.value.clone(),
                attempted: fact.value,
            });
        }
        self.log.push(fact.clone());
        self.facts.insert(fact.key.clone(), fact);
        Ok(true)
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.facts.get(key).map(|f| &f.value)
    }

    pub fn fact(&self, key: &str) -> Option<&Fact> {
        self.facts.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.facts.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn facts(&self) -> impl Iterator<Item = &Fact> {
        self.facts.values()
    }

    pub fn log(&self) -> &[Fact] {
        &self.log
    }

    pub fn replay(log: &[Fact]) -> Result<Self, EngineError> {
        let mut wm = Self::new();
        for f in log {
            wm.assert_fact(f.clone())?;
        }
        Ok(wm)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activation {
    pub rule: String,
    pub priority: u8,
    pub specificity: usize,
    pub refines: Option<String>,
}

impl Activation {
    fn of(rule: &CompiledRule) -> Self {
        Self {
            rule: rule.mlm_name.clone(),
            priority: rule.priority,
            specificity: rule.specificity,
            refines: rule.refines.clone(),
        }
    }

    /// Agenda order: priority desc, specificity desc, name asc.
    pub fn agenda_cmp(&self, other: &Self) -> Ordering {
        other
            .priority
            .cmp(&self.priority)
            .then(other.specificity.cmp(&self.specificity))
            .then_with(|| self.rule.cmp(&other.rule))
    }
}

/// Truth of a rule's logic against working memory. `None` means unknown: a
/// binding is unresolved, a binding needs a plan metric, or evaluation failed.
pub fn rule_truth(rule: &CompiledRule, wm: &WorkingMemory) -> Option<bool> {
    let mut vars = BTreeMap::new();
    for b in &rule.data_bindings {
        match &b.source {
            DataSource::Fact(key) => {
                vars.insert(b.var.as_str(), wm.get(key)?.clone());
            }
            DataSource::Metric(_) => return None,
        }
    }
    rule.evaluate(&|name| vars.get(name).cloned())
        .ok()
        .and_then(|v| v.as_bool())
}

/// Pattern matcher: one activation per unfired rule whose logic is true.
pub fn match_rules(
    rules: &[CompiledRule],
    wm: &WorkingMemory,
    fired: &BTreeSet<String>,
) -> Vec<Activation> {
    rules
        .iter()
        .filter(|r| !fired.contains(&r.mlm_name))
        .filter(|r| rule_truth(r, wm) == Some(true))
        .map(Activation::of)
        .collect()
}

/// Orders activations into an agenda and drops any parent whose refining
/// rule is also activated.
pub fn resolve_conflicts(activations: Vec<Activation>) -> Vec<Activation> {
    agenda(activations, &BTreeSet::new())
}

fn agenda(mut activations: Vec<Activation>, fired: &BTreeSet<String>) -> Vec<Activation> {
    let suppressed: BTreeSet<String> = activations
        .iter()
        .filter_map(|a| a.refines.clone())
        .chain(fired.iter().cloned())
        .collect();
    activations.retain(|a| !suppressed.contains(&a.rule));
    activations.sort_by(Activation::agenda_cmp);
    activations
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Firing {
    pub cycle: usize,
    pub rule: String,
    pub asserted: Vec<(String, Value)>,
    pub criteria_loaded: Vec<String>,
}

pub type FiredTrace = Vec<Firing>;

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRun {
    pub wm: WorkingMemory,
    pub trace: FiredTrace,
    pub loaded_criteria: Vec<String>,
}

fn check_unique(rules: &[CompiledRule]) -> Result<(), EngineError> {
    let mut seen = BTreeSet::new();
    for r in rules {
        if !seen.insert(r.mlm_name.as_str()) {
            return Err(EngineError::DuplicateRule(r.mlm_name.clone()));
        }
    }
    Ok(())
}

/// Match, resolve, fire the top activation; repeat until the agenda is empty.
pub fn run_forward(
    rules: &[CompiledRule],
    wm: WorkingMemory,
    max_cycles: usize,
) -> Result<ForwardRun, EngineError> {
    check_unique(rules)?;
    let mut wm = wm;
    let mut fired = BTreeSet::new();
    // Refining rules that have fired keep suppressing their parents.
    let mut fired_parents = BTreeSet::new();
    let mut trace = Vec::new();
    let mut loaded = Vec::new();

    for cycle in 0..max_cycles.max(1) {
        let acts = match_rules(rules, &wm, &fired);
        let Some(top) = agenda(acts, &fired_parents).into_iter().next() else {
            return Ok(ForwardRun {
                wm,
                trace,
                loaded_criteria: loaded,
            });
        };
        let rule = rules
            .iter()
            .find(|r| r.mlm_name == top.rule)
            .expect("activation names a rule");
        let mut firing = Firing {
            cycle,
            rule: top.rule.clone(),
            asserted: Vec::new(),
            criteria_loaded: Vec::new(),
        };
        for action in &rule.actions {
            match action {
                Action::Assert { key, value } => {
                    wm.assert_fact(Fact {
                        key: key.clone(),
                        value: value.clone(),
                        provenance: Provenance::Derived(top.rule.clone()),
                    })?;
                    firing.asserted.push((key.clone(), value.clone()));
                }
                Action::LoadCriteria(id) => {
                    if !loaded.contains(id) {
                        loaded.push(id.clone());
                    }
                    firing.criteria_loaded.push(id.clone());
                }
            }
        }
        fired.insert(top.rule.clone());
        if let Some(parent) = &top.refines {
            fired_parents.insert(parent.clone());
        }
        trace.push(firing);
    }
    Err(EngineError::CycleLimitExceeded(max_cycles))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalStatus {
    Proved,
    Disproved,
    NeedFacts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalResult {
    pub status: GoalStatus,
    pub needed: Vec<String>,
    pub proof: Vec<String>,
}

enum Attempt {
    Fired,
    False,
    Need(BTreeSet<String>),
}

struct Backward<'a> {
    rules: Vec<&'a CompiledRule>,
    wm: WorkingMemory,
    proof: Vec<String>,
    tried: BTreeSet<String>,
    path: Vec<String>,
}

impl<'a> Backward<'a> {
    fn producers(&self, key: &str) -> Vec<&'a CompiledRule> {
        self.rules
            .iter()
            .copied()
            .filter(|r| {
                r.actions
                    .iter()
                    .any(|a| matches!(a, Action::Assert { key: k, .. } if k == key))
            })
            .collect()
    }

    /// Makes `key` present in the hypothetical memory, or reports the input
    /// facts that would be needed.
    fn establish(&mut self, key: &str) -> Result<BTreeSet<String>, EngineError> {
        if self.wm.contains(key) {
            return Ok(BTreeSet::new());
        }
        let producers = self.producers(key);
        if producers.is_empty() {
            return Ok(BTreeSet::from([key.to_string()]));
        }
        if self.path.iter().any(|k| k == key) {
            let mut cycle = self.path.clone();
            cycle.push(key.to_string());
            return Err(EngineError::GoalCycle(cycle));
        }
        self.path.push(key.to_string());
        let mut needed = BTreeSet::new();
        for rule in producers {
            match self.attempt(rule)? {
                Attempt::Fired if self.wm.contains(key) => {
                    needed.clear();
                    break;
                }
                Attempt::Need(n) => needed.extend(n),
                _ => {}
            }
        }
        self.path.pop();
        Ok(needed)
    }

    fn attempt(&mut self, rule: &CompiledRule) -> Result<Attempt, EngineError> {
        if self.tried.contains(&rule.mlm_name) {
            return Ok(Attempt::False);
        }
        let mut needed = BTreeSet::new();
        for b in &rule.data_bindings {
            match &b.source {
                DataSource::Fact(key) => needed.extend(self.establish(key)?),
                DataSource::Metric(_) => return Ok(Attempt::False),
            }
        }
        if !needed.is_empty() {
            return Ok(Attempt::Need(needed));
        }
        self.tried.insert(rule.mlm_name.clone());
        if rule_truth(rule, &self.wm) != Some(true) {
            return Ok(Attempt::False);
        }
        let mut hyp = self.wm.clone();
        for action in &rule.actions {
            if let Action::Assert { key, value } = action {
                let fact = Fact {
                    key: key.clone(),
                    value: value.clone(),
                    provenance: Provenance::Derived(rule.mlm_name.clone()),
                };
                if hyp.assert_fact(fact).is_err() {
                    return Ok(Attempt::False);
                }
            }
        }
        self.wm = hyp;
        self.proof.push(rule.mlm_name.clone());
        Ok(Attempt::Fired)
    }
}

/// Goal-driven query: can `key = value` be derived from `wm` with `rules`?
pub fn query_backward(
    rules: &[CompiledRule],
    wm: &WorkingMemory,
    key: &str,
    value: &Value,
) -> Result<GoalResult, EngineError> {
    check_unique(rules)?;
    let result = |status, needed: BTreeSet<String>, proof| GoalResult {
        status,
        needed: needed.into_iter().collect(),
        proof,
    };
    if let Some(v) = wm.get(key) {
        let status = if v == value {
            GoalStatus::Proved
        } else {
            GoalStatus::Disproved
        };
        return Ok(result(status, BTreeSet::new(), Vec::new()));
    }
    let mut rules: Vec<&CompiledRule> = rules.iter().collect();
    rules.sort_by(|a, b| Activation::of(a).agenda_cmp(&Activation::of(b)));
    let mut search = Backward {
        rules,
        wm: wm.clone(),
        proof: Vec::new(),
        tried: BTreeSet::new(),
        path: vec![key.to_string()],
    };
    let goal_producers: Vec<&CompiledRule> = search
        .producers(key)
        .into_iter()
        .filter(|r| {
            r.actions
                .iter()
                .any(|a| matches!(a, Action::Assert { key: k, value: v } if k == key && v == value))
        })
        .collect();
    let mut needed = BTreeSet::new();
    for rule in goal_producers {
        match search.attempt(rule)? {
            Attempt::Fired if search.wm.get(key) == Some(value) => {
                return Ok(result(GoalStatus::Proved, BTreeSet::new(), search.proof));
            }
            Attempt::Need(n) => needed.extend(n),
            _ => {}
        }
    }
    let status = if needed.is_empty() {
        GoalStatus::Disproved
    } else {
        GoalStatus::NeedFacts
    };
    Ok(result(status, needed, Vec::new()))
}
