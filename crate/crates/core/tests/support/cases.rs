//! Classification scenarios around the low-risk prostate boundary.

use std::sync::Arc;

use rtqa_core::engine::Fact;
use rtqa_core::evaluation::{EvaluationSession, SessionError};
use rtqa_core::facts::load_facts;
use rtqa_core::ontology::Ontology;
use rtqa_core::rulepack::{Rulebase, Rulepack};
use rtqa_core::{Unit, Value};

pub struct Case {
    pub name: &'static str,
    /// Replacement raw facts file entries, applied over the base facts.
    pub overrides: &'static [(&'static str, &'static str)],
    pub low_risk: bool,
}

pub const CASES: [Case; 7] = [
    Case {
        name: "base",
        overrides: &[],
        low_risk: true,
    },
    Case {
        name: "psa just below 10",
        overrides: &[("lab.psa", "9.99")],
        low_risk: true,
    },
    Case {
        name: "psa 10",
        overrides: &[("lab.psa", "10")],
        low_risk: false,
    },
    Case {
        name: "gleason 7",
        overrides: &[("lab.gleason", "7")],
        low_risk: false,
    },
    Case {
        name: "T2b",
        overrides: &[("tumour.stage", "T2bN0M0")],
        low_risk: false,
    },
    Case {
        name: "N1",
        overrides: &[("tumour.stage", "T2aN1M0")],
        low_risk: false,
    },
    Case {
        name: "M1",
        overrides: &[("tumour.stage", "T2aN0M1")],
        low_risk: false,
    },
];

pub fn sample_rulebase() -> Rulebase {
    Rulepack::load_dir(&super::sample_pack_dir())
        .unwrap()
        .compile(&Ontology::builtin())
        .unwrap()
}

pub fn base_facts() -> Vec<Fact> {
    load_facts(&super::fixture("facts/low_risk_prostate.json")).unwrap()
}

pub fn facts_for(case: &Case) -> Vec<Fact> {
    let mut raw: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(super::fixture("facts/low_risk_prostate.json")).unwrap(),
    )
    .unwrap();
    for (key, value) in case.overrides {
        let entry = &mut raw[*key]["value"];
        *entry = match value.parse::<f64>() {
            Ok(n) => serde_json::json!(n),
            Err(_) => serde_json::json!(value),
        };
    }
    rtqa_core::facts::parse_facts(&raw.to_string()).unwrap()
}

/// `Ok(criteria sets loaded)` when classified low-risk, else the error.
pub fn classify(rb: &Arc<Rulebase>, facts: Vec<Fact>) -> Result<Vec<String>, SessionError> {
    let mut s = EvaluationSession::new(rb.clone(), &Ontology::builtin(), facts, None)?;
    let class = s.classify()?;
    assert_eq!(class, "low_risk_prostate");
    Ok(s.criteria_sets().to_vec())
}

/// Checks one case; the error describes the mismatch.
pub fn check(rb: &Arc<Rulebase>, case: &Case) -> Result<(), String> {
    match (classify(rb, facts_for(case)), case.low_risk) {
        (Ok(sets), true) if sets == ["low_risk_prostate"] => Ok(()),
        (Err(SessionError::NoApplicableClass), false) => Ok(()),
        (got, _) => Err(format!("{}: got {got:?}", case.name)),
    }
}

pub fn psa(v: f64) -> Value {
    Value::quantity(v, Unit::NgPerMl)
}
