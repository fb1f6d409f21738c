//! Fact extraction layer: the fact provider, the plan data manipulator,
//! fact and plan file loaders, and the file-backed patient and MLM stores.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dosimetry::{self, DosimetryError, PlanModel};
use crate::engine::{Fact, WorkingMemory};
use crate::ontology::{canonical_structure_name, parse_tnm, CodeSystem, Ontology};
use crate::rulelang::{DataSource, Level, MetricOp, MetricSpec, OutputUnit, RuleIssue};
use crate::rulepack::{is_valid_pack_id, Rulebase, Rulepack, RulepackError};
use crate::value::{is_valid_fact_key, Unit, Value};

/// What an evaluated criterion asks the fact provider for.
pub type FactRequest = DataSource;

/// Why a fact request could not be answered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "what", rename_all = "snake_case")]
pub enum Unavailable {
    MissingFact(String),
    UnknownStructure(String),
    EmptyStructure(String),
    NoPlan,
    MetricError(String),
}

impl Unavailable {
    /// The fact key or structure that was missing.
    pub fn subject(&self) -> String {
        match self {
            Unavailable::MissingFact(s)
            | Unavailable::UnknownStructure(s)
            | Unavailable::EmptyStructure(s) => s.clone(),
            Unavailable::NoPlan => "plan".into(),
            Unavailable::MetricError(s) => s.clone(),
        }
    }
}

impl fmt::Display for Unavailable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unavailable::MissingFact(k) => write!(f, "fact {k} not available"),
            Unavailable::UnknownStructure(s) => write!(f, "structure {s} not in plan"),
            Unavailable::EmptyStructure(s) => write!(f, "structure {s} has no voxels"),
            Unavailable::NoPlan => f.write_str("no plan loaded"),
            Unavailable::MetricError(e) => write!(f, "metric failed: {e}"),
        }
    }
}

impl From<DosimetryError> for Unavailable {
    fn from(e: DosimetryError) -> Self {
        match e {
            DosimetryError::UnknownStructure(s) => Unavailable::UnknownStructure(s),
            DosimetryError::EmptyStructure(s) => Unavailable::EmptyStructure(s),
            other => Unavailable::MetricError(other.to_string()),
        }
    }
}

/// Answers a fact request from working memory or, for metrics, the plan.
pub fn provide_fact(
    request: &FactRequest,
    wm: &WorkingMemory,
    plan: Option<&PlanModel>,
) -> Result<Value, Unavailable> {
    match request {
        DataSource::Fact(key) => wm
            .get(key)
            .cloned()
            .ok_or_else(|| Unavailable::MissingFact(key.clone())),
        DataSource::Metric(spec) => {
            let plan = plan.ok_or(Unavailable::NoPlan)?;
            Ok(metric_value(plan, spec)?)
        }
    }
}

fn structure_of(spec: &MetricSpec) -> Result<&str, DosimetryError> {
    spec.structure.as_deref().ok_or_else(|| {
        DosimetryError::InvalidParameter(format!("{} needs a structure", spec.op.keyword()))
    })
}

/// Data manipulator: dispatches a metric request to the dosimetry ops.
pub fn metric_value(plan: &PlanModel, spec: &MetricSpec) -> Result<Value, DosimetryError> {
    let dose = |gy: f64| match spec.output {
        Some(OutputUnit::RxPercent) => Value::quantity(100.0 * gy / plan.rx(), Unit::Percent),
        _ => Value::quantity(gy, Unit::Gy),
    };
    Ok(match spec.op {
        MetricOp::V => {
            let level = spec
                .level
                .ok_or_else(|| DosimetryError::InvalidParameter("v needs a level".into()))?;
            let output = spec.output.unwrap_or(OutputUnit::Percent);
            let v = dosimetry::v_metric(plan, structure_of(spec)?, level, output)?;
            let unit = if output == OutputUnit::Cc {
                Unit::Cc
            } else {
                Unit::Percent
            };
            Value::quantity(v, unit)
        }
        MetricOp::D => match spec.level {
            Some(Level::VolumePercent(p)) => {
                dose(dosimetry::d_metric(plan, structure_of(spec)?, p)?)
            }
            _ => {
                return Err(DosimetryError::InvalidParameter(
                    "d needs a volume level".into(),
                ))
            }
        },
        MetricOp::Mean => dose(dosimetry::mean_dose(plan, structure_of(spec)?)?),
        MetricOp::MaxPoint => dose(dosimetry::max_point_dose(plan, structure_of(spec)?)?),
        MetricOp::Ci => Value::number(dosimetry::conformity_index(plan)?),
        MetricOp::Hi => Value::number(dosimetry::homogeneity_index(plan)?),
        MetricOp::ColdSpots => Value::number(dosimetry::count_cold_spots(plan)? as f64),
        MetricOp::HotSpots => Value::number(dosimetry::count_hot_spots(plan)? as f64),
        MetricOp::VolumeCc => {
            let s = plan.structure(structure_of(spec)?)?;
            Value::quantity(
                s.voxels.len() as f64 * plan.grid.voxel_volume_cc(),
                Unit::Cc,
            )
        }
        MetricOp::Delineated => Value::bool(
            plan.structure(structure_of(spec)?)
                .is_ok_and(|s| !s.voxels.is_empty()),
        ),
        MetricOp::ContourColor => {
            let s = plan.structure(structure_of(spec)?)?;
            Value::text(crate::ontology::normalize_color(&s.color))
        }
    })
}

/// Prescription-level facts derived from a plan, keyed under `plan.`.
pub fn plan_facts(plan: &PlanModel, ontology: &Ontology) -> Vec<Fact> {
    let rx = &plan.prescription;
    let unknown = plan
        .structures
        .iter()
        .filter(|s| {
            !ontology
                .nomenclature()
                .iter()
                .any(|r| r.canonical_name == s.name)
        })
        .count();
    vec![
        Fact::input("plan.technique", Value::text(rx.technique.as_str())),
        Fact::input(
            "plan.total_dose",
            Value::quantity(rx.total_dose_gy, Unit::Gy),
        ),
        Fact::input("plan.fractions", Value::number(f64::from(rx.fractions))),
        Fact::input(
            "plan.dose_per_fraction",
            Value::quantity(rx.dose_per_fraction_gy, Unit::Gy),
        ),
        Fact::input(
            "plan.prescription_consistent",
            Value::bool(rx.is_consistent()),
        ),
        Fact::input(
            "plan.unknown_structure_count",
            Value::number(unknown as f64),
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InputError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("grid has {found} values, dims need {expected}")]
    GridShapeMismatch { expected: usize, found: usize },
}

impl InputError {
    fn schema(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        InputError::Schema {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Deserializes JSON, reporting failures with a JSON-pointer location.
pub fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, InputError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = json_pointer(e.path());
        InputError::schema(pointer, e.into_inner().to_string())
    })
}

fn read(path: &Path) -> Result<String, InputError> {
    fs::read_to_string(path).map_err(|e| InputError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Checks a plan and canonicalizes its structure names. Names the ontology
/// does not know are kept verbatim so the convention criteria can fail them.
pub fn validate_plan(mut plan: PlanModel, ontology: &Ontology) -> Result<PlanModel, InputError> {
    let grid = &plan.grid;
    let expected = grid.len();
    if grid.values.len() != expected {
        return Err(InputError::GridShapeMismatch {
            expected,
            found: grid.values.len(),
        });
    }
    if expected == 0 {
        return Err(InputError::schema("/grid/dims", "grid has no voxels"));
    }
    for (i, s) in grid.voxel_size_mm.iter().enumerate() {
        if !(s.is_finite() && *s > 0.0) {
            return Err(InputError::schema(
                format!("/grid/voxel_size_mm/{i}"),
                "voxel size must be positive",
            ));
        }
    }
    if let Some(i) = grid
        .values
        .iter()
        .position(|d| !(d.is_finite() && *d >= 0.0))
    {
        return Err(InputError::schema(
            format!("/grid/values/{i}"),
            "dose must be a finite value >= 0",
        ));
    }
    let rx = &plan.prescription;
    if rx.fractions == 0 {
        return Err(InputError::schema(
            "/prescription/fractions",
            "must be positive",
        ));
    }
    for (field, v) in [
        ("total_dose_gy", rx.total_dose_gy),
        ("dose_per_fraction_gy", rx.dose_per_fraction_gy),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(InputError::schema(
                format!("/prescription/{field}"),
                "must be positive",
            ));
        }
    }
    let mut seen = vec![false; expected];
    for (si, s) in plan.structures.iter().enumerate() {
        seen.iter_mut().for_each(|b| *b = false);
        for (vi, v) in s.voxels.iter().enumerate() {
            let pointer = format!("/structures/{si}/voxels/{vi}");
            if !grid.contains(*v) {
                return Err(InputError::schema(
                    pointer,
                    format!("voxel {v:?} outside grid {:?}", grid.dims),
                ));
            }
            let idx = grid.index(*v);
            if std::mem::replace(&mut seen[idx], true) {
                return Err(InputError::schema(
                    pointer,
                    format!("voxel {v:?} listed twice"),
                ));
            }
        }
    }
    for s in &mut plan.structures {
        if let Ok(name) = canonical_structure_name(ontology.nomenclature(), &s.name) {
            s.name = name;
        }
    }
    for (si, s) in plan.structures.iter().enumerate() {
        if plan.structures[..si].iter().any(|o| o.name == s.name) {
            return Err(InputError::schema(
                format!("/structures/{si}/name"),
                format!("structure {} appears twice", s.name),
            ));
        }
    }
    Ok(plan)
}

pub fn parse_plan(text: &str, ontology: &Ontology) -> Result<PlanModel, InputError> {
    validate_plan(from_json(text)?, ontology)
}

pub fn ingest_plan(path: &Path, ontology: &Ontology) -> Result<PlanModel, InputError> {
    parse_plan(&read(path)?, ontology)
}

/// One entry of `facts.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactEntry {
    pub value: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<Unit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<CodeSystem>,
}

pub type FactsFile = BTreeMap<String, FactEntry>;

/// Converts file entries into input facts. A TNM stage such as `T2aN0M0`
/// also yields `<key>.t`, `<key>.n` and `<key>.m` concept facts.
pub fn facts_from_entries(entries: &FactsFile) -> Result<Vec<Fact>, InputError> {
    let mut out = Vec::new();
    for (key, e) in entries {
        let at = |field: &str| format!("/{}{field}", key.replace('~', "~0").replace('/', "~1"));
        if !is_valid_fact_key(key) {
            return Err(InputError::schema(
                at(""),
                "fact keys are dotted lowercase paths",
            ));
        }
        let value = match (&e.value, e.unit, e.system) {
            (serde_json::Value::Number(n), unit, None) => Value::Number {
                value: n
                    .as_f64()
                    .ok_or_else(|| InputError::schema(at("/value"), "number out of range"))?,
                unit,
            },
            (serde_json::Value::String(s), None, None) => Value::text(s.clone()),
            (serde_json::Value::Bool(b), None, None) => Value::bool(*b),
            (serde_json::Value::String(s), None, Some(CodeSystem::Tnm))
                if s.to_ascii_uppercase().contains('N') =>
            {
                let stage = parse_tnm(s)
                    .map_err(|err| InputError::schema(at("/value"), err.to_string()))?;
                for (part, code) in [
                    ("t", format!("T{}", stage.t)),
                    ("n", format!("N{}", stage.n)),
                    ("m", format!("M{}", stage.m)),
                ] {
                    out.push(Fact::input(
                        &format!("{key}.{part}"),
                        Value::concept(CodeSystem::Tnm, &code),
                    ));
                }
                Value::text(stage.to_string())
            }
            (serde_json::Value::String(s), None, Some(system)) => Value::concept(system, s),
            (_, Some(_), _) => {
                return Err(InputError::schema(
                    at("/unit"),
                    "units only apply to numbers",
                ))
            }
            _ => {
                return Err(InputError::schema(
                    at("/value"),
                    "value must be a number, string or boolean (concepts are strings)",
                ))
            }
        };
        out.push(Fact::input(key, value));
    }
    Ok(out)
}

pub fn parse_facts(text: &str) -> Result<Vec<Fact>, InputError> {
    facts_from_entries(&from_json(text)?)
}

pub fn load_facts(path: &Path) -> Result<Vec<Fact>, InputError> {
    parse_facts(&read(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientRecord {
    pub id: String,
    pub diagnosis_confirmed: bool,
    #[serde(default)]
    pub facts: FactsFile,
    #[serde(default)]
    pub plans: Vec<String>,
    /// Recurrence sites (local, opposite side, metastatic). Kept with the
    /// record but not read by any rule.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub recurrences: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("patient {0}: primary tumour diagnosis not confirmed")]
    DiagnosisNotConfirmed(String),
    #[error("invalid identifier {0:?}")]
    InvalidId(String),
    #[error("rulepack rejected by validation")]
    ValidationGate(Vec<RuleIssue>),
    #[error("{id} {version} already stored with different content")]
    VersionConflict { id: String, version: String },
    #[error(transparent)]
    Input(#[from] InputError),
    #[error(transparent)]
    Rulepack(#[from] RulepackError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `patients/<id>.json` files.
#[derive(Debug, Clone)]
pub struct PatientStore {
    root: PathBuf,
}

impl PatientStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn path(&self, id: &str) -> Result<PathBuf, StoreError> {
        if !is_valid_pack_id(id) {
            return Err(StoreError::InvalidId(id.to_string()));
        }
        Ok(self.root.join(format!("{id}.json")))
    }

    pub fn store(&self, record: &PatientRecord) -> Result<(), StoreError> {
        if !record.diagnosis_confirmed {
            return Err(StoreError::DiagnosisNotConfirmed(record.id.clone()));
        }
        facts_from_entries(&record.facts)?;
        let path = self.path(&record.id)?;
        fs::create_dir_all(&self.root).map_err(io_err(&self.root))?;
        let text = serde_json::to_string_pretty(record).expect("record serializes") + "\n";
        fs::write(&path, text).map_err(io_err(&path))
    }

    pub fn load(&self, id: &str) -> Result<PatientRecord, StoreError> {
        let path = self.path(id)?;
        if !path.exists() {
            return Err(StoreError::NotFound(format!("patient {id}")));
        }
        Ok(from_json(&read(&path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoEntry {
    pub id: String,
    pub version: String,
    pub content_hash: String,
}

/// Directory-backed store of validated rulepacks: `<root>/<id>/<version>/`
/// plus `index.json` listing entries in the order they were stored.
#[derive(Debug)]
pub struct MlmRepository {
    root: PathBuf,
    write_lock: Mutex<()>,
}

const INDEX_FILE: &str = "index.json";

impl MlmRepository {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self {
            root,
            write_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn list(&self) -> Result<Vec<RepoEntry>, StoreError> {
        let path = self.root.join(INDEX_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        Ok(from_json(&read(&path)?)?)
    }

    /// Stores a rulepack that validates without errors. Storing identical
    /// content again is a no-op.
    pub fn store(&self, pack: &Rulepack, ontology: &Ontology) -> Result<RepoEntry, StoreError> {
        let issues = pack.lint(ontology);
        if crate::rulelang::has_errors(&issues) {
            return Err(StoreError::ValidationGate(issues));
        }
        let entry = RepoEntry {
            id: pack.manifest.id.clone(),
            version: pack.manifest.version.clone(),
            content_hash: pack.content_hash(),
        };
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut index = self.list()?;
        if let Some(existing) = index
            .iter()
            .find(|e| e.id == entry.id && e.version == entry.version)
        {
            if existing.content_hash == entry.content_hash {
                return Ok(entry);
            }
            return Err(StoreError::VersionConflict {
                id: entry.id,
                version: entry.version,
            });
        }
        let dir = self.root.join(&entry.id).join(&entry.version);
        let staging = self
            .root
            .join(&entry.id)
            .join(format!(".{}.staging", entry.version));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
        }
        pack.write_dir(&staging).map_err(io_err(&staging))?;
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        fs::rename(&staging, &dir).map_err(io_err(&dir))?;
        index.push(entry.clone());
        let index_path = self.root.join(INDEX_FILE);
        let text = serde_json::to_string_pretty(&index).expect("index serializes") + "\n";
        fs::write(&index_path, text).map_err(io_err(&index_path))?;
        Ok(entry)
    }

    /// Source form of a stored pack; the latest stored version when
    /// `version` is `None`.
    pub fn load_source(&self, id: &str, version: Option<&str>) -> Result<Rulepack, StoreError> {
        let index = self.list()?;
        let entry = index
            .iter()
            .rev()
            .find(|e| e.id == id && version.is_none_or(|v| v == e.version))
            .ok_or_else(|| {
                StoreError::NotFound(match version {
                    Some(v) => format!("rulepack {id} {v}"),
                    None => format!("rulepack {id}"),
                })
            })?;
        Ok(Rulepack::load_dir(
            &self.root.join(&entry.id).join(&entry.version),
        )?)
    }

    pub fn load(
        &self,
        id: &str,
        version: Option<&str>,
        ontology: &Ontology,
    ) -> Result<Rulebase, StoreError> {
        Ok(self.load_source(id, version)?.compile(ontology)?)
    }
}
