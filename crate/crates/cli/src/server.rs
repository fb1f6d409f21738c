//! HTTP/JSON service over evaluation sessions.
//!
//! Sessions live in memory. With a snapshot directory each session's inputs
//! and answers are written after every change and replayed on startup.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rtqa_core::dosimetry::PlanModel;
use rtqa_core::evaluation::{
    tally, CriterionSummary, EvaluationSession, ManualAnswer, RulepackRef, SessionError,
    SessionStatus,
};
use rtqa_core::facts::{facts_from_entries, from_json, validate_plan, FactsFile, InputError};
use rtqa_core::ontology::Ontology;
use rtqa_core::rulelang::CriterionClass;
use rtqa_core::rulepack::Rulebase;

/// Everything needed to rebuild a session from scratch.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub facts: FactsFile,
    pub plan: PlanModel,
    pub rulepack: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_filter: Vec<CriterionClass>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    id: String,
    inputs: CreateSession,
    answers: Vec<ManualAnswer>,
    finalized: bool,
}

struct Entry {
    id: String,
    inputs: CreateSession,
    answers: Vec<ManualAnswer>,
    session: EvaluationSession,
}

pub struct AppState {
    ontology: Arc<Ontology>,
    /// Rulebases by id, in load order; the last one is the default version.
    rulepacks: BTreeMap<String, Vec<Arc<Rulebase>>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    snapshot_dir: Option<PathBuf>,
    nonce: AtomicU64,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, detail: impl ToString) -> Self {
        Self {
            status,
            body: serde_json::json!({ "error": error, "detail": detail.to_string() }),
        }
    }

    fn not_found(what: impl ToString) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", what)
    }

    fn input(e: InputError, prefix: &str) -> Self {
        match e {
            InputError::Schema { pointer, message } => Self {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: serde_json::json!({
                    "error": "SchemaError",
                    "pointer": format!("{prefix}{pointer}"),
                    "detail": message,
                }),
            },
            InputError::GridShapeMismatch { .. } => Self {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: serde_json::json!({
                    "error": "GridShapeMismatch",
                    "pointer": format!("{prefix}/grid/values"),
                    "detail": e.to_string(),
                }),
            },
            InputError::Io { .. } => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Io", e),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, kind) = match &e {
            SessionError::NoApplicableClass => {
                (StatusCode::UNPROCESSABLE_ENTITY, "NoApplicableClass")
            }
            SessionError::AmbiguousClass(_) => (StatusCode::UNPROCESSABLE_ENTITY, "AmbiguousClass"),
            SessionError::ContradictoryFacts(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "ContradictoryFacts")
            }
            SessionError::Engine(_) => (StatusCode::UNPROCESSABLE_ENTITY, "EngineError"),
            SessionError::UnknownCriterion(_) => (StatusCode::NOT_FOUND, "UnknownCriterion"),
            SessionError::WrongStatus { .. } => (StatusCode::CONFLICT, "WrongStatus"),
            SessionError::NotPending(_) => (StatusCode::CONFLICT, "NotPending"),
            SessionError::ConflictingAnswer { .. } => (StatusCode::CONFLICT, "ConflictingAnswer"),
            SessionError::PendingManualAnswers(pending) => {
                return Self {
                    status: StatusCode::CONFLICT,
                    body: serde_json::json!({
                        "error": "PendingManualAnswers",
                        "detail": e.to_string(),
                        "pending": pending,
                    }),
                }
            }
        };
        Self::new(status, kind, e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, axum::Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("response serializes") + "\n"
}

#[derive(Serialize)]
struct SessionView<'a> {
    session_id: &'a str,
    status: SessionStatus,
    rulepack: RulepackRef,
    risk_class: Option<&'a str>,
    criteria_sets: &'a [String],
    criteria: Vec<CriterionSummary>,
    pending: Vec<String>,
    tallies: Vec<rtqa_core::evaluation::ClassTally>,
    verdicts: Vec<rtqa_core::evaluation::Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a rtqa_core::evaluation::Report>,
}

fn view(entry: &Entry) -> SessionView<'_> {
    let s = &entry.session;
    let rb = s.rulebase();
    let verdicts = s.verdicts();
    SessionView {
        session_id: &entry.id,
        status: s.status(),
        rulepack: RulepackRef {
            id: rb.id.clone(),
            version: rb.version.clone(),
            content_hash: rb.content_hash.clone(),
        },
        risk_class: s.risk_class(),
        criteria_sets: s.criteria_sets(),
        criteria: s.criteria(),
        pending: s.pending(),
        tallies: tally(&verdicts),
        verdicts,
        report: s.report(),
    }
}

impl AppState {
    pub fn new(
        ontology: Ontology,
        rulebases: Vec<Rulebase>,
        snapshot_dir: Option<PathBuf>,
    ) -> Self {
        let mut rulepacks: BTreeMap<String, Vec<Arc<Rulebase>>> = BTreeMap::new();
        for rb in rulebases {
            rulepacks
                .entry(rb.id.clone())
                .or_default()
                .push(Arc::new(rb));
        }
        Self {
            ontology: Arc::new(ontology),
            rulepacks,
            sessions: RwLock::new(HashMap::new()),
            snapshot_dir,
            nonce: AtomicU64::new(0),
        }
    }

    fn rulebase(&self, id: &str, version: Option<&str>) -> ApiResult<Arc<Rulebase>> {
        self.rulepacks
            .get(id)
            .and_then(|v| {
                v.iter()
                    .rev()
                    .find(|rb| version.is_none_or(|want| rb.version == want))
            })
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("rulepack {id}")))
    }

    fn entry(&self, id: &str) -> ApiResult<Arc<Mutex<Entry>>> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("session {id}")))
    }

    /// Builds, classifies and evaluates a session, replaying stored answers.
    fn build(
        &self,
        inputs: &CreateSession,
        answers: &[ManualAnswer],
    ) -> ApiResult<EvaluationSession> {
        let rulebase = self.rulebase(&inputs.rulepack, inputs.version.as_deref())?;
        let facts = facts_from_entries(&inputs.facts).map_err(|e| ApiError::input(e, "/facts"))?;
        let plan = validate_plan(inputs.plan.clone(), &self.ontology)
            .map_err(|e| ApiError::input(e, "/plan"))?;
        let mut s = EvaluationSession::new(rulebase, &self.ontology, facts, Some(Arc::new(plan)))?;
        s.classify()?;
        s.load_criteria(&inputs.class_filter)?;
        s.evaluate_all()?;
        for a in answers {
            s.answer_manual(a)?;
        }
        Ok(s)
    }

    fn new_id(&self, body: &[u8]) -> String {
        let nonce = self.nonce.fetch_add(1, Ordering::Relaxed);
        let clock = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or_default();
        let mut h = Sha256::new();
        h.update(body);
        h.update(nonce.to_le_bytes());
        h.update(clock.to_le_bytes());
        h.update(std::process::id().to_le_bytes());
        hex::encode(&h.finalize()[..16])
    }

    fn snapshot(&self, entry: &Entry) {
        let Some(dir) = &self.snapshot_dir else {
            return;
        };
        let snap = Snapshot {
            id: entry.id.clone(),
            inputs: entry.inputs.clone(),
            answers: entry.answers.clone(),
            finalized: entry.session.status() == SessionStatus::Finalized,
        };
        let path = dir.join(format!("{}.json", entry.id));
        let tmp = dir.join(format!(".{}.tmp", entry.id));
        let written = std::fs::create_dir_all(dir)
            .and_then(|_| {
                std::fs::write(
                    &tmp,
                    serde_json::to_vec(&snap).expect("snapshot serializes"),
                )
            })
            .and_then(|_| std::fs::rename(&tmp, &path));
        if let Err(e) = written {
            eprintln!("warning: could not write snapshot {}: {e}", path.display());
        }
    }

    /// Replays every snapshot in the snapshot directory. Returns how many
    /// sessions were restored.
    pub fn restore(&self) -> usize {
        let Some(dir) = &self.snapshot_dir else {
            return 0;
        };
        let Ok(read) = std::fs::read_dir(dir) else {
            return 0;
        };
        let mut paths: Vec<PathBuf> = read
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut restored = 0;
        for path in paths {
            match self.restore_one(&path) {
                Ok(()) => restored += 1,
                Err(e) => eprintln!("warning: skipping snapshot {}: {e}", path.display()),
            }
        }
        restored
    }

    fn restore_one(&self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let snap: Snapshot = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        let mut session = self
            .build(&snap.inputs, &snap.answers)
            .map_err(|e| e.body.to_string())?;
        if snap.finalized {
            session.finalize().map_err(|e| e.to_string())?;
        }
        let entry = Entry {
            id: snap.id.clone(),
            inputs: snap.inputs,
            answers: snap.answers,
            session,
        };
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(snap.id, Arc::new(Mutex::new(entry)));
        Ok(())
    }
}

async fn create_session(State(state): State<Arc<AppState>>, body: String) -> ApiResult<Response> {
    let inputs: CreateSession = from_json(&body).map_err(|e| ApiError::input(e, ""))?;
    let session = state.build(&inputs, &[])?;
    let id = state.new_id(body.as_bytes());
    let entry = Entry {
        id: id.clone(),
        inputs,
        answers: Vec::new(),
        session,
    };
    state.snapshot(&entry);
    let response = json_response(StatusCode::CREATED, pretty(&view(&entry)));
    state
        .sessions
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(id, Arc::new(Mutex::new(entry)));
    Ok(response)
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Response> {
    let entry = state.entry(&id)?;
    let entry = entry.lock().unwrap_or_else(|e| e.into_inner());
    Ok(json_response(StatusCode::OK, pretty(&view(&entry))))
}

async fn answer(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: String,
) -> ApiResult<Response> {
    let answer: ManualAnswer = from_json(&body).map_err(|e| ApiError::input(e, ""))?;
    let entry = state.entry(&id)?;
    let mut entry = entry.lock().unwrap_or_else(|e| e.into_inner());
    let already = entry
        .session
        .verdict(&answer.criterion)
        .map(|v| v.outcome.clone());
    let verdict = entry.session.answer_manual(&answer)?;
    if already != Some(verdict.outcome.clone()) {
        entry.answers.push(answer);
        state.snapshot(&entry);
    }
    Ok(json_response(StatusCode::OK, pretty(&verdict)))
}

async fn finalize(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Response> {
    let entry = state.entry(&id)?;
    let mut entry = entry.lock().unwrap_or_else(|e| e.into_inner());
    let was_final = entry.session.status() == SessionStatus::Finalized;
    let report = entry.session.finalize()?;
    if !was_final {
        state.snapshot(&entry);
    }
    Ok(json_response(StatusCode::OK, report.to_json()))
}

async fn get_report(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Response> {
    let entry = state.entry(&id)?;
    let entry = entry.lock().unwrap_or_else(|e| e.into_inner());
    let report = entry
        .session
        .report()
        .ok_or_else(|| ApiError::not_found(format!("report for session {id} (not finalized)")))?;
    Ok(json_response(StatusCode::OK, report.to_json()))
}

async fn get_trace(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Response> {
    let entry = state.entry(&id)?;
    let entry = entry.lock().unwrap_or_else(|e| e.into_inner());
    Ok(json_response(StatusCode::OK, pretty(entry.session.trace())))
}

#[derive(Serialize)]
struct RulepackListing<'a> {
    id: &'a str,
    version: &'a str,
    content_hash: &'a str,
    classification_rules: usize,
    criteria: usize,
}

async fn list_rulepacks(State(state): State<Arc<AppState>>) -> Response {
    let listing: Vec<RulepackListing> = state
        .rulepacks
        .values()
        .flatten()
        .map(|rb| RulepackListing {
            id: &rb.id,
            version: &rb.version,
            content_hash: &rb.content_hash,
            classification_rules: rb.classification.len(),
            criteria: rb.criteria.len(),
        })
        .collect();
    json_response(StatusCode::OK, pretty(&listing))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/rulepacks", get(list_rulepacks))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/answers", post(answer))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/report", get(get_report))
        .route("/sessions/{id}/trace", get(get_trace))
        .with_state(state)
}
