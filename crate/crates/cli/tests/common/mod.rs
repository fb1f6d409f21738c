//! Helpers for driving the `rtqa` binary and an in-process HTTP server.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::Arc;

use rtqa_cli::commands::discover_rulebases;
use rtqa_cli::server::{router, AppState};
use rtqa_core::ontology::Ontology;

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .find(|p| p.join("rulepacks").is_dir())
        .expect("workspace root")
        .to_path_buf()
}

pub fn fixture(rel: &str) -> PathBuf {
    root().join("fixtures").join(rel)
}

pub fn sample_pack() -> PathBuf {
    root().join("rulepacks/prostate_low_risk")
}

pub fn rtqa(args: &[&str]) -> Output {
    rtqa_with_input(args, "")
}

pub fn rtqa_with_input(args: &[&str], input: &str) -> Output {
    use std::io::Write;
    let mut child = Command::new(env!("CARGO_BIN_EXE_rtqa"))
        .args(args)
        .env_remove("RTQA_ONTOLOGY")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("rtqa runs");
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// `rtqa evaluate` on fixture inputs; returns (exit code, stdout).
pub fn evaluate(plan: &str, extra: &[&str]) -> (i32, String) {
    let facts = fixture("facts/low_risk_prostate.json");
    let plan = fixture(&format!("plans/{plan}.json"));
    let pack = sample_pack();
    let mut args = vec![
        "evaluate",
        "--facts",
        p(&facts),
        "--plan",
        p(&plan),
        "--rules",
        p(&pack),
    ];
    args.extend_from_slice(extra);
    let out = rtqa(&args);
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap() + &String::from_utf8_lossy(&out.stderr),
    )
}

pub fn report_only(plan: &str, extra: &[&str]) -> (i32, String) {
    let facts = fixture("facts/low_risk_prostate.json");
    let plan = fixture(&format!("plans/{plan}.json"));
    let pack = sample_pack();
    let mut args = vec![
        "evaluate",
        "--facts",
        p(&facts),
        "--plan",
        p(&plan),
        "--rules",
        p(&pack),
    ];
    args.extend_from_slice(extra);
    let out = rtqa(&args);
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
    )
}

pub fn state(snapshot_dir: Option<PathBuf>) -> Arc<AppState> {
    let ontology = Ontology::builtin();
    let rulebases = discover_rulebases(&root().join("rulepacks"), &ontology).unwrap();
    Arc::new(AppState::new(ontology, rulebases, snapshot_dir))
}

/// Serves `state` on an ephemeral port; returns the base URL.
pub async fn serve(state: Arc<AppState>) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router(state)).await.unwrap();
    });
    format!("http://{addr}")
}

/// Request body for `POST /sessions` built from fixture files.
pub fn session_body(plan: &str) -> serde_json::Value {
    let read = |p: PathBuf| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
    };
    serde_json::json!({
        "rulepack": "prostate_low_risk",
        "facts": read(fixture("facts/low_risk_prostate.json")),
        "plan": read(fixture(&format!("plans/{plan}.json"))),
    })
}

pub fn confirm_answer() -> serde_json::Value {
    let answers: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(fixture("answers/confirm_all.json")).unwrap(),
    )
    .unwrap();
    answers[0].clone()
}

pub struct Flow {
    pub id: String,
    pub report: String,
}

/// Create, answer the manual criterion, finalize.
pub async fn http_flow(client: &reqwest::Client, base: &str, plan: &str) -> Flow {
    let created = client
        .post(format!("{base}/sessions"))
        .json(&session_body(plan))
        .send()
        .await
        .unwrap();
    assert_eq!(created.status(), 201);
    let view: serde_json::Value = created.json().await.unwrap();
    let id = view["session_id"].as_str().unwrap().to_string();
    let answered = client
        .post(format!("{base}/sessions/{id}/answers"))
        .json(&confirm_answer())
        .send()
        .await
        .unwrap();
    assert_eq!(answered.status(), 200);
    let fin = client
        .post(format!("{base}/sessions/{id}/finalize"))
        .send()
        .await
        .unwrap();
    assert_eq!(fin.status(), 200);
    Flow {
        id,
        report: fin.text().await.unwrap(),
    }
}
