//! Subcommand implementations. Each returns the process exit code.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rtqa_core::engine::{run_forward, WorkingMemory, DEFAULT_MAX_CYCLES};
use rtqa_core::evaluation::{
    evaluate_batch, Answer, EvaluationSession, ManualAnswer, Outcome, Overall, Report,
    SessionError, RISK_CLASS_KEY,
};
use rtqa_core::facts::{from_json, ingest_plan, load_facts, InputError, MlmRepository, StoreError};
use rtqa_core::ontology::Ontology;
use rtqa_core::rulelang::{
    check_completeness, has_errors, parse_decision_table, render_vector, CriterionClass,
};
use rtqa_core::rulepack::{Rulebase, Rulepack, RulepackError, MANIFEST_FILE};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_REJECTED: u8 = 3;
pub const EXIT_INCOMPLETE: u8 = 4;

/// A failure that maps to an exit code after being printed.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn io(message: impl ToString) -> Self {
        Self {
            code: EXIT_IO,
            message: message.to_string(),
        }
    }

    pub fn invalid(message: impl ToString) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.to_string(),
        }
    }
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        Failure::io(e)
    }
}

impl From<RulepackError> for Failure {
    fn from(e: RulepackError) -> Self {
        match e {
            RulepackError::Invalid(issues) => {
                let mut msg = String::from("rulepack failed validation:");
                for i in issues.iter().filter(|i| i.is_error()) {
                    msg.push_str(&format!("\n  {i}"));
                }
                Failure::invalid(msg)
            }
            other => Failure::io(other),
        }
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        let code = match e {
            SessionError::NoApplicableClass => EXIT_INCOMPLETE,
            _ => EXIT_INVALID,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

pub type CmdResult = Result<u8, Failure>;

pub fn load_ontology(path: Option<&Path>) -> Result<Ontology, Failure> {
    match path {
        Some(p) => Ontology::load(p).map_err(Failure::io),
        None => Ok(Ontology::builtin()),
    }
}

pub fn compile_pack(dir: &Path, ontology: &Ontology) -> Result<Rulebase, Failure> {
    Ok(Rulepack::load_dir(dir)?.compile(ontology)?)
}

/// Rulebases found under `dir`: a repository (with `index.json`), a single
/// rulepack, or a directory of rulepack directories.
pub fn discover_rulebases(dir: &Path, ontology: &Ontology) -> Result<Vec<Rulebase>, Failure> {
    if dir.join("index.json").exists() {
        let repo = MlmRepository::open(dir).map_err(Failure::io)?;
        let entries = repo.list().map_err(Failure::io)?;
        return entries
            .iter()
            .map(|e| {
                repo.load(&e.id, Some(&e.version), ontology)
                    .map_err(Failure::io)
            })
            .collect();
    }
    if dir.join(MANIFEST_FILE).exists() {
        return Ok(vec![compile_pack(dir, ontology)?]);
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).exists())
        .collect();
    subdirs.sort();
    let mut out = Vec::new();
    for d in subdirs {
        match compile_pack(&d, ontology) {
            Ok(rb) => out.push(rb),
            Err(f) => eprintln!("warning: skipping {}: {}", d.display(), f.message),
        }
    }
    Ok(out)
}

pub fn lint(pack: &Path, ontology: &Ontology, out: &mut dyn Write) -> CmdResult {
    let issues = Rulepack::load_dir(pack)?.lint(ontology);
    for i in &issues {
        writeln!(out, "{i}").map_err(Failure::io)?;
    }
    let errors = issues.iter().filter(|i| i.is_error()).count();
    writeln!(
        out,
        "{errors} error(s), {} warning(s)",
        issues.len() - errors
    )
    .map_err(Failure::io)?;
    Ok(if has_errors(&issues) {
        EXIT_INVALID
    } else {
        EXIT_OK
    })
}

pub fn compile(pack: &Path, ontology: &Ontology, json: bool, out: &mut dyn Write) -> CmdResult {
    let rb = compile_pack(pack, ontology)?;
    let text = if json {
        serde_json::to_string_pretty(&rb).expect("rulebase serializes") + "\n"
    } else {
        rb.listing()
    };
    out.write_all(text.as_bytes()).map_err(Failure::io)?;
    Ok(EXIT_OK)
}

pub fn table_check(file: &Path, out: &mut dyn Write) -> CmdResult {
    let text = std::fs::read_to_string(file)
        .map_err(|e| Failure::io(format!("{}: {e}", file.display())))?;
    let table = parse_decision_table(&text).map_err(Failure::invalid)?;
    let report = check_completeness(&table).map_err(Failure::invalid)?;
    let w = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(Failure::io);
    w(
        out,
        format!(
            "{} conditions, {} columns: {}",
            table.conditions.len(),
            table.columns.len(),
            if report.balanced {
                "balanced"
            } else {
                "unbalanced"
            }
        ),
    )?;
    for m in &report.missing {
        w(out, format!("missing {}", render_vector(m)))?;
    }
    Ok(EXIT_OK)
}

pub fn classify(facts: &Path, pack: &Path, ontology: &Ontology, out: &mut dyn Write) -> CmdResult {
    let rb = compile_pack(pack, ontology)?;
    let mut wm = WorkingMemory::new();
    for f in load_facts(facts)? {
        wm.assert_fact(f).map_err(Failure::invalid)?;
    }
    let run = run_forward(&rb.classification, wm, DEFAULT_MAX_CYCLES).map_err(Failure::invalid)?;
    let risk_class = run
        .wm
        .get(RISK_CLASS_KEY)
        .and_then(|v| v.as_text().map(str::to_string));
    let body = serde_json::json!({
        "risk_class": risk_class,
        "criteria_sets": run.loaded_criteria,
        "trace": run.trace,
    });
    out.write_all((serde_json::to_string_pretty(&body).expect("serializes") + "\n").as_bytes())
        .map_err(Failure::io)?;
    Ok(if risk_class.is_some() {
        EXIT_OK
    } else {
        EXIT_INCOMPLETE
    })
}

pub struct EvaluateArgs<'a> {
    pub facts: &'a Path,
    pub plan: &'a Path,
    pub pack: &'a Path,
    pub answers: Option<&'a Path>,
    pub interactive: bool,
    pub answered_by: String,
    pub class_filter: &'a [CriterionClass],
    pub out: Option<&'a Path>,
}

pub fn exit_code(report: &Report) -> u8 {
    match report.overall {
        Overall::Accredited => EXIT_OK,
        Overall::Rejected => EXIT_REJECTED,
        Overall::Incomplete => EXIT_INCOMPLETE,
    }
}

fn ask(
    session: &mut EvaluationSession,
    answered_by: &str,
    input: &mut dyn BufRead,
    prompt: &mut dyn Write,
) -> Result<(), Failure> {
    // Pending verdicts come back in (class, name) order.
    let pending: Vec<(String, String)> = session
        .verdicts()
        .into_iter()
        .filter_map(|v| match v.outcome {
            Outcome::ManualPending { question } => Some((v.criterion, question)),
            _ => None,
        })
        .collect();
    for (criterion, question) in pending {
        loop {
            write!(prompt, "[{criterion}] {question} [pass/fail]: ").map_err(Failure::io)?;
            prompt.flush().map_err(Failure::io)?;
            let mut line = String::new();
            if input.read_line(&mut line).map_err(Failure::io)? == 0 {
                return Err(Failure::invalid(
                    "input ended before all manual criteria were answered",
                ));
            }
            let answer = match line.trim().to_ascii_lowercase().as_str() {
                "pass" | "p" | "yes" | "y" => Answer::Pass,
                "fail" | "f" | "no" | "n" => Answer::Fail,
                _ => continue,
            };
            session.answer_manual(&ManualAnswer {
                criterion: criterion.clone(),
                answer,
                answered_by: answered_by.to_string(),
            })?;
            break;
        }
    }
    Ok(())
}

pub fn evaluate(
    args: &EvaluateArgs,
    ontology: &Ontology,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> CmdResult {
    let rb = Arc::new(compile_pack(args.pack, ontology)?);
    let facts = load_facts(args.facts)?;
    let plan = Arc::new(ingest_plan(args.plan, ontology)?);
    let answers: Vec<ManualAnswer> = match args.answers {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::io(format!("{}: {e}", p.display())))?;
            from_json(&text)?
        }
        None => Vec::new(),
    };
    let report = if args.interactive {
        let mut s = EvaluationSession::new(rb, ontology, facts, Some(plan))?;
        s.classify()?;
        s.load_criteria(args.class_filter)?;
        s.evaluate_all()?;
        for a in &answers {
            if s.verdict(&a.criterion).is_some() {
                s.answer_manual(a)?;
            }
        }
        let mut stderr = std::io::stderr();
        ask(&mut s, &args.answered_by, input, &mut stderr)?;
        s.finalize()?
    } else {
        evaluate_batch(rb, ontology, facts, Some(plan), args.class_filter, &answers)?.1
    };
    let text = report.to_json();
    match args.out {
        Some(p) => {
            std::fs::write(p, &text).map_err(|e| Failure::io(format!("{}: {e}", p.display())))?
        }
        None => out.write_all(text.as_bytes()).map_err(Failure::io)?,
    }
    Ok(exit_code(&report))
}

pub fn store(pack: &Path, repo: &Path, ontology: &Ontology, out: &mut dyn Write) -> CmdResult {
    let source = Rulepack::load_dir(pack)?;
    let repo = MlmRepository::open(repo).map_err(Failure::io)?;
    match repo.store(&source, ontology) {
        Ok(e) => {
            writeln!(
                out,
                "stored {} {} sha256:{}",
                e.id, e.version, e.content_hash
            )
            .map_err(Failure::io)?;
            Ok(EXIT_OK)
        }
        Err(StoreError::ValidationGate(issues)) => {
            for i in issues.iter().filter(|i| i.is_error()) {
                writeln!(out, "{i}").map_err(Failure::io)?;
            }
            Err(Failure::invalid("rulepack rejected by validation"))
        }
        Err(StoreError::VersionConflict { id, version }) => Err(Failure::invalid(format!(
            "{id} {version} is already stored with different content"
        ))),
        Err(e) => Err(Failure::io(e)),
    }
}
