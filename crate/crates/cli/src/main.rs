use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use rtqa_cli::commands::{self, EvaluateArgs, Failure, EXIT_IO};
use rtqa_cli::server::{router, AppState};
use rtqa_core::rulelang::CriterionClass;

#[derive(Parser)]
#[command(
    name = "rtqa",
    version,
    about = "Rule-based radiotherapy plan classification and accreditation"
)]
struct Cli {
    /// Ontology JSON to use instead of the built-in one.
    #[arg(long, global = true, env = "RTQA_ONTOLOGY")]
    ontology: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a rulepack; exits 1 if there are errors.
    Lint { rulepack: PathBuf },
    /// Print the compiled instruction listing of a rulepack.
    Compile {
        rulepack: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Decision table utilities.
    Table {
        #[command(subcommand)]
        command: TableCommand,
    },
    /// Run the classification rules over a facts file.
    Classify {
        #[arg(long, env = "RTQA_FACTS")]
        facts: PathBuf,
        #[arg(long, env = "RTQA_RULES")]
        rules: PathBuf,
    },
    /// Classify, evaluate the plan and write the accreditation report.
    Evaluate {
        #[arg(long, env = "RTQA_FACTS")]
        facts: PathBuf,
        #[arg(long, env = "RTQA_PLAN")]
        plan: PathBuf,
        #[arg(long, env = "RTQA_RULES")]
        rules: PathBuf,
        /// JSON list of {criterion, answer, answered_by}.
        #[arg(long, env = "RTQA_ANSWERS")]
        answers: Option<PathBuf>,
        /// Ask unanswered manual questions on the terminal.
        #[arg(long)]
        interactive: bool,
        #[arg(long, env = "RTQA_ANSWERED_BY", default_value = "operator")]
        answered_by: String,
        /// Only evaluate these criterion classes.
        #[arg(long, value_delimiter = ',', value_parser = parse_class)]
        class_filter: Vec<CriterionClass>,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Store a validated rulepack in a repository directory.
    Store {
        rulepack: PathBuf,
        #[arg(long, env = "RTQA_REPOSITORY")]
        repo: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "RTQA_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "RTQA_BIND", default_value = "127.0.0.1")]
        bind: String,
        /// Rulepack, directory of rulepacks, or repository to serve.
        #[arg(long, env = "RTQA_RULEPACK_DIR", default_value = "rulepacks")]
        rulepack_dir: PathBuf,
        /// Persist sessions here and restore them on startup.
        #[arg(long, env = "RTQA_SNAPSHOT_DIR")]
        snapshot_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TableCommand {
    /// Report whether a decision table covers every condition combination.
    Check { file: PathBuf },
}

fn parse_class(s: &str) -> Result<CriterionClass, String> {
    s.parse::<CriterionClass>().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let ontology = commands::load_ontology(cli.ontology.as_deref())?;
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Lint { rulepack } => commands::lint(&rulepack, &ontology, &mut stdout),
        Command::Compile { rulepack, json } => {
            commands::compile(&rulepack, &ontology, json, &mut stdout)
        }
        Command::Table {
            command: TableCommand::Check { file },
        } => commands::table_check(&file, &mut stdout),
        Command::Classify { facts, rules } => {
            commands::classify(&facts, &rules, &ontology, &mut stdout)
        }
        Command::Evaluate {
            facts,
            plan,
            rules,
            answers,
            interactive,
            answered_by,
            class_filter,
            out,
        } => {
            let args = EvaluateArgs {
                facts: &facts,
                plan: &plan,
                pack: &rules,
                answers: answers.as_deref(),
                interactive,
                answered_by,
                class_filter: &class_filter,
                out: out.as_deref(),
            };
            let mut stdin = std::io::stdin().lock();
            commands::evaluate(&args, &ontology, &mut stdin, &mut stdout)
        }
        Command::Store { rulepack, repo } => {
            commands::store(&rulepack, &repo, &ontology, &mut stdout)
        }
        Command::Serve {
            port,
            bind,
            rulepack_dir,
            snapshot_dir,
        } => {
            let rulebases = commands::discover_rulebases(&rulepack_dir, &ontology)?;
            let state = Arc::new(AppState::new(ontology, rulebases, snapshot_dir));
            let restored = state.restore();
            let runtime = tokio::runtime::Runtime::new().map_err(Failure::io)?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind((bind.as_str(), port))
                    .await
                    .map_err(|e| Failure::io(format!("bind {bind}:{port}: {e}")))?;
                eprintln!(
                    "listening on {} ({restored} session(s) restored)",
                    listener.local_addr().map_err(Failure::io)?
                );
                axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
                    .map_err(Failure::io)?;
                Ok(0)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(if f.code == 0 { EXIT_IO } else { f.code })
        }
    }
}
