//! Command implementations behind the `clarity` binary.
//!
//! A session file is plain text with one user message per line; blank lines
//! and lines starting with `#` are skipped.

use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::Router;
use clap::{Args, Parser, Subcommand};
use clarity_core::adapters::CompletionBackend;
use clarity_core::bundle::{bundle_kind, load_bundle, save_bundle};
use clarity_core::clinical::{emergency_examples, question_examples, readiness_examples};
use clarity_core::collector::{Collector, VectorStore};
use clarity_core::eval::{
    binary_metrics, funnel_stats, generate_fixtures, mape, multi_expert_metrics, read_corpus, write_corpus,
    AnnotatedChat, FixtureSpec, MetricsReport, CRITICAL_WORDS,
};
use clarity_core::fsm::{load_graph, validate_graph};
use clarity_core::gateway::{Gateway, GatewayConfig, OuterContext, UserRequest};
use clarity_core::progress::{
    detect_question, estimate_readiness, fit_linear, LinearExample, LinearTextModel, LinearTrainConfig, ProgressKind,
};
use clarity_core::safety::{emergency_score, train_emergency, EmergencyModel, EmergencyTrainConfig};
use clarity_core::transcript::Transcript;

#[derive(Debug, Parser)]
#[command(name = "clarity", version, about = "Clinical triage dialogue engine")]
pub struct Cli {
    /// Gateway configuration file; `CLARITY_*` variables override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dialogue graph tools.
    #[command(subcommand)]
    Fsm(FsmCommand),
    /// Train and apply the decision classifiers.
    #[command(subcommand)]
    Clf(ClfCommand),
    /// Information-collection tools.
    #[command(subcommand)]
    Collector(CollectorCommand),
    /// Evaluation metrics.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Synthetic corpora.
    #[command(subcommand)]
    Fixtures(FixturesCommand),
    /// Run the HTTP gateway.
    Serve,
    /// Play a session file through the gateway and print each turn.
    Replay { session_file: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum FsmCommand {
    /// Check a graph file; exits 1 when any finding is reported.
    Validate { graph: PathBuf },
}

#[derive(Debug, Args)]
pub struct LinearArgs {
    /// Annotated corpus (JSON lines).
    pub corpus: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,
    #[arg(long, default_value_t = 400)]
    pub max_epochs: usize,
}

#[derive(Debug, Subcommand)]
pub enum ClfCommand {
    TrainEmergency {
        corpus: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 100)]
        rounds: usize,
        #[arg(long)]
        n_components: Option<usize>,
        #[arg(long, default_value_t = clarity_core::safety::DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Critical word or phrase; repeatable. Defaults to the built-in list.
        #[arg(long = "critical-word")]
        critical_words: Vec<String>,
    },
    TrainReadiness(LinearArgs),
    TrainQuestion(LinearArgs),
    /// Trains from JSON lines of `{"text", "label"}` records.
    TrainRelevance(LinearArgs),
    /// Scores every chat of a corpus; prints metrics when labels are present.
    Score {
        model: PathBuf,
        chat_file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Applies a model to messages given on the command line.
    Predict {
        model: PathBuf,
        #[arg(required = true)]
        messages: Vec<String>,
        /// LLM criticality flag for emergency models.
        #[arg(long)]
        llm_flag: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum CollectorCommand {
    /// Feeds a session file to the collector and prints the question trace.
    Simulate { session_file: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// P@k and R@k of `algorithm` labels against every expert.
    Pairwise {
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        json: bool,
    },
    /// Binary metrics; files hold one 0/1 (or true/false) per line.
    Binary {
        pred: PathBuf,
        gold: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Mean absolute percentage error; files hold one number per line.
    Mape {
        pred: PathBuf,
        gold: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Session outcomes from an audit log.
    Funnel {
        audit_log: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum FixturesCommand {
    Generate {
        #[arg(long, default_value_t = clarity_core::clinical::DESK_SEED)]
        seed: u64,
        /// TOML overrides of the corpus shape.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Fsm(FsmCommand::Validate { graph }) => {
            let g = load_graph(&graph)?;
            let report = validate_graph(&g);
            write!(out, "{}", report.to_text())?;
            Ok(if report.is_clean() { 0 } else { 1 })
        }
        Command::Clf(cmd) => clf(cmd, out).map(|_| 0),
        Command::Collector(CollectorCommand::Simulate { session_file }) => {
            simulate(cli.config.as_deref(), &session_file, out).map(|_| 0)
        }
        Command::Eval(cmd) => eval(cmd, out).map(|_| 0),
        Command::Fixtures(FixturesCommand::Generate { seed, spec, output }) => {
            let spec = match spec {
                Some(p) => toml::from_str(&std::fs::read_to_string(&p)?).with_context(|| p.display().to_string())?,
                None => FixtureSpec::default(),
            };
            let chats = generate_fixtures(seed, &spec);
            match output {
                Some(p) => write_corpus(std::fs::File::create(&p)?, &chats)?,
                None => write_corpus(&mut *out, &chats)?,
            }
            Ok(0)
        }
        Command::Serve => {
            let cfg = GatewayConfig::resolve(cli.config.as_deref())?;
            tokio::runtime::Runtime::new()?.block_on(serve(cfg))?;
            Ok(0)
        }
        Command::Replay { session_file } => {
            let gw = GatewayConfig::resolve(cli.config.as_deref())?.build()?;
            replay(&gw, &read_session(&session_file)?, out).map(|_| 0)
        }
    }
}

fn read_corpus_file(path: &Path) -> Result<Vec<AnnotatedChat>> {
    let file = std::fs::File::open(path).with_context(|| path.display().to_string())?;
    Ok(read_corpus(BufReader::new(file))?)
}

pub fn read_session(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

fn linear(kind: ProgressKind, args: LinearArgs, out: &mut dyn Write) -> Result<()> {
    let examples = match kind {
        ProgressKind::Question => question_examples(&read_corpus_file(&args.corpus)?),
        ProgressKind::Readiness => readiness_examples(&read_corpus_file(&args.corpus)?),
        ProgressKind::Relevance => std::fs::read_to_string(&args.corpus)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str::<LinearExample>)
            .collect::<Result<_, _>>()?,
    };
    if examples.is_empty() {
        bail!("no labelled examples in {}", args.corpus.display());
    }
    let cfg = LinearTrainConfig { l2: args.l2, max_epochs: args.max_epochs, ..Default::default() };
    let fit = fit_linear(&examples, kind, &cfg)?;
    save_bundle(&fit.model, &args.output)?;
    writeln!(
        out,
        "trained on {} examples, loss {:.6} -> {:.6}, wrote {}",
        examples.len(),
        fit.losses[0],
        fit.losses.last().copied().unwrap_or(f64::NAN),
        args.output.display()
    )?;
    Ok(())
}

fn clf(cmd: ClfCommand, out: &mut dyn Write) -> Result<()> {
    match cmd {
        ClfCommand::TrainEmergency { corpus, output, rounds, n_components, threshold, critical_words } => {
            let examples = emergency_examples(&read_corpus_file(&corpus)?);
            if examples.is_empty() {
                bail!("no emergency-labelled chats in {}", corpus.display());
            }
            let critical_words = if critical_words.is_empty() {
                CRITICAL_WORDS.iter().map(|w| w.to_string()).collect()
            } else {
                critical_words
            };
            let cfg = EmergencyTrainConfig { rounds, n_components, threshold_t: threshold, critical_words, ..Default::default() };
            let (model, losses) = train_emergency(&examples, &cfg)?;
            save_bundle(&model, &output)?;
            writeln!(
                out,
                "trained on {} chats, {} components, loss {:.6} -> {:.6}, wrote {}",
                examples.len(),
                model.pca.basis.len(),
                losses.first().copied().unwrap_or(f64::NAN),
                losses.last().copied().unwrap_or(f64::NAN),
                output.display()
            )?;
        }
        ClfCommand::TrainReadiness(args) => linear(ProgressKind::Readiness, args, out)?,
        ClfCommand::TrainQuestion(args) => linear(ProgressKind::Question, args, out)?,
        ClfCommand::TrainRelevance(args) => linear(ProgressKind::Relevance, args, out)?,
        ClfCommand::Score { model, chat_file, json } => score(&model, &chat_file, json, out)?,
        ClfCommand::Predict { model, messages, llm_flag } => {
            let text = std::fs::read_to_string(&model)?;
            let mut history = Transcript::new();
            messages.iter().for_each(|m| history.push_user(m.as_str()));
            let line = if bundle_kind(&text)? == "emergency" {
                let m: EmergencyModel = load_bundle(&model)?;
                serde_json::to_string(&emergency_score(&history, &m, llm_flag)?)?
            } else {
                let m: LinearTextModel = load_bundle(&model)?;
                match m.kind {
                    ProgressKind::Readiness => serde_json::to_string(&estimate_readiness(&history, &m)?)?,
                    _ => serde_json::to_string(&detect_question(messages.last().unwrap(), &m)?)?,
                }
            };
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

fn score(model: &Path, chat_file: &Path, json: bool, out: &mut dyn Write) -> Result<()> {
    let chats = read_corpus_file(chat_file)?;
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    let mut report = MetricsReport::new();
    if bundle_kind(&std::fs::read_to_string(model)?)? == "emergency" {
        let m: EmergencyModel = load_bundle(model)?;
        for c in &chats {
            let v = emergency_score(&c.transcript, &m, c.llm_flag.unwrap_or(false))?;
            if !json {
                writeln!(out, "{}\t{:.6}\t{}", c.id, v.score, v.critical)?;
            }
            if let Some(g) = c.emergency {
                pred.push(v.critical);
                gold.push(g);
            }
        }
    } else {
        let m: LinearTextModel = load_bundle(model)?;
        for c in &chats {
            let (label, verdict, score) = match m.kind {
                ProgressKind::Readiness => {
                    let v = estimate_readiness(&c.transcript, &m)?;
                    (c.ready, v.ready, v.score)
                }
                _ => {
                    let v = detect_question(c.transcript.last_user().unwrap_or_default(), &m)?;
                    (c.question, v.is_question, v.score)
                }
            };
            if !json {
                writeln!(out, "{}\t{:.6}\t{}", c.id, score, verdict)?;
            }
            if let Some(g) = label {
                pred.push(verdict);
                gold.push(g);
            }
        }
    }
    if !gold.is_empty() {
        let b = binary_metrics(&pred, &gold)?;
        report.push("precision", b.precision, gold.len()).push("recall", b.recall, gold.len());
        report.push("f1", b.f1, gold.len()).push("fpr", b.fpr, gold.len());
    }
    write_report(&report, json, out)
}

fn write_report(report: &MetricsReport, json: bool, out: &mut dyn Write) -> Result<()> {
    if json {
        writeln!(out, "{}", report.to_json())?;
    } else if !report.metrics.is_empty() {
        write!(out, "{}", report.to_table())?;
    }
    Ok(())
}

fn read_column<T: std::str::FromStr>(path: &Path, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    std::fs::read_to_string(path)
        .with_context(|| path.display().to_string())?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse(l.trim()).with_context(|| format!("{}:{}: cannot parse `{l}`", path.display(), i + 1)))
        .collect()
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

fn eval(cmd: EvalCommand, out: &mut dyn Write) -> Result<()> {
    let mut report = MetricsReport::new();
    let json = match cmd {
        EvalCommand::Pairwise { corpus, k, json } => {
            let chats: Vec<AnnotatedChat> =
                read_corpus_file(&corpus)?.into_iter().filter(|c| c.algorithm.is_some() && !c.experts.is_empty()).collect();
            if chats.is_empty() {
                bail!("no chats with both algorithm and expert labels");
            }
            let n_experts = chats.iter().map(|c| c.experts.len()).min().unwrap_or(0);
            let alg: Vec<Vec<String>> = chats.iter().map(|c| c.algorithm.clone().unwrap_or_default()).collect();
            let experts: Vec<Vec<Vec<String>>> =
                (0..n_experts).map(|j| chats.iter().map(|c| c.experts[j].clone()).collect()).collect();
            let m = multi_expert_metrics(&alg, &experts, k)?;
            report.push(&format!("P@{k}"), m.precision_mean, chats.len());
            report.push(&format!("P@{k}_se"), m.precision_se, m.experts);
            report.push(&format!("R@{k}"), m.recall_mean, chats.len());
            report.push(&format!("R@{k}_se"), m.recall_se, m.experts);
            json
        }
        EvalCommand::Binary { pred, gold, json } => {
            let (p, g) = (read_column(&pred, parse_bool)?, read_column(&gold, parse_bool)?);
            let b = binary_metrics(&p, &g)?;
            report.push("precision", b.precision, g.len()).push("recall", b.recall, g.len());
            report.push("f1", b.f1, g.len()).push("fpr", b.fpr, g.len());
            json
        }
        EvalCommand::Mape { pred, gold, json } => {
            let num = |s: &str| s.parse::<f64>().ok();
            let (p, g) = (read_column(&pred, num)?, read_column(&gold, num)?);
            report.push("mape", mape(&p, &g)?, g.len());
            json
        }
        EvalCommand::Funnel { audit_log, json } => {
            let f = funnel_stats(&std::fs::read_to_string(&audit_log)?);
            report.push("initiated", f.initiated as f64, f.initiated);
            report.push("routing_rate", f.routing_rate, f.initiated);
            report.push("emergency_rate", f.emergency_rate, f.initiated);
            report.push("moderation_rate", f.moderation_rate, f.initiated);
            report.push("turns", f.turns as f64, f.turns);
            if f.skipped > 0 {
                log::warn!("skipped {} unparseable audit lines", f.skipped);
            }
            json
        }
    };
    write_report(&report, json, out)
}

fn simulate(config: Option<&Path>, session_file: &Path, out: &mut dyn Write) -> Result<()> {
    let cfg = GatewayConfig::resolve(config)?;
    let llm: Arc<dyn CompletionBackend> = cfg.backend()?;
    let assets = cfg.assets()?;
    let store = match &cfg.question_cache {
        Some(p) => VectorStore::open(p)?,
        None => VectorStore::new(),
    };
    let embedder = cfg.clinical.embedder.build()?;
    let collector = Collector {
        store: &store,
        cfg: &cfg.clinical.collector,
        llm: llm.as_ref(),
        relevance: &assets.relevance,
        embedder: embedder.as_ref(),
    };
    let mut history = Transcript::new();
    history.push_system(cfg.clinical.greeting.as_str());
    writeln!(out, "system: {}", cfg.clinical.greeting)?;
    for message in read_session(session_file)? {
        history.push_user(message.as_str());
        writeln!(out, "user: {message}")?;
        let step = collector.step(&history)?;
        writeln!(out, "system [{}]: {}", serde_json::to_value(step.provenance)?.as_str().unwrap_or("?"), step.question)?;
        history.push_system(step.question);
    }
    Ok(())
}

fn replay_context() -> OuterContext {
    OuterContext {
        sex: true,
        age: 0,
        user_id: "replay".into(),
        session_id: format!("replay-{}", std::process::id()),
        client_id: "cli".into(),
    }
}

pub fn replay(gw: &Gateway, messages: &[String], out: &mut dyn Write) -> Result<()> {
    let ctx = replay_context();
    let ask = |text: &str| gw.handle(&UserRequest { text: text.into(), outer_context: ctx.clone() });
    let greeting = ask("")?;
    writeln!(out, "[{}] {}", greeting.state, greeting.response.text)?;
    for message in messages {
        writeln!(out, "> {message}")?;
        let h = ask(message)?;
        writeln!(out, "[{}] {}", h.state, h.response.text)?;
        for r in &h.response.results {
            writeln!(out, "  * {} | {} | {}", r.diagnosis, r.doctor, r.description)?;
        }
    }
    Ok(())
}

/// `POST /v3/request` and `GET /healthz` over a shared gateway.
pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/v3/request", post(handle_request))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(gateway)
}

async fn handle_request(State(gw): State<Arc<Gateway>>, body: Bytes) -> impl IntoResponse {
    // Turns call blocking model backends.
    let exchange = tokio::task::spawn_blocking(move || gw.handle_body(&body)).await;
    let (status, body) = match exchange {
        Ok(ex) => (StatusCode::from_u16(ex.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR), ex.body),
        Err(err) => {
            log::error!("request worker failed: {err}");
            (StatusCode::INTERNAL_SERVER_ERROR, br#"{"error":"internal error"}"#.to_vec())
        }
    };
    (status, [(header::CONTENT_TYPE, "application/json")], body)
}

pub async fn serve(cfg: GatewayConfig) -> Result<()> {
    let gateway = tokio::task::spawn_blocking({
        let cfg = cfg.clone();
        move || cfg.build()
    })
    .await??;
    let listener = tokio::net::TcpListener::bind(&cfg.bind).await.with_context(|| format!("binding {}", cfg.bind))?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(gateway)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
