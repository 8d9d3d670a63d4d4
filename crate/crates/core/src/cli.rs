//! Command-line front end. Every flag can also be set through an environment
//! variable named `MQTTPROBE_<FLAG>`, e.g. `MQTTPROBE_TARGET`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::experiment::{builtin_corpus, parse_experiment, render_experiment, Experiment};
use crate::oracle::{diff_profiles, documented_profile, evaluate_results, BehaviorProfile, Severity};
use crate::refbroker::Broker;
use crate::report::{divergences_markdown, RunReport, EXIT_CLEAN, EXIT_LOCAL_ERROR};
use crate::runner::{probe_liveness, run_corpus, Endpoint, Liveness, DEFAULT_PORT};

#[derive(Debug, Parser)]
#[command(name = "mqttprobe", version, about = "Differential conformance fuzzer for MQTT 3.1.1 brokers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run experiments against a broker and report anomalies.
    Run(RunArgs),
    /// Compare the behaviour of two brokers.
    Diff(DiffArgs),
    /// Run the reference broker until interrupted.
    Serve(ServeArgs),
    /// List the builtin corpus, or write it out as experiment files.
    Corpus(CorpusArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Md,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FailOn {
    Warning,
    Dos,
    Critical,
}

impl From<FailOn> for Severity {
    fn from(f: FailOn) -> Severity {
        match f {
            FailOn::Warning => Severity::Warning,
            FailOn::Dos => Severity::DoS,
            FailOn::Critical => Severity::Critical,
        }
    }
}

#[derive(Debug, Args)]
pub struct Selection {
    /// Run the builtin corpus (the default when no --experiment is given).
    #[arg(long, env = "MQTTPROBE_CORPUS")]
    pub corpus: bool,
    /// Experiment JSON file; repeatable.
    #[arg(long = "experiment", value_name = "FILE", env = "MQTTPROBE_EXPERIMENT", value_delimiter = ',')]
    pub experiments: Vec<PathBuf>,
    /// Override every experiment's settle window.
    #[arg(long, value_name = "MS", env = "MQTTPROBE_SETTLE_MS")]
    pub settle_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Broker address, `host[:port]`.
    #[arg(long, env = "MQTTPROBE_TARGET")]
    pub target: String,
    #[command(flatten)]
    pub selection: Selection,
    #[arg(long, value_enum, default_value_t = Format::Md, env = "MQTTPROBE_FORMAT")]
    pub format: Format,
    /// Lowest severity that makes the run exit with code 2.
    #[arg(long, value_enum, default_value_t = FailOn::Dos, env = "MQTTPROBE_FAIL_ON")]
    pub fail_on: FailOn,
    /// Name shown in the report (defaults to the target).
    #[arg(long, env = "MQTTPROBE_LABEL")]
    pub label: Option<String>,
    /// Broker version shown in the report.
    #[arg(long, env = "MQTTPROBE_BROKER_VERSION")]
    pub broker_version: Option<String>,
    /// Write one JSONL trace per experiment into this directory.
    #[arg(long, value_name = "DIR", env = "MQTTPROBE_TRACE_DIR")]
    pub trace_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    /// Live broker to profile; repeatable.
    #[arg(long = "target", env = "MQTTPROBE_TARGET", value_delimiter = ',')]
    pub targets: Vec<String>,
    /// Documented broker profile by label; repeatable.
    #[arg(long = "documented", env = "MQTTPROBE_DOCUMENTED", value_delimiter = ',')]
    pub documented: Vec<String>,
    /// Profile saved from an earlier JSON report or diff; repeatable.
    #[arg(long = "profile", value_name = "FILE", env = "MQTTPROBE_PROFILE", value_delimiter = ',')]
    pub profiles: Vec<PathBuf>,
    #[command(flatten)]
    pub selection: Selection,
    #[arg(long, value_enum, default_value_t = Format::Md, env = "MQTTPROBE_FORMAT")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Port to listen on, all interfaces. 0 picks a free port.
    #[arg(long, default_value_t = DEFAULT_PORT, env = "MQTTPROBE_PORT")]
    pub port: u16,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Directory to write `<name>.json` files into.
    #[arg(long, value_name = "DIR", env = "MQTTPROBE_OUT")]
    pub out: Option<PathBuf>,
}

/// A failure that ends the command with exit code 1.
#[derive(Debug)]
pub struct LocalError(pub String);

impl<E: std::fmt::Display> From<E> for LocalError {
    fn from(e: E) -> Self {
        LocalError(e.to_string())
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve(_)) { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level)).init();
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Diff(args) => cmd_diff(&args),
        Command::Serve(args) => cmd_serve(&args),
        Command::Corpus(args) => cmd_corpus(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(LocalError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_LOCAL_ERROR)
        }
    }
}

fn load_experiments(sel: &Selection) -> Result<Vec<Experiment>, LocalError> {
    let mut out = Vec::new();
    if sel.corpus || sel.experiments.is_empty() {
        out.extend(builtin_corpus());
    }
    for path in &sel.experiments {
        let text = fs::read_to_string(path).map_err(|e| LocalError(format!("{}: {e}", path.display())))?;
        let e = parse_experiment(&text).map_err(|e| LocalError(format!("{}: {e}", path.display())))?;
        out.push(e);
    }
    if let Some(ms) = sel.settle_ms {
        for e in &mut out {
            e.settle_ms = ms;
        }
    }
    Ok(out)
}

fn reachable(target: &str) -> Result<Endpoint, LocalError> {
    let ep = Endpoint::parse(target)?;
    match probe_liveness(&ep) {
        Liveness::Alive => Ok(ep),
        Liveness::Dead { detail } => Err(LocalError(format!("target {ep} is not answering: {detail}"))),
    }
}

fn print(text: &str) -> Result<(), LocalError> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn profile_target(
    target: &str,
    label: &str,
    version: Option<&str>,
    experiments: &[Experiment],
    threshold: Severity,
    trace_dir: Option<&Path>,
) -> Result<RunReport, LocalError> {
    let ep = reachable(target)?;
    let results = run_corpus(experiments, &ep);
    if let Some(dir) = trace_dir {
        fs::create_dir_all(dir)?;
        for r in &results {
            if let crate::runner::CorpusRun::Ran { trace, .. } = &r.run {
                fs::write(dir.join(format!("{}.jsonl", r.experiment.name)), trace.to_jsonl())?;
            }
        }
    }
    let runs = evaluate_results(&results)?;
    Ok(RunReport::build(&ep.to_string(), label, version, &results, &runs, threshold))
}

pub fn cmd_run(args: &RunArgs) -> Result<u8, LocalError> {
    let experiments = load_experiments(&args.selection)?;
    let label = args.label.clone().unwrap_or_else(|| args.target.clone());
    let report = profile_target(
        &args.target,
        &label,
        args.broker_version.as_deref(),
        &experiments,
        args.fail_on.into(),
        args.trace_dir.as_deref(),
    )?;
    print(&match args.format {
        Format::Json => report.to_json(),
        Format::Md => report.to_markdown(),
    })?;
    for e in report.experiments.iter().filter(|e| e.status == "runner_error") {
        eprintln!("error: {}: {}", e.name, e.detail.as_deref().unwrap_or("runner error"));
    }
    Ok(report.summary.exit_code)
}

pub fn cmd_diff(args: &DiffArgs) -> Result<u8, LocalError> {
    let sources = args.targets.len() + args.documented.len() + args.profiles.len();
    if sources != 2 {
        return Err(LocalError(format!(
            "diff needs exactly two profiles from --target, --documented or --profile, got {sources}"
        )));
    }
    let mut profiles = Vec::new();
    for label in &args.documented {
        profiles.push(
            documented_profile(label).ok_or_else(|| LocalError(format!("no documented profile named {label:?}")))?,
        );
    }
    for path in &args.profiles {
        let text = fs::read_to_string(path).map_err(|e| LocalError(format!("{}: {e}", path.display())))?;
        profiles.push(read_profile(&text).map_err(|e| LocalError(format!("{}: {}", path.display(), e.0)))?);
    }
    if !args.targets.is_empty() {
        let experiments = load_experiments(&args.selection)?;
        for target in &args.targets {
            profiles.push(profile_target(target, target, None, &experiments, Severity::Critical, None)?.fingerprint);
        }
    }
    let divergences = diff_profiles(&profiles[0], &profiles[1])?;
    let (a, b) = (&profiles[0].broker_label, &profiles[1].broker_label);
    print(&match args.format {
        Format::Md => divergences_markdown(a, b, &divergences),
        Format::Json => serde_json::to_string_pretty(&serde_json::json!({
            "a": profiles[0],
            "b": profiles[1],
            "divergences": divergences,
        }))?,
    })?;
    Ok(EXIT_CLEAN)
}

/// Accepts a bare profile, a run report, or a diff output (first profile).
fn read_profile(text: &str) -> Result<BehaviorProfile, LocalError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let inner = value.get("fingerprint").or_else(|| value.get("a")).unwrap_or(&value);
    Ok(serde_json::from_value(inner.clone())?)
}

pub fn cmd_serve(args: &ServeArgs) -> Result<u8, LocalError> {
    let broker = Broker::serve(args.port)?;
    let (tx, rx) = mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = tx.send(());
    })?;
    print(&format!("listening on {}", broker.local_addr()))?;
    let _ = rx.recv();
    broker.stop();
    eprintln!("shut down");
    Ok(EXIT_CLEAN)
}

pub fn cmd_corpus(args: &CorpusArgs) -> Result<u8, LocalError> {
    let corpus = builtin_corpus();
    match &args.out {
        None => {
            let names: Vec<&str> = corpus.iter().map(|e| e.name.as_str()).collect();
            print(&names.join("\n"))?;
        }
        Some(dir) => {
            fs::create_dir_all(dir)?;
            for e in &corpus {
                fs::write(dir.join(format!("{}.json", e.name)), render_experiment(e) + "\n")?;
            }
        }
    }
    Ok(EXIT_CLEAN)
}
