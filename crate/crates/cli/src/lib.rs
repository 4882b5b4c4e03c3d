//! Argument parsing, configuration and dispatch for the `fdsig` binary.
//!
//! Exit codes: 0 success, 1 numerical failure (including IWFA
//! non-convergence under `--require-convergence`) or output I/O failure,
//! 2 usage or configuration error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fdsig::channel::{
    rate_pair, sample_channel_seeded, ChannelFile, ChannelParams, CovarianceMatrix, FdChannelModel, GainsDb,
    Node, StrategyProfile,
};
use fdsig::harness::{self, sidecar_path, ExperimentName, ExperimentSpec, HarnessError};
use fdsig::linalg::seeded_rng;
use fdsig::nash::{self, IwfaConfig, IwfaMode};
use fdsig::pareto;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Clap(e) => e.exit_code() as u8,
            CliError::Usage(_) | CliError::Parse { .. } | CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io { .. } => 1,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidParams { .. } => CliError::Config(e.to_string()),
            HarnessError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Numerical(other.to_string()),
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "fdsig", version, about = "Signaling and equilibrium tools for two-way full-duplex channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Pareto boundary of a MISO channel, as CSV.
    Pareto(CommonArgs),
    /// Iterative water-filling to a Nash equilibrium: trace CSV plus a JSON
    /// report with the final profile and the uniqueness check.
    Ne(CommonArgs),
    /// Uniqueness report as JSON.
    Uniqueness(CommonArgs),
    /// A Monte Carlo experiment from the `experiment` config section.
    Experiment(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config key; bare keys refer to the command's own section.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// RNG seed; overrides the config file (default 7).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; data goes to stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads for parallel experiments.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Exit with status 1 when IWFA does not converge.
    #[arg(long)]
    pub require_convergence: bool,
    /// Print the effective configuration and exit.
    #[arg(long)]
    pub dump_config: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Pareto,
    Ne,
    Uniqueness,
    Experiment,
}

impl CommandKind {
    fn section(self) -> Option<&'static str> {
        match self {
            CommandKind::Pareto => Some("pareto"),
            CommandKind::Ne => Some("ne"),
            CommandKind::Uniqueness => None,
            CommandKind::Experiment => Some("experiment.params"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomChannel {
    pub m: usize,
    pub n: usize,
    pub eta_db: GainsDb,
    #[serde(default)]
    pub beta_db: Option<f64>,
    pub power: [f64; 2],
    #[serde(default)]
    pub symmetric: bool,
}

impl RandomChannel {
    pub fn sample(&self, seed: u64) -> Result<FdChannelModel, CliError> {
        let db = fdsig::channel::db_to_linear;
        let params = ChannelParams {
            m: self.m,
            n: self.n,
            eta: [
                [db(self.eta_db.eta11), db(self.eta_db.eta12)],
                [db(self.eta_db.eta21), db(self.eta_db.eta22)],
            ],
            beta: self.beta_db.map_or(0.0, db),
            power: self.power,
            symmetric: self.symmetric,
        };
        sample_channel_seeded(&params, seed).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParetoSection {
    /// Targets per node.
    pub grid: usize,
    pub tol: f64,
}

impl Default for ParetoSection {
    fn default() -> Self {
        Self {
            grid: pareto::DEFAULT_GRID,
            tol: pareto::DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Uniform,
    Zero,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeSection {
    pub delta: f64,
    pub max_iter: usize,
    pub mode: IwfaMode,
    pub miss_probability: f64,
    pub init: InitKind,
}

impl Default for NeSection {
    fn default() -> Self {
        let cfg = IwfaConfig::default();
        Self {
            delta: cfg.delta,
            max_iter: cfg.max_iter,
            mode: cfg.mode,
            miss_probability: cfg.miss_probability,
            init: InitKind::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: ExperimentName,
    #[serde(default)]
    pub params: Map<String, Value>,
}

/// The whole configuration file. Each command reads the sections it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_channel: Option<RandomChannel>,
    #[serde(default)]
    pub pareto: ParetoSection,
    #[serde(default)]
    pub ne: NeSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub command: CommandKind,
    /// Effective configuration: file contents with overrides applied and the
    /// resolved seed filled in.
    pub config: Config,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    pub require_convergence: bool,
    pub dump_config: bool,
}

impl Invocation {
    pub fn effective_config_json(&self) -> String {
        serde_json::to_string_pretty(&self.config).expect("config serializes") + "\n"
    }

    pub fn channel(&self) -> Result<FdChannelModel, CliError> {
        match (&self.config.channel, &self.config.random_channel) {
            (Some(file), None) => file.to_model().map_err(|e| CliError::Config(format!("channel: {e}"))),
            (None, Some(random)) => random.sample(self.seed),
            (Some(_), Some(_)) => Err(CliError::Config("give either `channel` or `random_channel`, not both".into())),
            (None, None) => Err(CliError::Config("this command needs a `channel` or `random_channel` section".into())),
        }
    }

    pub fn experiment_spec(&self) -> Result<ExperimentSpec, CliError> {
        let section = self
            .config
            .experiment
            .as_ref()
            .ok_or_else(|| CliError::Config("missing `experiment` section".into()))?;
        Ok(ExperimentSpec {
            name: section.name,
            params: section.params.clone(),
            rng_seed: self.seed,
            output_path: self.output.clone(),
        })
    }
}

pub fn parse_invocation<I, T>(argv: I) -> Result<Invocation, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let (command, args) = match cli.command {
        CliCommand::Pareto(a) => (CommandKind::Pareto, a),
        CliCommand::Ne(a) => (CommandKind::Ne, a),
        CliCommand::Uniqueness(a) => (CommandKind::Uniqueness, a),
        CliCommand::Experiment(a) => (CommandKind::Experiment, a),
    };
    if args.threads == Some(0) {
        return Err(CliError::Usage("--threads must be positive".into()));
    }
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut raw: Value = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: args.config.clone(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    for o in &args.overrides {
        apply_override(&mut raw, command, o)?;
    }
    let mut config: Config =
        serde_json::from_value(raw).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let seed = args.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
    config.seed = Some(seed);
    let inv = Invocation {
        command,
        config,
        seed,
        output: args.output,
        threads: args.threads,
        require_convergence: args.require_convergence,
        dump_config: args.dump_config,
    };
    validate(&inv)?;
    Ok(inv)
}

const TOP_LEVEL_KEYS: [&str; 6] = ["seed", "channel", "random_channel", "pareto", "ne", "experiment"];

/// Applies `key=value`. The value is read as JSON, falling back to a plain
/// string. Bare keys that are not top-level keys go to the command's section.
pub fn apply_override(config: &mut Value, command: CommandKind, assignment: &str) -> Result<(), CliError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override '{assignment}' is not KEY=VALUE")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Usage(format!("bad override key '{key}'")));
    }
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    let path = if key.contains('.') || TOP_LEVEL_KEYS.contains(&key) {
        key.to_string()
    } else {
        let section = command.section().ok_or_else(|| {
            CliError::Usage(format!("override '{key}' needs a section prefix for this command"))
        })?;
        format!("{section}.{key}")
    };
    let mut node = config;
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("override '{key}': parent of '{part}' is not an object")))?;
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("override path has at least one segment")
}

fn validate(inv: &Invocation) -> Result<(), CliError> {
    let c = &inv.config;
    if c.pareto.grid < 2 || !(c.pareto.tol > 0.0) {
        return Err(CliError::Config("pareto.grid must be >= 2 and pareto.tol positive".into()));
    }
    iwfa_config(c, inv.seed)
        .validate()
        .map_err(|e| CliError::Config(format!("ne: {e}")))?;
    match inv.command {
        CommandKind::Experiment => {
            harness::effective_params(&inv.experiment_spec()?)?;
        }
        _ => {
            inv.channel()?;
        }
    }
    Ok(())
}

fn iwfa_config(c: &Config, seed: u64) -> IwfaConfig {
    IwfaConfig {
        delta: c.ne.delta,
        max_iter: c.ne.max_iter,
        mode: c.ne.mode,
        miss_probability: c.ne.miss_probability,
        rng_seed: seed,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_stdout(out: &mut dyn Write, bytes: &[u8]) -> Result<(), CliError> {
    out.write_all(bytes).map_err(|source| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

/// Sends `bytes` to `--output` when given, else to `out`.
fn emit(inv: &Invocation, out: &mut dyn Write, bytes: &[u8]) -> Result<(), CliError> {
    match &inv.output {
        Some(path) => write_file(path, bytes),
        None => write_stdout(out, bytes),
    }
}

fn matrix_json(q: &CovarianceMatrix) -> Value {
    let m = q.matrix().matrix();
    let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect();
    json!(rows)
}

pub fn profile_json(p: &StrategyProfile) -> Value {
    json!({ "q1": matrix_json(p.get(Node::One)), "q2": matrix_json(p.get(Node::Two)) })
}

/// Runs the invocation; data goes to `--output` or `out`.
pub fn dispatch(inv: &Invocation, out: &mut dyn Write) -> Result<(), CliError> {
    if inv.dump_config {
        return emit(inv, out, inv.effective_config_json().as_bytes());
    }
    match inv.command {
        CommandKind::Pareto => run_pareto(inv, out),
        CommandKind::Ne => run_ne(inv, out),
        CommandKind::Uniqueness => run_uniqueness(inv, out),
        CommandKind::Experiment => run_experiment(inv, out),
    }
}

fn run_pareto(inv: &Invocation, out: &mut dyn Write) -> Result<(), CliError> {
    let ch = inv.channel()?;
    if !ch.is_miso() {
        return Err(CliError::Config(format!("pareto needs a MISO channel (n = 1), got n = {}", ch.n())));
    }
    let grid = inv.config.pareto.grid;
    let points = pareto::pareto_boundary(&ch, (grid, grid), inv.config.pareto.tol).map_err(numerical)?;
    let mut buf = Vec::new();
    pareto::write_boundary_csv(&points, &mut buf).map_err(numerical)?;
    emit(inv, out, &buf)
}

fn run_ne(inv: &Invocation, out: &mut dyn Write) -> Result<(), CliError> {
    let ch = inv.channel()?;
    let init = match inv.config.ne.init {
        InitKind::Uniform => StrategyProfile::uniform(&ch),
        InitKind::Zero => StrategyProfile::zero(&ch),
        // offset keeps the init stream apart from the channel draw
        InitKind::Random => StrategyProfile::random(&ch, &mut seeded_rng(inv.seed.wrapping_add(1))),
    };
    let trace = nash::iwfa(&ch, &init, &iwfa_config(&inv.config, inv.seed)).map_err(numerical)?;
    let report = nash::uniqueness_condition(&ch).map_err(numerical)?;
    let last = trace.last();
    let rates = rate_pair(&ch, last).map_err(numerical)?;
    let summary = json!({
        "converged": trace.converged,
        "iterations": trace.iterations,
        "final_residual": trace.final_residual(),
        "rates": { "r1_bits": rates.r1, "r2_bits": rates.r2 },
        "profile": profile_json(last),
        "uniqueness": report,
    });
    let summary = serde_json::to_string_pretty(&summary).expect("report serializes") + "\n";
    match &inv.output {
        Some(path) => {
            let mut buf = Vec::new();
            nash::write_trace_csv(&trace, &mut buf).map_err(numerical)?;
            write_file(path, &buf)?;
            write_file(&sidecar_path(path), summary.as_bytes())?;
        }
        None => write_stdout(out, summary.as_bytes())?,
    }
    if inv.require_convergence && !trace.converged {
        return Err(CliError::Numerical(format!(
            "IWFA did not converge in {} iterations (residual {:e})",
            trace.iterations,
            trace.final_residual().unwrap_or(f64::NAN)
        )));
    }
    Ok(())
}

fn run_uniqueness(inv: &Invocation, out: &mut dyn Write) -> Result<(), CliError> {
    let ch = inv.channel()?;
    let report = nash::uniqueness_condition(&ch).map_err(numerical)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    emit(inv, out, text.as_bytes())
}

fn run_experiment(inv: &Invocation, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = inv.experiment_spec()?;
    let result = harness::run_and_write(&spec)?;
    if inv.output.is_none() {
        write_stdout(out, result.to_csv()?.as_bytes())?;
    }
    Ok(())
}
