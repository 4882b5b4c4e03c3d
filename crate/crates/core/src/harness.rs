//! Seeded Monte Carlo experiments producing plot-ready tables.
//!
//! Every experiment reads a typed parameter block, gives each trial its own
//! random stream under `rng_seed`, evaluates trials in parallel and aggregates them
//! in trial order, so a fixed spec always yields byte-identical CSV.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng as _;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::channel::{
    db_to_linear, rate_pair, sample_channel, simulate_frame, tdma_rate_pair, tdma_sum_rate, ChannelError,
    ChannelParams, FdChannelModel, Node, StrategyProfile,
};
use crate::linalg::{self, ComplexMatrix};
use crate::nash::{self, circulant_condition_holds, circulant_uniqueness_probability, iwfa, IwfaConfig, NashError};
use crate::pareto::{self, pareto_boundary, zf_beamforming, ParetoError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Standard deviations spanned by reported confidence intervals.
pub const CI_SIGMAS: f64 = 2.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid parameters for {experiment}: {message}")]
    InvalidParams { experiment: ExperimentName, message: String },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
    #[error(transparent)]
    Nash(#[from] NashError),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    RateRegion,
    NeVsTdma,
    UniquenessProbability,
    IwfaConvergence,
    Ber,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 5] = [
        ExperimentName::RateRegion,
        ExperimentName::NeVsTdma,
        ExperimentName::UniquenessProbability,
        ExperimentName::IwfaConvergence,
        ExperimentName::Ber,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::RateRegion => "rate_region",
            ExperimentName::NeVsTdma => "ne_vs_tdma",
            ExperimentName::UniquenessProbability => "uniqueness_probability",
            ExperimentName::IwfaConvergence => "iwfa_convergence",
            ExperimentName::Ber => "ber",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown experiment '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    /// Experiment parameters; missing keys take their defaults.
    #[serde(default)]
    pub params: Map<String, Value>,
    pub rng_seed: u64,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(name: ExperimentName, rng_seed: u64) -> Self {
        Self {
            name,
            params: Map::new(),
            rng_seed,
            output_path: None,
        }
    }

    pub fn with_param(mut self, key: &str, value: Value) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Float(x) => write!(f, "{x:?}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Bool(b) => write!(f, "{b}"),
            Cell::Empty => Ok(()),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Float)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Name, seed, version, the full effective parameter set and a summary.
    pub metadata: Value,
}

impl ExperimentResult {
    fn new(columns: &[&str], metadata: Value) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            metadata,
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Rows whose `key` column holds the text `value`.
    pub fn rows_where<'a>(&'a self, key: &str, value: &'a str) -> impl Iterator<Item = &'a Vec<Cell>> + 'a {
        let k = self.column_index(key);
        self.rows
            .iter()
            .filter(move |r| k.is_some_and(|k| r[k].as_str() == Some(value)))
    }

    pub fn value(&self, row: &[Cell], column: &str) -> Option<f64> {
        self.column_index(column).and_then(|k| row[k].as_f64())
    }

    pub fn summary(&self) -> &Value {
        &self.metadata["summary"]
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Io {
            path: PathBuf::from("<memory>"),
            source: e.into_error(),
        })?;
        Ok(String::from_utf8(bytes).expect("CSV of UTF-8 cells is UTF-8"))
    }

    /// Writes the CSV to `path` and the metadata to the sidecar path.
    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| HarnessError::Io { path, source }
        };
        fs::write(path, self.to_csv()?).map_err(io(path))?;
        let meta = sidecar_path(path);
        let text = serde_json::to_string_pretty(&self.metadata).expect("metadata is plain JSON");
        fs::write(&meta, text + "\n").map_err(io(&meta))?;
        Ok(())
    }
}

/// `results.csv` -> `results.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Mean and standard error with compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanEstimate {
    n: usize,
    sum: f64,
    sum_c: f64,
    sq: f64,
    sq_c: f64,
}

fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

impl MeanEstimate {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        neumaier(&mut self.sum, &mut self.sum_c, x);
        neumaier(&mut self.sq, &mut self.sq_c, x * x);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            (self.sum + self.sum_c) / self.n as f64
        }
    }

    /// Standard error of the mean (sample variance, `n - 1` denominator).
    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let mean = self.mean();
        let var = ((self.sq + self.sq_c) - n * mean * mean).max(0.0) / (n - 1.0);
        (var / n).sqrt()
    }
}

impl FromIterator<f64> for MeanEstimate {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = MeanEstimate::default();
        iter.into_iter().for_each(|x| m.push(x));
        m
    }
}

/// Wilson score interval for `successes` out of `trials` at `z` standard
/// deviations.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Gaussian tail `Q(x) = P(N(0, 1) > x)`.
pub fn gaussian_q(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// First downward zero crossing of `diff` over `xs`, by linear
/// interpolation between the bracketing samples.
pub fn crossover(xs: &[f64], diff: &[f64]) -> Option<f64> {
    xs.windows(2).zip(diff.windows(2)).find_map(|(x, d)| {
        if d[0] >= 0.0 && d[1] < 0.0 {
            Some(x[0] + (x[1] - x[0]) * d[0] / (d[0] - d[1]))
        } else {
            None
        }
    })
}

/// Independent stream `index` under the experiment seed `base`.
pub fn trial_rng(base: u64, index: usize) -> ChaCha8Rng {
    let mut rng = linalg::seeded_rng(base);
    rng.set_stream(index as u64);
    rng
}

fn parse_params<T: DeserializeOwned + Serialize>(spec: &ExperimentSpec) -> Result<(T, Value), HarnessError> {
    let value = Value::Object(spec.params.clone());
    let params: T = serde_json::from_value(value).map_err(|e| HarnessError::InvalidParams {
        experiment: spec.name,
        message: e.to_string(),
    })?;
    let echo = serde_json::to_value(&params).expect("parameter structs serialize");
    Ok((params, echo))
}

fn invalid(spec: &ExperimentSpec, message: impl Into<String>) -> HarnessError {
    HarnessError::InvalidParams {
        experiment: spec.name,
        message: message.into(),
    }
}

fn metadata(spec: &ExperimentSpec, params: Value, summary: Value) -> Value {
    json!({
        "experiment": spec.name.as_str(),
        "rng_seed": spec.rng_seed,
        "version": VERSION,
        "params": params,
        "summary": summary,
    })
}

fn effective_trials(trials: Option<usize>, full_scale: bool, desk: usize, full: usize) -> usize {
    trials.unwrap_or(if full_scale { full } else { desk })
}

/// Symmetric Rayleigh draw with the self-interference matrix scaled to
/// entry variance `self_variance`.
fn symmetric_draw(
    m: usize,
    n: usize,
    direct: f64,
    self_gain: f64,
    beta: f64,
    power: f64,
    self_variance: f64,
    rng: &mut ChaCha8Rng,
) -> Result<FdChannelModel, ChannelError> {
    let params = ChannelParams::symmetric_gains(m, n, direct, self_gain, beta, power);
    let ch = sample_channel(&params, rng)?;
    if self_variance == 1.0 {
        return Ok(ch);
    }
    let s = ch.h(Node::One, Node::One).scale(self_variance.sqrt());
    let d = ch.h(Node::One, Node::Two).clone();
    FdChannelModel::new([[s.clone(), d.clone()], [d, s]], params.eta, beta, params.power)
}

/// Symmetric MISO draw with `||h_ij|| = ||h_ii|| = 1`.
fn unit_norm_miso(m: usize, seed: u64) -> Result<FdChannelModel, ChannelError> {
    let ch = sample_channel(
        &ChannelParams::symmetric_gains(m, 1, 1.0, 1.0, 0.0, 1.0),
        &mut trial_rng(seed, 0),
    )?;
    let unit = |h: &ComplexMatrix| h.scale(1.0 / h.norm());
    let s = unit(ch.h(Node::One, Node::One));
    let d = unit(ch.h(Node::One, Node::Two));
    FdChannelModel::new([[s.clone(), d.clone()], [d, s]], [[1.0; 2]; 2], 0.0, [1.0, 1.0])
}

fn with_symmetric_gains(
    ch: &FdChannelModel,
    direct: f64,
    self_gain: f64,
    beta: f64,
    power: f64,
) -> Result<FdChannelModel, ChannelError> {
    ch.with_eta([[self_gain, direct], [direct, self_gain]])?
        .with_beta(beta)?
        .with_power([power, power])
}

fn beta_from_db(beta_db: Option<f64>) -> f64 {
    beta_db.map_or(0.0, db_to_linear)
}

/// Checks `spec.params` against the experiment's schema and returns the full
/// effective parameter set, defaults included.
pub fn effective_params(spec: &ExperimentSpec) -> Result<Value, HarnessError> {
    match spec.name {
        ExperimentName::RateRegion => parse_params::<RateRegionParams>(spec).map(|(_, echo)| echo),
        ExperimentName::NeVsTdma => parse_params::<NeVsTdmaParams>(spec).map(|(_, echo)| echo),
        ExperimentName::UniquenessProbability => parse_params::<UniquenessProbabilityParams>(spec).map(|(_, echo)| echo),
        ExperimentName::IwfaConvergence => parse_params::<IwfaConvergenceParams>(spec).map(|(_, echo)| echo),
        ExperimentName::Ber => parse_params::<BerParams>(spec).map(|(_, echo)| echo),
    }
}

pub fn run(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    match spec.name {
        ExperimentName::RateRegion => run_rate_region(spec),
        ExperimentName::NeVsTdma => run_ne_vs_tdma(spec),
        ExperimentName::UniquenessProbability => run_uniqueness_probability(spec),
        ExperimentName::IwfaConvergence => run_iwfa_convergence(spec),
        ExperimentName::Ber => run_ber(spec),
    }
}

/// Runs `spec` and, when it names an output path, writes CSV and sidecar.
pub fn run_and_write(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    let result = run(spec)?;
    if let Some(path) = &spec.output_path {
        result.write(path)?;
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateRegionParams {
    pub m: usize,
    pub power: f64,
    /// `null` entries mean no front-end noise.
    pub beta_db: Vec<Option<f64>>,
    pub gamma_db: Vec<f64>,
    pub eta_direct_db: f64,
    pub grid: usize,
    pub tdma_points: usize,
    /// Also emit the front-end-noise-free boundary.
    pub include_ideal: bool,
}

impl Default for RateRegionParams {
    fn default() -> Self {
        Self {
            m: 3,
            power: 1.0,
            beta_db: vec![Some(-40.0), Some(-60.0)],
            gamma_db: vec![-20.0, -30.0, -40.0, -50.0, -60.0],
            eta_direct_db: 10.0,
            grid: pareto::DEFAULT_GRID,
            tdma_points: 101,
            include_ideal: true,
        }
    }
}

/// MISO rate regions of one unit-norm symmetric channel draw: Pareto
/// boundary, equilibrium and zero-forcing points per `(beta, gamma)`, plus
/// the TDMA line and the ideal full-duplex corner.
pub fn run_rate_region(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    let (p, echo): (RateRegionParams, _) = parse_params(spec)?;
    if p.m < 2 {
        return Err(invalid(spec, "rate regions need m >= 2 for zero-forcing"));
    }
    if !(p.power > 0.0) || p.grid < 2 || p.tdma_points < 2 || p.gamma_db.is_empty() || p.beta_db.is_empty() {
        return Err(invalid(spec, "power > 0, grid >= 2, tdma_points >= 2 and nonempty sweeps required"));
    }
    let base = unit_norm_miso(p.m, spec.rng_seed)?;
    let direct = db_to_linear(p.eta_direct_db);
    let mut out = ExperimentResult::new(
        &["block", "beta_db", "gamma_db", "z1", "z2", "r1_bits", "r2_bits"],
        Value::Null,
    );
    let tol = pareto::DEFAULT_TOL;
    let mut summary = Vec::new();
    let db_cell = |x: Option<f64>| x.map_or(Cell::Empty, Cell::Float);

    let reference = with_symmetric_gains(&base, direct, direct, 0.0, p.power)?;
    for t in 0..p.tdma_points {
        let frac = t as f64 / (p.tdma_points - 1) as f64;
        let r = tdma_rate_pair(&reference, frac);
        out.push(vec!["tdma".into(), Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, r.r1.into(), r.r2.into()]);
    }
    if p.include_ideal {
        for pt in pareto_boundary(&reference, (p.grid, p.grid), tol)? {
            out.push(vec![
                "ideal".into(),
                Cell::Empty,
                Cell::Empty,
                pt.z1.into(),
                pt.z2.into(),
                pt.rates.r1.into(),
                pt.rates.r2.into(),
            ]);
        }
    }
    for &beta_db in &p.beta_db {
        for &gamma_db in &p.gamma_db {
            let self_gain = db_to_linear(p.eta_direct_db - gamma_db);
            let ch = with_symmetric_gains(&base, direct, self_gain, beta_from_db(beta_db), p.power)?;
            let points = pareto_boundary(&ch, (p.grid, p.grid), tol)?;
            let max_sum = points.iter().map(|pt| pt.rates.sum()).fold(0.0, f64::max);
            for pt in &points {
                out.push(vec![
                    "boundary".into(),
                    db_cell(beta_db),
                    gamma_db.into(),
                    pt.z1.into(),
                    pt.z2.into(),
                    pt.rates.r1.into(),
                    pt.rates.r2.into(),
                ]);
            }
            let ne = nash::miso_ne(&ch)?;
            let ne_rates = rate_pair(&ch, &ne.profile)?;
            let zf = StrategyProfile::new(
                zf_beamforming(&ch, Node::One)?.covariance(),
                zf_beamforming(&ch, Node::Two)?.covariance(),
            );
            let zf_rates = rate_pair(&ch, &zf)?;
            for (block, r) in [("ne", ne_rates), ("zf", zf_rates)] {
                out.push(vec![
                    block.into(),
                    db_cell(beta_db),
                    gamma_db.into(),
                    Cell::Empty,
                    Cell::Empty,
                    r.r1.into(),
                    r.r2.into(),
                ]);
            }
            summary.push(json!({
                "beta_db": beta_db,
                "gamma_db": gamma_db,
                "boundary_points": points.len(),
                "max_sum_rate": max_sum,
                "ne_sum_rate": ne_rates.sum(),
                "zf_sum_rate": zf_rates.sum(),
            }));
        }
    }
    out.metadata = metadata(
        spec,
        echo,
        json!({ "tdma_sum_rate": tdma_sum_rate(&reference), "regions": summary }),
    );
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeVsTdmaParams {
    pub m: usize,
    pub n: usize,
    pub power: f64,
    pub beta_db: f64,
    pub eta_direct_db: Vec<f64>,
    pub eta_self_db: Vec<f64>,
    pub trials: Option<usize>,
    pub full_scale: bool,
    /// Entry variance of the self-interference matrix.
    pub self_channel_variance: f64,
    pub delta: f64,
    pub max_iter: usize,
}

impl Default for NeVsTdmaParams {
    fn default() -> Self {
        Self {
            m: 3,
            n: 3,
            power: 10.0,
            beta_db: -60.0,
            eta_direct_db: vec![0.0, 10.0, 20.0],
            eta_self_db: (0..=25).map(|k| 4.0 * k as f64).collect(),
            trials: None,
            full_scale: false,
            self_channel_variance: 1.0,
            delta: nash::DEFAULT_DELTA,
            max_iter: nash::DEFAULT_MAX_ITER,
        }
    }
}

/// Equilibrium versus TDMA sum rate over a grid of direct and
/// self-interference gains. Each trial draws one channel and evaluates it at
/// every grid point; draws whose IWFA run does not converge are excluded and
/// counted.
pub fn run_ne_vs_tdma(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    let (p, echo): (NeVsTdmaParams, _) = parse_params(spec)?;
    let trials = effective_trials(p.trials, p.full_scale, 200, 1000);
    if p.m == 0 || p.n == 0 || !(p.power > 0.0) || trials == 0 || p.eta_direct_db.is_empty() || p.eta_self_db.is_empty() {
        return Err(invalid(spec, "dimensions, power, trials and gain sweeps must be positive/nonempty"));
    }
    if !(p.self_channel_variance > 0.0) {
        return Err(invalid(spec, "self_channel_variance must be positive"));
    }
    let mut sorted = p.eta_self_db.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted != p.eta_self_db {
        return Err(invalid(spec, "eta_self_db must be ascending"));
    }
    let cfg = IwfaConfig {
        delta: p.delta,
        max_iter: p.max_iter,
        ..IwfaConfig::default()
    };
    cfg.validate().map_err(|e| invalid(spec, e.to_string()))?;
    let beta = db_to_linear(p.beta_db);
    let cells = p.eta_direct_db.len() * p.eta_self_db.len();

    // per trial and grid cell: (NE sum rate if converged, TDMA sum rate)
    let per_trial: Result<Vec<Vec<(Option<f64>, f64)>>, HarnessError> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let base = symmetric_draw(p.m, p.n, 1.0, 1.0, beta, p.power, p.self_channel_variance, &mut trial_rng(spec.rng_seed, t))?;
            let mut row = Vec::with_capacity(cells);
            for &d_db in &p.eta_direct_db {
                for &s_db in &p.eta_self_db {
                    let ch = with_symmetric_gains(&base, db_to_linear(d_db), db_to_linear(s_db), beta, p.power)?;
                    let trace = iwfa(&ch, &StrategyProfile::uniform(&ch), &cfg)?;
                    let ne = trace.converged.then(|| trace.rates.last().map_or(0.0, |r| r.sum()));
                    row.push((ne, tdma_sum_rate(&ch)));
                }
            }
            Ok(row)
        })
        .collect();
    let per_trial = per_trial?;

    let mut out = ExperimentResult::new(
        &["eta_direct_db", "eta_self_db", "ne_sum_rate", "ne_se", "tdma_sum_rate", "tdma_se", "trials_used", "excluded"],
        Value::Null,
    );
    let mut crossovers = Map::new();
    let mut total_excluded = 0;
    for (a, &d_db) in p.eta_direct_db.iter().enumerate() {
        let mut diff = Vec::with_capacity(p.eta_self_db.len());
        for (b, &s_db) in p.eta_self_db.iter().enumerate() {
            let idx = a * p.eta_self_db.len() + b;
            let ne: MeanEstimate = per_trial.iter().filter_map(|row| row[idx].0).collect();
            let tdma: MeanEstimate = per_trial.iter().map(|row| row[idx].1).collect();
            let excluded = trials - ne.count();
            total_excluded += excluded;
            diff.push(ne.mean() - tdma.mean());
            out.push(vec![
                d_db.into(),
                s_db.into(),
                ne.mean().into(),
                ne.std_error().into(),
                tdma.mean().into(),
                tdma.std_error().into(),
                ne.count().into(),
                excluded.into(),
            ]);
        }
        crossovers.insert(format!("{d_db}"), json!(crossover(&p.eta_self_db, &diff)));
    }
    let mut echo = echo;
    echo["trials"] = json!(trials);
    out.metadata = metadata(
        spec,
        echo,
        json!({
            "crossover_eta_self_db": crossovers,
            "excluded_runs": total_excluded,
            "exclusion_rate": total_excluded as f64 / (trials * cells) as f64,
        }),
    );
    Ok(out)
}

/// Crossover self-interference gains from a [`run_ne_vs_tdma`] result,
/// keyed by direct gain in dB.
pub fn ne_vs_tdma_crossovers(result: &ExperimentResult) -> Vec<(f64, Option<f64>)> {
    let mut out = Vec::new();
    if let Some(map) = result.summary()["crossover_eta_self_db"].as_object() {
        for (k, v) in map {
            if let Ok(d) = k.parse::<f64>() {
                out.push((d, v.as_f64()));
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniquenessProbabilityParams {
    pub m: usize,
    pub beta_db: Vec<f64>,
    pub gamma_db: Vec<f64>,
    pub trials: Option<usize>,
    pub full_scale: bool,
}

impl Default for UniquenessProbabilityParams {
    fn default() -> Self {
        Self {
            m: 3,
            beta_db: vec![-40.0, -60.0],
            gamma_db: (0..=20).map(|k| -80.0 + 5.0 * k as f64).collect(),
            trials: None,
            full_scale: false,
        }
    }
}

/// Probability that a symmetric circulant channel meets the circulant
/// uniqueness condition: closed form and Monte Carlo over generator draws.
/// Every `(beta, gamma)` point reuses the same draws.
pub fn run_uniqueness_probability(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    let (p, echo): (UniquenessProbabilityParams, _) = parse_params(spec)?;
    let trials = effective_trials(p.trials, p.full_scale, 100_000, 1_000_000);
    if p.m == 0 || trials == 0 || p.beta_db.is_empty() || p.gamma_db.is_empty() {
        return Err(invalid(spec, "m, trials and sweeps must be positive/nonempty"));
    }
    let points: Vec<(f64, f64)> = p
        .beta_db
        .iter()
        .flat_map(|&b| p.gamma_db.iter().map(move |&g| (b, g)))
        .collect();
    let counts = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(spec.rng_seed, t);
            let mut row = || -> Vec<Complex64> { (0..p.m).map(|_| linalg::complex_gaussian(&mut rng)).collect() };
            let (own, direct) = (row(), row());
            let rows = [[own.clone(), direct.clone()], [direct, own]];
            points
                .iter()
                .map(|&(b, g)| {
                    let gamma = db_to_linear(g);
                    u64::from(circulant_condition_holds(&rows, (gamma, gamma), db_to_linear(b)))
                })
                .collect::<Vec<u64>>()
        })
        .reduce(
            || vec![0; points.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let mut out = ExperimentResult::new(
        &["beta_db", "gamma_db", "analytic", "monte_carlo", "mc_se", "trials"],
        Value::Null,
    );
    let mut max_gap = 0.0f64;
    for (&(b, g), &hits) in points.iter().zip(&counts) {
        let analytic = circulant_uniqueness_probability(p.m, db_to_linear(g), db_to_linear(b));
        let mc = hits as f64 / trials as f64;
        let se = (mc * (1.0 - mc) / trials as f64).sqrt();
        max_gap = max_gap.max((analytic - mc).abs());
        out.push(vec![b.into(), g.into(), analytic.into(), mc.into(), se.into(), trials.into()]);
    }
    let mut echo = echo;
    echo["trials"] = json!(trials);
    out.metadata = metadata(spec, echo, json!({ "max_abs_gap": max_gap }));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IwfaConvergenceParams {
    pub m: usize,
    pub n: usize,
    pub power: f64,
    /// `null` means no front-end noise.
    pub beta_db: Option<f64>,
    pub eta_direct_db: f64,
    pub gamma_db: Vec<f64>,
    /// Step budgets `X`.
    pub steps: Vec<usize>,
    pub trials: Option<usize>,
    pub full_scale: bool,
    pub delta: f64,
}

impl Default for IwfaConvergenceParams {
    fn default() -> Self {
        Self {
            m: 3,
            n: 3,
            power: 10.0,
            beta_db: Some(-60.0),
            eta_direct_db: 0.0,
            gamma_db: vec![-40.0, -30.0, -20.0, -10.0, 0.0],
            steps: vec![1, 2, 3, 4, 5, 7, 10, 15, 20],
            trials: None,
            full_scale: false,
            delta: nash::DEFAULT_DELTA,
        }
    }
}

/// Probability that synchronous IWFA from uniform power reaches a residual
/// below `delta` within `X` iterations, per `gamma` and step budget `X`.
pub fn run_iwfa_convergence(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    let (p, echo): (IwfaConvergenceParams, _) = parse_params(spec)?;
    let trials = effective_trials(p.trials, p.full_scale, 10_000, 100_000);
    if p.m == 0 || p.n == 0 || !(p.power > 0.0) || trials == 0 || p.gamma_db.is_empty() || p.steps.is_empty() {
        return Err(invalid(spec, "dimensions, power, trials and sweeps must be positive/nonempty"));
    }
    if p.steps.contains(&0) {
        return Err(invalid(spec, "step budgets must be positive"));
    }
    let max_steps = *p.steps.iter().max().expect("nonempty");
    let cfg = IwfaConfig {
        delta: p.delta,
        max_iter: max_steps,
        ..IwfaConfig::default()
    };
    cfg.validate().map_err(|e| invalid(spec, e.to_string()))?;
    let beta = beta_from_db(p.beta_db);
    let direct = db_to_linear(p.eta_direct_db);

    // per trial and gamma: first iteration with residual < delta
    let per_trial: Result<Vec<Vec<Option<usize>>>, HarnessError> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let base = symmetric_draw(p.m, p.n, 1.0, 1.0, beta, p.power, 1.0, &mut trial_rng(spec.rng_seed, t))?;
            p.gamma_db
                .iter()
                .map(|&g| {
                    let ch = with_symmetric_gains(&base, direct, db_to_linear(p.eta_direct_db - g), beta, p.power)?;
                    let trace = iwfa(&ch, &StrategyProfile::uniform(&ch), &cfg)?;
                    Ok(trace.first_below(p.delta))
                })
                .collect()
        })
        .collect();
    let per_trial = per_trial?;
    let mut out = ExperimentResult::new(&["gamma_db", "steps", "probability", "se", "trials"], Value::Null);
    for (k, &g) in p.gamma_db.iter().enumerate() {
        for &x in &p.steps {
            let hits = per_trial.iter().filter(|row| row[k].is_some_and(|it| it <= x)).count();
            let prob = hits as f64 / trials as f64;
            let se = (prob * (1.0 - prob) / trials as f64).sqrt();
            out.push(vec![g.into(), x.into(), prob.into(), se.into(), trials.into()]);
        }
    }
    let mut echo = echo;
    echo["trials"] = json!(trials);
    out.metadata = metadata(spec, echo, json!({}));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BerStrategy {
    /// Pareto-boundary point of maximum sum rate.
    Optimal,
    Ne,
    Zf,
}

impl BerStrategy {
    fn as_str(self) -> &'static str {
        match self {
            BerStrategy::Optimal => "optimal",
            BerStrategy::Ne => "ne",
            BerStrategy::Zf => "zf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BerParams {
    pub m: usize,
    pub power: f64,
    /// `null` means no front-end noise.
    pub beta_db: Option<f64>,
    pub gamma_db: f64,
    /// `SNR = eta_ij P`, thermal noise normalized to one.
    pub snr_db: Vec<f64>,
    pub bits: usize,
    pub strategies: Vec<BerStrategy>,
    /// Boundary grid used to locate the maximum-sum-rate point.
    pub grid: usize,
}

impl Default for BerParams {
    fn default() -> Self {
        Self {
            m: 3,
            power: 1.0,
            beta_db: Some(-60.0),
            gamma_db: -40.0,
            snr_db: (0..=10).map(|k| -4.0 + 2.0 * k as f64).collect(),
            bits: 100_000,
            strategies: vec![BerStrategy::Optimal, BerStrategy::Ne, BerStrategy::Zf],
            grid: 100,
        }
    }
}

fn ber_profile(ch: &FdChannelModel, strategy: BerStrategy, grid: usize) -> Result<StrategyProfile, HarnessError> {
    Ok(match strategy {
        BerStrategy::Ne => nash::miso_ne(ch)?.profile,
        BerStrategy::Zf => StrategyProfile::new(
            zf_beamforming(ch, Node::One)?.covariance(),
            zf_beamforming(ch, Node::Two)?.covariance(),
        ),
        BerStrategy::Optimal => {
            let points = pareto_boundary(ch, (grid, grid), pareto::DEFAULT_TOL)?;
            points
                .into_iter()
                .max_by(|a, b| a.rates.sum().total_cmp(&b.rates.sum()))
                .expect("boundary is never empty")
                .profile
        }
    })
}

/// Rank-one beamformer `w` with `Q = w w^H`.
fn beamformer_of(q: &crate::channel::CovarianceMatrix) -> DVector<Complex64> {
    let eig = linalg::hermitian_eig(q.matrix());
    eig.eigenvectors.column(0).scale(eig.eigenvalues[0].max(0.0).sqrt())
}

/// Per-bit error probability of Gray-mapped QPSK, `Q(sqrt(SINR))`, for the
/// link from node 1 to node 2 under `profile`.
pub fn qpsk_ber_analytic(ch: &FdChannelModel, profile: &StrategyProfile) -> Result<f64, HarnessError> {
    let sinr = miso_sinr(ch, profile)?;
    Ok(gaussian_q(sinr.sqrt()))
}

fn miso_sinr(ch: &FdChannelModel, profile: &StrategyProfile) -> Result<f64, HarnessError> {
    let h = ch.miso_vector(Node::One, Node::Two)?;
    let h_self = ch.miso_vector(Node::Two, Node::Two)?;
    let signal = crate::channel::quad_form(profile.get(Node::One).matrix(), &h);
    let d = profile.get(Node::Two).matrix().real_diagonal();
    let si: f64 = h_self.iter().zip(&d).map(|(x, q)| x.norm_sqr() * q).sum();
    Ok(ch.eta(Node::One, Node::Two) * signal / (1.0 + ch.beta() * ch.eta(Node::Two, Node::Two) * si))
}

/// Simulated bit errors over `frames` QPSK symbols from node 1 to node 2,
/// detected coherently against the known effective scalar channel.
pub fn simulate_qpsk_errors(
    ch: &FdChannelModel,
    profile: &StrategyProfile,
    frames: usize,
    rng: &mut ChaCha8Rng,
) -> Result<u64, HarnessError> {
    let w1 = beamformer_of(profile.get(Node::One));
    let w2 = beamformer_of(profile.get(Node::Two));
    let gain = (ch.h(Node::One, Node::Two) * &w1)[0] * ch.eta(Node::One, Node::Two).sqrt();
    let amp = std::f64::consts::FRAC_1_SQRT_2;
    let mut errors = 0u64;
    for _ in 0..frames {
        let bits: [bool; 4] = [rng.random(), rng.random(), rng.random(), rng.random()];
        let sym = |b0: bool, b1: bool| Complex64::new(if b0 { amp } else { -amp }, if b1 { amp } else { -amp });
        let x1 = sym(bits[0], bits[1]);
        let x2 = sym(bits[2], bits[3]);
        let frame = simulate_frame(ch, profile, [w1.clone() * x1, w2.clone() * x2], rng)?;
        let est = if gain.norm() > 0.0 {
            frame.y[1][0] / gain
        } else {
            Complex64::new(0.0, 0.0)
        };
        // ties at zero go to the negative symbol
        errors += u64::from((est.re > 0.0) != bits[0]) + u64::from((est.im > 0.0) != bits[1]);
    }
    Ok(errors)
}

/// QPSK bit error rate of one link per strategy and SNR, with Wilson
/// intervals and the exact Gaussian-noise reference.
pub fn run_ber(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    let (p, echo): (BerParams, _) = parse_params(spec)?;
    if p.m < 2 || !(p.power > 0.0) || p.bits < 2 || p.snr_db.is_empty() || p.strategies.is_empty() || p.grid < 2 {
        return Err(invalid(spec, "m >= 2, power > 0, bits >= 2, grid >= 2 and nonempty sweeps required"));
    }
    let base = unit_norm_miso(p.m, spec.rng_seed)?;
    let beta = beta_from_db(p.beta_db);
    let frames = p.bits.div_ceil(2);
    let jobs: Vec<(BerStrategy, f64)> = p
        .strategies
        .iter()
        .flat_map(|&s| p.snr_db.iter().map(move |&snr| (s, snr)))
        .collect();
    let results: Result<Vec<(u64, f64)>, HarnessError> = jobs
        .par_iter()
        .enumerate()
        .map(|(k, &(strategy, snr_db))| {
            let direct = db_to_linear(snr_db) / p.power;
            let self_gain = direct / db_to_linear(p.gamma_db);
            let ch = with_symmetric_gains(&base, direct, self_gain, beta, p.power)?;
            let profile = ber_profile(&ch, strategy, p.grid)?;
            let errors = simulate_qpsk_errors(&ch, &profile, frames, &mut trial_rng(spec.rng_seed, k + 1))?;
            Ok((errors, qpsk_ber_analytic(&ch, &profile)?))
        })
        .collect();
    let mut out = ExperimentResult::new(
        &["strategy", "snr_db", "bits", "errors", "ber", "ci_low", "ci_high", "analytic_ber"],
        Value::Null,
    );
    let bits = 2 * frames as u64;
    for (&(strategy, snr_db), (errors, analytic)) in jobs.iter().zip(results?) {
        let (lo, hi) = wilson_interval(errors, bits, CI_SIGMAS);
        out.push(vec![
            strategy.as_str().into(),
            snr_db.into(),
            Cell::Int(bits as i64),
            Cell::Int(errors as i64),
            (errors as f64 / bits as f64).into(),
            lo.into(),
            hi.into(),
            analytic.into(),
        ]);
    }
    out.metadata = metadata(spec, echo, json!({ "ci_sigmas": CI_SIGMAS }));
    Ok(out)
}
