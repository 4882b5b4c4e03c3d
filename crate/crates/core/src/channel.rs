//! Two-way full-duplex channel with transmit front-end noise.
//!
//! Node `i` transmits `s_i` with covariance `Q_i` through an imperfect front
//! end that adds `e_i ~ CN(0, beta * diag(Q_i))`. After cancelling its own
//! known `s_i`, receiver `i` observes
//!
//! ```text
//! y_i = sqrt(eta_ji) H_ji s_j + sqrt(eta_ii) H_ii e_i + n_i,   n_i ~ CN(0, I)
//! ```
//!
//! so the effective noise covariance is
//! `Sigma_i = I + beta eta_ii H_ii diag(Q_i) H_ii^H`. Rates are in bits
//! (log base 2) throughout. Gains and `beta` are linear; conversion from dB
//! happens only when reading or writing [`ChannelFile`].

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    self, hermitian_eig, log2_det_hpd, sample_complex_gaussian, ComplexMatrix, ComplexVector,
    HermitianMatrix, LinalgError,
};
use crate::waterfill::water_fill;

/// PSD floor for covariance matrices, relative to the trace.
pub const PSD_TOL: f64 = 1e-8;
/// Relative slack on the power budget.
pub const BUDGET_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel: {0}")]
    Invalid(String),
    #[error("covariance is not PSD: min eigenvalue {min_eig:e} with trace {trace:e}")]
    NotPsd { min_eig: f64, trace: f64 },
    #[error("covariance trace {trace} exceeds power budget {budget}")]
    OverBudget { trace: f64, budget: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("operation needs a single receive antenna (N = 1), channel has N = {0}")]
    NotMiso(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// One of the two full-duplex nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Node {
    One,
    Two,
}

impl Node {
    pub const BOTH: [Node; 2] = [Node::One, Node::Two];

    pub fn index(self) -> usize {
        match self {
            Node::One => 0,
            Node::Two => 1,
        }
    }

    pub fn other(self) -> Node {
        match self {
            Node::One => Node::Two,
            Node::Two => Node::One,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Channel matrices `H_ij` (N x M), gains `eta_ij`, front-end noise level
/// `beta` and power budgets. `H_ij` with `i != j` is the direct link from
/// node `i` to node `j`; `H_ii` is node `i`'s self-interference channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FdChannelModel {
    m: usize,
    n: usize,
    h: [[ComplexMatrix; 2]; 2],
    eta: [[f64; 2]; 2],
    beta: f64,
    power: [f64; 2],
}

impl FdChannelModel {
    /// `h[i][j]` is `H_{i+1, j+1}`, likewise for `eta`.
    pub fn new(
        h: [[ComplexMatrix; 2]; 2],
        eta: [[f64; 2]; 2],
        beta: f64,
        power: [f64; 2],
    ) -> Result<Self, ChannelError> {
        let (n, m) = h[0][0].shape();
        if n == 0 || m == 0 {
            return Err(ChannelError::Invalid("empty channel matrix".into()));
        }
        for row in &h {
            for hij in row {
                if hij.shape() != (n, m) {
                    return Err(ChannelError::Dimension(format!(
                        "all channel matrices must be {n}x{m}, found {}x{}",
                        hij.nrows(),
                        hij.ncols()
                    )));
                }
                if hij.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(ChannelError::Invalid("non-finite channel entry".into()));
                }
            }
        }
        if eta.iter().flatten().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(ChannelError::Invalid(format!("gains must be positive and finite: {eta:?}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(ChannelError::Invalid(format!("beta must be >= 0, got {beta}")));
        }
        if power.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(ChannelError::Invalid(format!("power budgets must be positive: {power:?}")));
        }
        Ok(Self {
            m,
            n,
            h,
            eta,
            beta,
            power,
        })
    }

    /// Transmit antennas per node.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Receive antennas per node.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self, from: Node, to: Node) -> &ComplexMatrix {
        &self.h[from.index()][to.index()]
    }

    pub fn eta(&self, from: Node, to: Node) -> f64 {
        self.eta[from.index()][to.index()]
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn power(&self, node: Node) -> f64 {
        self.power[node.index()]
    }

    /// `gamma_i = eta_ji / eta_ii`: direct gain into node `i` over its
    /// self-interference gain.
    pub fn gamma(&self, node: Node) -> f64 {
        self.eta(node.other(), node) / self.eta(node, node)
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self, ChannelError> {
        Self::new(self.h.clone(), self.eta, beta, self.power)
    }

    pub fn with_eta(&self, eta: [[f64; 2]; 2]) -> Result<Self, ChannelError> {
        Self::new(self.h.clone(), eta, self.beta, self.power)
    }

    pub fn with_power(&self, power: [f64; 2]) -> Result<Self, ChannelError> {
        Self::new(self.h.clone(), self.eta, self.beta, power)
    }

    /// MISO channel vector `h_ij` (the single row of `H_ij`, as a column).
    /// Rates use `h^H Q h`, so the stored row is conjugated.
    pub fn miso_vector(&self, from: Node, to: Node) -> Result<ComplexVector, ChannelError> {
        if self.n != 1 {
            return Err(ChannelError::NotMiso(self.n));
        }
        Ok(self.h(from, to).row(0).adjoint())
    }

    pub fn is_miso(&self) -> bool {
        self.n == 1
    }
}

/// A transmit covariance `Q` with `Q >= 0` and `tr(Q) <= power_budget`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    q: HermitianMatrix,
    power_budget: f64,
}

impl CovarianceMatrix {
    pub fn new(q: HermitianMatrix, power_budget: f64) -> Result<Self, ChannelError> {
        let trace = q.trace();
        if q.dim() > 0 {
            let min_eig = q.min_eigenvalue();
            if min_eig < -PSD_TOL * trace.abs().max(f64::MIN_POSITIVE) && min_eig < -1e-300 {
                return Err(ChannelError::NotPsd { min_eig, trace });
            }
        }
        if trace > power_budget * (1.0 + BUDGET_TOL) {
            return Err(ChannelError::OverBudget {
                trace,
                budget: power_budget,
            });
        }
        Ok(Self { q, power_budget })
    }

    pub fn zero(m: usize, power_budget: f64) -> Self {
        Self {
            q: HermitianMatrix::zeros(m),
            power_budget,
        }
    }

    /// `(P / M) I`.
    pub fn uniform(m: usize, power_budget: f64) -> Self {
        Self {
            q: HermitianMatrix::from_real_diagonal(&vec![power_budget / m as f64; m]),
            power_budget,
        }
    }

    /// Rank-one `w w^H`.
    pub fn from_beamformer(w: &ComplexVector, power_budget: f64) -> Result<Self, ChannelError> {
        Self::new(HermitianMatrix::outer(w), power_budget)
    }

    /// Random feasible covariance: `G G^H` scaled to a random trace in
    /// `[0, P]`, with rank drawn from `1..=m`.
    pub fn random<R: Rng + ?Sized>(m: usize, power_budget: f64, rng: &mut R) -> Self {
        let rank = rng.random_range(1..=m);
        let g = sample_complex_gaussian(m, rank, rng);
        let raw = HermitianMatrix::symmetrized(&g * g.adjoint());
        let t: f64 = rng.random_range(0.0..=1.0);
        let scale = t * power_budget / raw.trace();
        Self {
            q: HermitianMatrix::symmetrized(raw.into_matrix().scale(scale)),
            power_budget,
        }
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.q
    }

    pub fn power_budget(&self) -> f64 {
        self.power_budget
    }

    pub fn trace(&self) -> f64 {
        self.q.trace()
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }
}

/// The pair `(Q_1, Q_2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    q: [CovarianceMatrix; 2],
}

impl StrategyProfile {
    pub fn new(q1: CovarianceMatrix, q2: CovarianceMatrix) -> Self {
        Self { q: [q1, q2] }
    }

    /// Checks both covariances against the channel's dimensions and budgets.
    pub fn validated(q1: CovarianceMatrix, q2: CovarianceMatrix, ch: &FdChannelModel) -> Result<Self, ChannelError> {
        let p = Self::new(q1, q2);
        p.check_against(ch)?;
        Ok(p)
    }

    pub fn check_against(&self, ch: &FdChannelModel) -> Result<(), ChannelError> {
        for node in Node::BOTH {
            let q = self.get(node);
            if q.dim() != ch.m() {
                return Err(ChannelError::Dimension(format!(
                    "covariance of node {} is {}x{}, channel has M = {}",
                    node.index() + 1,
                    q.dim(),
                    q.dim(),
                    ch.m()
                )));
            }
            if q.trace() > ch.power(node) * (1.0 + BUDGET_TOL) {
                return Err(ChannelError::OverBudget {
                    trace: q.trace(),
                    budget: ch.power(node),
                });
            }
        }
        Ok(())
    }

    pub fn zero(ch: &FdChannelModel) -> Self {
        Self::new(
            CovarianceMatrix::zero(ch.m(), ch.power(Node::One)),
            CovarianceMatrix::zero(ch.m(), ch.power(Node::Two)),
        )
    }

    pub fn uniform(ch: &FdChannelModel) -> Self {
        Self::new(
            CovarianceMatrix::uniform(ch.m(), ch.power(Node::One)),
            CovarianceMatrix::uniform(ch.m(), ch.power(Node::Two)),
        )
    }

    pub fn random<R: Rng + ?Sized>(ch: &FdChannelModel, rng: &mut R) -> Self {
        let q1 = CovarianceMatrix::random(ch.m(), ch.power(Node::One), rng);
        let q2 = CovarianceMatrix::random(ch.m(), ch.power(Node::Two), rng);
        Self::new(q1, q2)
    }

    pub fn get(&self, node: Node) -> &CovarianceMatrix {
        &self.q[node.index()]
    }

    pub fn with(&self, node: Node, q: CovarianceMatrix) -> Self {
        let mut out = self.clone();
        out.q[node.index()] = q;
        out
    }

    /// `(||Q1 - Q1'||_F, ||Q2 - Q2'||_F)`.
    pub fn node_distances(&self, other: &Self) -> (f64, f64) {
        let d = |n: Node| (self.get(n).matrix() - other.get(n).matrix()).frobenius();
        (d(Node::One), d(Node::Two))
    }

    /// Frobenius norm of the stacked difference.
    pub fn distance(&self, other: &Self) -> f64 {
        let (a, b) = self.node_distances(other);
        a.hypot(b)
    }
}

/// `(r_1, r_2)` in bits per channel use; `r_1` is the rate from node 1 to 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    pub r1: f64,
    pub r2: f64,
}

impl RatePair {
    pub fn new(r1: f64, r2: f64) -> Self {
        Self { r1, r2 }
    }

    pub fn sum(&self) -> f64 {
        self.r1 + self.r2
    }

    pub fn get(&self, from: Node) -> f64 {
        match from {
            Node::One => self.r1,
            Node::Two => self.r2,
        }
    }

    /// `self >= other` componentwise.
    pub fn weakly_dominates(&self, other: &RatePair) -> bool {
        self.r1 >= other.r1 && self.r2 >= other.r2
    }
}

/// `Sigma_i = I + beta eta_ii H_ii diag(Q_i) H_ii^H`.
pub fn interference_covariance(
    ch: &FdChannelModel,
    node: Node,
    q: &CovarianceMatrix,
) -> Result<HermitianMatrix, ChannelError> {
    if q.dim() != ch.m() {
        return Err(ChannelError::Dimension(format!(
            "covariance is {}x{}, channel has M = {}",
            q.dim(),
            q.dim(),
            ch.m()
        )));
    }
    let hii = ch.h(node, node);
    let scale = ch.beta() * ch.eta(node, node);
    let mut weighted = hii.clone();
    for (k, d) in q.matrix().real_diagonal().into_iter().enumerate() {
        weighted.column_mut(k).scale_mut(scale * d.max(0.0));
    }
    let sigma = ComplexMatrix::identity(ch.n(), ch.n()) + weighted * hii.adjoint();
    Ok(HermitianMatrix::symmetrized(sigma))
}

/// `log2 det(I + eta_ij H_ij^H Sigma_j^-1 H_ij Q_i)` for the link `from -> to`.
///
/// Evaluated as `log2 det(Sigma_j + eta_ij H_ij Q_i H_ij^H) - log2 det(Sigma_j)`
/// so both determinants are of Hermitian positive definite matrices.
pub fn achievable_rate(ch: &FdChannelModel, from: Node, profile: &StrategyProfile) -> Result<f64, ChannelError> {
    let to = from.other();
    let sigma = interference_covariance(ch, to, profile.get(to))?;
    let qi = profile.get(from);
    if qi.dim() != ch.m() {
        return Err(ChannelError::Dimension("transmit covariance dimension".into()));
    }
    let hij = ch.h(from, to);
    let signal = hij * qi.matrix().matrix() * hij.adjoint();
    let total = sigma.matrix() + signal.scale(ch.eta(from, to));
    let total = HermitianMatrix::symmetrized(total);
    let num = log2_det_hpd(total.matrix()).ok_or_else(|| ChannelError::Invalid("signal-plus-noise covariance not PD".into()))?;
    let den = log2_det_hpd(sigma.matrix()).ok_or_else(|| ChannelError::Invalid("noise covariance not PD".into()))?;
    Ok((num - den).max(0.0))
}

/// Both directions at once.
pub fn rate_pair(ch: &FdChannelModel, profile: &StrategyProfile) -> Result<RatePair, ChannelError> {
    Ok(RatePair::new(
        achievable_rate(ch, Node::One, profile)?,
        achievable_rate(ch, Node::Two, profile)?,
    ))
}

/// Single-receive-antenna rate
/// `log2(1 + eta_ij h_ij^H Q_i h_ij / (1 + beta eta_jj h_jj^H diag(Q_j) h_jj))`.
pub fn miso_rate(ch: &FdChannelModel, from: Node, profile: &StrategyProfile) -> Result<f64, ChannelError> {
    let to = from.other();
    let hij = ch.miso_vector(from, to)?;
    let hjj = ch.miso_vector(to, to)?;
    let signal = quad_form(profile.get(from).matrix(), &hij);
    let qj = profile.get(to).matrix().real_diagonal();
    let self_int: f64 = hjj.iter().zip(&qj).map(|(h, q)| h.norm_sqr() * q).sum();
    let sinr = ch.eta(from, to) * signal / (1.0 + ch.beta() * ch.eta(to, to) * self_int);
    Ok(sinr.max(0.0).ln_1p() / std::f64::consts::LN_2)
}

/// `h^H A h` (real part).
pub fn quad_form(a: &HermitianMatrix, h: &ComplexVector) -> f64 {
    (h.adjoint() * a.matrix() * h)[(0, 0)].re
}

/// Parameters for [`sample_channel`], all linear.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub m: usize,
    pub n: usize,
    pub eta: [[f64; 2]; 2],
    pub beta: f64,
    pub power: [f64; 2],
    /// Draw `H_12 = H_21` and `H_11 = H_22`.
    pub symmetric: bool,
}

impl ChannelParams {
    /// Symmetric gains: `eta_12 = eta_21 = direct`, `eta_11 = eta_22 = self_gain`.
    pub fn symmetric_gains(m: usize, n: usize, direct: f64, self_gain: f64, beta: f64, power: f64) -> Self {
        Self {
            m,
            n,
            eta: [[self_gain, direct], [direct, self_gain]],
            beta,
            power: [power, power],
            symmetric: true,
        }
    }
}

/// Rayleigh fading draw: every `H_ij` has i.i.d. CN(0, 1) entries. Matrices
/// are drawn in the order `H_11, H_12, H_21, H_22` (symmetric: `H_11, H_12`).
pub fn sample_channel<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> Result<FdChannelModel, ChannelError> {
    let (m, n) = (params.m, params.n);
    if m == 0 || n == 0 {
        return Err(ChannelError::Invalid("dimensions must be positive".into()));
    }
    let h = if params.symmetric {
        let h_self = sample_complex_gaussian(n, m, rng);
        let h_direct = sample_complex_gaussian(n, m, rng);
        [[h_self.clone(), h_direct.clone()], [h_direct, h_self]]
    } else {
        let h11 = sample_complex_gaussian(n, m, rng);
        let h12 = sample_complex_gaussian(n, m, rng);
        let h21 = sample_complex_gaussian(n, m, rng);
        let h22 = sample_complex_gaussian(n, m, rng);
        [[h11, h12], [h21, h22]]
    };
    FdChannelModel::new(h, params.eta, params.beta, params.power)
}

pub fn sample_channel_seeded(params: &ChannelParams, seed: u64) -> Result<FdChannelModel, ChannelError> {
    sample_channel(params, &mut linalg::seeded_rng(seed))
}

/// Single-link capacity `max_{tr Q <= P} log2 det(I + eta H Q H^H)` with
/// thermal noise only.
pub fn single_link_capacity(ch: &FdChannelModel, from: Node) -> f64 {
    let to = from.other();
    let hij = ch.h(from, to);
    let w = HermitianMatrix::symmetrized((hij.adjoint() * hij).scale(ch.eta(from, to)));
    let eig = hermitian_eig(&w);
    match water_fill(&eig.eigenvalues, ch.power(from)) {
        Some(a) => eig
            .eigenvalues
            .iter()
            .zip(&a.powers)
            .map(|(g, p)| (g * p).ln_1p() / std::f64::consts::LN_2)
            .sum(),
        None => 0.0,
    }
}

/// Half-duplex TDMA baseline: each direction gets half the time, full power
/// and no self-interference, `C_1 / 2 + C_2 / 2`.
pub fn tdma_sum_rate(ch: &FdChannelModel) -> f64 {
    0.5 * single_link_capacity(ch, Node::One) + 0.5 * single_link_capacity(ch, Node::Two)
}

/// TDMA rate pair when a fraction `t` of the time goes to direction 1 -> 2.
pub fn tdma_rate_pair(ch: &FdChannelModel, t: f64) -> RatePair {
    RatePair::new(t * single_link_capacity(ch, Node::One), (1.0 - t) * single_link_capacity(ch, Node::Two))
}

/// Per-node vectors of one channel use.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    /// Intended transmit symbols, M each.
    pub s: [ComplexVector; 2],
    /// Front-end noise draws, M each.
    pub e: [ComplexVector; 2],
    /// Thermal noise draws, N each.
    pub n: [ComplexVector; 2],
    /// Received signal after self-interference cancellation, N each.
    pub y: [ComplexVector; 2],
}

/// One channel use through the post-cancellation model.
pub fn simulate_frame<R: Rng + ?Sized>(
    ch: &FdChannelModel,
    profile: &StrategyProfile,
    payload: [ComplexVector; 2],
    rng: &mut R,
) -> Result<SymbolFrame, ChannelError> {
    simulate_frame_with(ch, profile, payload, true, rng)
}

/// As [`simulate_frame`]; `thermal_noise = false` forces `n_i = 0`.
pub fn simulate_frame_with<R: Rng + ?Sized>(
    ch: &FdChannelModel,
    profile: &StrategyProfile,
    payload: [ComplexVector; 2],
    thermal_noise: bool,
    rng: &mut R,
) -> Result<SymbolFrame, ChannelError> {
    for s in &payload {
        if s.len() != ch.m() {
            return Err(ChannelError::Dimension(format!("payload has {} entries, M = {}", s.len(), ch.m())));
        }
    }
    let e: [ComplexVector; 2] = Node::BOTH.map(|node| {
        let diag = profile.get(node).matrix().real_diagonal();
        DVector::from_iterator(
            ch.m(),
            diag.iter()
                .map(|&q| linalg::complex_gaussian(rng) * (ch.beta() * q.max(0.0)).sqrt()),
        )
    });
    let n: [ComplexVector; 2] = Node::BOTH.map(|_| {
        if thermal_noise {
            DVector::from_iterator(ch.n(), (0..ch.n()).map(|_| linalg::complex_gaussian(rng)))
        } else {
            DVector::from_element(ch.n(), Complex64::new(0.0, 0.0))
        }
    });
    let y: [ComplexVector; 2] = Node::BOTH.map(|rx| {
        let tx = rx.other();
        let direct = ch.h(tx, rx) * &payload[tx.index()] * Complex64::new(ch.eta(tx, rx).sqrt(), 0.0);
        let residual = ch.h(rx, rx) * &e[rx.index()] * Complex64::new(ch.eta(rx, rx).sqrt(), 0.0);
        direct + residual + &n[rx.index()]
    });
    Ok(SymbolFrame { s: payload, e, n, y })
}

/// Rate pairs for each profile, in order.
pub fn region_sample(ch: &FdChannelModel, profiles: &[StrategyProfile]) -> Result<Vec<RatePair>, ChannelError> {
    profiles.iter().map(|p| rate_pair(ch, p)).collect()
}

/// JSON-shaped channel description. Matrices are row-major lists of
/// `[re, im]` pairs; gains are in dB, `beta_db = null` means `beta = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFile {
    pub m: usize,
    pub n: usize,
    pub h11: Vec<[f64; 2]>,
    pub h12: Vec<[f64; 2]>,
    pub h21: Vec<[f64; 2]>,
    pub h22: Vec<[f64; 2]>,
    pub eta_db: GainsDb,
    pub beta_db: Option<f64>,
    pub power: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsDb {
    pub eta11: f64,
    pub eta12: f64,
    pub eta21: f64,
    pub eta22: f64,
}

fn matrix_from_pairs(rows: usize, cols: usize, data: &[[f64; 2]], name: &str) -> Result<ComplexMatrix, ChannelError> {
    if data.len() != rows * cols {
        return Err(ChannelError::Dimension(format!(
            "{name} has {} entries, expected {rows}x{cols} = {}",
            data.len(),
            rows * cols
        )));
    }
    let entries: Vec<Complex64> = data.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
    Ok(ComplexMatrix::from_row_slice(rows, cols, &entries))
}

fn matrix_to_pairs(m: &ComplexMatrix) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            out.push([z.re, z.im]);
        }
    }
    out
}

impl ChannelFile {
    pub fn to_model(&self) -> Result<FdChannelModel, ChannelError> {
        let (n, m) = (self.n, self.m);
        let h = [
            [matrix_from_pairs(n, m, &self.h11, "h11")?, matrix_from_pairs(n, m, &self.h12, "h12")?],
            [matrix_from_pairs(n, m, &self.h21, "h21")?, matrix_from_pairs(n, m, &self.h22, "h22")?],
        ];
        let g = &self.eta_db;
        let eta = [
            [db_to_linear(g.eta11), db_to_linear(g.eta12)],
            [db_to_linear(g.eta21), db_to_linear(g.eta22)],
        ];
        let beta = self.beta_db.map_or(0.0, db_to_linear);
        FdChannelModel::new(h, eta, beta, self.power)
    }

    pub fn from_model(ch: &FdChannelModel) -> Self {
        use Node::{One, Two};
        Self {
            m: ch.m(),
            n: ch.n(),
            h11: matrix_to_pairs(ch.h(One, One)),
            h12: matrix_to_pairs(ch.h(One, Two)),
            h21: matrix_to_pairs(ch.h(Two, One)),
            h22: matrix_to_pairs(ch.h(Two, Two)),
            eta_db: GainsDb {
                eta11: linear_to_db(ch.eta(One, One)),
                eta12: linear_to_db(ch.eta(One, Two)),
                eta21: linear_to_db(ch.eta(Two, One)),
                eta22: linear_to_db(ch.eta(Two, Two)),
            },
            beta_db: (ch.beta() > 0.0).then(|| linear_to_db(ch.beta())),
            power: [ch.power(One), ch.power(Two)],
        }
    }
}
