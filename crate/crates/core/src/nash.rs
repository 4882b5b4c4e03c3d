//! Competitive operation: each node water-fills against the noise the other
//! node's front end injects into the shared band.

use std::io::Write;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    achievable_rate, interference_covariance, rate_pair, ChannelError, CovarianceMatrix, FdChannelModel, Node,
    RatePair, StrategyProfile,
};
use crate::linalg::{
    self, circulant_eigenvalues, hermitian_eig, inverse_hpd, numerical_rank, pseudo_inverse, spectral_radius,
    weighted_max_norm, HermitianMatrix, LinalgError, PINV_RCOND,
};
use crate::waterfill::water_fill;

pub const DEFAULT_DELTA: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NashError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("interference covariance is not positive definite")]
    SingularInterference,
}

/// Water-filling best response of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponseResult {
    pub q: CovarianceMatrix,
    /// `mu`; active modes get `mu - 1 / lambda_k`.
    pub water_level: f64,
    /// `W = eta_ij H_ij^H Sigma_j^-1 H_ij`.
    pub effective_channel: HermitianMatrix,
    pub rate: f64,
    /// `W = 0`: every strategy is equally useless and `(P / M) I` is returned.
    pub degenerate: bool,
}

/// Maximizes node `node`'s rate against the opponent strategy `opponent`.
pub fn best_response(
    ch: &FdChannelModel,
    node: Node,
    opponent: &CovarianceMatrix,
) -> Result<BestResponseResult, NashError> {
    let to = node.other();
    let sigma = interference_covariance(ch, to, opponent)?;
    let sigma_inv = inverse_hpd(&sigma).ok_or(NashError::SingularInterference)?;
    let h = ch.h(node, to);
    let w = HermitianMatrix::symmetrized((h.adjoint() * sigma_inv.matrix() * h).scale(ch.eta(node, to)));
    let eig = hermitian_eig(&w);
    let budget = ch.power(node);
    let (q, water_level, degenerate) = match water_fill(&eig.eigenvalues, budget) {
        Some(alloc) => {
            let u = &eig.eigenvectors;
            let mut scaled = u.clone();
            for (k, p) in alloc.powers.iter().enumerate() {
                scaled.column_mut(k).scale_mut(*p);
            }
            (HermitianMatrix::symmetrized(scaled * u.adjoint()), alloc.level, false)
        }
        None => (HermitianMatrix::from_real_diagonal(&vec![budget / ch.m() as f64; ch.m()]), 0.0, true),
    };
    let q = CovarianceMatrix::new(q, budget)?;
    let profile = match node {
        Node::One => StrategyProfile::new(q.clone(), opponent.clone()),
        Node::Two => StrategyProfile::new(opponent.clone(), q.clone()),
    };
    let rate = achievable_rate(ch, node, &profile)?;
    Ok(BestResponseResult {
        q,
        water_level,
        effective_channel: w,
        rate,
        degenerate,
    })
}

/// Largest violation of the water-filling optimality conditions for `br`,
/// measured in the eigenbasis of the effective channel: budget spent,
/// `p_k = mu - 1/lambda_k` on active modes, `1/lambda_k >= mu` on dry ones,
/// and `Q` diagonal in that basis.
pub fn water_filling_kkt_residual(br: &BestResponseResult) -> f64 {
    if br.degenerate {
        return 0.0;
    }
    let eig = hermitian_eig(&br.effective_channel);
    let q = br.q.matrix().matrix();
    let u = &eig.eigenvectors;
    let modal = u.adjoint() * q * u;
    let scale = br.q.power_budget().max(1.0);
    let mut worst = (br.q.trace() - br.q.power_budget()).abs() / scale;
    for k in 0..modal.nrows() {
        for l in 0..modal.ncols() {
            if k != l {
                worst = worst.max(modal[(k, l)].norm() / scale);
            }
        }
        let p = modal[(k, k)].re;
        let lambda = eig.eigenvalues[k];
        let mu = br.water_level;
        let violation = if p > 1e-12 * scale {
            (mu - 1.0 / lambda - p).abs()
        } else if lambda > 0.0 {
            (mu - 1.0 / lambda).max(0.0)
        } else {
            0.0
        };
        worst = worst.max(violation / scale);
    }
    worst
}

/// Jacobi update `(B_1(Q_2), B_2(Q_1))`, both from the input profile.
pub fn phi_mapping(ch: &FdChannelModel, profile: &StrategyProfile) -> Result<StrategyProfile, NashError> {
    let q1 = best_response(ch, Node::One, profile.get(Node::Two))?.q;
    let q2 = best_response(ch, Node::Two, profile.get(Node::One))?.q;
    Ok(StrategyProfile::new(q1, q2))
}

/// `||Phi(Q) - Q||_F`.
pub fn fixed_point_residual(ch: &FdChannelModel, profile: &StrategyProfile) -> Result<f64, NashError> {
    Ok(phi_mapping(ch, profile)?.distance(profile))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IwfaMode {
    Synchronous,
    Asynchronous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IwfaConfig {
    pub delta: f64,
    pub max_iter: usize,
    pub mode: IwfaMode,
    /// Per node, per iteration; asynchronous mode only.
    pub miss_probability: f64,
    pub rng_seed: u64,
}

impl Default for IwfaConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            max_iter: DEFAULT_MAX_ITER,
            mode: IwfaMode::Synchronous,
            miss_probability: 0.0,
            rng_seed: 0,
        }
    }
}

impl IwfaConfig {
    pub fn asynchronous(miss_probability: f64, rng_seed: u64) -> Self {
        Self {
            mode: IwfaMode::Asynchronous,
            miss_probability,
            rng_seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NashError> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(NashError::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if self.max_iter == 0 {
            return Err(NashError::Config("max_iter must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.miss_probability) {
            return Err(NashError::Config(format!(
                "miss probability must lie in [0, 1), got {}",
                self.miss_probability
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IwfaTrace {
    /// Starting profile followed by one profile per iteration.
    pub iterates: Vec<StrategyProfile>,
    /// Synchronous: `||Phi(Q) - Q||_F` at each new iterate. Asynchronous:
    /// distance between successive iterates.
    pub residuals: Vec<f64>,
    pub rates: Vec<RatePair>,
    /// Which nodes updated at each iteration.
    pub schedule: Vec<[bool; 2]>,
    pub converged: bool,
    pub iterations: usize,
}

impl IwfaTrace {
    pub fn last(&self) -> &StrategyProfile {
        self.iterates.last().expect("trace always holds the starting profile")
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.residuals.last().copied()
    }

    /// First iteration (1-based) whose residual fell below `delta`.
    pub fn first_below(&self, delta: f64) -> Option<usize> {
        self.residuals.iter().position(|&r| r < delta).map(|k| k + 1)
    }
}

/// Iterative water-filling.
///
/// Synchronous mode applies `Phi` and stops once the new iterate satisfies
/// `||Phi(Q) - Q||_F < delta`. Asynchronous mode lets each node skip its
/// update with the configured probability, keeping its stale strategy. It
/// stops when successive iterates are within `delta` and both nodes have
/// updated at least once since that distance first dropped below `delta`, so
/// a round where both nodes miss cannot end the run.
pub fn iwfa(ch: &FdChannelModel, init: &StrategyProfile, cfg: &IwfaConfig) -> Result<IwfaTrace, NashError> {
    cfg.validate()?;
    init.check_against(ch)?;
    let mut trace = IwfaTrace {
        iterates: vec![init.clone()],
        residuals: Vec::new(),
        rates: Vec::new(),
        schedule: Vec::new(),
        converged: false,
        iterations: 0,
    };
    match cfg.mode {
        IwfaMode::Synchronous => {
            let mut next = phi_mapping(ch, init)?;
            for _ in 0..cfg.max_iter {
                let current = next;
                next = phi_mapping(ch, &current)?;
                let residual = next.distance(&current);
                trace.rates.push(rate_pair(ch, &current)?);
                trace.residuals.push(residual);
                trace.schedule.push([true, true]);
                trace.iterates.push(current);
                trace.iterations += 1;
                if residual < cfg.delta {
                    trace.converged = true;
                    break;
                }
            }
        }
        IwfaMode::Asynchronous => {
            let mut rng = linalg::seeded_rng(cfg.rng_seed);
            let mut current = init.clone();
            let mut quiet_updates = [false, false];
            for _ in 0..cfg.max_iter {
                let updates = [
                    rng.random::<f64>() >= cfg.miss_probability,
                    rng.random::<f64>() >= cfg.miss_probability,
                ];
                let mut next = current.clone();
                for node in Node::BOTH {
                    if updates[node.index()] {
                        let br = best_response(ch, node, current.get(node.other()))?;
                        next = next.with(node, br.q);
                    }
                }
                let residual = next.distance(&current);
                if residual < cfg.delta {
                    for k in 0..2 {
                        quiet_updates[k] |= updates[k];
                    }
                } else {
                    quiet_updates = [false, false];
                }
                trace.rates.push(rate_pair(ch, &next)?);
                trace.residuals.push(residual);
                trace.schedule.push(updates);
                trace.iterates.push(next.clone());
                trace.iterations += 1;
                current = next;
                if quiet_updates == [true, true] {
                    trace.converged = true;
                    break;
                }
            }
        }
    }
    Ok(trace)
}

#[derive(Serialize)]
struct TraceRow {
    iter: usize,
    residual: f64,
    r1_bits: f64,
    r2_bits: f64,
    updated_node1: bool,
    updated_node2: bool,
}

/// CSV with header `iter,residual,r1_bits,r2_bits,updated_node1,updated_node2`.
pub fn write_trace_csv<W: Write>(trace: &IwfaTrace, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for k in 0..trace.iterations {
        w.serialize(TraceRow {
            iter: k + 1,
            residual: trace.residuals[k],
            r1_bits: trace.rates[k].r1,
            r2_bits: trace.rates[k].r2,
            updated_node1: trace.schedule[k][0],
            updated_node2: trace.schedule[k][1],
        })?;
    }
    if trace.iterations == 0 {
        w.write_record(["iter", "residual", "r1_bits", "r2_bits", "updated_node1", "updated_node2"])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UniquenessBranch {
    /// `rank(H_ji) = N`.
    FullRowRank,
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub alpha: [f64; 2],
    pub product: f64,
    pub branch: [UniquenessBranch; 2],
    /// `rho(H_ii^H H_ji^+H H_ji^+ H_ii)` per node, whatever the branch.
    pub radius: [f64; 2],
    pub holds: bool,
}

/// Both candidate coefficients for node `node`:
/// `(rho(H_ii^H H_ji^+H H_ji^+ H_ii), general-branch bound)`, before the
/// `beta / gamma_i` factor.
fn alpha_terms(ch: &FdChannelModel, node: Node) -> Result<(f64, f64), NashError> {
    let h_self = ch.h(node, node);
    let h_in = ch.h(node.other(), node);
    let pinv = pseudo_inverse(h_in);
    let mapped = &pinv * h_self;
    let radius = spectral_radius(&(mapped.adjoint() * &mapped))?;
    let self_gram = spectral_radius(&(h_self.adjoint() * h_self))?;
    let pinv_gram = spectral_radius(&(pinv.adjoint() * &pinv))?;
    let inflation = 1.0 + ch.beta() * ch.eta(node, node) * ch.power(node) * self_gram;
    Ok((radius, inflation * self_gram * pinv_gram))
}

/// Sufficient condition for a unique equilibrium: `alpha_1 alpha_2 < 1`.
pub fn uniqueness_condition(ch: &FdChannelModel) -> Result<UniquenessReport, NashError> {
    let mut alpha = [0.0; 2];
    let mut radius = [0.0; 2];
    let mut branch = [UniquenessBranch::General; 2];
    for node in Node::BOTH {
        let (rho, general) = alpha_terms(ch, node)?;
        let prefactor = ch.beta() / ch.gamma(node);
        let full_row = numerical_rank(ch.h(node.other(), node), PINV_RCOND) == ch.n();
        let i = node.index();
        radius[i] = rho;
        if full_row {
            branch[i] = UniquenessBranch::FullRowRank;
            alpha[i] = prefactor * rho;
        } else {
            alpha[i] = prefactor * general;
        }
    }
    let product = alpha[0] * alpha[1];
    Ok(UniquenessReport {
        alpha,
        product,
        branch,
        radius,
        holds: product < 1.0,
    })
}

/// The general-branch value of `alpha_i`, regardless of rank.
pub fn general_branch_alpha(ch: &FdChannelModel, node: Node) -> Result<f64, NashError> {
    Ok(ch.beta() / ch.gamma(node) * alpha_terms(ch, node)?.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    /// Largest `||Phi(a) - Phi(b)||^w / ||a - b||^w` seen; 0 when no pair counted.
    pub max_ratio: f64,
    pub witness: Option<(StrategyProfile, StrategyProfile)>,
    pub evaluated: usize,
    /// Coincident pairs left out.
    pub skipped: usize,
}

/// Probes whether `Phi` contracts in the weighted max norm
/// `max(||X_1||_F / w_1, ||X_2||_F / w_2)`. A ratio `>= 1` proves it does not
/// for this `w`.
pub fn contraction_check(
    ch: &FdChannelModel,
    pairs: &[(StrategyProfile, StrategyProfile)],
    w: (f64, f64),
) -> Result<ContractionReport, NashError> {
    let diff = |a: &StrategyProfile, b: &StrategyProfile| -> Result<f64, NashError> {
        let d1 = a.get(Node::One).matrix() - b.get(Node::One).matrix();
        let d2 = a.get(Node::Two).matrix() - b.get(Node::Two).matrix();
        Ok(weighted_max_norm(&d1, &d2, w)?)
    };
    // validates the weights even when every pair is skipped
    weighted_max_norm(&HermitianMatrix::zeros(1), &HermitianMatrix::zeros(1), w)?;
    let mut report = ContractionReport {
        max_ratio: 0.0,
        witness: None,
        evaluated: 0,
        skipped: 0,
    };
    for (a, b) in pairs {
        let den = diff(a, b)?;
        if den == 0.0 {
            report.skipped += 1;
            continue;
        }
        let num = diff(&phi_mapping(ch, a)?, &phi_mapping(ch, b)?)?;
        let ratio = num / den;
        report.evaluated += 1;
        if report.witness.is_none() || ratio > report.max_ratio {
            report.max_ratio = ratio;
            report.witness = Some((a.clone(), b.clone()));
        }
    }
    Ok(report)
}

/// Random diagonal probe pairs around `center`. The first member of each
/// pair adds independent normal steps of size `spread` to every diagonal
/// entry of both covariances; the second perturbs the first by steps of size
/// `local`. Entries are clipped at zero and scaled back into the budget.
pub fn diagonal_probe_pairs<R: Rng + ?Sized>(
    center: &StrategyProfile,
    count: usize,
    spread: f64,
    local: f64,
    rng: &mut R,
) -> Result<Vec<(StrategyProfile, StrategyProfile)>, NashError> {
    fn perturb<R: Rng + ?Sized>(diag: &[f64], size: f64, budget: f64, rng: &mut R) -> Vec<f64> {
        let mut d: Vec<f64> = diag
            .iter()
            .map(|&x| (x + size * rng.sample::<f64, _>(rand_distr::StandardNormal)).max(0.0))
            .collect();
        let total: f64 = d.iter().sum();
        if total > budget {
            d.iter_mut().for_each(|x| *x *= budget / total);
        }
        d
    }
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let mut first = Vec::with_capacity(2);
        let mut second = Vec::with_capacity(2);
        for node in Node::BOTH {
            let q = center.get(node);
            let budget = q.power_budget();
            let a = perturb(&q.matrix().real_diagonal(), spread, budget, rng);
            let b = perturb(&a, local, budget, rng);
            first.push(CovarianceMatrix::new(HermitianMatrix::from_real_diagonal(&a), budget)?);
            second.push(CovarianceMatrix::new(HermitianMatrix::from_real_diagonal(&b), budget)?);
        }
        let (a2, a1) = (first.pop().expect("two nodes"), first.pop().expect("two nodes"));
        let (b2, b1) = (second.pop().expect("two nodes"), second.pop().expect("two nodes"));
        pairs.push((StrategyProfile::new(a1, a2), StrategyProfile::new(b1, b2)));
    }
    Ok(pairs)
}

/// `P(A / B < x)` for independent Rayleigh `A`, `B` of equal scale:
/// `x^2 / (1 + x^2)`.
pub fn rayleigh_ratio_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let x2 = x * x;
    x2 / (1.0 + x2)
}

/// Probability that a symmetric circulant channel with `M` antennas meets
/// the circulant uniqueness condition, `Gamma(sqrt(gamma / beta))^M`.
pub fn circulant_uniqueness_probability(m: usize, gamma: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        return 1.0;
    }
    rayleigh_ratio_cdf((gamma / beta).sqrt()).powi(m as i32)
}

/// Circulant uniqueness test from generator rows:
/// `max_k |s_11(k)|^2/|s_21(k)|^2 * max_k |s_22(k)|^2/|s_12(k)|^2 < gamma_1 gamma_2 / beta^2`,
/// with `s_ij` the eigenvalues of the circulant `H_ij`. Rows are indexed
/// `[[h11, h12], [h21, h22]]`.
pub fn circulant_condition_holds(rows: &[[Vec<Complex64>; 2]; 2], gamma: (f64, f64), beta: f64) -> bool {
    if beta == 0.0 {
        return true;
    }
    let eig = |i: usize, j: usize| circulant_eigenvalues(&rows[i][j]);
    let max_ratio = |own: Vec<Complex64>, direct: Vec<Complex64>| {
        own.iter()
            .zip(&direct)
            .map(|(a, b)| a.norm_sqr() / b.norm_sqr())
            .fold(0.0, f64::max)
    };
    let lhs = max_ratio(eig(0, 0), eig(1, 0)) * max_ratio(eig(1, 1), eig(0, 1));
    lhs < gamma.0 * gamma.1 / (beta * beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisoEquilibrium {
    pub profile: StrategyProfile,
    /// Per node: direct channel was zero and uniform power was used.
    pub degenerate: [bool; 2],
}

/// MISO equilibrium: each node sends full power along its direct channel,
/// `w_i = sqrt(P_i) h_ij / ||h_ij||`.
pub fn miso_ne(ch: &FdChannelModel) -> Result<MisoEquilibrium, NashError> {
    let mut degenerate = [false; 2];
    let mut qs = Vec::with_capacity(2);
    for node in Node::BOTH {
        let h = ch.miso_vector(node, node.other())?;
        let p = ch.power(node);
        let norm = h.norm();
        let q = if norm > 0.0 {
            let w: DVector<Complex64> = h.scale(p.sqrt() / norm);
            CovarianceMatrix::from_beamformer(&w, p)?
        } else {
            degenerate[node.index()] = true;
            CovarianceMatrix::uniform(ch.m(), p)
        };
        qs.push(q);
    }
    let q2 = qs.pop().expect("two nodes");
    let q1 = qs.pop().expect("two nodes");
    Ok(MisoEquilibrium {
        profile: StrategyProfile::new(q1, q2),
        degenerate,
    })
}

/// Rank-deficient 3x2 example channel on which the full-row-rank radius is
/// below one while `Phi` still fails to contract.
pub mod fixture {
    use super::*;
    use crate::linalg::ComplexMatrix;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Self-interference channel, shared by both nodes.
    pub fn self_channel() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(
            3,
            2,
            &[
                c(-0.1440, 0.3203),
                c(-0.6735, -0.0040),
                c(-0.4009, 0.5149),
                c(-0.0351, 0.6118),
                c(1.3155, 0.5694),
                c(-1.2339, -0.4902),
            ],
        )
    }

    /// Direct channel, shared by both directions.
    pub fn direct_channel() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(
            3,
            2,
            &[
                c(1.1187, 0.8794),
                c(1.0068, -0.0645),
                c(0.1281, -0.3943),
                c(0.8477, 0.3248),
                c(1.5970, 0.2708),
                c(-0.3452, 2.3450),
            ],
        )
    }

    pub const POWER: f64 = 10.0;

    /// Symmetric channel with `beta = 1`, unit gains and `P = 10`, so
    /// `beta eta_ii / eta_ji = 1`.
    pub fn channel() -> FdChannelModel {
        let s = self_channel();
        let d = direct_channel();
        FdChannelModel::new([[s.clone(), d.clone()], [d, s]], [[1.0; 2]; 2], 1.0, [POWER, POWER])
            .expect("fixture channel is valid")
    }

    /// Diagonal probe strategies listed with the example.
    pub fn probe_profile() -> StrategyProfile {
        StrategyProfile::new(
            CovarianceMatrix::new(HermitianMatrix::from_real_diagonal(&[0.2208, 9.7792]), POWER)
                .expect("valid fixture covariance"),
            CovarianceMatrix::new(HermitianMatrix::from_real_diagonal(&[0.4832, 9.5168]), POWER)
                .expect("valid fixture covariance"),
        )
    }
}
