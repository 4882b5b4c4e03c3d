//! Pareto boundary of the MISO full-duplex rate region.
//!
//! The two-node rate maximization splits into one convex problem per node:
//! minimize the self-interference `h_ii^H diag(Q) h_ii = tr(C Q)` a node
//! generates, subject to delivering received power `z = h_ij^H Q h_ij` over
//! its direct link within its power budget. Sweeping both targets `z` and
//! discarding dominated pairs traces the boundary.
//!
//! The convex problem is never handed to a conic solver. The rank-one
//! closed form is paired with an explicit dual certificate that proves its
//! optimality, and [`rank_reduce`] turns any higher-rank optimum into a
//! beamformer.

use std::io::Write;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{
    quad_form, rate_pair, ChannelError, CovarianceMatrix, FdChannelModel, Node, RatePair, StrategyProfile,
};
use crate::linalg::{self, hermitian_eig, ComplexMatrix, ComplexVector, HermitianMatrix};

/// Relative tolerance for the power-constraint root.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Points per axis in the default boundary sweep.
pub const DEFAULT_GRID: usize = 200;
/// Self-interference gains below `SINGULAR_RCOND * max` count as zero.
pub const SINGULAR_RCOND: f64 = 1e-12;
/// Eigenvalues below `RANK_RCOND * max` count as zero in [`rank_reduce`].
pub const RANK_RCOND: f64 = 1e-9;

const MAX_DOUBLINGS: usize = 2100;
const MAX_BISECTIONS: usize = 400;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParetoError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("received-power target {z} outside [0, {max}]")]
    TargetOutOfRange { z: f64, max: f64 },
    #[error("direct channel is zero, positive target {0} is infeasible")]
    ZeroChannel(f64),
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("power root search failed: {0}")]
    RootSearch(String),
    #[error("dual certificate rejected: {0}")]
    Certificate(String),
    #[error("rank reduction failed: {0}")]
    RankReduction(String),
    #[error("zero-forcing infeasible: direct and self-interference channels are parallel")]
    ParallelChannels,
    #[error("oracle limited to small dimensions: {0}")]
    TooLarge(String),
}

/// A rank-one strategy `Q = w w^H` with `||w||^2 <= P`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingWeights {
    w: ComplexVector,
    power_budget: f64,
}

impl BeamformingWeights {
    pub fn new(w: ComplexVector, power_budget: f64) -> Result<Self, ParetoError> {
        let norm_sqr = w.norm_squared();
        if norm_sqr > power_budget * (1.0 + 1e-8) {
            return Err(ParetoError::Invalid(format!(
                "beamformer power {norm_sqr} exceeds budget {power_budget}"
            )));
        }
        Ok(Self { w, power_budget })
    }

    pub fn vector(&self) -> &ComplexVector {
        &self.w
    }

    pub fn power_budget(&self) -> f64 {
        self.power_budget
    }

    pub fn power(&self) -> f64 {
        self.w.norm_squared()
    }

    pub fn covariance(&self) -> CovarianceMatrix {
        CovarianceMatrix::new(HermitianMatrix::outer(&self.w), self.power_budget)
            .expect("outer product of a budget-feasible beamformer is a valid covariance")
    }
}

/// `min tr(C Q)` s.t. `tr(A Q) = z`, `tr(Q) <= P`, `Q >= 0`, with
/// `A = h h^H` and `C = Diag(c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoupledProblem {
    h: ComplexVector,
    c: Vec<f64>,
    z: f64,
    power: f64,
}

impl DecoupledProblem {
    pub fn new(h: ComplexVector, c: Vec<f64>, z: f64, power: f64) -> Result<Self, ParetoError> {
        if h.is_empty() || h.len() != c.len() {
            return Err(ParetoError::Invalid(format!(
                "direct channel has {} entries, cost diagonal has {}",
                h.len(),
                c.len()
            )));
        }
        if c.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(ParetoError::Invalid("cost diagonal must be finite and nonnegative".into()));
        }
        if !(power > 0.0 && power.is_finite()) {
            return Err(ParetoError::Invalid(format!("power budget must be positive, got {power}")));
        }
        let max = power * h.norm_squared();
        if !(z >= 0.0) || z > max * (1.0 + 1e-12) {
            return Err(ParetoError::TargetOutOfRange { z, max });
        }
        if max == 0.0 && z > 0.0 {
            return Err(ParetoError::ZeroChannel(z));
        }
        Ok(Self {
            h,
            c,
            z: z.min(max),
            power,
        })
    }

    /// Node `i`'s problem: `h = h_ij`, `c_k = |h_ii^(k)|^2`.
    pub fn for_node(ch: &FdChannelModel, node: Node, z: f64) -> Result<Self, ParetoError> {
        let h = ch.miso_vector(node, node.other())?;
        let c = ch.miso_vector(node, node)?.iter().map(|x| x.norm_sqr()).collect();
        Self::new(h, c, z, ch.power(node))
    }

    pub fn with_target(&self, z: f64) -> Result<Self, ParetoError> {
        Self::new(self.h.clone(), self.c.clone(), z, self.power)
    }

    pub fn direct_channel(&self) -> &ComplexVector {
        &self.h
    }

    pub fn cost_diagonal(&self) -> &[f64] {
        &self.c
    }

    pub fn target(&self) -> f64 {
        self.z
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    /// `P ||h||^2`, the largest reachable target.
    pub fn max_target(&self) -> f64 {
        self.power * self.h.norm_squared()
    }

    pub fn a(&self) -> HermitianMatrix {
        HermitianMatrix::outer(&self.h)
    }

    pub fn c(&self) -> HermitianMatrix {
        HermitianMatrix::from_real_diagonal(&self.c)
    }

    pub fn objective(&self, q: &HermitianMatrix) -> f64 {
        self.c.iter().zip(q.real_diagonal()).map(|(c, d)| c * d).sum()
    }

    pub fn delivered(&self, q: &HermitianMatrix) -> f64 {
        quad_form(q, &self.h)
    }

    fn is_singular(&self) -> bool {
        let cmax = self.c.iter().copied().fold(0.0, f64::max);
        self.c.iter().any(|&x| x <= SINGULAR_RCOND * cmax) || cmax == 0.0
    }

    /// Cost diagonal used for inversion; singular costs get a `delta I` shift.
    fn effective_cost(&self) -> (Vec<f64>, bool) {
        if !self.is_singular() {
            return (self.c.clone(), false);
        }
        let cmax = self.c.iter().copied().fold(0.0, f64::max);
        let delta = if cmax > 0.0 { SINGULAR_RCOND * cmax } else { SINGULAR_RCOND };
        (self.c.iter().map(|x| x + delta).collect(), true)
    }
}

/// Sums `s1 = h^H (C + eps I)^-1 h` and `s2 = h^H (C + eps I)^-2 h`.
fn resolvent_sums(h: &ComplexVector, cost: &[f64], eps: f64) -> (f64, f64) {
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for (hk, ck) in h.iter().zip(cost) {
        let d = ck + eps;
        let a = hk.norm_sqr() / d;
        s1 += a;
        s2 += a / d;
    }
    (s1, s2)
}

/// `||w(eps)||^2 = z s2 / s1^2`.
fn weight_power(h: &ComplexVector, cost: &[f64], z: f64, eps: f64) -> f64 {
    let (s1, s2) = resolvent_sums(h, cost, eps);
    z * s2 / (s1 * s1)
}

/// `w(eps) = sqrt(z) (C + eps I)^-1 h / (h^H (C + eps I)^-1 h)`.
fn weights_at(h: &ComplexVector, cost: &[f64], z: f64, eps: f64) -> ComplexVector {
    let (s1, _) = resolvent_sums(h, cost, eps);
    let scale = z.sqrt() / s1;
    DVector::from_iterator(h.len(), h.iter().zip(cost).map(|(hk, ck)| hk * (scale / (ck + eps))))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonCondition {
    /// `z <= P (h^H C^-1 h)^2 / (h^H C^-2 h)`; always false when `C` is singular.
    pub holds: bool,
    /// The right-hand side, `None` for singular `C`.
    pub threshold: Option<f64>,
    pub singular: bool,
}

/// Whether the power constraint is slack at the optimum, i.e. the
/// unconstrained minimizer `w(0)` already fits the budget.
pub fn epsilon_zero_condition(prob: &DecoupledProblem) -> EpsilonCondition {
    if prob.is_singular() {
        return EpsilonCondition {
            holds: false,
            threshold: None,
            singular: true,
        };
    }
    let (s1, s2) = resolvent_sums(&prob.h, &prob.c, 0.0);
    let threshold = if s2 > 0.0 { prob.power * s1 * s1 / s2 } else { 0.0 };
    EpsilonCondition {
        holds: prob.z <= threshold,
        threshold: Some(threshold),
        singular: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoupledSolution {
    pub q: CovarianceMatrix,
    /// Minimal self-interference `tr(C Q)` for the target.
    pub objective: f64,
    pub epsilon: f64,
    pub weights: BeamformingWeights,
    /// `C` was shifted by a tiny multiple of the identity before inversion.
    pub regularized: bool,
}

/// Closed-form rank-one optimum of the decoupled problem. When the power
/// constraint binds, `eps > 0` is found by bisection on
/// `||w(eps)||^2 - P`, which is strictly decreasing in `eps`.
pub fn optimal_beamforming(prob: &DecoupledProblem, tol: f64) -> Result<DecoupledSolution, ParetoError> {
    let power = prob.power;
    let finish = |w: ComplexVector, epsilon: f64, regularized: bool| {
        let weights = BeamformingWeights::new(w, power)?;
        let q = weights.covariance();
        let objective = prob.objective(q.matrix());
        Ok(DecoupledSolution {
            q,
            objective,
            epsilon,
            weights,
            regularized,
        })
    };
    if prob.z == 0.0 {
        return finish(DVector::from_element(prob.h.len(), Complex64::new(0.0, 0.0)), 0.0, false);
    }
    let (cost, regularized) = prob.effective_cost();
    let g = |eps: f64| weight_power(&prob.h, &cost, prob.z, eps) - power;

    if g(0.0) <= 0.0 {
        return finish(weights_at(&prob.h, &cost, prob.z, 0.0), 0.0, regularized);
    }

    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut g_hi = g(hi);
    let mut doublings = 0;
    while g_hi > 0.0 {
        if g_hi / power < tol {
            // target at (or numerically at) the endpoint P ||h||^2, where the
            // root runs off to infinity and w tends to the matched filter
            return finish(weights_at(&prob.h, &cost, prob.z, hi), hi, regularized);
        }
        lo = hi;
        hi *= 2.0;
        g_hi = g(hi);
        doublings += 1;
        if doublings > MAX_DOUBLINGS || !hi.is_finite() {
            return Err(ParetoError::RootSearch(format!("no bracket found, g({lo:e}) = {g_hi:e}")));
        }
    }
    let mut best = (hi, g_hi.abs());
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm.abs() < best.1 {
            best = (mid, gm.abs());
        }
        if gm.abs() / power < tol || mid <= lo || mid >= hi {
            break;
        }
        if gm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eps = best.0;
    let w = weights_at(&prob.h, &cost, prob.z, eps);
    // bisection lands within tol of the budget from either side
    let w = if w.norm_squared() > power {
        w.scale((power / w.norm_squared()).sqrt())
    } else {
        w
    };
    finish(w, eps, regularized)
}

/// Lagrange multipliers certifying optimality of a decoupled solution.
///
/// With `lambda1` for the target equality and `lambda2 >= 0` for the power
/// constraint, dual feasibility is `Z = C - lambda1 A + lambda2 I >= 0` and
/// the dual value is `lambda1 z - lambda2 P`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    pub lambda1: f64,
    pub lambda2: f64,
    pub slack: HermitianMatrix,
}

/// Tolerance on the slack matrix's smallest eigenvalue.
pub const CERT_PSD_TOL: f64 = 1e-6;
/// Relative tolerance on complementary slackness and stationarity.
pub const CERT_SLACK_TOL: f64 = 1e-6;

impl DualCertificate {
    pub fn min_eigenvalue(&self) -> f64 {
        self.slack.min_eigenvalue()
    }

    /// `tr(Z Q)`.
    pub fn complementary_slackness(&self, q: &HermitianMatrix) -> f64 {
        (self.slack.matrix() * q.matrix()).trace().re
    }

    /// `||Z w||`.
    pub fn stationarity_residual(&self, w: &ComplexVector) -> f64 {
        (self.slack.matrix() * w).norm()
    }

    pub fn dual_value(&self, prob: &DecoupledProblem) -> f64 {
        self.lambda1 * prob.target() - self.lambda2 * prob.power()
    }

    /// Primal objective minus dual value.
    pub fn duality_gap(&self, prob: &DecoupledProblem, sol: &DecoupledSolution) -> f64 {
        sol.objective - self.dual_value(prob)
    }

    pub fn verify(&self, prob: &DecoupledProblem, sol: &DecoupledSolution) -> Result<(), ParetoError> {
        let min_eig = self.min_eigenvalue();
        if min_eig < -CERT_PSD_TOL {
            return Err(ParetoError::Certificate(format!("slack matrix min eigenvalue {min_eig:e}")));
        }
        if self.lambda2 < 0.0 {
            return Err(ParetoError::Certificate(format!("negative power multiplier {}", self.lambda2)));
        }
        let scale = prob.c().trace().max(f64::MIN_POSITIVE);
        let cs = self.complementary_slackness(sol.q.matrix());
        if cs > CERT_SLACK_TOL * scale {
            return Err(ParetoError::Certificate(format!("complementary slackness {cs:e}")));
        }
        let w = sol.weights.vector();
        let norm_z = self.slack.frobenius().max(1.0);
        let st = self.stationarity_residual(w);
        if st > CERT_SLACK_TOL * norm_z * w.norm().max(1.0) {
            return Err(ParetoError::Certificate(format!("stationarity residual {st:e}")));
        }
        Ok(())
    }
}

/// Builds and verifies the dual certificate for `sol`.
pub fn dual_certificate(prob: &DecoupledProblem, sol: &DecoupledSolution) -> Result<DualCertificate, ParetoError> {
    let cert = if prob.target() == 0.0 {
        DualCertificate {
            lambda1: 0.0,
            lambda2: 0.0,
            slack: prob.c(),
        }
    } else {
        let (cost, _) = prob.effective_cost();
        let (s1, _) = resolvent_sums(&prob.h, &cost, sol.epsilon);
        let lambda1 = 1.0 / s1;
        let lambda2 = sol.epsilon;
        let m = prob.h.len();
        let slack = prob.c().into_matrix() - prob.a().into_matrix().scale(lambda1)
            + ComplexMatrix::identity(m, m).scale(lambda2);
        DualCertificate {
            lambda1,
            lambda2,
            slack: HermitianMatrix::symmetrized(slack),
        }
    };
    cert.verify(prob, sol)?;
    Ok(cert)
}

/// Real coordinates of the `r x r` Hermitian basis: diagonal units, then
/// symmetric and antisymmetric-imaginary off-diagonal pairs.
fn hermitian_basis(r: usize) -> Vec<ComplexMatrix> {
    let mut basis = Vec::with_capacity(r * r);
    for i in 0..r {
        let mut e = ComplexMatrix::zeros(r, r);
        e[(i, i)] = Complex64::new(1.0, 0.0);
        basis.push(e);
    }
    for i in 0..r {
        for j in (i + 1)..r {
            let mut s = ComplexMatrix::zeros(r, r);
            s[(i, j)] = Complex64::new(1.0, 0.0);
            s[(j, i)] = Complex64::new(1.0, 0.0);
            basis.push(s);
            let mut a = ComplexMatrix::zeros(r, r);
            a[(i, j)] = Complex64::new(0.0, 1.0);
            a[(j, i)] = Complex64::new(0.0, -1.0);
            basis.push(a);
        }
    }
    basis
}

/// A nonzero Hermitian `X` with `tr(B_k X) = 0` for every constraint.
fn hermitian_null_direction(constraints: &[ComplexMatrix], r: usize) -> Option<ComplexMatrix> {
    let basis = hermitian_basis(r);
    let dim = basis.len();
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    for b in constraints {
        let mut row: Vec<f64> = basis.iter().map(|e| (b * e).trace().re).collect();
        for u in &ortho {
            let d: f64 = row.iter().zip(u).map(|(a, b)| a * b).sum();
            row.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-14 {
            ortho.push(row.into_iter().map(|x| x / n).collect());
        }
    }
    if ortho.len() >= dim {
        return None;
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for k in 0..dim {
        let mut x = vec![0.0; dim];
        x[k] = 1.0;
        for u in &ortho {
            let d = u[k];
            x.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if best.as_ref().is_none_or(|(bn, _)| n > *bn) {
            best = Some((n, x));
        }
    }
    let (n, x) = best?;
    if n < 1e-8 {
        return None;
    }
    let mut out = ComplexMatrix::zeros(r, r);
    for (coef, e) in x.iter().zip(&basis) {
        out += e.scale(*coef / n);
    }
    Some(out)
}

/// Reduces an optimal covariance to rank one while keeping its trace,
/// delivered power `tr(A Q)` and, for optimal inputs, its objective.
///
/// Each step factors `Q = V V^H` (rank `r`), picks a Hermitian `X` with
/// `tr(V^H A V X) = tr(V^H V X) = 0`, and replaces `Q` by
/// `V (I - X / sigma) V^H` where `sigma` is the eigenvalue of `X` of largest
/// modulus. The core stays PSD and loses at least one rank.
pub fn rank_reduce(q: &CovarianceMatrix, prob: &DecoupledProblem, tol: f64) -> Result<CovarianceMatrix, ParetoError> {
    let m = prob.h.len();
    if q.dim() != m {
        return Err(ParetoError::Invalid(format!("covariance is {}x{}, problem has M = {m}", q.dim(), q.dim())));
    }
    let a = prob.a();
    let start = (q.trace(), prob.delivered(q.matrix()), prob.objective(q.matrix()));
    let mut current = q.matrix().clone();
    let mut reduced = false;
    for _ in 0..=m {
        let eig = hermitian_eig(&current);
        let top = eig.eigenvalues[0].max(0.0);
        let rank = eig.eigenvalues.iter().filter(|&&l| l > RANK_RCOND * top).count();
        if rank <= 1 {
            if !reduced {
                return Ok(q.clone());
            }
            let u = eig.eigenvectors.column(0).into_owned();
            let w = u.scale(top.sqrt());
            let out = HermitianMatrix::outer(&w);
            let end = (out.trace(), prob.delivered(&out), prob.objective(&out));
            let drift = |s: f64, e: f64| (s - e).abs() > tol * s.abs().max(1.0);
            if drift(start.0, end.0) || drift(start.1, end.1) {
                return Err(ParetoError::RankReduction(format!(
                    "constraints drifted: trace {} -> {}, delivered {} -> {}",
                    start.0, end.0, start.1, end.1
                )));
            }
            return CovarianceMatrix::new(out, q.power_budget()).map_err(Into::into);
        }
        let mut v = ComplexMatrix::zeros(m, rank);
        for k in 0..rank {
            let col = eig.eigenvectors.column(k).scale(eig.eigenvalues[k].sqrt());
            v.set_column(k, &col);
        }
        let gram = v.adjoint() * &v;
        let delivered = v.adjoint() * a.matrix() * &v;
        let x = hermitian_null_direction(&[delivered, gram], rank)
            .ok_or_else(|| ParetoError::RankReduction(format!("no null direction at rank {rank}")))?;
        let x_eig = hermitian_eig(&HermitianMatrix::symmetrized(x.clone()));
        let sigma = x_eig
            .eigenvalues
            .iter()
            .copied()
            .max_by(|p, q| p.abs().total_cmp(&q.abs()))
            .filter(|s| *s != 0.0)
            .ok_or_else(|| ParetoError::RankReduction("null direction has no nonzero eigenvalue".into()))?;
        let core = ComplexMatrix::identity(rank, rank) - x.scale(1.0 / sigma);
        current = HermitianMatrix::symmetrized(&v * core * v.adjoint());
        reduced = true;
    }
    Err(ParetoError::RankReduction("rank did not decrease".into()))
}

/// One Pareto-optimal operating point with the data that certifies it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub z1: f64,
    pub z2: f64,
    pub profile: StrategyProfile,
    pub rates: RatePair,
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub certificates: [DualCertificate; 2],
}

/// Every `(z1, z2)` cell of a target sweep, before dominance filtering.
#[derive(Debug, Clone)]
pub struct RateGrid {
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub solutions: [Vec<DecoupledSolution>; 2],
    pub certificates: [Vec<DualCertificate>; 2],
    /// Row-major over `(z1 index, z2 index)`.
    pub rates: Vec<RatePair>,
}

impl RateGrid {
    pub fn rate(&self, i1: usize, i2: usize) -> RatePair {
        self.rates[i1 * self.z2.len() + i2]
    }

    pub fn profile(&self, i1: usize, i2: usize) -> StrategyProfile {
        StrategyProfile::new(self.solutions[0][i1].q.clone(), self.solutions[1][i2].q.clone())
    }

    fn point(&self, idx: usize) -> ParetoPoint {
        let (i1, i2) = (idx / self.z2.len(), idx % self.z2.len());
        ParetoPoint {
            z1: self.z1[i1],
            z2: self.z2[i2],
            profile: self.profile(i1, i2),
            rates: self.rates[idx],
            epsilon1: self.solutions[0][i1].epsilon,
            epsilon2: self.solutions[1][i2].epsilon,
            certificates: [self.certificates[0][i1].clone(), self.certificates[1][i2].clone()],
        }
    }
}

/// `points` evenly spaced values on `[0, max]`, endpoints included.
pub fn uniform_targets(max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![max],
        _ => (0..points)
            .map(|k| if k + 1 == points { max } else { max * k as f64 / (points - 1) as f64 })
            .collect(),
    }
}

/// Solves and certifies the decoupled problem at each target.
pub fn solve_targets(
    ch: &FdChannelModel,
    node: Node,
    targets: &[f64],
    tol: f64,
) -> Result<(Vec<DecoupledSolution>, Vec<DualCertificate>), ParetoError> {
    let base = DecoupledProblem::for_node(ch, node, 0.0)?;
    let solved: Result<Vec<_>, ParetoError> = targets
        .par_iter()
        .map(|&z| {
            let prob = base.with_target(z)?;
            let sol = optimal_beamforming(&prob, tol)?;
            let cert = dual_certificate(&prob, &sol)?;
            Ok((sol, cert))
        })
        .collect();
    Ok(solved?.into_iter().unzip())
}

/// Rates on the full target grid. With `Gamma_i` the minimal self-interference
/// for target `z_i`,
/// `r1 = log2(1 + eta_12 z1 / (1 + beta eta_22 Gamma_2(z2)))` and symmetrically
/// for `r2`.
pub fn rate_grid(ch: &FdChannelModel, grid: (usize, usize), tol: f64) -> Result<RateGrid, ParetoError> {
    if !ch.is_miso() {
        return Err(ChannelError::NotMiso(ch.n()).into());
    }
    if grid.0 == 0 || grid.1 == 0 {
        return Err(ParetoError::Invalid("grid must have at least one point per axis".into()));
    }
    let z1 = uniform_targets(DecoupledProblem::for_node(ch, Node::One, 0.0)?.max_target(), grid.0);
    let z2 = uniform_targets(DecoupledProblem::for_node(ch, Node::Two, 0.0)?.max_target(), grid.1);
    let (s1, c1) = solve_targets(ch, Node::One, &z1, tol)?;
    let (s2, c2) = solve_targets(ch, Node::Two, &z2, tol)?;
    let beta = ch.beta();
    let (e12, e21) = (ch.eta(Node::One, Node::Two), ch.eta(Node::Two, Node::One));
    let (e11, e22) = (ch.eta(Node::One, Node::One), ch.eta(Node::Two, Node::Two));
    let rates = (0..z1.len() * z2.len())
        .into_par_iter()
        .map(|idx| {
            let (i1, i2) = (idx / z2.len(), idx % z2.len());
            let r1 = (e12 * z1[i1] / (1.0 + beta * e22 * s2[i2].objective)).ln_1p() / std::f64::consts::LN_2;
            let r2 = (e21 * z2[i2] / (1.0 + beta * e11 * s1[i1].objective)).ln_1p() / std::f64::consts::LN_2;
            RatePair::new(r1, r2)
        })
        .collect();
    Ok(RateGrid {
        z1,
        z2,
        solutions: [s1, s2],
        certificates: [c1, c2],
        rates,
    })
}

/// Pareto-optimal points of a `grid.0 x grid.1` target sweep, sorted by
/// increasing `r1`.
pub fn pareto_boundary(ch: &FdChannelModel, grid: (usize, usize), tol: f64) -> Result<Vec<ParetoPoint>, ParetoError> {
    let g = rate_grid(ch, grid, tol)?;
    let mut keep = pareto_filter_indices(&g.rates);
    keep.sort_by(|&a, &b| g.rates[a].r1.total_cmp(&g.rates[b].r1).then(g.rates[b].r2.total_cmp(&g.rates[a].r2)));
    Ok(keep.into_iter().map(|idx| g.point(idx)).collect())
}

/// Indices (ascending) of points not dominated by a distinct point.
pub fn pareto_filter_indices(points: &[RatePair]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[b].r1.total_cmp(&points[a].r1).then(points[b].r2.total_cmp(&points[a].r2)));
    let mut keep = Vec::new();
    // best r2 among points with strictly larger r1
    let mut best_before = f64::NEG_INFINITY;
    let mut start = 0;
    while start < order.len() {
        let r1 = points[order[start]].r1;
        let mut end = start;
        while end < order.len() && points[order[end]].r1 == r1 {
            end += 1;
        }
        // group sorted by r2 descending, so its first entry holds the max
        let group_max = points[order[start]].r2;
        for &idx in &order[start..end] {
            let r2 = points[idx].r2;
            if best_before < r2 && r2 == group_max {
                keep.push(idx);
            }
        }
        best_before = best_before.max(group_max);
        start = end;
    }
    keep.sort_unstable();
    keep
}

/// Points of `points` not dominated by any distinct point, in input order.
/// Equal points do not dominate each other.
pub fn pareto_filter(points: &[RatePair]) -> Vec<RatePair> {
    pareto_filter_indices(points).into_iter().map(|i| points[i]).collect()
}

/// Full-power beamformer in the null space of the self-interference channel:
/// `w` proportional to `(I - h_ii h_ii^H / ||h_ii||^2) h_ij` with
/// `||w||^2 = P_i`.
pub fn zf_beamforming(ch: &FdChannelModel, node: Node) -> Result<BeamformingWeights, ParetoError> {
    let h_direct = ch.miso_vector(node, node.other())?;
    let h_self = ch.miso_vector(node, node)?;
    let self_norm = h_self.norm_squared();
    let projected = if self_norm > 0.0 {
        let coef = h_self.dotc(&h_direct) / self_norm;
        &h_direct - &h_self * coef
    } else {
        h_direct.clone()
    };
    let n = projected.norm();
    if n <= 1e-10 * h_direct.norm() || n == 0.0 {
        return Err(ParetoError::ParallelChannels);
    }
    let w = projected.scale(ch.power(node).sqrt() / n);
    BeamformingWeights::new(w, ch.power(node))
}

/// Candidate resolution for [`weighted_sum_rate_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleGrid {
    /// MISO: pseudo-random unit directions per node. MIMO 2x2: steps per
    /// rotation angle.
    pub directions: usize,
    /// Power levels per direction (MISO) or per eigen-split (MIMO).
    pub power_levels: usize,
    pub seed: u64,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            directions: 2000,
            power_levels: 20,
            seed: 0x5eed,
        }
    }
}

fn miso_candidates(ch: &FdChannelModel, node: Node, grid: &OracleGrid) -> Vec<CovarianceMatrix> {
    let m = ch.m();
    let p = ch.power(node);
    let mut rng = linalg::seeded_rng(grid.seed ^ (node.index() as u64 + 1));
    let mut dirs: Vec<ComplexVector> = Vec::with_capacity(grid.directions + m + 2);
    if let Ok(h) = ch.miso_vector(node, node.other()) {
        if h.norm() > 0.0 {
            dirs.push(h.normalize());
        }
    }
    if let Ok(w) = zf_beamforming(ch, node) {
        dirs.push(w.vector().normalize());
    }
    for k in 0..m {
        let mut e = DVector::from_element(m, Complex64::new(0.0, 0.0));
        e[k] = Complex64::new(1.0, 0.0);
        dirs.push(e);
    }
    while dirs.len() < grid.directions.max(1) + m + 2 {
        let v = DVector::from_iterator(m, (0..m).map(|_| linalg::complex_gaussian(&mut rng)));
        if v.norm() > 1e-12 {
            dirs.push(v.normalize());
        }
    }
    let levels = grid.power_levels.max(1);
    let mut out = vec![CovarianceMatrix::zero(m, p)];
    for d in &dirs {
        for l in 1..=levels {
            let w = d.scale((p * l as f64 / levels as f64).sqrt());
            out.push(CovarianceMatrix::from_beamformer(&w, p).expect("scaled unit direction fits the budget"));
        }
    }
    out
}

fn mimo2_candidates(ch: &FdChannelModel, node: Node, grid: &OracleGrid) -> Vec<CovarianceMatrix> {
    let p = ch.power(node);
    let steps = grid.directions.max(1);
    let levels = grid.power_levels.max(1);
    let mut out = vec![CovarianceMatrix::zero(2, p)];
    for a in 0..=steps {
        let theta = std::f64::consts::FRAC_PI_2 * a as f64 / steps as f64;
        for b in 0..steps {
            let phi = 2.0 * std::f64::consts::PI * b as f64 / steps as f64;
            let (c, s) = (theta.cos(), theta.sin());
            let u = ComplexMatrix::from_row_slice(
                2,
                2,
                &[
                    Complex64::new(c, 0.0),
                    -Complex64::from_polar(s, -phi),
                    Complex64::from_polar(s, phi),
                    Complex64::new(c, 0.0),
                ],
            );
            for t in 1..=levels {
                let total = p * t as f64 / levels as f64;
                for k in 0..=levels {
                    let p1 = total * k as f64 / levels as f64;
                    let d = HermitianMatrix::from_real_diagonal(&[p1, total - p1]);
                    let q = HermitianMatrix::symmetrized(&u * d.matrix() * u.adjoint());
                    if let Ok(c) = CovarianceMatrix::new(q, p) {
                        out.push(c);
                    }
                }
            }
        }
    }
    out
}

/// Brute-force maximizer of `mu1 r1 + (1 - mu1) r2` over a finite candidate
/// set: rank-one beamformers on a direction grid for MISO with `M <= 3`,
/// eigenbasis rotations and power splits for `M = N = 2`. A test oracle; its
/// optimality gap is bounded only by the grid resolution.
pub fn weighted_sum_rate_oracle(
    ch: &FdChannelModel,
    mu1: f64,
    grid: &OracleGrid,
) -> Result<(StrategyProfile, f64), ParetoError> {
    if !(0.0..=1.0).contains(&mu1) {
        return Err(ParetoError::Invalid(format!("weight {mu1} outside [0, 1]")));
    }
    let mu2 = 1.0 - mu1;
    if ch.is_miso() {
        if ch.m() > 3 {
            return Err(ParetoError::TooLarge(format!("MISO oracle needs M <= 3, got {}", ch.m())));
        }
        let c1 = miso_candidates(ch, Node::One, grid);
        let c2 = miso_candidates(ch, Node::Two, grid);
        // per candidate: power delivered over the direct link and
        // self-interference generated at the own receiver
        let stats = |cands: &[CovarianceMatrix], node: Node| -> Vec<(f64, f64)> {
            let h = ch.miso_vector(node, node.other()).expect("checked MISO");
            let s = ch.miso_vector(node, node).expect("checked MISO");
            cands
                .iter()
                .map(|q| {
                    let d = q.matrix().real_diagonal();
                    let si: f64 = s.iter().zip(&d).map(|(x, p)| x.norm_sqr() * p).sum();
                    (quad_form(q.matrix(), &h), si)
                })
                .collect()
        };
        let st1 = stats(&c1, Node::One);
        let st2 = stats(&c2, Node::Two);
        let beta = ch.beta();
        let (e12, e21) = (ch.eta(Node::One, Node::Two), ch.eta(Node::Two, Node::One));
        let (e11, e22) = (ch.eta(Node::One, Node::One), ch.eta(Node::Two, Node::Two));
        let (best, value) = st1
            .par_iter()
            .enumerate()
            .map(|(i, &(sig1, si1))| {
                let mut best = (0usize, f64::NEG_INFINITY);
                for (j, &(sig2, si2)) in st2.iter().enumerate() {
                    let r1 = (e12 * sig1 / (1.0 + beta * e22 * si2)).ln_1p();
                    let r2 = (e21 * sig2 / (1.0 + beta * e11 * si1)).ln_1p();
                    let v = (mu1 * r1 + mu2 * r2) / std::f64::consts::LN_2;
                    if v > best.1 {
                        best = (j, v);
                    }
                }
                ((i, best.0), best.1)
            })
            .reduce(|| ((0, 0), f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        return Ok((StrategyProfile::new(c1[best.0].clone(), c2[best.1].clone()), value));
    }
    if ch.m() != 2 || ch.n() != 2 {
        return Err(ParetoError::TooLarge(format!(
            "MIMO oracle needs M = N = 2, got M = {}, N = {}",
            ch.m(),
            ch.n()
        )));
    }
    let c1 = mimo2_candidates(ch, Node::One, grid);
    let c2 = mimo2_candidates(ch, Node::Two, grid);
    let (best, value) = c1
        .par_iter()
        .enumerate()
        .map(|(i, q1)| {
            let mut best = (0usize, f64::NEG_INFINITY);
            for (j, q2) in c2.iter().enumerate() {
                let r = rate_pair(ch, &StrategyProfile::new(q1.clone(), q2.clone())).expect("valid candidates");
                let v = mu1 * r.r1 + mu2 * r.r2;
                if v > best.1 {
                    best = (j, v);
                }
            }
            ((i, best.0), best.1)
        })
        .reduce(|| ((0, 0), f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    Ok((StrategyProfile::new(c1[best.0].clone(), c2[best.1].clone()), value))
}

#[derive(Serialize)]
struct BoundaryRow {
    z1: f64,
    z2: f64,
    r1_bits: f64,
    r2_bits: f64,
    epsilon1: f64,
    epsilon2: f64,
}

/// CSV with header `z1,z2,r1_bits,r2_bits,epsilon1,epsilon2`.
pub fn write_boundary_csv<W: Write>(points: &[ParetoPoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(BoundaryRow {
            z1: p.z1,
            z2: p.z2,
            r1_bits: p.rates.r1,
            r2_bits: p.rates.r2,
            epsilon1: p.epsilon1,
            epsilon2: p.epsilon2,
        })?;
    }
    if points.is_empty() {
        w.write_record(["z1", "z2", "r1_bits", "r2_bits", "epsilon1", "epsilon2"])?;
    }
    w.flush()?;
    Ok(())
}

/// A random feasible direct-channel target for `prob`'s channel.
pub fn random_target<R: Rng + ?Sized>(prob: &DecoupledProblem, rng: &mut R) -> f64 {
    rng.random_range(0.0..=1.0) * prob.max_target()
}
