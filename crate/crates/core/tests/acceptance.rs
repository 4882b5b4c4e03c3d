//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p fdsig-core --test acceptance -- --nocapture`
//! (output is printed either way; the flag only matters under a harness).
//! The process exits nonzero when a criterion outside `KNOWN_FAILURES` fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::{Duration, Instant};

use fdsig::channel::{
    db_to_linear, sample_channel, tdma_sum_rate, ChannelParams, CovarianceMatrix, FdChannelModel, Node,
    StrategyProfile,
};
use fdsig::harness::{self, ExperimentName, ExperimentResult, ExperimentSpec};
use fdsig::linalg::{complex_gaussian, numerical_rank, seeded_rng, ComplexMatrix, ComplexVector, HermitianMatrix};
use fdsig::nash::{
    best_response, contraction_check, diagonal_probe_pairs, fixture, iwfa, uniqueness_condition,
    water_filling_kkt_residual, IwfaConfig,
};
use fdsig::pareto::{self, dual_certificate, optimal_beamforming, rank_reduce, DecoupledProblem};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// Criteria expected to fail; see the README for the analysis.
const KNOWN_FAILURES: &[u32] = &[8, 10];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_vector(m: usize, rng: &mut ChaCha8Rng) -> ComplexVector {
    DVector::from_iterator(m, (0..m).map(|_| complex_gaussian(rng)))
}

fn random_problem(m: usize, rng: &mut ChaCha8Rng) -> (ComplexVector, Vec<f64>, f64) {
    let h = random_vector(m, rng);
    let c = (0..m).map(|_| complex_gaussian(rng).norm_sqr()).collect();
    let power = rng.random_range(0.5..2.0);
    (h, c, power)
}

/// Best rank-one objective `sum_k c_k a_k^2` over phase-aligned beamformers
/// `w_k = a_k e^{i arg h_k}`, with `a = t u`, `u` on a hyperspherical grid of
/// the nonnegative orthant and `t` the smallest scale meeting the target.
/// The best grid point is then refined by a pattern search over the angles.
struct GridOracle<'a> {
    mags: Vec<f64>,
    c: &'a [f64],
    z: f64,
    power: f64,
}

impl GridOracle<'_> {
    fn unit(&self, angles: &[f64]) -> Vec<f64> {
        let m = self.mags.len();
        let mut u = vec![1.0; m];
        for (k, &theta) in angles.iter().enumerate() {
            for (i, ui) in u.iter_mut().enumerate().skip(k) {
                *ui *= if i == k { theta.cos() } else { theta.sin() };
            }
        }
        u
    }

    fn angles_of(&self, u: &[f64]) -> Vec<f64> {
        (0..u.len() - 1)
            .map(|k| {
                let tail: f64 = u[k + 1..].iter().map(|x| x * x).sum::<f64>().sqrt();
                tail.atan2(u[k])
            })
            .collect()
    }

    fn value(&self, angles: &[f64]) -> f64 {
        let u = self.unit(angles);
        let s: f64 = self.mags.iter().zip(&u).map(|(a, b)| a * b).sum();
        if s <= 0.0 {
            return f64::INFINITY;
        }
        let t2 = self.z / (s * s);
        if t2 > self.power * (1.0 + 1e-12) {
            return f64::INFINITY;
        }
        t2 * self.c.iter().zip(&u).map(|(c, x)| c * x * x).sum::<f64>()
    }

    fn solve(&self, points: usize) -> f64 {
        if self.z == 0.0 {
            return 0.0;
        }
        let dims = self.mags.len() - 1;
        if dims == 0 {
            return self.value(&[]);
        }
        let per_axis = (points as f64).powf(1.0 / dims as f64).ceil() as usize;
        let spacing = FRAC_PI_2 / (per_axis - 1) as f64;
        let mut best = (f64::INFINITY, vec![0.0; dims]);
        let mut idx = vec![0usize; dims];
        loop {
            let angles: Vec<f64> = idx.iter().map(|&i| i as f64 * spacing).collect();
            let v = self.value(&angles);
            if v < best.0 {
                best = (v, angles);
            }
            let mut k = 0;
            while k < dims {
                idx[k] += 1;
                if idx[k] < per_axis {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == dims {
                break;
            }
        }
        // the matched direction is always feasible; near the largest targets
        // it may be the only feasible start
        let matched = self.angles_of(&self.mags);
        let v = self.value(&matched);
        if v < best.0 {
            best = (v, matched);
        }
        let interior = pattern_search(|x| self.value(x), best, spacing, (0.0, FRAC_PI_2));
        interior.min(self.solve_on_budget(points))
    }

    /// Points using the full budget and delivering exactly the target:
    /// `u = k b/|b| + sqrt(1 - k^2) v`, `v` a unit vector orthogonal to `b`.
    fn solve_on_budget(&self, points: usize) -> f64 {
        let m = self.mags.len();
        let norm = self.mags.iter().map(|x| x * x).sum::<f64>().sqrt();
        let along: Vec<f64> = self.mags.iter().map(|x| x / norm).collect();
        let k = ((self.z / self.power).sqrt() / norm).min(1.0);
        let side = (1.0 - k * k).sqrt();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for i in 0..m {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            for q in std::iter::once(&along).chain(basis.iter()) {
                let dot: f64 = e.iter().zip(q).map(|(a, b)| a * b).sum();
                e.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
            }
            let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-8 && basis.len() < m - 1 {
                basis.push(e.into_iter().map(|x| x / n).collect());
            }
        }
        let value = |angles: &[f64]| {
            let coords = sphere_point(angles, m - 1);
            let mut u = along.iter().map(|a| k * a).collect::<Vec<f64>>();
            for (cj, bj) in coords.iter().zip(&basis) {
                u.iter_mut().zip(bj).for_each(|(x, b)| *x += side * cj * b);
            }
            self.power * self.c.iter().zip(&u).map(|(c, x)| c * x * x).sum::<f64>()
        };
        let dims = m.saturating_sub(2);
        if dims == 0 {
            return value(&[0.0]).min(value(&[PI]));
        }
        let per_axis = (points as f64).powf(1.0 / dims as f64).ceil() as usize;
        let spacing = 2.0 * PI / per_axis as f64;
        let mut best = (f64::INFINITY, vec![0.0; dims]);
        let mut idx = vec![0usize; dims];
        loop {
            let angles: Vec<f64> = idx.iter().map(|&i| i as f64 * spacing).collect();
            let v = value(&angles);
            if v < best.0 {
                best = (v, angles);
            }
            let mut j = 0;
            while j < dims {
                idx[j] += 1;
                if idx[j] < per_axis {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == dims {
                break;
            }
        }
        pattern_search(value, best, spacing, (f64::NEG_INFINITY, f64::INFINITY))
    }
}

/// Unit vector in `R^d` from `d - 1` spherical angles.
fn sphere_point(angles: &[f64], d: usize) -> Vec<f64> {
    if d == 1 {
        return vec![angles[0].cos().signum()];
    }
    let mut v = vec![1.0; d];
    for (k, &theta) in angles.iter().enumerate() {
        v[k] *= theta.cos();
        for x in v.iter_mut().skip(k + 1) {
            *x *= theta.sin();
        }
    }
    v
}

/// Compass search over axis and pairwise-diagonal directions with step
/// halving, clamped to `bounds`.
fn pattern_search(f: impl Fn(&[f64]) -> f64, start: (f64, Vec<f64>), step: f64, bounds: (f64, f64)) -> f64 {
    let dims = start.1.len();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..dims {
        for s in [-1.0, 1.0] {
            let mut d = vec![0.0; dims];
            d[i] = s;
            dirs.push(d);
        }
        for j in i + 1..dims {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut d = vec![0.0; dims];
                d[i] = si;
                d[j] = sj;
                dirs.push(d);
            }
        }
    }
    let (mut value, mut x) = start;
    let mut step = step;
    while step > 1e-13 {
        let mut improved = false;
        for d in &dirs {
            let cand: Vec<f64> = x.iter().zip(d).map(|(a, b)| (a + step * b).clamp(bounds.0, bounds.1)).collect();
            let v = f(&cand);
            if v < value {
                value = v;
                x = cand;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    value
}

fn criterion_1() -> Outcome {
    let mut rng = seeded_rng(101);
    let mut worst_gap = 0.0f64;
    let mut uncertified = 0;
    let mut below_oracle = 0.0f64;
    let instances = 500;
    for k in 0..instances {
        let m = 2 + k % 3;
        let (h, c, power) = random_problem(m, &mut rng);
        let base = DecoupledProblem::new(h.clone(), c.clone(), 0.0, power).unwrap();
        let grid = pareto::uniform_targets(base.max_target(), 10);
        let z = grid[rng.random_range(0..grid.len())];
        let prob = base.with_target(z).unwrap();
        let sol = optimal_beamforming(&prob, pareto::DEFAULT_TOL).unwrap();
        if dual_certificate(&prob, &sol).and_then(|cert| cert.verify(&prob, &sol)).is_err() {
            uncertified += 1;
        }
        let oracle = GridOracle {
            mags: h.iter().map(|x| x.norm()).collect(),
            c: &c,
            z,
            power,
        }
        .solve(10_000);
        let scale = sol.objective.abs().max(1.0);
        worst_gap = worst_gap.max((oracle - sol.objective).abs() / scale);
        below_oracle = below_oracle.max((sol.objective - oracle) / scale);
    }

    // optimal mixtures of higher rank: zero-cost, zero-gain coordinates give
    // the optimum a free block that any PSD matrix can fill
    let mut worst_drift = 0.0f64;
    let mut max_rank_out = 0;
    let mut min_rank_in = usize::MAX;
    let mixtures = 100;
    for k in 0..mixtures {
        let m = 3 + k % 2;
        let free = 1 + k % (m - 1);
        let live = m - free;
        let (h_live, c_live, power) = random_problem(live, &mut rng);
        let mut h = DVector::from_element(m, Complex64::new(0.0, 0.0));
        let mut c = vec![0.0; m];
        for i in 0..live {
            h[i] = h_live[i];
            c[i] = c_live[i];
        }
        let mut z = 0.3 * power * h.norm_squared();
        let (prob, sol) = loop {
            let prob = DecoupledProblem::new(h.clone(), c.clone(), z, power).unwrap();
            let sol = optimal_beamforming(&prob, pareto::DEFAULT_TOL).unwrap();
            if sol.weights.power() <= 0.5 * power {
                break (prob, sol);
            }
            z *= 0.5;
        };
        let spare = power - sol.weights.power();
        let mut block = ComplexMatrix::zeros(m, m);
        for _ in 0..free {
            let mut v = DVector::from_element(m, Complex64::new(0.0, 0.0));
            for i in live..m {
                v[i] = complex_gaussian(&mut rng);
            }
            block += &v * v.adjoint();
        }
        let tr = block.trace().re;
        let block = block.scale(0.9 * spare / tr);
        let q = HermitianMatrix::symmetrized(sol.q.matrix().matrix() + block);
        let mixture = CovarianceMatrix::new(q, power).unwrap();
        min_rank_in = min_rank_in.min(numerical_rank(mixture.matrix().matrix(), 1e-9));
        let reduced = rank_reduce(&mixture, &prob, 1e-9).unwrap();
        max_rank_out = max_rank_out.max(numerical_rank(reduced.matrix().matrix(), 1e-9));
        let drift = (prob.objective(reduced.matrix()) - prob.objective(mixture.matrix())).abs();
        worst_drift = worst_drift.max(drift);
    }
    outcome(
        uncertified == 0 && worst_gap < 1e-3 && below_oracle < 1e-9 && min_rank_in >= 2 && max_rank_out == 1 && worst_drift < 1e-8,
        format!(
            "{instances} instances: worst |grid oracle - objective| {worst_gap:.2e} (tol 1e-3), uncertified {uncertified}; \
             {mixtures} mixtures of rank >= {min_rank_in}: output rank <= {max_rank_out}, objective drift {worst_drift:.2e} (tol 1e-8)"
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = seeded_rng(202);
    let (mut mismatches, mut binding) = (0, 0);
    let mut worst_power = 0.0f64;
    let instances = 500;
    for k in 0..instances {
        let (h, c, power) = random_problem(2 + k % 4, &mut rng);
        let max = power * h.norm_squared();
        let z = rng.random_range(0.0..1.0) * max;
        let prob = DecoupledProblem::new(h.clone(), c.clone(), z, power).unwrap();
        let sol = optimal_beamforming(&prob, pareto::DEFAULT_TOL).unwrap();
        let s1: f64 = h.iter().zip(&c).map(|(x, c)| x.norm_sqr() / c).sum();
        let s2: f64 = h.iter().zip(&c).map(|(x, c)| x.norm_sqr() / (c * c)).sum();
        let slack = z <= power * s1 * s1 / s2;
        if slack != (sol.epsilon == 0.0) {
            mismatches += 1;
        }
        if sol.epsilon > 0.0 {
            binding += 1;
            worst_power = worst_power.max((sol.weights.vector().norm_squared() - power).abs() / power);
        }
    }
    outcome(
        mismatches == 0 && binding > 0 && worst_power < 1e-10,
        format!(
            "{instances} instances: {mismatches} mismatches with the closed-form condition; \
             {binding} binding cases, worst |‖w‖² - P|/P {worst_power:.2e} (tol 1e-10)"
        ),
    )
}

fn unit(v: ComplexVector) -> ComplexVector {
    let n = v.norm();
    v / Complex64::new(n, 0.0)
}

fn criterion_3() -> Outcome {
    let mut rng = seeded_rng(303);
    let row = |v: ComplexVector| ComplexMatrix::from_row_slice(1, v.len(), v.as_slice());
    let s = row(unit(random_vector(3, &mut rng)));
    let d = row(unit(random_vector(3, &mut rng)));
    let direct = db_to_linear(10.0);
    let make = |beta: f64, gamma_db: f64| {
        let own = direct / db_to_linear(gamma_db);
        FdChannelModel::new([[s.clone(), d.clone()], [d.clone(), s.clone()]], [[own, direct], [direct, own]], beta, [1.0, 1.0])
            .unwrap()
    };
    let grid = pareto::DEFAULT_GRID;
    let corner = (1.0 + direct).log2();
    let mut pass = true;
    let mut notes = Vec::new();
    for beta_db in [-40.0, -60.0] {
        let start = Instant::now();
        let beta = db_to_linear(beta_db);
        let strong = pareto::rate_grid(&make(beta, -20.0), (grid, grid), pareto::DEFAULT_TOL).unwrap();
        let weak = pareto::rate_grid(&make(beta, -60.0), (grid, grid), pareto::DEFAULT_TOL).unwrap();
        let matched = strong.z1 == weak.z1 && strong.z2 == weak.z2;
        let contained = strong
            .rates
            .iter()
            .zip(&weak.rates)
            .all(|(a, b)| a.r1 >= b.r1 - 1e-12 && a.r2 >= b.r2 - 1e-12);
        let mut corner_err = 0.0f64;
        for gamma_db in [-20.0, -60.0] {
            let points = pareto::pareto_boundary(&make(beta, gamma_db), (grid, grid), pareto::DEFAULT_TOL).unwrap();
            let r1 = points.iter().map(|p| p.rates.r1).fold(0.0, f64::max);
            let r2 = points.iter().map(|p| p.rates.r2).fold(0.0, f64::max);
            corner_err = corner_err.max((r1 - corner).abs()).max((r2 - corner).abs());
        }
        let elapsed = start.elapsed();
        pass &= matched && contained && corner_err < 1e-9 && elapsed < Duration::from_secs(60);
        notes.push(format!(
            "beta {beta_db} dB: matched grid {matched}, containment {contained}, corner error {corner_err:.1e}, {:.1}s",
            elapsed.as_secs_f64()
        ));
    }
    let ideal = make(0.0, -20.0);
    let points = pareto::pareto_boundary(&ideal, (grid, grid), pareto::DEFAULT_TOL).unwrap();
    let best = points.iter().map(|p| p.rates.sum()).fold(0.0, f64::max);
    let ratio_err = (best - 2.0 * tdma_sum_rate(&ideal)).abs();
    pass &= ratio_err < 1e-9;
    notes.push(format!("ideal full-duplex sum rate - 2 x TDMA = {ratio_err:.1e}"));
    outcome(pass, notes.join("; "))
}

/// Two-mode water-filling in closed form.
fn two_mode_powers(g: [f64; 2], budget: f64) -> [f64; 2] {
    let (hi, lo) = if g[0] >= g[1] { (0, 1) } else { (1, 0) };
    let mut p = [0.0; 2];
    let p_hi = 0.5 * (budget + 1.0 / g[lo] - 1.0 / g[hi]);
    if p_hi >= budget {
        p[hi] = budget;
    } else {
        p[hi] = p_hi;
        p[lo] = budget - p_hi;
    }
    p
}

fn random_unitary2(rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let theta: f64 = rng.random_range(0.0..FRAC_PI_2);
    let (a, b, c) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
    let e = |x: f64| Complex64::from_polar(1.0, x);
    ComplexMatrix::from_row_slice(
        2,
        2,
        &[e(a) * theta.cos(), e(b) * theta.sin(), -e(c - b) * theta.sin(), e(c - a) * theta.cos()],
    )
}

fn criterion_4() -> Outcome {
    let mut rng = seeded_rng(404);
    let mut worst_oracle = 0.0f64;
    for _ in 0..200 {
        // node 1 -> node 2; node 2's self channel is diagonal and its strategy
        // diagonal, so the interference covariance is diagonal
        let beta = db_to_linear(rng.random_range(-40.0..-10.0));
        let own = [rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)];
        let h22 = ComplexMatrix::from_row_slice(2, 2, &[Complex64::new(own[0], 0.0), 0.0.into(), 0.0.into(), Complex64::new(own[1], 0.0)]);
        let q2 = [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)];
        let power = rng.random_range(0.2..5.0);
        let eta = [rng.random_range(0.5..2.0), rng.random_range(0.5..20.0)];
        let sigma = [1.0 + beta * eta[0] * own[0] * own[0] * q2[0], 1.0 + beta * eta[0] * own[1] * own[1] * q2[1]];
        let sv = [rng.random_range(0.05..2.0), rng.random_range(0.05..2.0)];
        let u = random_unitary2(&mut rng);
        let v = random_unitary2(&mut rng);
        let root = ComplexMatrix::from_row_slice(2, 2, &[sigma[0].sqrt().into(), 0.0.into(), 0.0.into(), sigma[1].sqrt().into()]);
        let diag = ComplexMatrix::from_row_slice(2, 2, &[sv[0].into(), 0.0.into(), 0.0.into(), sv[1].into()]);
        let h12 = root * &u * diag * v.adjoint();
        let filler = ComplexMatrix::identity(2, 2);
        let ch = FdChannelModel::new(
            [[filler.clone(), h12], [filler, h22]],
            [[1.0, eta[1]], [1.0, eta[0]]],
            beta,
            [power, 3.0 * 2.0],
        )
        .unwrap();
        let opp = CovarianceMatrix::new(HermitianMatrix::from_real_diagonal(&q2), 6.0).unwrap();
        let br = best_response(&ch, Node::One, &opp).unwrap();
        let gains = [eta[1] * sv[0] * sv[0], eta[1] * sv[1] * sv[1]];
        let p = two_mode_powers(gains, power);
        let pd = ComplexMatrix::from_row_slice(2, 2, &[p[0].into(), 0.0.into(), 0.0.into(), p[1].into()]);
        let expected = &v * pd * v.adjoint();
        worst_oracle = worst_oracle.max((br.q.matrix().matrix() - expected).norm());
    }
    let mut worst_kkt = 0.0f64;
    let instances = 1000;
    for k in 0..instances {
        let (m, n) = (1 + k % 4, 1 + (k / 4) % 4);
        let params = ChannelParams {
            m,
            n,
            eta: [
                [db_to_linear(rng.random_range(0.0..40.0)), db_to_linear(rng.random_range(-10.0..20.0))],
                [db_to_linear(rng.random_range(-10.0..20.0)), db_to_linear(rng.random_range(0.0..40.0))],
            ],
            beta: db_to_linear(rng.random_range(-60.0..-20.0)),
            power: [rng.random_range(0.1..20.0), rng.random_range(0.1..20.0)],
            symmetric: false,
        };
        let ch = sample_channel(&params, &mut rng).unwrap();
        let opp = CovarianceMatrix::random(m, ch.power(Node::Two), &mut rng);
        let br = best_response(&ch, Node::One, &opp).unwrap();
        worst_kkt = worst_kkt.max(water_filling_kkt_residual(&br));
    }
    outcome(
        worst_oracle < 1e-6 && worst_kkt < 1e-8,
        format!(
            "200 eigen-aligned 2x2 problems: worst ‖Q - oracle‖_F {worst_oracle:.1e} (tol 1e-6); \
             {instances} random instances: worst KKT residual {worst_kkt:.1e} (tol 1e-8)"
        ),
    )
}

fn random_mimo(rng: &mut ChaCha8Rng, gamma_db: f64) -> FdChannelModel {
    let direct = db_to_linear(10.0);
    let own = direct / db_to_linear(gamma_db);
    let params = ChannelParams {
        m: 3,
        n: 3,
        eta: [[own, direct], [direct, own]],
        beta: db_to_linear(-60.0),
        power: [10.0, 10.0],
        symmetric: false,
    };
    sample_channel(&params, rng).unwrap()
}

fn criterion_5() -> Outcome {
    let mut rng = seeded_rng(505);
    let cfg = IwfaConfig::default();
    let channels = 500;
    let mut failures = Vec::new();
    for k in 0..channels {
        let gamma_db = rng.random_range(-40.0..=0.0);
        let ch = random_mimo(&mut rng, gamma_db);
        let trace = iwfa(&ch, &StrategyProfile::uniform(&ch), &cfg).unwrap();
        if trace.first_below(1e-8).is_none_or(|it| it > 500) {
            failures.push(format!("#{k} (gamma {gamma_db:.1} dB, residual {:.1e})", trace.final_residual().unwrap()));
        }
    }
    for f in &failures {
        println!("    C5 non-converged: {f}");
    }
    let rate = 1.0 - failures.len() as f64 / channels as f64;
    outcome(
        rate >= 0.99,
        format!("{channels} channels: {:.1}% reach residual < 1e-8 within 500 iterations (need >= 99%)", 100.0 * rate),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = seeded_rng(606);
    let (mut tried, mut accepted) = (0, 0);
    let mut worst = 0.0f64;
    let mut unconverged = 0;
    while accepted < 20 {
        tried += 1;
        let gamma_db = rng.random_range(-40.0..=0.0);
        let ch = random_mimo(&mut rng, gamma_db);
        if !uniqueness_condition(&ch).unwrap().holds {
            continue;
        }
        accepted += 1;
        let mut finals = Vec::new();
        for i in 0..5 {
            let init = StrategyProfile::random(&ch, &mut rng);
            let sync = iwfa(&ch, &init, &IwfaConfig::default()).unwrap();
            let cfg = IwfaConfig {
                max_iter: 5000,
                ..IwfaConfig::asynchronous(0.3, 1000 + i)
            };
            let asynchronous = iwfa(&ch, &init, &cfg).unwrap();
            unconverged += usize::from(!sync.converged) + usize::from(!asynchronous.converged);
            finals.push(sync.last().clone());
            finals.push(asynchronous.last().clone());
        }
        for a in 0..finals.len() {
            for b in a + 1..finals.len() {
                worst = worst.max(finals[a].distance(&finals[b]));
            }
        }
    }
    let report = uniqueness_condition(&fixture::channel()).unwrap();
    let radius_ok = report.radius.iter().all(|r| (r - 0.4657).abs() <= 1e-4);
    let pairs = diagonal_probe_pairs(&fixture::probe_profile(), 10_000, 0.5, 0.05, &mut seeded_rng(607)).unwrap();
    let contraction = contraction_check(&fixture::channel(), &pairs, (1.0, 1.0)).unwrap();
    outcome(
        worst < 1e-7 && unconverged == 0 && radius_ok && contraction.max_ratio > 1.0,
        format!(
            "{accepted} unique-NE channels ({tried} drawn), 5 inits x sync/async: worst pairwise distance {worst:.1e} (tol 1e-7), \
             {unconverged} unconverged; example radius {:.6} (target 0.4657 +/- 1e-4); \
             contraction ratio {:.4} over {} probes (need > 1)",
            report.radius[0], contraction.max_ratio, contraction.evaluated
        ),
    )
}

fn run_experiment(name: ExperimentName, seed: u64, params: serde_json::Value) -> (ExperimentResult, Duration) {
    let mut spec = ExperimentSpec::new(name, seed);
    for (k, v) in params.as_object().unwrap() {
        spec = spec.with_param(k, v.clone());
    }
    let start = Instant::now();
    let result = harness::run(&spec).unwrap();
    (result, start.elapsed())
}

fn column(r: &ExperimentResult, name: &str) -> Vec<f64> {
    let k = r.column_index(name).unwrap();
    r.rows.iter().map(|row| row[k].as_f64().unwrap()).collect()
}

fn criterion_7() -> Outcome {
    let (r, elapsed) = run_experiment(ExperimentName::UniquenessProbability, 707, json!({"trials": 100_000}));
    let gap = column(&r, "analytic")
        .iter()
        .zip(column(&r, "monte_carlo"))
        .map(|(a, m)| (a - m).abs())
        .fold(0.0, f64::max);
    outcome(
        gap < 0.01 && elapsed < Duration::from_secs(300),
        format!("{} points x 1e5 trials: max |analytic - MC| {gap:.4} (tol 0.01), {:.1}s", r.rows.len(), elapsed.as_secs_f64()),
    )
}

fn crossovers(params: serde_json::Value) -> (Vec<(f64, Option<f64>)>, f64, Duration) {
    let (r, elapsed) = run_experiment(ExperimentName::NeVsTdma, 808, params);
    let excluded = r.summary()["exclusion_rate"].as_f64().unwrap();
    (harness::ne_vs_tdma_crossovers(&r), excluded, elapsed)
}

fn criterion_8() -> Outcome {
    let targets = [(0.0, 67.0), (10.0, 69.0), (20.0, 72.0)];
    let sweep: Vec<f64> = (0..=50).map(|k| 2.0 * k as f64).collect();
    let check = |found: &[(f64, Option<f64>)], tol: f64| {
        targets.iter().zip(found).all(|(&(d, t), &(fd, x))| d == fd && x.is_some_and(|x| (x - t).abs() <= tol))
    };
    let fmt = |found: &[(f64, Option<f64>)]| {
        found
            .iter()
            .map(|(d, x)| format!("{d}:{}", x.map_or("none".into(), |x| format!("{x:.1}"))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let (desk, desk_excl, desk_time) = crossovers(json!({"trials": 200, "eta_self_db": sweep}));
    let (full, full_excl, _) = crossovers(json!({"full_scale": true, "eta_self_db": sweep}));
    // informational: self-interference entries with variance 1/M
    let (scaled, _, _) = crossovers(json!({"trials": 200, "eta_self_db": sweep, "self_channel_variance": 1.0 / 3.0}));
    println!("    C8 note: with self-channel entry variance 1/M the desk crossovers are {}", fmt(&scaled));
    outcome(
        check(&desk, 3.0) && check(&full, 1.5) && desk_time < Duration::from_secs(600),
        format!(
            "targets 0:67 10:69 20:72 dB; desk (200 trials, excluded {:.1}%) {} within +/-3 dB: {}, {:.1}s; \
             full (1000 trials, excluded {:.1}%) {} within +/-1.5 dB: {}",
            100.0 * desk_excl,
            fmt(&desk),
            check(&desk, 3.0),
            desk_time.as_secs_f64(),
            100.0 * full_excl,
            fmt(&full),
            check(&full, 1.5)
        ),
    )
}

fn criterion_9() -> Outcome {
    let gammas = [-40.0, -30.0, -20.0, -10.0, 0.0];
    let steps = [1, 2, 3, 4, 5, 7, 10, 15, 20];
    let (r, elapsed) = run_experiment(
        ExperimentName::IwfaConvergence,
        909,
        json!({"trials": 10_000, "gamma_db": gammas, "steps": steps}),
    );
    let p = column(&r, "probability");
    let se = column(&r, "se");
    let at = |g: usize, s: usize| g * steps.len() + s;
    let mut violations = 0;
    for s in 0..steps.len() {
        for g in 0..gammas.len() - 1 {
            let (a, b) = (at(g, s), at(g + 1, s));
            if p[b] < p[a] - 2.0 * (se[a] * se[a] + se[b] * se[b]).sqrt() {
                violations += 1;
            }
        }
    }
    let x = 2;
    let row: Vec<String> = (0..gammas.len()).map(|g| format!("{:.3}", p[at(g, x)])).collect();
    outcome(
        violations == 0,
        format!(
            "1e4 trials: {violations} decreases beyond 2 sigma across gamma; P(converged within {} steps) over gamma {gammas:?}: [{}], {:.1}s",
            steps[x],
            row.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

/// Gaussian tail by Craig's integral, `Q(x) = (1/pi) int_0^{pi/2} exp(-x^2 / (2 sin^2 t)) dt`.
fn craig_q(x: f64) -> f64 {
    let n = 4000;
    let h = FRAC_PI_2 / n as f64;
    let f = |t: f64| if t == 0.0 { 0.0 } else { (-x * x / (2.0 * t.sin().powi(2))).exp() };
    let mut sum = f(0.0) + f(FRAC_PI_2);
    for k in 1..n {
        sum += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0 / PI
}

fn criterion_10() -> Outcome {
    let (ideal, _) = run_experiment(
        ExperimentName::Ber,
        1010,
        json!({"beta_db": null, "strategies": ["optimal"], "bits": 100_000}),
    );
    let mut outside = Vec::new();
    for row in &ideal.rows {
        let snr = ideal.value(row, "snr_db").unwrap();
        let expected = craig_q(db_to_linear(snr).sqrt());
        let (lo, hi) = (ideal.value(row, "ci_low").unwrap(), ideal.value(row, "ci_high").unwrap());
        if !(lo <= expected && expected <= hi) {
            let bits = ideal.value(row, "bits").unwrap();
            let errors = ideal.value(row, "errors").unwrap();
            outside.push(format!("{snr} dB: {errors} errors, {:.3} expected", expected * bits));
        }
    }
    let (noisy, _) = run_experiment(ExperimentName::Ber, 1011, json!({"bits": 100_000, "strategies": ["optimal", "zf"]}));
    let get = |s: &'static str| -> Vec<(f64, f64, f64)> {
        noisy
            .rows_where("strategy", s)
            .map(|r| (noisy.value(r, "ber").unwrap(), noisy.value(r, "ci_low").unwrap(), noisy.value(r, "ci_high").unwrap()))
            .collect()
    };
    let (opt, zf) = (get("optimal"), get("zf"));
    let mut disjoint = 0;
    let mut inverted = 0;
    for (o, z) in opt.iter().zip(&zf) {
        if o.2 < z.1 || z.2 < o.1 {
            disjoint += 1;
            if o.0 > z.0 {
                inverted += 1;
            }
        }
    }
    outcome(
        outside.is_empty() && inverted == 0,
        format!(
            "beta = 0: {} of {} SNR points outside the 2-sigma Wilson interval{}; \
             beta -60 dB, gamma -40 dB: optimal > ZF at {inverted} of {disjoint} separated points",
            outside.len(),
            ideal.rows.len(),
            if outside.is_empty() { String::new() } else { format!(" ({})", outside.join(", ")) }
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "rank-one optimality", criterion_1),
        (2, "closed-form weights", criterion_2),
        (3, "rate region shape", criterion_3),
        (4, "water-filling", criterion_4),
        (5, "equilibrium existence", criterion_5),
        (6, "uniqueness and stability", criterion_6),
        (7, "uniqueness probability", criterion_7),
        (8, "NE/TDMA crossover", criterion_8),
        (9, "IWFA convergence trend", criterion_9),
        (10, "QPSK bit error rate", criterion_10),
    ];
    let only: Vec<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut unexpected = Vec::new();
    for (id, name, check) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} C{id} {name} ({:.1}s): {}", start.elapsed().as_secs_f64(), o.detail);
        if !o.pass && !KNOWN_FAILURES.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
