use fdsig::harness::{
    gaussian_q, ne_vs_tdma_crossovers, run, run_and_write, sidecar_path, wilson_interval, ExperimentName,
    ExperimentResult, ExperimentSpec,
};
use serde_json::{json, Value};

fn spec(name: ExperimentName, seed: u64, params: Value) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(name, seed);
    for (k, v) in params.as_object().unwrap() {
        s = s.with_param(k, v.clone());
    }
    s
}

fn column(r: &ExperimentResult, name: &str) -> Vec<f64> {
    let k = r.column_index(name).unwrap();
    r.rows.iter().map(|row| row[k].as_f64().unwrap()).collect()
}

fn small_specs() -> Vec<ExperimentSpec> {
    vec![
        spec(ExperimentName::RateRegion, 3, json!({"grid": 15, "gamma_db": [-20.0, -60.0], "tdma_points": 5})),
        spec(ExperimentName::NeVsTdma, 3, json!({"trials": 4, "eta_direct_db": [0.0], "eta_self_db": [0.0, 60.0, 90.0]})),
        spec(ExperimentName::UniquenessProbability, 3, json!({"trials": 500, "gamma_db": [-60.0, -40.0]})),
        spec(ExperimentName::IwfaConvergence, 3, json!({"trials": 50, "gamma_db": [-20.0], "steps": [2, 3]})),
        spec(ExperimentName::Ber, 3, json!({"bits": 2000, "snr_db": [0.0, 6.0], "grid": 20})),
    ]
}

#[test]
fn identical_specs_give_identical_csv() {
    for s in small_specs() {
        let a = run(&s).unwrap().to_csv().unwrap();
        let b = run(&s).unwrap().to_csv().unwrap();
        assert_eq!(a, b, "{}", s.name);
        let mut other = s.clone();
        other.rng_seed += 1;
        if s.name != ExperimentName::RateRegion {
            assert_ne!(a, run(&other).unwrap().to_csv().unwrap(), "{}", s.name);
        }
    }
}

#[test]
fn metadata_echoes_full_parameters() {
    for s in small_specs() {
        let r = run(&s).unwrap();
        let meta = &r.metadata;
        assert_eq!(meta["experiment"], json!(s.name.as_str()));
        assert_eq!(meta["rng_seed"], json!(s.rng_seed));
        for (k, v) in &s.params {
            assert_eq!(&meta["params"][k], v, "{} {k}", s.name);
        }
        // defaults are echoed too
        assert!(meta["params"].as_object().unwrap().len() > s.params.len(), "{}", s.name);
    }
}

#[test]
fn outputs_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    let mut s = small_specs().remove(2);
    s.output_path = Some(path.clone());
    let r = run_and_write(&s).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, r.to_csv().unwrap());
    assert!(text.starts_with("beta_db,gamma_db,analytic,monte_carlo,mc_se,trials\n"));
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
    assert_eq!(meta, r.metadata);
}

#[test]
fn averaged_columns_carry_standard_errors() {
    let r = run(&small_specs()[1]).unwrap();
    for se in column(&r, "ne_se").into_iter().chain(column(&r, "tdma_se")) {
        assert!(se.is_finite() && se >= 0.0);
    }
    let r = run(&small_specs()[2]).unwrap();
    assert!(column(&r, "mc_se").iter().all(|s| s.is_finite()));
}

#[test]
fn ne_doubles_tdma_at_low_self_interference() {
    let s = spec(
        ExperimentName::NeVsTdma,
        11,
        json!({"trials": 30, "eta_direct_db": [0.0, 10.0, 20.0], "eta_self_db": [0.0]}),
    );
    let r = run(&s).unwrap();
    for (ne, tdma) in column(&r, "ne_sum_rate").into_iter().zip(column(&r, "tdma_sum_rate")) {
        let ratio = ne / tdma;
        assert!((ratio - 2.0).abs() < 0.02, "{ratio}");
    }
}

#[test]
fn ne_sum_rate_falls_with_self_interference() {
    let sweep: Vec<f64> = (0..=10).map(|k| 40.0 + 6.0 * k as f64).collect();
    let s = spec(
        ExperimentName::NeVsTdma,
        12,
        json!({"trials": 40, "eta_direct_db": [10.0], "eta_self_db": sweep}),
    );
    let r = run(&s).unwrap();
    let x = column(&r, "eta_self_db");
    let y = column(&r, "ne_sum_rate");
    let se = column(&r, "ne_se");
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx;
    let var = x.iter().zip(&se).map(|(a, s)| (a - mx).powi(2) * s * s).sum::<f64>() / (sxx * sxx);
    assert!(slope + 3.0 * var.sqrt() < 0.0, "slope {slope} se {}", var.sqrt());
    let crossings = ne_vs_tdma_crossovers(&r);
    assert_eq!(crossings.len(), 1);
    assert!(crossings[0].1.is_some());
    assert!(r.summary()["exclusion_rate"].as_f64().unwrap() < 0.2);
}

#[test]
fn uniqueness_probability_shape() {
    let gammas: Vec<f64> = (0..9).map(|k| -80.0 + 10.0 * k as f64).collect();
    let s = spec(
        ExperimentName::UniquenessProbability,
        4,
        json!({"trials": 4000, "gamma_db": gammas, "beta_db": [-40.0, -60.0]}),
    );
    let r = run(&s).unwrap();
    let analytic = column(&r, "analytic");
    let mc = column(&r, "monte_carlo");
    let se = column(&r, "mc_se");
    let g = gammas.len();
    for b in 0..2 {
        let a = &analytic[b * g..(b + 1) * g];
        assert!(a.windows(2).all(|w| w[1] >= w[0]));
        let m = &mc[b * g..(b + 1) * g];
        let s = &se[b * g..(b + 1) * g];
        assert!(m.windows(2).zip(s.windows(2)).all(|(w, e)| w[1] >= w[0] - 2.0 * (e[0] + e[1])));
    }
    // smaller beta is at least as likely to be unique
    for k in 0..g {
        assert!(analytic[g + k] >= analytic[k]);
    }
    assert!(analytic[2 * g - 1] > 1.0 - 1e-5);
    assert!(mc[2 * g - 1] == 1.0);
}

#[test]
fn iwfa_probability_monotone_in_steps() {
    let s = spec(
        ExperimentName::IwfaConvergence,
        5,
        json!({"trials": 300, "gamma_db": [-40.0, -20.0], "steps": [1, 2, 3, 4, 6, 10]}),
    );
    let r = run(&s).unwrap();
    let p = column(&r, "probability");
    for block in p.chunks(6) {
        assert!(block.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn iwfa_without_front_end_noise_converges_at_once() {
    let s = spec(
        ExperimentName::IwfaConvergence,
        6,
        json!({"trials": 200, "beta_db": null, "gamma_db": [-40.0, 0.0], "steps": [1]}),
    );
    let r = run(&s).unwrap();
    assert!(column(&r, "probability").iter().all(|&p| p == 1.0));
}

fn ber_rows<'a>(r: &'a ExperimentResult, strategy: &'a str) -> Vec<(f64, f64, f64, f64)> {
    r.rows_where("strategy", strategy)
        .map(|row| {
            (
                r.value(row, "snr_db").unwrap(),
                r.value(row, "ber").unwrap(),
                r.value(row, "ci_low").unwrap(),
                r.value(row, "ci_high").unwrap(),
            )
        })
        .collect()
}

#[test]
fn ber_limits() {
    let s = spec(
        ExperimentName::Ber,
        8,
        json!({"bits": 20000, "beta_db": null, "snr_db": [-40.0, 25.0], "strategies": ["optimal"], "grid": 20}),
    );
    let r = run(&s).unwrap();
    let rows = ber_rows(&r, "optimal");
    // pure guessing at vanishing SNR
    let (_, ber, lo, hi) = rows[0];
    assert!(lo <= 0.5 && 0.5 <= hi, "{ber}");
    // no error floor without front-end noise
    assert_eq!(rows[1].1, 0.0);
}

#[test]
fn ber_tracks_analytic_curve() {
    let s = spec(
        ExperimentName::Ber,
        9,
        json!({"bits": 40000, "snr_db": [0.0, 4.0, 8.0], "strategies": ["ne", "zf"], "grid": 20}),
    );
    let r = run(&s).unwrap();
    for row in &r.rows {
        let analytic = r.value(row, "analytic_ber").unwrap();
        let (lo, hi) = (r.value(row, "ci_low").unwrap(), r.value(row, "ci_high").unwrap());
        assert!(lo <= analytic && analytic <= hi, "{row:?}");
    }
}

#[test]
fn ber_ordering_where_intervals_separate() {
    let s = spec(ExperimentName::Ber, 10, json!({"bits": 40000, "snr_db": [2.0, 6.0, 10.0], "grid": 40}));
    let r = run(&s).unwrap();
    let opt = ber_rows(&r, "optimal");
    let ne = ber_rows(&r, "ne");
    let zf = ber_rows(&r, "zf");
    let mut separated = 0;
    for k in 0..opt.len() {
        for (better, worse) in [(opt[k], ne[k]), (ne[k], zf[k]), (opt[k], zf[k])] {
            if better.3 < worse.2 || worse.3 < better.2 {
                separated += 1;
                assert!(better.1 < worse.1, "{better:?} vs {worse:?}");
            }
        }
    }
    assert!(separated > 0);
}

#[test]
fn rate_region_blocks() {
    let s = spec(
        ExperimentName::RateRegion,
        2,
        json!({"grid": 25, "beta_db": [-60.0, null], "gamma_db": [-20.0, -40.0], "tdma_points": 11}),
    );
    let r = run(&s).unwrap();
    let count = |b: &str| r.rows_where("block", b).count();
    assert_eq!(count("tdma"), 11);
    assert_eq!(count("ne"), 4);
    assert_eq!(count("zf"), 4);
    assert!(count("ideal") > 0);
    let tdma: Vec<_> = r.rows_where("block", "tdma").collect();
    let r1_end = r.value(tdma[10], "r1_bits").unwrap();
    assert_eq!(r.value(tdma[0], "r1_bits").unwrap(), 0.0);
    // unit-norm vectors, eta = 10 dB, P = 1
    assert!((r1_end - 11f64.log2()).abs() < 1e-12);
}

#[test]
fn wilson_contains_point_estimate_and_q_matches_tail() {
    for (k, n) in [(0, 10), (3, 10), (10, 10), (500, 100_000)] {
        let (lo, hi) = wilson_interval(k, n, 2.0);
        let p = k as f64 / n as f64;
        assert!(lo <= p + 1e-15 && p <= hi + 1e-15);
    }
    // Q is decreasing and symmetric about 1/2
    assert!(gaussian_q(1.0) > gaussian_q(2.0));
    assert!((gaussian_q(0.3) + gaussian_q(-0.3) - 1.0).abs() < 1e-12);
}
