use renewal_ldp::hawkes::{
    ensemble_check, extract_renewal_pairs, hawkes_deviation_pipeline, intensity_at, lag_one_correlation, moment_term,
    simulate_hawkes, simulate_hawkes_indexed, simulate_hawkes_traced, HawkesConfig, Kernel,
};
use renewal_ldp::legendre::{deviation_bound, BoundBranch, Side};
use renewal_ldp::mc::{estimate_approx_rate, estimate_tail, exponential_tightness_probe};
use renewal_ldp::renewal::{lln_clt_check, Variant};
use renewal_ldp::{Error, JointModel, TauFamily, WFamily};

fn poisson() -> JointModel {
    JointModel::independent(TauFamily::Exponential { rate: 1.0 }, WFamily::Constant { value: 1.0 }).unwrap()
}

fn exp_exp() -> JointModel {
    JointModel::independent(TauFamily::Exponential { rate: 1.0 }, WFamily::Exponential { rate: 1.0 }).unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn tail_reports_do_not_depend_on_worker_count() {
    let run = || {
        let r = estimate_tail(&poisson(), Side::Upper, 0.5, &[4.0, 8.0, 12.0], 20_000, 11).unwrap();
        serde_json::to_string(&r).unwrap()
    };
    assert_eq!(in_pool(1, run), in_pool(4, run));
}

#[test]
fn counts_round_trip_through_log_probabilities() {
    let r = estimate_tail(&poisson(), Side::Upper, 0.5, &[4.0, 8.0, 12.0, 16.0], 20_000, 3).unwrap();
    for p in r.points.iter().filter(|p| !p.censored) {
        let back = ((p.t * p.rate.unwrap()).exp() * p.n as f64).round() as u64;
        assert_eq!(back, p.count);
        assert!(p.ci_lo <= p.count as f64 / p.n as f64 && p.count as f64 / p.n as f64 <= p.ci_hi);
    }
    assert!(r.slope_fit.is_some());
    assert!(!r.estimate_based);
}

#[test]
fn small_replication_counts_are_rejected() {
    let err = estimate_tail(&poisson(), Side::Upper, 1.0, &[5.0], 999, 1).unwrap_err();
    assert!(matches!(err, Error::Parameter(_)));
}

#[test]
fn lower_tail_of_exponential_rewards_respects_bound() {
    let r = estimate_tail(&exp_exp(), Side::Lower, 0.5, &[4.0, 6.0, 8.0, 10.0, 12.0], 50_000, 5).unwrap();
    assert_eq!(r.consistent_with_bound(), Some(true), "{r:?}");
}

#[test]
fn truncation_above_a_bounded_reward_never_differs() {
    let model =
        JointModel::independent(TauFamily::Exponential { rate: 1.0 }, WFamily::Uniform { lo: -1.0, hi: 1.0 }).unwrap();
    let r = estimate_approx_rate(&model, Variant::TruncateW { n: 1.5 }, 0.01, &[5.0, 10.0, 20.0], 5_000, 2).unwrap();
    assert!(r.points.iter().all(|p| p.count == 0));
    assert!(r.insufficient_events);
}

#[test]
fn shifted_waiting_times_change_counts() {
    let r = estimate_approx_rate(&poisson(), Variant::ShiftTau { eps: 0.01 }, 0.05, &[40.0, 80.0, 120.0, 160.0], 20_000, 9).unwrap();
    assert!(r.points[0].count > r.points[3].count);
    assert!(r.rate_bound.is_none());
}

#[test]
fn tightness_half_width_grows_with_alpha() {
    let a_grid: Vec<f64> = (1..=40).map(|k| 0.05 * k as f64).collect();
    let rows = exponential_tightness_probe(&poisson(), &[0.02, 0.1, 0.3], &a_grid, &[4.0, 8.0, 12.0, 16.0], 20_000, 4)
        .unwrap();
    let widths: Vec<f64> = rows.iter().map(|r| r.half_width.unwrap()).collect();
    assert!(widths.windows(2).all(|w| w[0] <= w[1]), "{widths:?}");
}

#[test]
fn lln_and_clt_on_a_moderate_horizon() {
    let s = lln_clt_check(&poisson(), 200.0, 4000, 8).unwrap();
    assert!((s.mean_zt_over_t - 1.0).abs() < 0.01);
    assert!(s.ks_distance.unwrap() < 0.04);
    let degenerate = JointModel::independent(TauFamily::Deterministic { value: 1.0 }, WFamily::Constant { value: 2.0 }).unwrap();
    let s = lln_clt_check(&degenerate, 50.0, 100, 8).unwrap();
    assert!(s.degenerate && s.ks_distance.is_none());
    assert_eq!(s.mean_zt_over_t, 2.0);
}

fn hawkes(values: Vec<f64>, breakpoints: Vec<f64>, support: f64, horizon: f64, seed: u64) -> HawkesConfig {
    HawkesConfig { baseline: 1.0, kernel: Kernel { breakpoints, values, support }, horizon, seed }
}

#[test]
fn thinning_matches_direct_intensity() {
    let cfg = hawkes(vec![0.6, -1.5, 0.3], vec![0.0, 0.2, 0.5], 0.8, 200.0, 21);
    let (path, trace) = simulate_hawkes_traced(&cfg).unwrap();
    assert_eq!(path, simulate_hawkes(&cfg).unwrap());
    let mut accepted = Vec::new();
    for step in &trace {
        let direct = (cfg.baseline
            + accepted
                .iter()
                .map(|&t: &f64| {
                    let u = step.time - t;
                    if u <= 0.0 || step.time >= t + 0.8 {
                        0.0
                    } else if step.time < t + 0.2 {
                        0.6
                    } else if step.time < t + 0.5 {
                        -1.5
                    } else {
                        0.3
                    }
                })
                .sum::<f64>())
        .max(0.0);
        assert_eq!(step.intensity, direct);
        assert!(step.bound >= direct);
        assert_eq!(step.accepted, step.uniform * step.bound <= direct && direct > 0.0);
        if step.accepted {
            accepted.push(step.time);
        }
    }
    assert_eq!(accepted, path.events);
    assert!(path.intensities.iter().all(|&l| l > 0.0));
    assert_eq!(intensity_at(&cfg, [], 1.0), 1.0);
}

#[test]
fn zero_kernel_is_a_poisson_process() {
    let mut cfg = hawkes(vec![], vec![], 0.0, 500.0, 1);
    cfg.baseline = 2.0;
    let path = simulate_hawkes(&cfg).unwrap();
    let rate = path.events.len() as f64 / cfg.horizon;
    assert!((1.9..=2.1).contains(&rate), "{rate}");
    let pairs = extract_renewal_pairs(&path, 0.0).unwrap();
    assert!(pairs.iter().all(|p| p.1 == 1.0));
}

#[test]
fn inhibition_lowers_and_excitation_raises_the_rate() {
    let control = hawkes(vec![0.0], vec![0.0], 1.0, 5000.0, 3);
    let inhibit = hawkes(vec![-0.5], vec![0.0], 1.0, 5000.0, 3);
    let excite = hawkes(vec![0.4], vec![0.0], 1.0, 5000.0, 3);
    let rate = |c: &HawkesConfig| simulate_hawkes(c).unwrap().events.len() as f64 / c.horizon;
    assert!(rate(&inhibit) < rate(&control));
    let expected = 1.0 / (1.0 - excite.kernel.integral());
    assert!((rate(&excite) / expected - 1.0).abs() < 0.05);
}

#[test]
fn inhibiting_cycles_look_independent() {
    let cfg = hawkes(vec![-0.8, -0.3], vec![0.0, 0.5], 1.0, 40_000.0, 17);
    let path = simulate_hawkes(&cfg).unwrap();
    let pairs = extract_renewal_pairs(&path, 1.0).unwrap();
    assert!(pairs.len() >= 1000);
    let taus: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ws: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    assert!(lag_one_correlation(&taus).abs() <= 0.05);
    assert!(lag_one_correlation(&ws).abs() <= 0.05);
    let (st, sw) = pairs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let ratio = (sw / st) / (path.events.len() as f64 / cfg.horizon);
    assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
}

#[test]
fn ensembles_keep_structural_invariants() {
    let cfg = hawkes(vec![0.5, -2.0], vec![0.0, 0.3], 0.9, 50.0, 5);
    let check = ensemble_check(&cfg, 200).unwrap();
    assert!(check.violations.is_empty(), "{:?}", check.violations);
    assert!(check.total_cycles > 0);
    assert_ne!(simulate_hawkes_indexed(&cfg, 0).unwrap(), simulate_hawkes_indexed(&cfg, 1).unwrap());
}

#[test]
fn pipeline_flags_estimated_bounds() {
    let cfg = hawkes(vec![-0.8, -0.3], vec![0.0, 0.5], 1.0, 5000.0, 2);
    let out = hawkes_deviation_pipeline(&cfg, &[4.0, 8.0, 12.0], 0.3, 5000).unwrap();
    assert!(out.report.estimate_based);
    assert!(out.n_cycles > 100);
    let short = hawkes(vec![0.1], vec![0.0], 50.0, 10.0, 2);
    assert!(matches!(
        hawkes_deviation_pipeline(&short, &[1.0], 0.3, 5000),
        Err(Error::InsufficientCycles(_))
    ));
}

#[test]
fn moment_term_matches_bound_arithmetic() {
    let b = deviation_bound(&exp_exp(), 1.0, Side::Upper, Some(0.3)).unwrap();
    assert_eq!(b.branch, BoundBranch::Truncated);
    assert_eq!(b.moment_term.unwrap(), moment_term(b.eta0.to_f64(), 1.0, 0.3));
}
