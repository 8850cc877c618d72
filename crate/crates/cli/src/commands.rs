use std::fs;

use rayon::prelude::*;
use renewal_ldp::entropy::{minimize_i, Regime};
use renewal_ldp::hawkes::{ensemble_check, extract_renewal_pairs, hawkes_deviation_pipeline, simulate_hawkes, HawkesConfig};
use renewal_ldp::legendre::{deviation_bound as bound, rate_function_j, rate_profile as profile_on_range, rate_profile_on, SaddleStatus};
use renewal_ldp::mc::{estimate_approx_rate, estimate_tail, TailPoint};
use renewal_ldp::model::load_model;
use renewal_ldp::renewal::{lln_clt_check, simulate_coupled, simulate_path, Variant};
use renewal_ldp::{Error, JointModel, XReal};
use serde_json::json;

use crate::output::{opt, real, xreal, Output};
use crate::{CliError, Common, GridArgs, SideArg};

fn status_name(s: SaddleStatus) -> &'static str {
    match s {
        SaddleStatus::Converged => "converged",
        SaddleStatus::ValueInfinite => "value_infinite",
        SaddleStatus::Unbounded => "unbounded",
    }
}

fn regime_name(r: Option<Regime>) -> &'static str {
    match r {
        Some(Regime::FullMass) => "full_mass",
        Some(Regime::FreeMass) => "free_mass",
        Some(Regime::Null) => "null",
        None => "",
    }
}

fn grid_values(grid: &GridArgs) -> Result<Vec<f64>, CliError> {
    if let Some(g) = &grid.m_grid {
        if g.is_empty() {
            return Err(CliError::Usage("--m-grid is empty".into()));
        }
        return Ok(g.clone());
    }
    if !(grid.m_lo < grid.m_hi) || grid.points < 2 {
        return Err(CliError::Usage("need --m-lo < --m-hi and --points >= 2".into()));
    }
    Ok((0..grid.points)
        .map(|i| {
            if i + 1 == grid.points {
                grid.m_hi
            } else {
                grid.m_lo + (grid.m_hi - grid.m_lo) * i as f64 / (grid.points - 1) as f64
            }
        })
        .collect())
}

fn base_config(common: &Common) -> serde_json::Value {
    json!({ "model": common.model.display().to_string(), "out": common.out.display().to_string(), "seed": common.seed })
}

fn merge(mut base: serde_json::Value, extra: serde_json::Value) -> serde_json::Value {
    if let (Some(b), Some(e)) = (base.as_object_mut(), extra.as_object()) {
        for (k, v) in e {
            b.insert(k.clone(), v.clone());
        }
    }
    base
}

pub fn rate_profile(common: &Common, grid: &GridArgs) -> Result<(), CliError> {
    let model = load_model(&common.model)?;
    let profile = match &grid.m_grid {
        Some(g) => rate_profile_on(&model, g)?,
        None => profile_on_range(&model, grid.m_lo, grid.m_hi, grid.points)?,
    };
    let rows: Vec<Vec<String>> = (0..profile.m_grid.len())
        .map(|i| {
            let s = profile.saddles[i];
            vec![
                real(profile.m_grid[i]),
                xreal(profile.j_values[i]),
                xreal(profile.jbar_values[i]),
                s.map(|s| status_name(s.status)).unwrap_or("error").to_string(),
                opt(s.and_then(|s| s.beta_star)),
                opt(s.and_then(|s| s.x_star)),
                opt(s.and_then(|s| s.y_star)),
                profile.errors[i].clone().unwrap_or_default().replace(',', ";"),
            ]
        })
        .collect();
    let mut out = Output::new(&common.out)?;
    out.csv(
        "rate_profile.csv",
        "rate-profile",
        &["m", "j", "jbar", "status", "beta_star", "x_star", "y_star", "error"],
        &rows,
    )?;
    out.json("rate_profile.json", "rate-profile", &profile)?;
    out.manifest("rate-profile", merge(base_config(common), json!({ "grid": grid })), Some(&common.model))
}

pub fn deviation_bound(common: &Common, a: f64, side: SideArg, kappa: Option<f64>) -> Result<(), CliError> {
    let model = load_model(&common.model)?;
    let b = bound(&model, a, side.into(), kappa)?;
    let mut out = Output::new(&common.out)?;
    out.csv(
        "deviation_bound.csv",
        "deviation-bound",
        &["a", "side", "kappa", "bound", "rate_term", "moment_term", "branch", "mean", "theta0", "eta0"],
        &[vec![
            real(a),
            format!("{:?}", side).to_lowercase(),
            opt(b.kappa_used),
            xreal(b.bound),
            xreal(b.rate_term),
            opt(b.moment_term),
            serde_json::to_value(b.branch).unwrap().as_str().unwrap_or_default().to_string(),
            real(b.mean),
            xreal(b.theta0),
            xreal(b.eta0),
        ]],
    )?;
    out.json("deviation_bound.json", "deviation-bound", &json!({ "a": a, "side": side, "bound": b }))?;
    out.manifest(
        "deviation-bound",
        merge(base_config(common), json!({ "a": a, "side": side, "kappa": kappa })),
        Some(&common.model),
    )
}

pub fn simulate(
    common: &Common,
    t: f64,
    paths: Option<usize>,
    truncate: Option<f64>,
    shift: Option<f64>,
) -> Result<(), CliError> {
    let model = load_model(&common.model)?;
    let mut out = Output::new(&common.out)?;
    let config = merge(
        base_config(common),
        json!({ "t": t, "paths": paths, "truncate": truncate, "shift": shift }),
    );
    if let Some(n) = paths {
        let stats = lln_clt_check(&model, t, n, common.seed)?;
        let rows: Vec<Vec<String>> = stats.clt_statistic.iter().map(|&z| vec![real(z)]).collect();
        out.csv("clt.csv", "clt-statistic", &["standardized"], &rows)?;
        out.json("ensemble.json", "ensemble", &stats)?;
        return out.manifest("simulate", config, Some(&common.model));
    }
    let path = simulate_path(&model, t, common.seed)?;
    let rows: Vec<Vec<String>> = path
        .renewal_times
        .iter()
        .zip(&path.rewards)
        .enumerate()
        .map(|(i, (&s, &w))| vec![(i + 1).to_string(), real(s), real(w)])
        .collect();
    out.csv("path.csv", "path", &["i", "renewal_time", "reward"], &rows)?;
    let measure: Vec<Vec<String>> = path
        .empirical_measure()
        .iter()
        .map(|&(u, w, mass)| vec![real(u), real(w), real(mass)])
        .collect();
    out.csv("empirical_measure.csv", "empirical-measure", &["u", "w", "mass"], &measure)?;
    out.json("path.json", "path", &path)?;
    let mut variants = Vec::new();
    if let Some(n) = truncate {
        variants.push(Variant::TruncateW { n });
    }
    if let Some(eps) = shift {
        variants.push(Variant::ShiftTau { eps });
    }
    if !variants.is_empty() {
        let coupled = simulate_coupled(&model, &variants, t, common.seed)?;
        let mut rows = vec![vec!["base".to_string(), path.count.to_string(), real(path.z_t), real(path.mu_phi)]];
        for (v, p) in variants.iter().zip(&coupled.variants) {
            let name = match v {
                Variant::TruncateW { n } => format!("truncate_w({n})"),
                Variant::ShiftTau { eps } => format!("shift_tau({eps})"),
            };
            rows.push(vec![name, p.count.to_string(), real(p.z_t), real(p.mu_phi)]);
        }
        out.csv("coupled.csv", "coupled", &["variant", "count", "z_t", "mu_phi"], &rows)?;
        out.json("coupled.json", "coupled", &json!({ "variants": variants, "paths": coupled }))?;
    }
    out.manifest("simulate", config, Some(&common.model))
}

fn tail_rows(points: &[TailPoint]) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|p| {
            vec![
                real(p.t),
                p.count.to_string(),
                p.n.to_string(),
                opt(p.log_prob),
                opt(p.rate),
                real(p.ci_lo),
                real(p.ci_hi),
                p.censored.to_string(),
            ]
        })
        .collect()
}

const TAIL_HEADER: [&str; 8] = ["t", "count", "n", "log_prob", "rate", "ci_lo", "ci_hi", "censored"];

pub fn mc_tail(common: &Common, a: f64, side: SideArg, t_grid: &[f64], n: u64) -> Result<(), CliError> {
    let model = load_model(&common.model)?;
    let report = estimate_tail(&model, side.into(), a, t_grid, n, common.seed)?;
    let mut out = Output::new(&common.out)?;
    out.csv("mc_tail.csv", "mc-tail", &TAIL_HEADER, &tail_rows(&report.points))?;
    out.json(
        "mc_tail.json",
        "mc-tail",
        &json!({ "report": report, "consistent_with_bound": report.consistent_with_bound() }),
    )?;
    out.manifest(
        "mc-tail",
        merge(base_config(common), json!({ "a": a, "side": side, "t_grid": t_grid, "n": n })),
        Some(&common.model),
    )?;
    if report.insufficient_events {
        return Err(CliError::Censored(format!(
            "fewer than 3 horizons had tail events ({} of {} censored); no slope was fitted",
            report.points.iter().filter(|p| p.censored).count(),
            report.points.len()
        )));
    }
    Ok(())
}

pub fn approx_rate(
    common: &Common,
    truncate: Option<f64>,
    shift: Option<f64>,
    delta: f64,
    t_grid: &[f64],
    n: u64,
) -> Result<(), CliError> {
    let variant = match (truncate, shift) {
        (Some(n), None) => Variant::TruncateW { n },
        (None, Some(eps)) => Variant::ShiftTau { eps },
        _ => return Err(CliError::Usage("give exactly one of --truncate or --shift".into())),
    };
    let model = load_model(&common.model)?;
    let report = estimate_approx_rate(&model, variant, delta, t_grid, n, common.seed)?;
    let mut out = Output::new(&common.out)?;
    out.csv("approx_rate.csv", "approx-rate", &TAIL_HEADER, &tail_rows(&report.points))?;
    out.json(
        "approx_rate.json",
        "approx-rate",
        &json!({ "report": report, "consistent_with_bound": report.consistent_with_bound() }),
    )?;
    out.manifest(
        "approx-rate",
        merge(base_config(common), json!({ "variant": variant, "delta": delta, "t_grid": t_grid, "n": n })),
        Some(&common.model),
    )?;
    if report.insufficient_events {
        return Err(CliError::Censored(format!(
            "fewer than 3 horizons had events ({} of {} censored); no slope was fitted",
            report.points.iter().filter(|p| p.censored).count(),
            report.points.len()
        )));
    }
    Ok(())
}

fn parse_theta0(s: &str) -> Result<XReal, CliError> {
    if s.eq_ignore_ascii_case("inf") {
        return Ok(XReal::PosInfinity);
    }
    let v: f64 = s.parse().map_err(|_| CliError::Usage(format!("--theta0 must be a number or inf, got \"{s}\"")))?;
    XReal::new(v).map_err(|e| CliError::Usage(format!("--theta0: {e}")))
}

/// Tolerance of the oracle / Legendre agreement check.
pub fn oracle_tolerance(value: f64) -> f64 {
    1e-3f64.max(1e-3 * value.abs())
}

pub fn entropy_oracle(common: &Common, grid: &GridArgs, theta0: Option<&str>) -> Result<(), CliError> {
    let model = load_model(&common.model)?;
    let atoms = model
        .atoms()
        .ok_or_else(|| Error::Structural("entropy-oracle needs a discrete_joint model".into()))?
        .len();
    let theta0 = match theta0 {
        Some(s) => parse_theta0(s)?,
        None => model.exp_moment_bounds().theta0,
    };
    let ms = grid_values(grid)?;
    let results: Vec<_> = ms
        .par_iter()
        .map(|&m| -> Result<_, Error> {
            let oracle = minimize_i(&model, m, theta0)?;
            let j = rate_function_j(&model, m)?.value;
            let legendre = if m == 0.0 { j.min(theta0) } else { j };
            Ok((oracle, legendre))
        })
        .collect::<Result<_, _>>()?;

    let mut header: Vec<String> = [
        "m", "value", "mass", "regime", "grid_value", "null_close", "stationarity", "constraint_residual", "note",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..atoms).map(|k| format!("q{k}")));
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|(o, _)| {
            let mut row = vec![
                real(o.m),
                xreal(o.value),
                real(o.mass),
                regime_name(o.regime).to_string(),
                opt(o.grid_value),
                o.null_close.to_string(),
                opt(o.diagnostics.map(|d| d.stationarity)),
                opt(o.diagnostics.map(|d| d.constraint_residual)),
                o.note.clone().unwrap_or_default().replace(',', ";"),
            ];
            match &o.minimizer {
                Some(q) => row.extend(q.weights.iter().map(|&w| real(w))),
                None => row.extend((0..atoms).map(|_| String::new())),
            }
            row
        })
        .collect();
    let mut failures = Vec::new();
    let comparison: Vec<Vec<String>> = results
        .iter()
        .map(|(o, l)| {
            let (diff, tol, pass) = match (o.value, *l) {
                (XReal::Finite(a), XReal::Finite(b)) => {
                    let tol = oracle_tolerance(b);
                    ((a - b).abs(), tol, (a - b).abs() <= tol)
                }
                (XReal::PosInfinity, XReal::PosInfinity) => (0.0, oracle_tolerance(0.0), true),
                _ => (f64::INFINITY, oracle_tolerance(0.0), false),
            };
            if !pass {
                failures.push(o.m);
            }
            vec![real(o.m), xreal(o.value), xreal(*l), real(diff), real(tol), pass.to_string()]
        })
        .collect();

    let mut out = Output::new(&common.out)?;
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    out.csv("oracle.csv", "entropy-oracle", &header_refs, &rows)?;
    out.csv(
        "comparison.csv",
        "oracle-comparison",
        &["m", "oracle", "legendre", "abs_diff", "tolerance", "pass"],
        &comparison,
    )?;
    let oracles: Vec<_> = results.iter().map(|r| &r.0).collect();
    out.json("oracle.json", "entropy-oracle", &json!({ "theta0": theta0, "results": oracles }))?;
    out.manifest(
        "entropy-oracle",
        merge(base_config(common), json!({ "grid": grid, "theta0": theta0 })),
        Some(&common.model),
    )?;
    if !failures.is_empty() {
        return Err(CliError::Mismatch(format!("oracle and Legendre values disagree at m = {failures:?}")));
    }
    let infeasible: Vec<f64> = results.iter().filter(|r| r.0.value.is_infinite()).map(|r| r.0.m).collect();
    if !infeasible.is_empty() {
        return Err(CliError::Censored(format!("the constraint nu(phi) = m is infeasible at m = {infeasible:?}")));
    }
    Ok(())
}

pub fn hawkes(common: &Common, a: f64, t_grid: &[f64], n: u64, check_paths: Option<usize>) -> Result<(), CliError> {
    let text = fs::read_to_string(&common.model).map_err(|e| Error::io(common.model.display().to_string(), e))?;
    let mut config = HawkesConfig::from_json(&text)?;
    config.seed = common.seed;
    let path = simulate_hawkes(&config)?;
    let pairs = extract_renewal_pairs(&path, config.kernel.support)?;
    let result = hawkes_deviation_pipeline(&config, t_grid, a, n)?;
    let check = check_paths.map(|k| ensemble_check(&config, k)).transpose()?;

    let mut out = Output::new(&common.out)?;
    let pair_rows: Vec<Vec<String>> = pairs.iter().map(|&(t, w)| vec![real(t), real(w)]).collect();
    out.csv("hawkes_pairs.csv", "hawkes-pairs", &["tau", "w"], &pair_rows)?;
    out.csv("mc_tail.csv", "mc-tail", &TAIL_HEADER, &tail_rows(&result.report.points))?;
    out.json(
        "hawkes.json",
        "hawkes",
        &json!({
            "config": config,
            "n_events": result.n_events,
            "n_cycles": result.n_cycles,
            "event_rate": result.event_rate,
            "cycle_rate": result.cycle_rate,
            "report": result.report,
            "consistent_with_bound": result.report.consistent_with_bound(),
            "ensemble_check": check,
        }),
    )?;
    out.manifest(
        "hawkes",
        merge(base_config(common), json!({ "a": a, "t_grid": t_grid, "n": n, "check_paths": check_paths })),
        Some(&common.model),
    )?;
    if let Some(c) = &check {
        if !c.violations.is_empty() {
            return Err(Error::Structural(format!("{} path invariant violation(s), first: {}", c.violations.len(), c.violations[0])).into());
        }
    }
    if result.report.insufficient_events {
        return Err(CliError::Censored("fewer than 3 horizons had tail events; no slope was fitted".into()));
    }
    Ok(())
}

fn summary(model: &JointModel) -> Result<serde_json::Value, Error> {
    let bounds = model.exp_moment_bounds();
    let moments = model.moments()?;
    Ok(json!({
        "digest": model.digest(),
        "model": model,
        "moments": moments,
        "mean_ratio": moments.mean_ratio(),
        "bounds": bounds,
    }))
}

pub fn validate(common: &Common) -> Result<(), CliError> {
    let model = load_model(&common.model)?;
    let doc = summary(&model)?;
    let bounds = model.exp_moment_bounds();
    println!("model ok: {}", common.model.display());
    println!("  digest      {}", model.digest());
    println!("  E W / E tau {}", doc["mean_ratio"]);
    println!("  theta0      {}", bounds.theta0);
    println!("  eta0        {}", bounds.eta0);
    let mut out = Output::new(&common.out)?;
    out.json("validate.json", "validate", &doc)?;
    out.manifest("validate", base_config(common), Some(&common.model))?;
    if bounds.theta0 == XReal::ZERO || bounds.eta0 == XReal::ZERO {
        return Err(Error::HypothesisViolation(format!(
            "exponential moments are required: theta0 = {}, eta0 = {}",
            bounds.theta0, bounds.eta0
        ))
        .into());
    }
    Ok(())
}
