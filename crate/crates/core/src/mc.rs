//! Plain Monte Carlo estimates of deviation probabilities of `Z_t / t`.
//!
//! Replication `i` at horizon `t` always reads stream `i` of a domain derived
//! from `t`, and hit counts are merged as integers, so reports do not depend
//! on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::legendre::{deviation_bound, DeviationBound, Side};
use crate::model::JointModel;
use crate::renewal::{simulate_endpoint, Variant};
use crate::seeding::{domain_of, stream_rng};
use crate::xreal::{XReal, PosInfinity};

/// Normal quantile for the 95% Wilson intervals.
pub const WILSON_Z: f64 = 1.96;

pub const MIN_REPLICATIONS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub t: f64,
    pub count: u64,
    pub n: u64,
    /// `log(count / n)`; `None` when censored.
    pub log_prob: Option<f64>,
    /// `log(count / n) / t`.
    pub rate: Option<f64>,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub censored: bool,
}

impl TailPoint {
    fn new(t: f64, count: u64, n: u64) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(count, n, WILSON_Z);
        let log_prob = (count > 0).then(|| (count as f64 / n as f64).ln());
        TailPoint {
            t,
            count,
            n,
            log_prob,
            rate: log_prob.map(|l| l / t),
            ci_lo,
            ci_hi,
            censored: count == 0,
        }
    }

    /// Half-width of the Wilson interval on the log scale.
    pub fn log_half_width(&self) -> Option<f64> {
        (self.ci_lo > 0.0).then(|| 0.5 * (self.ci_hi.ln() - self.ci_lo.ln()))
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(count: u64, n: u64, z: f64) -> (f64, f64) {
    let nf = n as f64;
    let p = count as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub n_points: usize,
}

/// Weighted least squares of `log p` against `t` over uncensored points,
/// weights the inverse log-scale Wilson half-widths. Needs three points.
pub fn fit_slope(points: &[TailPoint]) -> Option<SlopeFit> {
    let data: Vec<(f64, f64, f64)> = points
        .iter()
        .filter_map(|p| Some((p.t, p.log_prob?, 1.0 / p.log_half_width()?)))
        .collect();
    if data.len() < 3 {
        return None;
    }
    let sw: f64 = data.iter().map(|d| d.2).sum();
    let tbar = data.iter().map(|d| d.2 * d.0).sum::<f64>() / sw;
    let ybar = data.iter().map(|d| d.2 * d.1).sum::<f64>() / sw;
    let sxx: f64 = data.iter().map(|d| d.2 * (d.0 - tbar).powi(2)).sum();
    let sxy: f64 = data.iter().map(|d| d.2 * (d.0 - tbar) * (d.1 - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * tbar;
    let rss: f64 = data.iter().map(|d| d.2 * (d.1 - intercept - slope * d.0).powi(2)).sum();
    let dof = (data.len() - 2) as f64;
    Some(SlopeFit {
        slope,
        intercept,
        stderr: (rss / dof / sxx).sqrt(),
        n_points: data.len(),
    })
}

/// Slopes between consecutive uncensored points.
pub fn local_slopes(points: &[TailPoint]) -> Vec<(f64, f64)> {
    let live: Vec<&TailPoint> = points.iter().filter(|p| !p.censored).collect();
    live.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            (0.5 * (a.t + b.t), (b.log_prob.unwrap() - a.log_prob.unwrap()) / (b.t - a.t))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub side: Side,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub model_digest: String,
    pub threshold: Threshold,
    pub mean: f64,
    /// `m + a` (upper) or `m - a` (lower).
    pub level: f64,
    pub points: Vec<TailPoint>,
    pub slope_fit: Option<SlopeFit>,
    pub insufficient_events: bool,
    pub theory: Option<DeviationBound>,
    pub theory_error: Option<String>,
    /// Set when the model and its exponential-moment bounds were estimated
    /// from data.
    pub estimate_based: bool,
}

impl DeviationReport {
    pub fn theory_bound(&self) -> Option<XReal> {
        self.theory.map(|b| b.bound)
    }

    /// `slope <= -bound + 2 stderr`: the one-sided consistency implied by a
    /// limsup upper bound. `None` without a slope or a bound.
    pub fn consistent_with_bound(&self) -> Option<bool> {
        let fit = self.slope_fit?;
        let bound = self.theory_bound()?;
        Some(match bound {
            PosInfinity => false,
            XReal::Finite(b) => fit.slope <= -b + 2.0 * fit.stderr,
        })
    }
}

fn check_grid(t_grid: &[f64], n: u64) -> Result<()> {
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
        return Err(Error::Parameter("t grid must be nonempty and positive".into()));
    }
    if t_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Parameter("t grid must be strictly increasing".into()));
    }
    if n < MIN_REPLICATIONS {
        return Err(Error::Parameter(format!("need at least {MIN_REPLICATIONS} replications, got {n}")));
    }
    Ok(())
}

/// Counts replications `i < n` for which `hit(i)` holds, in parallel.
fn count_hits<F: Fn(u64) -> Result<bool> + Sync>(n: u64, hit: F) -> Result<u64> {
    (0..n)
        .into_par_iter()
        .map(|i| hit(i).map(u64::from))
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

/// Estimates `P(Z_t / t >= m + a)` (or `<= m - a`) on each horizon.
pub fn estimate_tail(
    model: &JointModel,
    side: Side,
    a: f64,
    t_grid: &[f64],
    n_replications: u64,
    seed: u64,
) -> Result<DeviationReport> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::Parameter(format!("a must be positive, got {a}")));
    }
    check_grid(t_grid, n_replications)?;
    let m = model.mean_ratio()?;
    let level = match side {
        Side::Upper => m + a,
        Side::Lower => m - a,
    };
    let mut points = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let domain = domain_of("tail", t);
        let count = count_hits(n_replications, |i| {
            let (z, _) = simulate_endpoint(model, t, &mut stream_rng(seed, domain, i))?;
            let y = z / t;
            Ok(match side {
                Side::Upper => y >= level,
                Side::Lower => y <= level,
            })
        })?;
        points.push(TailPoint::new(t, count, n_replications));
    }
    let slope_fit = fit_slope(&points);
    let (theory, theory_error) = match deviation_bound(model, a, side, None) {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(DeviationReport {
        model_digest: model.digest(),
        threshold: Threshold { side, a },
        mean: m,
        level,
        insufficient_events: slope_fit.is_none(),
        points,
        slope_fit,
        theory,
        theory_error,
        estimate_based: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxRateReport {
    pub model_digest: String,
    pub variant: Variant,
    pub delta: f64,
    pub points: Vec<TailPoint>,
    pub slope_fit: Option<SlopeFit>,
    pub insufficient_events: bool,
    /// `-eta0 delta / 2` for truncation; `None` when the limit is `-inf`
    /// (shifts, or `eta0 = inf`).
    pub rate_bound: Option<f64>,
}

impl ApproxRateReport {
    /// `slope <= rate_bound + 2 stderr`, `None` without a slope or bound.
    pub fn consistent_with_bound(&self) -> Option<bool> {
        let fit = self.slope_fit?;
        Some(fit.slope <= self.rate_bound? + 2.0 * fit.stderr)
    }
}

/// Frequency of `|Z_t - Z_t^n| / t > 2 delta` (truncation) or
/// `|M_t - M_t^eps| > delta t` (shift) on coupled paths.
pub fn estimate_approx_rate(
    model: &JointModel,
    variant: Variant,
    delta: f64,
    t_grid: &[f64],
    n_replications: u64,
    seed: u64,
) -> Result<ApproxRateReport> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::Parameter(format!("delta must be positive, got {delta}")));
    }
    check_grid(t_grid, n_replications)?;
    let other = variant.apply(model)?;
    let mut points = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let domain = domain_of("approx", t);
        let count = count_hits(n_replications, |i| {
            let rng = stream_rng(seed, domain, i);
            let (z, m) = simulate_endpoint(model, t, &mut rng.clone())?;
            let (zv, mv) = simulate_endpoint(&other, t, &mut rng.clone())?;
            Ok(match variant {
                Variant::TruncateW { .. } => (z - zv).abs() / t > 2.0 * delta,
                Variant::ShiftTau { .. } => (m as f64 - mv as f64).abs() > delta * t,
            })
        })?;
        points.push(TailPoint::new(t, count, n_replications));
    }
    let slope_fit = fit_slope(&points);
    let rate_bound = match (variant, model.exp_moment_bounds().eta0) {
        (Variant::TruncateW { .. }, XReal::Finite(eta0)) => Some(-eta0 * delta / 2.0),
        _ => None,
    };
    Ok(ApproxRateReport {
        model_digest: model.digest(),
        variant,
        delta,
        insufficient_events: slope_fit.is_none(),
        points,
        slope_fit,
        rate_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TightnessRow {
    pub alpha: f64,
    /// Smallest half-width on the candidate grid whose exceedance slope is
    /// below `-alpha`; `None` when no candidate qualifies.
    pub half_width: Option<f64>,
    pub slope: Option<f64>,
    pub stderr: Option<f64>,
    /// The chosen half-width was never exceeded on any horizon.
    pub censored: bool,
}

/// For each `alpha`, the smallest `A` in `a_grid` such that the fitted slope of
/// `log P(|Z_t / t - m| >= A)` lies below `-alpha`. Candidates that are never
/// exceeded count as satisfied and are flagged as censored.
pub fn exponential_tightness_probe(
    model: &JointModel,
    alpha_grid: &[f64],
    a_grid: &[f64],
    t_grid: &[f64],
    n_replications: u64,
    seed: u64,
) -> Result<Vec<TightnessRow>> {
    check_grid(t_grid, n_replications)?;
    if a_grid.windows(2).any(|w| !(w[0] < w[1])) || a_grid.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::Parameter("A grid must be positive and strictly increasing".into()));
    }
    let bounds = model.exp_moment_bounds();
    if bounds.theta0 == XReal::ZERO || bounds.eta0 == XReal::ZERO {
        return Err(Error::HypothesisViolation("tightness needs theta0 > 0 and eta0 > 0".into()));
    }
    let m = model.mean_ratio()?;
    // One ensemble per horizon, reused for every candidate A.
    let mut deviations: Vec<Vec<f64>> = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let domain = domain_of("tight", t);
        let devs: Vec<f64> = (0..n_replications)
            .into_par_iter()
            .map(|i| simulate_endpoint(model, t, &mut stream_rng(seed, domain, i)).map(|(z, _)| (z / t - m).abs()))
            .collect::<Result<_>>()?;
        deviations.push(devs);
    }
    let fits: Vec<(Option<SlopeFit>, bool)> = a_grid
        .iter()
        .map(|&a| {
            let points: Vec<TailPoint> = t_grid
                .iter()
                .zip(&deviations)
                .map(|(&t, devs)| TailPoint::new(t, devs.iter().filter(|&&d| d >= a).count() as u64, n_replications))
                .collect();
            (fit_slope(&points), points.iter().all(|p| p.censored))
        })
        .collect();
    Ok(alpha_grid
        .iter()
        .map(|&alpha| {
            let hit = a_grid.iter().zip(&fits).find(|(_, (fit, censored))| {
                *censored || fit.map(|f| f.slope < -alpha).unwrap_or(false)
            });
            match hit {
                Some((&a, (fit, censored))) => TightnessRow {
                    alpha,
                    half_width: Some(a),
                    slope: fit.map(|f| f.slope),
                    stderr: fit.map(|f| f.stderr),
                    censored: *censored,
                },
                None => TightnessRow {
                    alpha,
                    half_width: None,
                    slope: None,
                    stderr: None,
                    censored: false,
                },
            }
        })
        .collect())
}
