//! Hawkes processes with jump rate `f(u) = max(0, u)` and signed,
//! piecewise-constant kernels of compact support, and their decomposition
//! into i.i.d. cycles `(tau_i, W_i)`.
//!
//! A regeneration happens at `s` when `(s - L, s]` holds no event: the
//! intensity is then back at the baseline and the future is independent of
//! the past. Starting from an empty history, time 0 is a regeneration, and
//! after every event `t_j` followed by a gap longer than `L` the next one is
//! `t_j + L`.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::legendre::Side;
use crate::mc::{estimate_tail, DeviationReport};
use crate::model::{JointModel, Pair};
use crate::seeding::{domain_of, stream_rng};

pub const MAX_EVENTS: usize = 10_000_000;

/// `h(u) = values[k]` for `breakpoints[k] <= u < breakpoints[k + 1]`, the last
/// piece ending at `support`; `h = 0` outside `(0, support)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kernel {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
    pub support: f64,
}

impl Kernel {
    pub fn zero() -> Self {
        Kernel { breakpoints: vec![], values: vec![], support: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(format!("kernel: {msg}")));
        if !(self.support.is_finite() && self.support >= 0.0) {
            return bad(format!("support must be finite and >= 0, got {}", self.support));
        }
        if self.breakpoints.len() != self.values.len() {
            return bad("breakpoints and values must have the same length".into());
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return bad("values must be finite".into());
        }
        if self.support == 0.0 {
            if !self.values.is_empty() {
                return bad("a kernel with support 0 has no pieces".into());
            }
            return Ok(());
        }
        if self.breakpoints.first() != Some(&0.0) {
            return bad("breakpoints must start at 0".into());
        }
        if self.breakpoints.windows(2).any(|w| !(w[0] < w[1])) || *self.breakpoints.last().unwrap() >= self.support {
            return bad("breakpoints must increase strictly and stay below the support".into());
        }
        Ok(())
    }

    /// Contribution at time `s` of an event at `t < s`. Comparisons are made
    /// on `t + b` so that `h` vanishes at `s = t + support` exactly.
    pub fn effect(&self, s: f64, t: f64) -> f64 {
        if s <= t || s >= t + self.support {
            return 0.0;
        }
        let k = self.breakpoints.partition_point(|&b| t + b <= s);
        self.values[k - 1]
    }

    /// Largest positive part of `h` over pieces that are still reachable at
    /// time `s` for an event at `t`.
    fn remaining_positive_sup(&self, s: f64, t: f64, suffix_pos: &[f64]) -> f64 {
        if s >= t + self.support {
            return 0.0;
        }
        let k = self.breakpoints.partition_point(|&b| t + b <= s).max(1);
        suffix_pos[k - 1]
    }

    fn suffix_positive(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.values.len()];
        let mut acc: f64 = 0.0;
        for k in (0..self.values.len()).rev() {
            acc = acc.max(self.values[k].max(0.0));
            out[k] = acc;
        }
        out
    }

    /// `int h`.
    pub fn integral(&self) -> f64 {
        (0..self.values.len())
            .map(|k| {
                let end = self.breakpoints.get(k + 1).copied().unwrap_or(self.support);
                self.values[k] * (end - self.breakpoints[k])
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HawkesConfig {
    pub baseline: f64,
    pub kernel: Kernel,
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
}

impl HawkesConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.baseline.is_finite() && self.baseline > 0.0) {
            return Err(Error::Parameter(format!("baseline must be positive, got {}", self.baseline)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Parameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        self.kernel.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: HawkesConfig = serde_json::from_str(text).map_err(|e| Error::Parse(format!("Hawkes config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesPath {
    pub horizon: f64,
    pub events: Vec<f64>,
    /// Intensity at each accepted event.
    pub intensities: Vec<f64>,
    pub regenerations: Vec<f64>,
    pub pairs: Vec<Pair>,
    /// Events after the last regeneration.
    pub trailing_events: usize,
}

/// One candidate point of the thinning loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThinningStep {
    pub time: f64,
    pub bound: f64,
    pub intensity: f64,
    pub uniform: f64,
    pub accepted: bool,
}

/// `f(lambda + sum_j h(s - t_j))` over the events in `window`.
pub fn intensity_at(config: &HawkesConfig, window: impl IntoIterator<Item = f64>, s: f64) -> f64 {
    let drive: f64 = config.baseline + window.into_iter().map(|t| config.kernel.effect(s, t)).sum::<f64>();
    drive.max(0.0)
}

fn simulate_inner<R: Rng + ?Sized>(
    config: &HawkesConfig,
    rng: &mut R,
    mut trace: Option<&mut Vec<ThinningStep>>,
) -> Result<HawkesPath> {
    config.validate()?;
    let kernel = &config.kernel;
    let suffix_pos = kernel.suffix_positive();
    let mut events = Vec::new();
    let mut intensities = Vec::new();
    let mut window: VecDeque<f64> = VecDeque::new();
    let mut now = 0.0;
    loop {
        while window.front().is_some_and(|&t| now >= t + kernel.support) {
            window.pop_front();
        }
        let bound = config.baseline
            + window
                .iter()
                .map(|&t| kernel.remaining_positive_sup(now, t, &suffix_pos))
                .sum::<f64>();
        let gap: f64 = Exp1.sample(rng);
        let candidate = now + gap / bound;
        if candidate > config.horizon {
            break;
        }
        let u: f64 = rng.random();
        let lambda = intensity_at(config, window.iter().copied(), candidate);
        let accepted = u * bound <= lambda && lambda > 0.0;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(ThinningStep { time: candidate, bound, intensity: lambda, uniform: u, accepted });
        }
        now = candidate;
        if accepted {
            events.push(candidate);
            intensities.push(lambda);
            window.push_back(candidate);
            if events.len() > MAX_EVENTS {
                return Err(Error::Pathology(format!(
                    "more than {MAX_EVENTS} events before the horizon: the process is exploding"
                )));
            }
        }
    }
    let regenerations = regeneration_times(&events, kernel.support, config.horizon);
    let (pairs, trailing_events) = cycles(&events, &regenerations);
    Ok(HawkesPath {
        horizon: config.horizon,
        events,
        intensities,
        regenerations,
        pairs,
        trailing_events,
    })
}

/// Ogata thinning; path `index` of the ensemble seeded by `config.seed`.
pub fn simulate_hawkes_indexed(config: &HawkesConfig, index: u64) -> Result<HawkesPath> {
    let mut rng = stream_rng(config.seed, domain_of("hawkes", 0.0), index);
    simulate_inner(config, &mut rng, None)
}

pub fn simulate_hawkes(config: &HawkesConfig) -> Result<HawkesPath> {
    simulate_hawkes_indexed(config, 0)
}

/// Same draws as `simulate_hawkes`, also returning every candidate point.
pub fn simulate_hawkes_traced(config: &HawkesConfig) -> Result<(HawkesPath, Vec<ThinningStep>)> {
    let mut rng = stream_rng(config.seed, domain_of("hawkes", 0.0), 0);
    let mut trace = Vec::new();
    let path = simulate_inner(config, &mut rng, Some(&mut trace))?;
    Ok((path, trace))
}

/// `0` and every `t_j + L <= horizon` with no event in `(t_j, t_j + L]`.
pub fn regeneration_times(events: &[f64], support: f64, horizon: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    for (j, &t) in events.iter().enumerate() {
        let s = t + support;
        let quiet = events.get(j + 1).is_none_or(|&next| next > s);
        if quiet && s <= horizon {
            out.push(s);
        }
    }
    out
}

/// Complete cycles between consecutive regenerations, and the number of
/// events after the last one.
fn cycles(events: &[f64], regenerations: &[f64]) -> (Vec<Pair>, usize) {
    let mut pairs = Vec::with_capacity(regenerations.len().saturating_sub(1));
    let mut j = 0;
    for w in regenerations.windows(2) {
        let start = j;
        while j < events.len() && events[j] <= w[1] {
            j += 1;
        }
        pairs.push((w[1] - w[0], (j - start) as f64));
    }
    (pairs, events.len() - j)
}

/// Cycle pairs of `path` for kernel support `support`.
pub fn extract_renewal_pairs(path: &HawkesPath, support: f64) -> Result<Vec<Pair>> {
    let regenerations = regeneration_times(&path.events, support, path.horizon);
    if regenerations.len() < 2 {
        return Err(Error::InsufficientCycles(format!(
            "found {} regeneration time(s) before the horizon, need at least 2",
            regenerations.len()
        )));
    }
    Ok(cycles(&path.events, &regenerations).0)
}

/// Violations of the structural invariants of a simulated path.
pub fn path_violations(config: &HawkesConfig, path: &HawkesPath) -> Vec<String> {
    let mut out = Vec::new();
    for (&t, &lambda) in path.events.iter().zip(&path.intensities) {
        if !(lambda > 0.0) {
            out.push(format!("event at {t} accepted with intensity {lambda}"));
        }
    }
    for &r in &path.regenerations {
        let sum: f64 = path.events.iter().take_while(|&&t| t < r).map(|&t| config.kernel.effect(r, t)).sum();
        if sum != 0.0 {
            out.push(format!("kernel sum {sum} at regeneration {r}"));
        }
    }
    let cycle_events: f64 = path.pairs.iter().map(|p| p.1).sum();
    if cycle_events as usize + path.trailing_events != path.events.len() {
        out.push(format!(
            "cycle events {cycle_events} + trailing {} != {} events",
            path.trailing_events,
            path.events.len()
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCheck {
    pub n_paths: usize,
    pub total_events: usize,
    pub total_cycles: usize,
    pub violations: Vec<String>,
}

/// Simulates `n_paths` independent paths and collects invariant violations.
pub fn ensemble_check(config: &HawkesConfig, n_paths: usize) -> Result<EnsembleCheck> {
    let per_path: Vec<(usize, usize, Vec<String>)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = simulate_hawkes_indexed(config, i)?;
            let v = path_violations(config, &path)
                .into_iter()
                .map(|msg| format!("path {i}: {msg}"))
                .collect();
            Ok((path.events.len(), path.pairs.len(), v))
        })
        .collect::<Result<_>>()?;
    Ok(EnsembleCheck {
        n_paths,
        total_events: per_path.iter().map(|p| p.0).sum(),
        total_cycles: per_path.iter().map(|p| p.1).sum(),
        violations: per_path.into_iter().flat_map(|p| p.2).collect(),
    })
}

/// Lag-one sample correlation of a sequence.
pub fn lag_one_correlation(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 3 {
        return f64::NAN;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesReport {
    pub n_events: usize,
    pub n_cycles: usize,
    pub event_rate: f64,
    pub cycle_rate: f64,
    pub report: DeviationReport,
}

/// Simulates one long path, turns its cycles into an empirical law, and runs
/// the upper-tail Monte Carlo estimate on renewal-reward paths resampled from
/// that law. Bounds use estimated exponential moments.
pub fn hawkes_deviation_pipeline(
    config: &HawkesConfig,
    t_grid: &[f64],
    a: f64,
    n_replications: u64,
) -> Result<HawkesReport> {
    let path = simulate_hawkes(config)?;
    let pairs = extract_renewal_pairs(&path, config.kernel.support)?;
    let model = JointModel::empirical(pairs.clone())?;
    let mut report = estimate_tail(&model, Side::Upper, a, t_grid, n_replications, config.seed)?;
    report.estimate_based = true;
    let (sum_tau, sum_w) = pairs.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    Ok(HawkesReport {
        n_events: path.events.len(),
        n_cycles: pairs.len(),
        event_rate: path.events.len() as f64 / config.horizon,
        cycle_rate: sum_w / sum_tau,
        report,
    })
}

/// `(1 - kappa) theta a / 4`, the exponential-moment term of the bound for
/// cumulative processes whose rewards are event counts.
pub fn moment_term(theta: f64, a: f64, kappa: f64) -> f64 {
    (1.0 - kappa) * theta * a / 4.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(values: Vec<f64>, breakpoints: Vec<f64>, support: f64, horizon: f64) -> HawkesConfig {
        HawkesConfig {
            baseline: 1.0,
            kernel: Kernel { breakpoints, values, support },
            horizon,
            seed: 7,
        }
    }

    #[test]
    fn kernel_pieces_and_support() {
        let k = Kernel { breakpoints: vec![0.0, 0.5], values: vec![-0.4, 0.2], support: 1.0 };
        k.validate().unwrap();
        assert_eq!(k.effect(1.2, 1.0), -0.4);
        assert_eq!(k.effect(1.5, 1.0), 0.2);
        assert_eq!(k.effect(2.0, 1.0), 0.0);
        assert_eq!(k.effect(1.0, 1.0), 0.0);
        assert!((k.integral() + 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_kernel_regenerates_at_every_event() {
        let cfg = config(vec![], vec![], 0.0, 50.0);
        let path = simulate_hawkes(&cfg).unwrap();
        assert_eq!(path.regenerations.len(), path.events.len() + 1);
        assert!(path.pairs.iter().all(|p| p.1 == 1.0));
        assert_eq!(path.trailing_events, 0);
        assert!(path_violations(&cfg, &path).is_empty());
    }

    #[test]
    fn cycles_account_for_all_events() {
        let events = [0.5, 0.9, 3.0, 3.2, 9.9];
        let regs = regeneration_times(&events, 1.0, 10.0);
        assert_eq!(regs, vec![0.0, 1.9, 4.2]);
        let (pairs, trailing) = cycles(&events, &regs);
        assert_eq!(pairs, vec![(1.9, 2.0), (4.2 - 1.9, 2.0)]);
        assert_eq!(trailing, 1);
    }

    #[test]
    fn too_few_regenerations_is_an_error() {
        let path = HawkesPath {
            horizon: 1.0,
            events: vec![0.5],
            intensities: vec![1.0],
            regenerations: vec![0.0],
            pairs: vec![],
            trailing_events: 1,
        };
        assert!(matches!(extract_renewal_pairs(&path, 2.0), Err(Error::InsufficientCycles(_))));
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = config(vec![0.1], vec![0.0], 1.0, 10.0);
        cfg.baseline = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = config(vec![0.1], vec![0.5], 1.0, 10.0);
        assert!(cfg.validate().is_err());
    }
}
