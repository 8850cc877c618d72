//! Trajectories of the cumulative process `Z_t = sum_{i <= M_t} W_i`.
//!
//! Paths start at `S_0 = 0` with no remainder term. Pairs are drawn until the
//! renewal time passes `t`; the pair that crosses `t` is kept as the overshoot
//! so that the contraction `mu_t(phi)`, `phi(u, w) = w / u`, is available.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{JointModel, Pair};
use crate::seeding::stream_rng;

/// Renewals per path beyond which a path is abandoned.
pub const MAX_RENEWALS: usize = 1_000_000_000;

/// Stream domain for single-path and coupled simulations.
pub const DOMAIN_PATH: u64 = 0x5041_5448;
/// Stream domain for LLN/CLT ensembles.
pub const DOMAIN_ENSEMBLE: u64 = 0x454e_534d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub t: f64,
    /// `S_1, ..., S_{M_t}`, all `<= t`.
    pub renewal_times: Vec<f64>,
    /// `W_1, ..., W_{M_t}`.
    pub rewards: Vec<f64>,
    pub count: usize,
    pub z_t: f64,
    pub mu_phi: f64,
    /// `(tau_{M_t + 1}, W_{M_t + 1})`.
    pub overshoot: Pair,
}

/// `(M_t, Z_t, mu_t(phi))` from stored renewal times and rewards.
pub fn path_functionals(t: f64, renewal_times: &[f64], rewards: &[f64], overshoot: Pair) -> (usize, f64, f64) {
    let count = renewal_times.iter().take_while(|&&s| s <= t).count();
    let z = rewards[..count].iter().fold(0.0, |acc, &w| acc + w);
    let last = if count == 0 { 0.0 } else { renewal_times[count - 1] };
    let mu = z / t + ((t - last) / t) * (overshoot.1 / overshoot.0);
    (count, z, mu)
}

impl Path {
    /// Last renewal time `S_{M_t}` (0 when there was none).
    pub fn last_renewal(&self) -> f64 {
        self.renewal_times.last().copied().unwrap_or(0.0)
    }

    /// The empirical measure `mu_t` as weighted atoms `(u, w, weight)`: each
    /// completed pair carries weight `tau_i / t` and the overshoot pair the
    /// elapsed fraction `(t - S_{M_t}) / t`.
    pub fn empirical_measure(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.count + 1);
        let mut prev = 0.0;
        for (&s, &w) in self.renewal_times.iter().zip(&self.rewards) {
            let tau = s - prev;
            out.push((tau, w, tau / self.t));
            prev = s;
        }
        out.push((self.overshoot.0, self.overshoot.1, (self.t - prev) / self.t));
        out
    }
}

/// Histogram of [`Path::empirical_measure`] over `u_edges x w_edges` cells
/// (half-open on the right); mass outside the edges is dropped.
pub fn empirical_measure_histogram(path: &Path, u_edges: &[f64], w_edges: &[f64]) -> Vec<Vec<f64>> {
    let cell = |edges: &[f64], v: f64| -> Option<usize> {
        if edges.len() < 2 || v < edges[0] || v >= edges[edges.len() - 1] {
            return None;
        }
        Some(edges.partition_point(|&e| e <= v) - 1)
    };
    let mut hist = vec![vec![0.0; w_edges.len().saturating_sub(1)]; u_edges.len().saturating_sub(1)];
    for (u, w, mass) in path.empirical_measure() {
        if let (Some(i), Some(j)) = (cell(u_edges, u), cell(w_edges, w)) {
            hist[i][j] += mass;
        }
    }
    hist
}

fn check_horizon(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("horizon must be positive and finite, got {t}")))
    }
}

fn runaway(t: f64) -> Error {
    Error::Pathology(format!("more than {MAX_RENEWALS} renewals before t = {t}"))
}

/// Simulates one path from a caller-owned generator.
pub fn simulate_path_with<R: Rng + ?Sized>(model: &JointModel, t: f64, rng: &mut R) -> Result<Path> {
    check_horizon(t)?;
    let mut renewal_times = Vec::new();
    let mut rewards = Vec::new();
    let mut s = 0.0;
    let mut z = 0.0;
    loop {
        let (tau, w) = model.sample_pair(rng);
        let next = s + tau;
        if next > t {
            let mu = z / t + ((t - s) / t) * (w / tau);
            return Ok(Path {
                t,
                count: renewal_times.len(),
                renewal_times,
                rewards,
                z_t: z,
                mu_phi: mu,
                overshoot: (tau, w),
            });
        }
        if renewal_times.len() >= MAX_RENEWALS {
            return Err(runaway(t));
        }
        s = next;
        z += w;
        renewal_times.push(s);
        rewards.push(w);
    }
}

pub fn simulate_path(model: &JointModel, t: f64, seed: u64) -> Result<Path> {
    simulate_path_with(model, t, &mut stream_rng(seed, DOMAIN_PATH, 0))
}

/// `(Z_t, M_t)` without storing the path; consumes the generator exactly like
/// [`simulate_path_with`].
pub fn simulate_endpoint<R: Rng + ?Sized>(model: &JointModel, t: f64, rng: &mut R) -> Result<(f64, usize)> {
    let mut s = 0.0;
    let mut z = 0.0;
    let mut count = 0usize;
    loop {
        let (tau, w) = model.sample_pair(rng);
        s += tau;
        if s > t {
            return Ok((z, count));
        }
        if count >= MAX_RENEWALS {
            return Err(runaway(t));
        }
        z += w;
        count += 1;
    }
}

/// Model transforms compared against the base process on common draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Variant {
    TruncateW { n: f64 },
    ShiftTau { eps: f64 },
}

impl Variant {
    pub fn apply(&self, model: &JointModel) -> Result<JointModel> {
        match *self {
            Variant::TruncateW { n } => model.truncate_w(n),
            Variant::ShiftTau { eps } => model.shift_tau(eps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledPaths {
    pub base: Path,
    pub variants: Vec<Path>,
}

/// The base path and one path per variant, all driven by the same draws.
pub fn simulate_coupled(model: &JointModel, variants: &[Variant], t: f64, seed: u64) -> Result<CoupledPaths> {
    if variants.is_empty() {
        return Err(Error::Parameter("simulate_coupled needs at least one variant".into()));
    }
    let rng = stream_rng(seed, DOMAIN_PATH, 0);
    let base = simulate_path_with(model, t, &mut rng.clone())?;
    let mut paths = Vec::with_capacity(variants.len());
    for v in variants {
        let vm = v.apply(model)?;
        paths.push(simulate_path_with(&vm, t, &mut rng.clone())?);
    }
    Ok(CoupledPaths { base, variants: paths })
}

/// `sum_{i <= M_t} [(W_i - n)_+ - (W_i + n)_-]`, the gap `Z_t - Z_t^n`.
pub fn clipped_excess(rewards: &[f64], n: f64) -> f64 {
    rewards.iter().map(|&w| (w - n).max(0.0) - (-(w + n)).max(0.0)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_paths: usize,
    pub t: f64,
    pub mean: f64,
    pub clt_sigma2: f64,
    pub mean_zt_over_t: f64,
    /// `(Z_t - t m) / sqrt(t sigma^2)` per path; empty when degenerate.
    pub clt_statistic: Vec<f64>,
    /// Kolmogorov–Smirnov distance to N(0, 1); `None` when `sigma^2 = 0`.
    pub ks_distance: Option<f64>,
    pub degenerate: bool,
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-sided KS distance between a sample and a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    d
}

/// Simulates `n_paths` independent endpoints and compares the standardized
/// values with the normal limit.
pub fn lln_clt_check(model: &JointModel, t: f64, n_paths: usize, seed: u64) -> Result<EnsembleStats> {
    check_horizon(t)?;
    if n_paths == 0 {
        return Err(Error::Parameter("n_paths must be at least 1".into()));
    }
    let moments = model.moments()?;
    let m = moments.mean_ratio();
    let sigma2 = moments.clt_sigma2;
    let ends: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_endpoint(model, t, &mut stream_rng(seed, DOMAIN_ENSEMBLE, i)).map(|(z, _)| z))
        .collect::<Result<_>>()?;
    let mean_zt_over_t = ends.iter().map(|z| z / t).sum::<f64>() / n_paths as f64;
    let degenerate = sigma2 <= 0.0;
    let (clt_statistic, ks) = if degenerate {
        (Vec::new(), None)
    } else {
        let scale = (t * sigma2).sqrt();
        let stat: Vec<f64> = ends.iter().map(|z| (z - t * m) / scale).collect();
        let d = ks_distance(&stat, std_normal_cdf);
        (stat, Some(d))
    };
    Ok(EnsembleStats {
        n_paths,
        t,
        mean: m,
        clt_sigma2: sigma2,
        mean_zt_over_t,
        clt_statistic,
        ks_distance: ks,
        degenerate,
    })
}
