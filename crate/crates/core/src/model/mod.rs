//! Joint laws of the waiting time and reward `(tau, W)`.

mod family;
mod io;
mod reward;
pub mod tail;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use family::{TauFamily, WFamily};
pub use io::{format_real, load_model, load_pairs_csv, model_from_json, write_pairs_csv};
pub use reward::RewardMap;

use crate::error::{Error, Result};
use crate::xreal::{XReal, PosInfinity};

/// One `(tau, w)` observation.
pub type Pair = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub tau: f64,
    pub w: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    IndependentProduct {
        tau: TauFamily,
        w: WFamily,
    },
    /// `W = F(tau)`; the waiting time actually used is `tau + lag`, so that
    /// shifting the waiting time leaves the reward draw untouched.
    DeterministicReward {
        tau: TauFamily,
        reward: RewardMap,
        #[serde(skip_serializing_if = "is_zero")]
        lag: f64,
    },
    DiscreteJoint {
        atoms: Vec<Atom>,
    },
    /// Uniform law on the observed pairs, stored in canonical order.
    EmpiricalSample {
        pairs: Vec<Pair>,
    },
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// A validated joint law of `(tau, W)`. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct JointModel {
    kind: ModelKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    EstimatedLowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentBounds {
    pub theta0: XReal,
    pub eta0: XReal,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_tau: f64,
    pub var_tau: f64,
    pub mean_w: f64,
    pub var_w: f64,
    pub cov_tau_w: f64,
    /// `Var(W - m tau) / E tau` with `m = E W / E tau`.
    pub clt_sigma2: f64,
}

impl Moments {
    pub fn mean_ratio(&self) -> f64 {
        self.mean_w / self.mean_tau
    }
}

fn tau_error(v: f64) -> Error {
    Error::InvalidModel(format!(
        "waiting times must be strictly positive and finite, psi(tau=0) = psi(tau=+inf) = 0; got tau = {v}"
    ))
}

fn check_tau(v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(tau_error(v))
    }
}

fn check_w(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("rewards must be finite, got w = {v}")))
    }
}

fn canonical_order(a: &Pair, b: &Pair) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))
}

/// `log sum_k exp(terms_k)` with the maximum factored out.
pub(crate) fn log_sum_exp<I: Iterator<Item = f64> + Clone>(terms: I) -> f64 {
    let peak = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return peak;
    }
    let mut acc = 0.0;
    for t in terms {
        acc += (t - peak).exp();
    }
    peak + acc.ln()
}

impl JointModel {
    pub fn new(kind: ModelKind) -> Result<Self> {
        let kind = match kind {
            ModelKind::EmpiricalSample { mut pairs } => {
                pairs.sort_by(canonical_order);
                ModelKind::EmpiricalSample { pairs }
            }
            other => other,
        };
        let model = JointModel { kind };
        model.validate()?;
        Ok(model)
    }

    pub fn independent(tau: TauFamily, w: WFamily) -> Result<Self> {
        Self::new(ModelKind::IndependentProduct { tau, w })
    }

    pub fn deterministic_reward(tau: TauFamily, reward: RewardMap) -> Result<Self> {
        Self::new(ModelKind::DeterministicReward { tau, reward, lag: 0.0 })
    }

    pub fn discrete(atoms: Vec<Atom>) -> Result<Self> {
        Self::new(ModelKind::DiscreteJoint { atoms })
    }

    /// Builds the empirical law; pairs are sorted so results do not depend on
    /// the input order.
    pub fn empirical(pairs: Vec<Pair>) -> Result<Self> {
        Self::new(ModelKind::EmpiricalSample { pairs })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn atoms(&self) -> Option<&[Atom]> {
        match &self.kind {
            ModelKind::DiscreteJoint { atoms } => Some(atoms),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.kind {
            ModelKind::IndependentProduct { tau, w } => {
                tau.validate()?;
                w.validate()
            }
            ModelKind::DeterministicReward { tau, reward, lag } => {
                tau.validate()?;
                reward.validate()?;
                if !(lag.is_finite() && *lag >= 0.0) {
                    return Err(Error::InvalidModel(format!("lag must be finite and >= 0, got {lag}")));
                }
                Ok(())
            }
            ModelKind::DiscreteJoint { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::InvalidModel("discrete law needs at least one atom".into()));
                }
                let mut total = 0.0;
                for a in atoms {
                    check_tau(a.tau)?;
                    check_w(a.w)?;
                    if !(a.p.is_finite() && a.p > 0.0) {
                        return Err(Error::InvalidModel(format!("atom probabilities must be positive, got {}", a.p)));
                    }
                    total += a.p;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidModel(format!("atom probabilities sum to {total}, not 1")));
                }
                Ok(())
            }
            ModelKind::EmpiricalSample { pairs } => {
                if pairs.is_empty() {
                    return Err(Error::InvalidModel("empirical sample is empty".into()));
                }
                for &(t, w) in pairs {
                    check_tau(t)?;
                    check_w(w)?;
                }
                Ok(())
            }
        }
    }

    /// `log E[e^{x tau + y W}]`, `PosInfinity` when the expectation diverges.
    pub fn log_mgf(&self, x: f64, y: f64) -> XReal {
        assert!(x.is_finite() && y.is_finite(), "log_mgf needs finite arguments, got ({x}, {y})");
        if x == 0.0 && y == 0.0 {
            return XReal::ZERO;
        }
        match &self.kind {
            ModelKind::IndependentProduct { tau, w } => tau.log_mgf(x) + w.log_mgf(y),
            ModelKind::DeterministicReward { tau, reward, lag } => {
                deterministic_reward_log_mgf(tau, reward, x, y) + x * lag
            }
            ModelKind::DiscreteJoint { atoms } => {
                XReal::from_f64(log_sum_exp(atoms.iter().map(|a| a.p.ln() + x * a.tau + y * a.w)))
            }
            ModelKind::EmpiricalSample { pairs } => {
                let n = pairs.len() as f64;
                XReal::from_f64(log_sum_exp(pairs.iter().map(|&(t, w)| x * t + y * w)) - n.ln())
            }
        }
    }

    pub fn exp_moment_bounds(&self) -> ExpMomentBounds {
        let analytic = |theta0, eta0| ExpMomentBounds {
            theta0,
            eta0,
            provenance: Provenance::Analytic,
        };
        match &self.kind {
            ModelKind::IndependentProduct { tau, w } => analytic(tau.theta0(), w.eta0()),
            ModelKind::DeterministicReward { tau, reward, .. } => {
                let theta0 = tau.theta0();
                let s = reward.slope().abs();
                let eta0 = match theta0 {
                    _ if s == 0.0 => PosInfinity,
                    XReal::Finite(t) => XReal::Finite(t / s),
                    PosInfinity => PosInfinity,
                };
                analytic(theta0, eta0)
            }
            ModelKind::DiscreteJoint { .. } => analytic(PosInfinity, PosInfinity),
            ModelKind::EmpiricalSample { pairs } => {
                let taus: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                let abs_w: Vec<f64> = pairs.iter().map(|p| p.1.abs()).collect();
                ExpMomentBounds {
                    theta0: tail::exp_tail_rate_lower_bound(&taus),
                    eta0: tail::exp_tail_rate_lower_bound(&abs_w),
                    provenance: Provenance::EstimatedLowerBound,
                }
            }
        }
    }

    pub fn moments(&self) -> Result<Moments> {
        let (mean_tau, var_tau, mean_w, var_w, cov, direct) = match &self.kind {
            ModelKind::IndependentProduct { tau, w } => {
                let (m1, m2) = w.raw_moments();
                (tau.mean(), tau.variance(), m1, m2 - m1 * m1, 0.0, None)
            }
            ModelKind::DeterministicReward { tau, reward, lag } => {
                let (mt, vt) = (tau.mean(), tau.variance());
                let (mw, vw, c) = match reward.as_affine() {
                    Some((s, c0)) => (s * mt + c0, s * s * vt, s * vt),
                    None => {
                        let bps = reward.breakpoints();
                        let ew = tau.expect(&|t| reward.eval(t), &bps);
                        let ew2 = tau.expect(&|t| reward.eval(t).powi(2), &bps);
                        let etw = tau.expect(&|t| t * reward.eval(t), &bps);
                        (ew, ew2 - ew * ew, etw - mt * ew)
                    }
                };
                (mt + lag, vt, mw, vw, c, None)
            }
            ModelKind::DiscreteJoint { atoms } => {
                let weighted: Vec<(f64, f64, f64)> = atoms.iter().map(|a| (a.tau, a.w, a.p)).collect();
                weighted_moments(&weighted)
            }
            ModelKind::EmpiricalSample { pairs } => {
                let p = 1.0 / pairs.len() as f64;
                let weighted: Vec<(f64, f64, f64)> = pairs.iter().map(|&(t, w)| (t, w, p)).collect();
                weighted_moments(&weighted)
            }
        };
        for (name, v) in [("E tau", mean_tau), ("Var tau", var_tau), ("E W", mean_w), ("Var W", var_w)] {
            if !v.is_finite() {
                return Err(Error::UnsupportedMoment(format!("{name} is not finite")));
            }
        }
        let m = mean_w / mean_tau;
        let var_diff = direct.unwrap_or(var_w - 2.0 * m * cov + m * m * var_tau);
        Ok(Moments {
            mean_tau,
            var_tau,
            mean_w,
            var_w,
            cov_tau_w: cov,
            clt_sigma2: var_diff.max(0.0) / mean_tau,
        })
    }

    /// `E W / E tau`.
    pub fn mean_ratio(&self) -> Result<f64> {
        Ok(self.moments()?.mean_ratio())
    }

    /// Model with `W` replaced by `clamp(W, -n, n)`, sampled from the same draws.
    pub fn truncate_w(&self, n: f64) -> Result<JointModel> {
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Parameter(format!("truncation level must be positive, got {n}")));
        }
        let kind = match &self.kind {
            ModelKind::IndependentProduct { tau, w } => ModelKind::IndependentProduct {
                tau: tau.clone(),
                w: w.clone().truncated(n),
            },
            ModelKind::DeterministicReward { tau, reward, lag } => ModelKind::DeterministicReward {
                tau: tau.clone(),
                reward: reward.clone().clamped(n),
                lag: *lag,
            },
            ModelKind::DiscreteJoint { atoms } => ModelKind::DiscreteJoint {
                atoms: atoms.iter().map(|a| Atom { w: a.w.clamp(-n, n), ..*a }).collect(),
            },
            // Clamping is monotone, so the canonical order is preserved.
            ModelKind::EmpiricalSample { pairs } => ModelKind::EmpiricalSample {
                pairs: pairs.iter().map(|&(t, w)| (t, w.clamp(-n, n))).collect(),
            },
        };
        let model = JointModel { kind };
        model.validate()?;
        Ok(model)
    }

    /// Model of `(tau + eps, W)`, sampled from the same draws.
    pub fn shift_tau(&self, eps: f64) -> Result<JointModel> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::Parameter(format!("shift must be positive, got {eps}")));
        }
        let kind = match &self.kind {
            ModelKind::IndependentProduct { tau, w } => ModelKind::IndependentProduct {
                tau: tau.clone().shifted(eps),
                w: w.clone(),
            },
            ModelKind::DeterministicReward { tau, reward, lag } => ModelKind::DeterministicReward {
                tau: tau.clone(),
                reward: reward.clone(),
                lag: lag + eps,
            },
            ModelKind::DiscreteJoint { atoms } => ModelKind::DiscreteJoint {
                atoms: atoms.iter().map(|a| Atom { tau: a.tau + eps, ..*a }).collect(),
            },
            ModelKind::EmpiricalSample { pairs } => ModelKind::EmpiricalSample {
                pairs: pairs.iter().map(|&(t, w)| (t + eps, w)).collect(),
            },
        };
        let model = JointModel { kind };
        model.validate()?;
        Ok(model)
    }

    /// Draws one `(tau, W)` pair. Every kind consumes the generator in a way
    /// that depends only on the untransformed law, so a model and its
    /// truncated or shifted variants stay coupled under a shared state.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> Pair {
        match &self.kind {
            ModelKind::IndependentProduct { tau, w } => {
                let t = tau.sample(rng);
                (t, w.sample(rng))
            }
            ModelKind::DeterministicReward { tau, reward, lag } => {
                let t = tau.sample(rng);
                (t + lag, reward.eval(t))
            }
            ModelKind::DiscreteJoint { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for a in atoms {
                    acc += a.p;
                    if u < acc {
                        return (a.tau, a.w);
                    }
                }
                let last = atoms.last().expect("validated nonempty");
                (last.tau, last.w)
            }
            ModelKind::EmpiricalSample { pairs } => pairs[rng.random_range(0..pairs.len())],
        }
    }

    /// Characteristic sizes of `tau` and `W`, used to scale search radii.
    pub fn scales(&self) -> (f64, f64) {
        let (tau_scale, w_scale) = match self.moments() {
            Ok(m) => (m.mean_tau, m.mean_w.abs().max(m.var_w.sqrt())),
            Err(_) => (1.0, 1.0),
        };
        let w_scale = if w_scale > 0.0 && w_scale.is_finite() { w_scale } else { 1.0 };
        (tau_scale, w_scale)
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("model serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// `(E tau, Var tau, E W, Var W, Cov, Var(W - m tau))` of a weighted point set.
fn weighted_moments(points: &[(f64, f64, f64)]) -> (f64, f64, f64, f64, f64, Option<f64>) {
    let mt: f64 = points.iter().map(|&(t, _, p)| p * t).sum();
    let mw: f64 = points.iter().map(|&(_, w, p)| p * w).sum();
    let vt: f64 = points.iter().map(|&(t, _, p)| p * (t - mt).powi(2)).sum();
    let vw: f64 = points.iter().map(|&(_, w, p)| p * (w - mw).powi(2)).sum();
    let c: f64 = points.iter().map(|&(t, w, p)| p * (t - mt) * (w - mw)).sum();
    let m = mw / mt;
    let vd: f64 = points.iter().map(|&(t, w, p)| p * ((w - mw) - m * (t - mt)).powi(2)).sum();
    (mt, vt, mw, vw, c, Some(vd))
}

fn deterministic_reward_log_mgf(tau: &TauFamily, reward: &RewardMap, x: f64, y: f64) -> XReal {
    if let Some((s, c)) = reward.as_affine() {
        return tau.log_mgf(x + y * s) + y * c;
    }
    let x_tail = x + y * reward.slope();
    if tau.log_mgf(x_tail).is_infinite() {
        return PosInfinity;
    }
    let h = |t: f64| x * t + y * reward.eval(t);
    let cut = reward.tail_start();
    let breaks = reward.breakpoints();
    tau.log_split_expect(&h, x_tail, y * reward.tail_intercept(), cut, &breaks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn poisson() -> JointModel {
        JointModel::independent(TauFamily::Exponential { rate: 1.0 }, WFamily::Constant { value: 1.0 }).unwrap()
    }

    #[test]
    fn poisson_log_mgf_values() {
        let m = poisson();
        assert_eq!(m.log_mgf(0.0, 0.0), XReal::ZERO);
        assert!((m.log_mgf(0.5, 0.0).to_f64() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(m.log_mgf(1.0, 0.0), PosInfinity);
    }

    #[test]
    fn exp_moment_bounds_by_kind() {
        let b = poisson().exp_moment_bounds();
        assert_eq!((b.theta0, b.eta0), (XReal::Finite(1.0), PosInfinity));
        let bounded = JointModel::independent(
            TauFamily::Deterministic { value: 2.0 },
            WFamily::Uniform { lo: 0.0, hi: 1.0 },
        )
        .unwrap();
        let b = bounded.exp_moment_bounds();
        assert_eq!((b.theta0, b.eta0), (PosInfinity, PosInfinity));
        let ee = JointModel::independent(TauFamily::Exponential { rate: 1.0 }, WFamily::Exponential { rate: 1.0 }).unwrap();
        let b = ee.exp_moment_bounds();
        assert_eq!((b.theta0, b.eta0), (XReal::Finite(1.0), XReal::Finite(1.0)));
    }

    #[test]
    fn moments_examples() {
        let m = poisson().moments().unwrap();
        assert_eq!((m.mean_tau, m.mean_w), (1.0, 1.0));
        assert!((m.clt_sigma2 - 1.0).abs() < 1e-15);
        let det = JointModel::independent(TauFamily::Deterministic { value: 1.0 }, WFamily::Constant { value: 2.0 }).unwrap();
        assert_eq!(det.moments().unwrap().clt_sigma2, 0.0);
        let d = JointModel::discrete(vec![
            Atom { tau: 1.0, w: 0.0, p: 0.5 },
            Atom { tau: 2.0, w: 3.0, p: 0.5 },
        ])
        .unwrap();
        let m = d.moments().unwrap();
        assert_eq!((m.mean_tau, m.mean_w), (1.5, 1.5));
    }

    #[test]
    fn rejects_zero_waiting_time() {
        let err = JointModel::discrete(vec![Atom { tau: 0.0, w: 1.0, p: 1.0 }]).unwrap_err();
        assert!(err.to_string().contains("psi(tau=0)"));
        assert!(JointModel::discrete(vec![Atom { tau: 1.0, w: 1.0, p: 0.9 }]).is_err());
    }

    #[test]
    fn truncation_of_discrete_atoms() {
        let d = JointModel::discrete(vec![
            Atom { tau: 1.0, w: -4.0, p: 0.5 },
            Atom { tau: 1.0, w: 4.0, p: 0.5 },
        ])
        .unwrap();
        let t = d.truncate_w(2.0).unwrap();
        assert_eq!(
            t.atoms().unwrap(),
            &[Atom { tau: 1.0, w: -2.0, p: 0.5 }, Atom { tau: 1.0, w: 2.0, p: 0.5 }]
        );
        assert!(d.truncate_w(0.0).is_err());
        assert!(d.shift_tau(0.0).is_err());
    }

    #[test]
    fn shifted_log_mgf() {
        let s = poisson().shift_tau(0.1).unwrap();
        let v = s.log_mgf(0.5, 0.0).to_f64();
        assert!((v - (0.05 + 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn truncated_samples_are_coupled() {
        let base = JointModel::independent(TauFamily::Exponential { rate: 1.0 }, WFamily::Exponential { rate: 1.0 }).unwrap();
        let trunc = base.truncate_w(0.5).unwrap();
        let shifted = base.shift_tau(0.3).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = r1.clone();
        let mut r3 = r1.clone();
        for _ in 0..1000 {
            let (t, w) = base.sample_pair(&mut r1);
            let (tn, wn) = trunc.sample_pair(&mut r2);
            let (te, we) = shifted.sample_pair(&mut r3);
            assert_eq!(t, tn);
            assert_eq!(w.min(0.5), wn);
            assert_eq!(t + 0.3, te);
            assert_eq!(w, we);
        }
    }

    #[test]
    fn deterministic_reward_affine_matches_shifted_tau() {
        let m = JointModel::deterministic_reward(
            TauFamily::Gamma { shape: 2.0, rate: 3.0 },
            RewardMap::Linear { slope: 0.5, intercept: 1.0 },
        )
        .unwrap();
        let (x, y) = (0.4, 0.8);
        let expect = -2.0 * (-(x + 0.5 * y) / 3.0f64).ln_1p() + y;
        assert!((m.log_mgf(x, y).to_f64() - expect).abs() < 1e-14);
        assert_eq!(m.exp_moment_bounds().eta0, XReal::Finite(6.0));
    }

    #[test]
    fn step_reward_matches_closed_form() {
        let (rate, th, lo, hi) = (1.5, 0.8, -1.0, 2.0);
        let m = JointModel::deterministic_reward(
            TauFamily::Exponential { rate },
            RewardMap::Step {
                threshold: th,
                below: lo,
                above: hi,
            },
        )
        .unwrap();
        for (x, y) in [(0.3, 0.4), (-2.0, 1.0), (1.2, -3.0), (0.0, 5.0)] {
            let d = rate - x;
            let below = (y * lo).exp() * rate * -(-d * th).exp_m1() / d;
            let above = (y * hi).exp() * rate * (-d * th).exp() / d;
            let expect = (below + above).ln();
            let got = m.log_mgf(x, y).to_f64();
            assert!((got - expect).abs() < 1e-9, "({x},{y}): {got} vs {expect}");
        }
        assert_eq!(m.log_mgf(1.5, 0.0), PosInfinity);
        let mo = m.moments().unwrap();
        let p_above = (-rate * th).exp();
        assert!((mo.mean_w - (lo * (1.0 - p_above) + hi * p_above)).abs() < 1e-10);
    }

    #[test]
    fn clamped_linear_reward_moments() {
        let base = JointModel::deterministic_reward(
            TauFamily::Uniform { lo: 0.5, hi: 3.0 },
            RewardMap::Linear { slope: 2.0, intercept: 0.0 },
        )
        .unwrap();
        let t = base.truncate_w(4.0).unwrap();
        // E min(2 tau, 4) for tau ~ U(0.5, 3): int_{0.5}^{2} 2t dt / 2.5 + 4 * 1/2.5
        let expect = (4.0 - 0.25) / 2.5 + 4.0 / 2.5;
        assert!((t.moments().unwrap().mean_w - expect).abs() < 1e-12);
        let y = 0.7;
        let direct = crate::quadrature::integrate_pieces(|s| (y * (2.0 * s).min(4.0)).exp() / 2.5, 0.5, 3.0, &[2.0], 1e-14);
        assert!((t.log_mgf(0.0, y).to_f64() - direct.ln()).abs() < 1e-10);
    }

    #[test]
    fn empirical_is_order_independent() {
        let pairs = vec![(1.0, 2.0), (0.5, -1.0), (3.0, 0.25), (1.0, 1.0)];
        let mut rev = pairs.clone();
        rev.reverse();
        let a = JointModel::empirical(pairs).unwrap();
        let b = JointModel::empirical(rev).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.log_mgf(0.3, -0.7), b.log_mgf(0.3, -0.7));
        assert_eq!(a.digest(), b.digest());
    }
}
