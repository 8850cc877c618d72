use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::quadrature::integrate_pieces;
use crate::xreal::{XReal, PosInfinity};

/// Absolute tolerance for quadrature on rescaled integrands.
const QUAD_TOL: f64 = 1e-10;

/// Marginal law of the waiting time, supported on `(0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum TauFamily {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Deterministic { value: f64 },
    Shifted { inner: Box<TauFamily>, eps: f64 },
}

/// Marginal law of the reward, supported on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum WFamily {
    Constant { value: f64 },
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, sd: f64 },
    /// `inner` clamped to `[-n, n]`.
    Truncated { inner: Box<WFamily>, n: f64 },
}

fn positive_finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{what} must be positive and finite, got {v}")))
    }
}

fn finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{what} must be finite, got {v}")))
    }
}

/// `log E[e^{y U}]` for `U ~ Uniform(lo, hi)`.
fn uniform_log_mgf(lo: f64, hi: f64, y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    let d = y * (hi - lo);
    if d > 0.0 {
        y * hi + (-(-d).exp_m1() / d).ln()
    } else {
        y * lo + (d.exp_m1() / d).ln()
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Standard normal upper tail.
fn norm_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

fn ln_or_neg_inf(v: f64) -> f64 {
    if v > 0.0 {
        v.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Rescales `h` by its maximum over `[a, b]` (probed on a grid plus the
/// breakpoints) so the exponentiated integrand stays in range.
fn log_integral_exp<H: Fn(f64) -> f64>(h: H, a: f64, b: f64, breaks: &[f64]) -> f64 {
    if b <= a {
        return f64::NEG_INFINITY;
    }
    let mut peak = f64::NEG_INFINITY;
    for i in 0..=64 {
        let t = a + (b - a) * i as f64 / 64.0;
        peak = peak.max(h(t));
    }
    for &c in breaks.iter().filter(|&&c| c > a && c < b) {
        peak = peak.max(h(c));
    }
    if !peak.is_finite() {
        return peak;
    }
    let v = integrate_pieces(|t| (h(t) - peak).exp(), a, b, breaks, QUAD_TOL);
    peak + ln_or_neg_inf(v)
}

impl TauFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            TauFamily::Exponential { rate } => positive_finite(*rate, "exponential rate"),
            TauFamily::Gamma { shape, rate } => {
                positive_finite(*shape, "gamma shape")?;
                positive_finite(*rate, "gamma rate")
            }
            TauFamily::Uniform { lo, hi } => {
                positive_finite(*lo, "uniform waiting-time lower end")?;
                finite(*hi, "uniform upper end")?;
                if hi <= lo {
                    return Err(Error::InvalidModel(format!("uniform needs lo < hi, got [{lo}, {hi}]")));
                }
                Ok(())
            }
            TauFamily::Deterministic { value } => positive_finite(*value, "deterministic waiting time"),
            TauFamily::Shifted { inner, eps } => {
                if !(eps.is_finite() && *eps >= 0.0) {
                    return Err(Error::InvalidModel(format!("shift must be finite and >= 0, got {eps}")));
                }
                inner.validate()
            }
        }
    }

    /// Wraps in a shift, folding nested shifts together.
    pub fn shifted(self, eps: f64) -> TauFamily {
        match self {
            TauFamily::Shifted { inner, eps: e0 } => TauFamily::Shifted { inner, eps: e0 + eps },
            other => TauFamily::Shifted {
                inner: Box::new(other),
                eps,
            },
        }
    }

    pub fn log_mgf(&self, x: f64) -> XReal {
        if x == 0.0 {
            return XReal::ZERO;
        }
        match self {
            TauFamily::Exponential { rate } => gamma_log_mgf(1.0, *rate, x),
            TauFamily::Gamma { shape, rate } => gamma_log_mgf(*shape, *rate, x),
            TauFamily::Uniform { lo, hi } => XReal::Finite(uniform_log_mgf(*lo, *hi, x)),
            TauFamily::Deterministic { value } => XReal::Finite(x * value),
            TauFamily::Shifted { inner, eps } => inner.log_mgf(x) + x * eps,
        }
    }

    pub fn theta0(&self) -> XReal {
        match self {
            TauFamily::Exponential { rate } | TauFamily::Gamma { rate, .. } => XReal::Finite(*rate),
            TauFamily::Uniform { .. } | TauFamily::Deterministic { .. } => PosInfinity,
            TauFamily::Shifted { inner, .. } => inner.theta0(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            TauFamily::Exponential { rate } => 1.0 / rate,
            TauFamily::Gamma { shape, rate } => shape / rate,
            TauFamily::Uniform { lo, hi } => 0.5 * (lo + hi),
            TauFamily::Deterministic { value } => *value,
            TauFamily::Shifted { inner, eps } => inner.mean() + eps,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            TauFamily::Exponential { rate } => 1.0 / (rate * rate),
            TauFamily::Gamma { shape, rate } => shape / (rate * rate),
            TauFamily::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            TauFamily::Deterministic { .. } => 0.0,
            TauFamily::Shifted { inner, .. } => inner.variance(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            TauFamily::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            TauFamily::Gamma { shape, rate } => Gamma::new(*shape, 1.0 / rate).expect("validated gamma").sample(rng),
            TauFamily::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            TauFamily::Deterministic { value } => *value,
            TauFamily::Shifted { inner, eps } => inner.sample(rng) + eps,
        }
    }

    /// `E[g(tau)]` by quadrature, for `g` of at most polynomial growth.
    pub(crate) fn expect(&self, g: &dyn Fn(f64) -> f64, breaks: &[f64]) -> f64 {
        match self {
            TauFamily::Deterministic { value } => g(*value),
            TauFamily::Shifted { inner, eps } => {
                let shifted: Vec<f64> = breaks.iter().map(|b| b - eps).collect();
                inner.expect(&|s| g(s + eps), &shifted)
            }
            TauFamily::Uniform { lo, hi } => integrate_pieces(g, *lo, *hi, breaks, 1e-13) / (hi - lo),
            TauFamily::Exponential { rate } => gamma_expect(1.0, *rate, g, breaks),
            TauFamily::Gamma { shape, rate } => gamma_expect(*shape, *rate, g, breaks),
        }
    }

    /// `log( E[e^{h(tau)}; tau <= cut] + e^{c_tail} E[e^{x_tail tau}; tau > cut] )`.
    ///
    /// `h` must coincide with `x_tail * tau + c_tail` beyond `cut`; `breaks`
    /// are the points in `(0, cut]` where `h` has kinks or jumps.
    pub(crate) fn log_split_expect(
        &self,
        h: &dyn Fn(f64) -> f64,
        x_tail: f64,
        c_tail: f64,
        cut: f64,
        breaks: &[f64],
    ) -> XReal {
        match self {
            TauFamily::Deterministic { value } => {
                if *value <= cut {
                    XReal::from_f64(h(*value))
                } else {
                    XReal::from_f64(x_tail * value + c_tail)
                }
            }
            TauFamily::Shifted { inner, eps } => {
                let shifted_h = |s: f64| h(s + eps);
                let shifted_breaks: Vec<f64> = breaks.iter().map(|b| b - eps).collect();
                inner.log_split_expect(&shifted_h, x_tail, c_tail + x_tail * eps, cut - eps, &shifted_breaks)
            }
            TauFamily::Uniform { lo, hi } => {
                let width = hi - lo;
                let body = log_integral_exp(h, *lo, hi.min(cut), breaks) - width.ln();
                let a = lo.max(cut);
                let tail = if a >= *hi {
                    f64::NEG_INFINITY
                } else {
                    // log of (1/width) * int_a^hi e^{x t} dt
                    c_tail + uniform_log_mgf(a, *hi, x_tail) + ((hi - a) / width).ln()
                };
                XReal::from_f64(log_add(body, tail))
            }
            TauFamily::Exponential { rate } => gamma_split(1.0, *rate, h, x_tail, c_tail, cut, breaks),
            TauFamily::Gamma { shape, rate } => gamma_split(*shape, *rate, h, x_tail, c_tail, cut, breaks),
        }
    }
}

fn gamma_log_mgf(shape: f64, rate: f64, x: f64) -> XReal {
    if x < rate {
        XReal::Finite(-shape * (-x / rate).ln_1p())
    } else {
        PosInfinity
    }
}

fn gamma_expect(shape: f64, rate: f64, g: &dyn Fn(f64) -> f64, breaks: &[f64]) -> f64 {
    let log_norm = shape * rate.ln() - ln_gamma(shape);
    let last = breaks.iter().copied().fold(0.0, f64::max);
    let cut = last + (shape + 40.0 * shape.sqrt() + 40.0) / rate;
    if shape < 1.0 {
        let inv = 1.0 / shape;
        let vbreaks: Vec<f64> = breaks.iter().filter(|&&b| b > 0.0).map(|b| b.powf(shape)).collect();
        let f = |v: f64| {
            let t = v.powf(inv);
            g(t) * (log_norm - shape.ln() - rate * t).exp()
        };
        integrate_pieces(f, 0.0, cut.powf(shape), &vbreaks, 1e-13)
    } else {
        let mut all = breaks.to_vec();
        for k in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            all.push(k * shape / rate);
        }
        let f = |t: f64| {
            let log_t_term = if shape == 1.0 { 0.0 } else { (shape - 1.0) * t.ln() };
            g(t) * (log_norm + log_t_term - rate * t).exp()
        };
        integrate_pieces(f, 0.0, cut, &all, 1e-13)
    }
}

fn gamma_split(
    shape: f64,
    rate: f64,
    h: &dyn Fn(f64) -> f64,
    x_tail: f64,
    c_tail: f64,
    cut: f64,
    breaks: &[f64],
) -> XReal {
    if x_tail >= rate {
        return PosInfinity;
    }
    let norm = shape * rate.ln() - ln_gamma(shape);
    let body = if cut <= 0.0 {
        f64::NEG_INFINITY
    } else if shape < 1.0 {
        // v = t^shape removes the integrable singularity at the origin.
        let inv = 1.0 / shape;
        let g = |v: f64| {
            let t = v.powf(inv);
            h(t) - rate * t
        };
        let vbreaks: Vec<f64> = breaks.iter().filter(|&&b| b > 0.0).map(|b| b.powf(shape)).collect();
        norm - shape.ln() + log_integral_exp(g, 0.0, cut.powf(shape), &vbreaks)
    } else {
        let g = |t: f64| {
            let log_t_term = if shape == 1.0 { 0.0 } else { (shape - 1.0) * t.ln() };
            h(t) + log_t_term - rate * t
        };
        let scale = 1.0 / (rate - x_tail);
        let mut all: Vec<f64> = breaks.to_vec();
        for k in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0] {
            all.push(k * scale * shape.max(1.0));
        }
        norm + log_integral_exp(g, 0.0, cut, &all)
    };
    let eff = rate - x_tail;
    let upper = gamma_ur(shape, eff * cut.max(0.0));
    let tail = c_tail + shape * (rate / eff).ln() + ln_or_neg_inf(upper);
    XReal::from_f64(log_add(body, tail))
}

impl WFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            WFamily::Constant { value } => finite(*value, "constant reward"),
            WFamily::Exponential { rate } => positive_finite(*rate, "exponential rate"),
            WFamily::Uniform { lo, hi } => {
                finite(*lo, "uniform lower end")?;
                finite(*hi, "uniform upper end")?;
                if hi <= lo {
                    return Err(Error::InvalidModel(format!("uniform needs lo < hi, got [{lo}, {hi}]")));
                }
                Ok(())
            }
            WFamily::Gaussian { mean, sd } => {
                finite(*mean, "gaussian mean")?;
                positive_finite(*sd, "gaussian sd")
            }
            WFamily::Truncated { inner, n } => {
                positive_finite(*n, "truncation level")?;
                inner.validate()
            }
        }
    }

    /// Wraps in a clamp to `[-n, n]`, folding nested clamps together.
    pub fn truncated(self, n: f64) -> WFamily {
        match self {
            WFamily::Truncated { inner, n: n0 } => WFamily::Truncated { inner, n: n0.min(n) },
            other => WFamily::Truncated {
                inner: Box::new(other),
                n,
            },
        }
    }

    pub fn log_mgf(&self, y: f64) -> XReal {
        if y == 0.0 {
            return XReal::ZERO;
        }
        match self {
            WFamily::Constant { value } => XReal::Finite(y * value),
            WFamily::Exponential { rate } => gamma_log_mgf(1.0, *rate, y),
            WFamily::Uniform { lo, hi } => XReal::Finite(uniform_log_mgf(*lo, *hi, y)),
            WFamily::Gaussian { mean, sd } => XReal::Finite(y * mean + 0.5 * y * y * sd * sd),
            WFamily::Truncated { inner, n } => XReal::from_f64(clamped_log_mgf(inner, *n, y)),
        }
    }

    pub fn eta0(&self) -> XReal {
        match self {
            WFamily::Exponential { rate } => XReal::Finite(*rate),
            WFamily::Constant { .. } | WFamily::Uniform { .. } | WFamily::Gaussian { .. } | WFamily::Truncated { .. } => {
                PosInfinity
            }
        }
    }

    /// `(E W, E W^2)`.
    pub fn raw_moments(&self) -> (f64, f64) {
        match self {
            WFamily::Constant { value } => (*value, value * value),
            WFamily::Exponential { rate } => (1.0 / rate, 2.0 / (rate * rate)),
            WFamily::Uniform { lo, hi } => (0.5 * (lo + hi), (hi.powi(3) - lo.powi(3)) / (3.0 * (hi - lo))),
            WFamily::Gaussian { mean, sd } => (*mean, mean * mean + sd * sd),
            WFamily::Truncated { inner, n } => clamped_moments(inner, *n),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            WFamily::Constant { value } => *value,
            WFamily::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            WFamily::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            WFamily::Gaussian { mean, sd } => Normal::new(*mean, *sd).expect("validated gaussian").sample(rng),
            WFamily::Truncated { inner, n } => inner.sample(rng).clamp(-n, *n),
        }
    }
}

/// `log E[e^{y clamp(W, -n, n)}]`.
fn clamped_log_mgf(inner: &WFamily, n: f64, y: f64) -> f64 {
    match inner {
        WFamily::Constant { value } => y * value.clamp(-n, n),
        WFamily::Exponential { rate } => {
            // W >= 0, so only the upper clamp binds.
            let d = y - rate;
            if d == 0.0 {
                (rate * n).ln_1p()
            } else if d < 0.0 {
                let body = rate / -d * -(d * n).exp_m1();
                (body + (d * n).exp()).ln()
            } else {
                d * n + (rate * -(-d * n).exp_m1() / d + 1.0).ln()
            }
        }
        WFamily::Uniform { lo, hi } => {
            let width = hi - lo;
            let p_lo = ((-n).clamp(*lo, *hi) - lo) / width;
            let p_hi = (hi - n.clamp(*lo, *hi)) / width;
            let a = lo.max(-n);
            let b = hi.min(n);
            let mut acc = f64::NEG_INFINITY;
            if b > a {
                acc = log_add(acc, ((b - a) / width).ln() + uniform_log_mgf(a, b, y));
            }
            if p_lo > 0.0 {
                acc = log_add(acc, p_lo.ln() - y * n);
            }
            if p_hi > 0.0 {
                acc = log_add(acc, p_hi.ln() + y * n);
            }
            acc
        }
        WFamily::Gaussian { mean, sd } => {
            // Tilting by e^{yw} moves the centre to mean + y sd^2.
            let centre = mean + y * sd * sd;
            let base = y * mean + 0.5 * y * y * sd * sd;
            let z_hi = (n - centre) / sd;
            let z_lo = (-n - centre) / sd;
            let mid = if z_lo > 0.0 {
                norm_sf(z_lo) - norm_sf(z_hi)
            } else if z_hi < 0.0 {
                norm_sf(-z_hi) - norm_sf(-z_lo)
            } else {
                1.0 - norm_sf(z_hi) - norm_sf(-z_lo)
            };
            let mut acc = base + ln_or_neg_inf(mid);
            acc = log_add(acc, ln_or_neg_inf(norm_sf((n - mean) / sd)) + y * n);
            acc = log_add(acc, ln_or_neg_inf(norm_sf((n + mean) / sd)) - y * n);
            acc
        }
        WFamily::Truncated { inner, n: n0 } => clamped_log_mgf(inner, n.min(*n0), y),
    }
}

/// `(E clamp(W), E clamp(W)^2)` for clamping to `[-n, n]`.
fn clamped_moments(inner: &WFamily, n: f64) -> (f64, f64) {
    match inner {
        WFamily::Constant { value } => {
            let c = value.clamp(-n, n);
            (c, c * c)
        }
        WFamily::Exponential { rate } => {
            let tail = (-rate * n).exp();
            let m1 = -(-rate * n).exp_m1() / rate;
            let m2 = 2.0 / (rate * rate) - tail * (2.0 * n / rate + 2.0 / (rate * rate));
            (m1, m2)
        }
        WFamily::Uniform { lo, hi } => {
            let width = hi - lo;
            let p_lo = ((-n).clamp(*lo, *hi) - lo) / width;
            let p_hi = (hi - n.clamp(*lo, *hi)) / width;
            let a = lo.max(-n);
            let b = hi.min(n);
            let (mut m1, mut m2) = (n * (p_hi - p_lo), n * n * (p_hi + p_lo));
            if b > a {
                m1 += (b * b - a * a) / (2.0 * width);
                m2 += (b.powi(3) - a.powi(3)) / (3.0 * width);
            }
            (m1, m2)
        }
        WFamily::Gaussian { mean, sd } => {
            let a = (-n).max(mean - 12.0 * sd);
            let b = n.min(mean + 12.0 * sd);
            let dens = |w: f64| (-0.5 * ((w - mean) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
            let breaks = [mean - 3.0 * sd, mean - sd, *mean, mean + sd, mean + 3.0 * sd];
            let (i1, i2) = if b > a {
                (
                    integrate_pieces(|w| w * dens(w), a, b, &breaks, 1e-13),
                    integrate_pieces(|w| w * w * dens(w), a, b, &breaks, 1e-13),
                )
            } else {
                (0.0, 0.0)
            };
            let p_hi = norm_sf((n - mean) / sd);
            let p_lo = norm_sf((n + mean) / sd);
            (i1 + n * (p_hi - p_lo), i2 + n * n * (p_hi + p_lo))
        }
        WFamily::Truncated { inner, n: n0 } => clamped_moments(inner, n.min(*n0)),
    }
}
