use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A pure map `tau -> W` for rewards that are functions of the waiting time.
///
/// Every map is affine with slope [`RewardMap::slope`] beyond its last
/// breakpoint, which is what lets the log-MGF split into a quadrature body
/// and a closed-form tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardMap {
    Linear { slope: f64, intercept: f64 },
    Step { threshold: f64, below: f64, above: f64 },
    /// `inner` clamped to `[-n, n]`.
    Clamp { inner: Box<RewardMap>, n: f64 },
}

impl RewardMap {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidModel(format!("reward map: {what}")));
        match self {
            RewardMap::Linear { slope, intercept } => {
                if !(slope.is_finite() && intercept.is_finite()) {
                    return bad("linear coefficients must be finite");
                }
            }
            RewardMap::Step { threshold, below, above } => {
                if !(threshold.is_finite() && below.is_finite() && above.is_finite()) {
                    return bad("step parameters must be finite");
                }
            }
            RewardMap::Clamp { inner, n } => {
                if !(n.is_finite() && *n > 0.0) {
                    return bad("clamp level must be positive and finite");
                }
                inner.validate()?;
            }
        }
        Ok(())
    }

    pub fn eval(&self, tau: f64) -> f64 {
        match self {
            RewardMap::Linear { slope, intercept } => slope * tau + intercept,
            RewardMap::Step { threshold, below, above } => {
                if tau < *threshold {
                    *below
                } else {
                    *above
                }
            }
            RewardMap::Clamp { inner, n } => inner.eval(tau).clamp(-n, *n),
        }
    }

    /// Asymptotic slope `s`: `F(tau) - s tau` is bounded on `(0, inf)`.
    pub fn slope(&self) -> f64 {
        match self {
            RewardMap::Linear { slope, .. } => *slope,
            RewardMap::Step { .. } | RewardMap::Clamp { .. } => 0.0,
        }
    }

    /// `(slope, intercept)` when the map is affine everywhere.
    pub fn as_affine(&self) -> Option<(f64, f64)> {
        match self {
            RewardMap::Linear { slope, intercept } => Some((*slope, *intercept)),
            RewardMap::Clamp { inner, n } => match inner.as_affine() {
                Some((0.0, c)) => Some((0.0, c.clamp(-n, *n))),
                _ => None,
            },
            RewardMap::Step { below, above, .. } if below == above => Some((0.0, *below)),
            RewardMap::Step { .. } => None,
        }
    }

    /// Wraps in a clamp to `[-n, n]`, folding nested clamps together.
    pub fn clamped(self, n: f64) -> RewardMap {
        match self {
            RewardMap::Clamp { inner, n: n0 } => RewardMap::Clamp { inner, n: n0.min(n) },
            other => RewardMap::Clamp {
                inner: Box::new(other),
                n,
            },
        }
    }

    /// Points where the map has kinks or jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            RewardMap::Linear { .. } => Vec::new(),
            RewardMap::Step { threshold, .. } => vec![*threshold],
            RewardMap::Clamp { inner, n } => {
                let mut out = inner.breakpoints();
                if let Some((s, c)) = inner.as_affine() {
                    if s != 0.0 {
                        out.push((n - c) / s);
                        out.push((-n - c) / s);
                    }
                } else {
                    // Crossings of +-n by a non-affine inner map happen only at
                    // its own jumps or on affine pieces; probe those pieces.
                    out.extend(clamp_crossings(inner, *n));
                }
                out
            }
        }
    }

    /// Beyond this point the map equals `slope() * tau + tail_intercept()`.
    pub fn tail_start(&self) -> f64 {
        self.breakpoints().into_iter().fold(0.0, f64::max)
    }

    pub fn tail_intercept(&self) -> f64 {
        let t = self.tail_start() + 1.0;
        self.eval(t) - self.slope() * t
    }
}

/// Crossing points of `+-n` for non-affine maps, found by
/// bisection on each affine piece between the inner breakpoints.
fn clamp_crossings(inner: &RewardMap, n: f64) -> Vec<f64> {
    let mut bps = inner.breakpoints();
    bps.retain(|b| b.is_finite());
    bps.sort_by(f64::total_cmp);
    let mut edges = vec![0.0];
    edges.extend(bps.iter().copied().filter(|&b| b > 0.0));
    let last = *edges.last().unwrap();
    edges.push(last + 1.0 + n.abs() * 4.0);
    let mut out = Vec::new();
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let span = b - a;
        let lo = a + 1e-12 * span;
        let hi = b - 1e-12 * span;
        for level in [n, -n] {
            let g = |t: f64| inner.eval(t) - level;
            if g(lo).signum() != g(hi).signum() {
                out.push(crate::optimize::bisect_boundary(
                    |t| g(t).signum() == g(lo).signum(),
                    lo,
                    hi,
                    1e-15,
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_detection() {
        let lin = RewardMap::Linear { slope: 2.0, intercept: 1.0 };
        assert_eq!(lin.as_affine(), Some((2.0, 1.0)));
        let clamped = RewardMap::Clamp {
            inner: Box::new(lin),
            n: 3.0,
        };
        assert_eq!(clamped.as_affine(), None);
        assert_eq!(clamped.breakpoints(), vec![1.0, -2.0]);
        assert_eq!(clamped.tail_start(), 1.0);
        assert_eq!(clamped.tail_intercept(), 3.0);
        assert_eq!(clamped.slope(), 0.0);
    }

    #[test]
    fn step_tail() {
        let s = RewardMap::Step {
            threshold: 2.0,
            below: -1.0,
            above: 4.0,
        };
        assert_eq!(s.tail_start(), 2.0);
        assert_eq!(s.tail_intercept(), 4.0);
        assert_eq!(s.eval(1.999), -1.0);
        assert_eq!(s.eval(2.0), 4.0);
    }
}
