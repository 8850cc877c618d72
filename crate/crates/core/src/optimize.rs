//! One-dimensional search primitives over extended-valued concave objectives.
//!
//! Objectives return `f64::NEG_INFINITY` outside their effective domain.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub arg: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LineMax {
    /// Interior maximizer.
    Found(Maximum),
    /// The supremum is finite but only approached as the argument runs off to
    /// infinity; `value` is the extrapolated limit, `arg` the last probe.
    AtInfinity(Maximum),
    /// The objective grows without bound along the ray.
    Unbounded,
}

impl LineMax {
    pub fn value(&self) -> f64 {
        match self {
            LineMax::Found(m) | LineMax::AtInfinity(m) => m.value,
            LineMax::Unbounded => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LineSearch {
    /// Initial probe distance from the start point.
    pub step: f64,
    /// Distance past which a still-increasing objective is classified.
    pub radius: f64,
    /// Relative argument tolerance for golden-section refinement.
    pub arg_tol: f64,
    pub max_iter: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch {
            step: 0.5,
            radius: 50.0,
            arg_tol: 1e-10,
            max_iter: 200,
        }
    }
}

impl LineSearch {
    /// Maximizes `f` starting from `start`, where `f(start)` must be finite.
    ///
    /// The bracket doubles until the objective drops. A still-rising
    /// objective is declared unbounded once it is past `radius` with gains
    /// that no longer shrink, and saturating when its gains become negligible.
    pub fn maximize<F: FnMut(f64) -> f64>(&self, mut f: F, start: f64) -> LineMax {
        let f0 = f(start);
        debug_assert!(f0.is_finite(), "line search must start in the domain");
        let fp = f(start + self.step);
        let fm = f(start - self.step);
        if fp <= f0 && fm <= f0 {
            let m = self.golden(&mut f, start - self.step, start, start + self.step, f0);
            return LineMax::Found(m);
        }
        let dir = if fp > fm { 1.0 } else { -1.0 };
        let mut prev = (start, f0);
        let mut cur = (start + dir * self.step, if dir > 0.0 { fp } else { fm });
        let mut last_gain = cur.1 - f0;
        let mut k = 1;
        loop {
            let dist = self.step * 2f64.powi(k);
            let next_x = start + dir * dist;
            let next_f = f(next_x);
            if next_f < cur.1 {
                let (lo, hi) = if dir > 0.0 { (prev.0, next_x) } else { (next_x, prev.0) };
                let m = self.golden(&mut f, lo, cur.0, hi, cur.1);
                return LineMax::Found(m);
            }
            let gain = next_f - cur.1;
            let ratio = if last_gain > 0.0 { gain / last_gain } else { f64::INFINITY };
            if gain <= 1e-13 * (1.0 + next_f.abs()) {
                return LineMax::AtInfinity(extrapolate(next_x, next_f, gain, ratio));
            }
            if (dist > self.radius && ratio >= 0.8) || next_f == f64::INFINITY {
                return LineMax::Unbounded;
            }
            if dist > 1e300 {
                return if ratio < 0.8 {
                    LineMax::AtInfinity(extrapolate(next_x, next_f, gain, ratio))
                } else {
                    LineMax::Unbounded
                };
            }
            last_gain = gain;
            prev = cur;
            cur = (next_x, next_f);
            k += 1;
        }
    }

    /// Golden-section refinement of a bracket `lo < mid < hi` with `f(mid)`
    /// no smaller than either end.
    pub fn golden<F: FnMut(f64) -> f64>(&self, f: &mut F, lo: f64, mid: f64, hi: f64, fmid: f64) -> Maximum {
        let (mut a, mut b) = (lo, hi);
        let mut best = Maximum { arg: mid, value: fmid };
        let mut x1 = b - INV_PHI * (b - a);
        let mut x2 = a + INV_PHI * (b - a);
        let mut f1 = f(x1);
        let mut f2 = f(x2);
        for _ in 0..self.max_iter {
            if (b - a).abs() <= self.arg_tol * (1.0 + best.arg.abs()) {
                break;
            }
            if f1 >= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - INV_PHI * (b - a);
                f1 = f(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + INV_PHI * (b - a);
                f2 = f(x2);
            }
            for (x, v) in [(x1, f1), (x2, f2)] {
                if v > best.value {
                    best = Maximum { arg: x, value: v };
                }
            }
        }
        best
    }
}

/// Sums the remaining gains as a geometric series when they shrink by a
/// constant factor per doubling.
fn extrapolate(x: f64, fx: f64, gain: f64, ratio: f64) -> Maximum {
    let tail = if ratio < 1.0 && gain > 0.0 { gain * ratio / (1.0 - ratio) } else { 0.0 };
    Maximum { arg: x, value: fx + tail }
}

/// Minimizes a convex function of `log(arg)` on `[lo, hi]`: a coarse scan
/// over `scan` log-spaced points followed by golden-section refinement on
/// the cell around the best point. Infinite values are allowed.
pub fn minimize_log_scale<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, scan: usize, iters: usize) -> Maximum {
    let (llo, lhi) = (lo.ln(), hi.ln());
    let grid: Vec<f64> = (0..scan)
        .map(|i| llo + (lhi - llo) * i as f64 / (scan - 1) as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&l| f(l.exp())).collect();
    let mut best_i = 0;
    for i in 1..scan {
        if values[i] < values[best_i] {
            best_i = i;
        }
    }
    if !values[best_i].is_finite() {
        return Maximum {
            arg: grid[best_i].exp(),
            value: values[best_i],
        };
    }
    let a0 = grid[best_i.saturating_sub(1)];
    let b0 = grid[(best_i + 1).min(scan - 1)];
    let mut best = Maximum {
        arg: grid[best_i],
        value: values[best_i],
    };
    let (mut a, mut b) = (a0, b0);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1.exp());
    let mut f2 = f(x2.exp());
    for _ in 0..iters {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1.exp());
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2.exp());
        }
        for (x, v) in [(x1, f1), (x2, f2)] {
            if v < best.value {
                best = Maximum { arg: x, value: v };
            }
        }
    }
    Maximum {
        arg: best.arg.exp(),
        value: best.value,
    }
}

/// `sup { x : pred(x) }` for a predicate that holds on a left half-line.
/// `lo` must satisfy the predicate and `hi` must not.
pub fn bisect_boundary<P: FnMut(f64) -> bool>(mut pred: P, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || (hi - lo) <= rel_tol * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
