//! Cramér transforms and rate functions by numerical Legendre–Fenchel duality.
//!
//! With `L(x, y) = log E[e^{x tau + y W}]` the rate function of `Z_t / t` is
//!
//! ```text
//! J(m) = inf_{beta > 0} sup_{x, y} { x + m y - beta L(x, y) }
//!      = inf_{beta > 0} beta L*(1 / beta, m / beta).
//! ```
//!
//! The outer infimum is the Lagrange dual of the convex program
//! `sup { x + m y : L(x, y) <= 0 }`, which is what [`rate_function_j`]
//! solves: for each `y` the boundary `X(y) = sup { x : L(x, y) <= 0 }` is found
//! by root bracketing, and the concave function `m y + X(y)` is maximized over
//! `y`. The multiplier is recovered as `beta* = 1 / dL/dx` at the optimum. This
//! route stays well posed when the inner supremum is finite only at a single
//! `beta` (for example `W` constant), where a direct search over `beta` sees
//! `+inf` everywhere else. [`rate_function_j_primal`] evaluates the
//! `beta`-infimum directly and is kept as an independent cross-check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::JointModel;
use crate::optimize::{minimize_log_scale, LineMax, LineSearch, Maximum};
use crate::xreal::{XReal, PosInfinity};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative change in objective value that ends coordinate ascent.
    pub value_tol: f64,
    /// Relative argument tolerance for one-dimensional refinements.
    pub arg_tol: f64,
    pub max_sweeps: usize,
    /// Escape radius in units of the natural scale of `tau` or `W`.
    pub escape: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            value_tol: 1e-8,
            arg_tol: 1e-10,
            max_sweeps: 200,
            escape: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaddleStatus {
    /// Finite value attained at finite optimizers.
    Converged,
    /// The rate is `+inf`.
    ValueInfinite,
    /// The value is finite but only approached as the optimizers run off to
    /// infinity; no optimizers are reported.
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleResult {
    pub value: XReal,
    pub beta_star: Option<f64>,
    pub x_star: Option<f64>,
    pub y_star: Option<f64>,
    pub status: SaddleStatus,
}

impl SaddleResult {
    fn infinite() -> Self {
        SaddleResult {
            value: PosInfinity,
            beta_star: None,
            x_star: None,
            y_star: None,
            status: SaddleStatus::ValueInfinite,
        }
    }
}

/// Result of a Cramér transform evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conjugate {
    pub value: XReal,
    /// Maximizer, when the supremum is attained at a finite point.
    pub argmax: Option<(f64, f64)>,
}

/// `x + m y - beta L(x, y)`, `-inf` where `L` diverges.
pub fn saddle_function(model: &JointModel, m: f64, beta: f64, x: f64, y: f64) -> f64 {
    match model.log_mgf(x, y) {
        XReal::Finite(l) => x + m * y - beta * l,
        PosInfinity => f64::NEG_INFINITY,
    }
}

fn line(step_scale: f64, tol: &Tolerances) -> LineSearch {
    LineSearch {
        step: 0.5 / step_scale,
        radius: tol.escape / step_scale,
        arg_tol: tol.arg_tol,
        max_iter: 200,
    }
}

/// `L*(a, b) = sup_{x, y} { a x + b y - L(x, y) }`.
pub fn cramer_transform(model: &JointModel, a: f64, b: f64) -> XReal {
    cramer_transform_with(model, a, b, &Tolerances::default()).value
}

/// Coordinate ascent with exact line searches in `x` and `y`, followed in
/// each sweep by a line search along the sweep's net displacement (this is
/// what makes progress along narrow ridges such as those of `W = F(tau)`).
pub fn cramer_transform_with(model: &JointModel, a: f64, b: f64, tol: &Tolerances) -> Conjugate {
    let obj = |x: f64, y: f64| match model.log_mgf(x, y) {
        XReal::Finite(l) => a * x + b * y - l,
        PosInfinity => f64::NEG_INFINITY,
    };
    let (sx, sy) = model.scales();
    let (lx, ly) = (line(sx, tol), line(sy, tol));
    let (mut x, mut y, mut f) = (0.0, 0.0, 0.0);
    let mut limit = f64::NEG_INFINITY;
    let mut attained = true;
    let mut absorb = |r: LineMax, at: &mut f64, f: &mut f64, attained: &mut bool| -> bool {
        match r {
            LineMax::Found(m) => {
                if m.value >= *f {
                    *at = m.arg;
                    *f = m.value;
                }
                true
            }
            LineMax::AtInfinity(m) => {
                limit = limit.max(m.value);
                *attained = false;
                true
            }
            LineMax::Unbounded => false,
        }
    };
    for _ in 0..tol.max_sweeps {
        let (x0, y0, f0) = (x, y, f);
        if !absorb(lx.maximize(|t| obj(t, y), x), &mut x, &mut f, &mut attained) {
            return Conjugate {
                value: PosInfinity,
                argmax: None,
            };
        }
        if !absorb(ly.maximize(|t| obj(x, t), y), &mut y, &mut f, &mut attained) {
            return Conjugate {
                value: PosInfinity,
                argmax: None,
            };
        }
        let (dx, dy) = (x - x0, y - y0);
        if dx != 0.0 || dy != 0.0 {
            let size = (dx.abs() * sx).max(dy.abs() * sy);
            let ld = LineSearch {
                step: 0.5,
                radius: tol.escape / size,
                arg_tol: tol.arg_tol,
                max_iter: 200,
            };
            let mut s_best = 1.0;
            let mut f_pattern = f;
            if !absorb(
                ld.maximize(|s| obj(x0 + s * dx, y0 + s * dy), 1.0),
                &mut s_best,
                &mut f_pattern,
                &mut attained,
            ) {
                return Conjugate {
                    value: PosInfinity,
                    argmax: None,
                };
            }
            if f_pattern > f {
                x = x0 + s_best * dx;
                y = y0 + s_best * dy;
                f = f_pattern;
            }
        }
        let moved = (x - x0).abs() * sx + (y - y0).abs() * sy;
        if f - f0 <= 1e-15 * (1.0 + f.abs()) && moved <= tol.arg_tol * (1.0 + x.abs() * sx + y.abs() * sy) {
            break;
        }
    }
    let value = f.max(limit);
    Conjugate {
        value: XReal::from_f64(value.max(0.0)),
        argmax: if attained && f >= limit { Some((x, y)) } else { None },
    }
}

fn theta0_positive(model: &JointModel) -> Result<XReal> {
    let bounds = model.exp_moment_bounds();
    if bounds.theta0 == XReal::ZERO {
        return Err(Error::HypothesisViolation(
            "theta0 = 0: tau has no exponential moment, the rate function is not defined".into(),
        ));
    }
    Ok(bounds.theta0)
}

/// `sup { x : L(x, y) <= 0 }`, or `None` when the set is empty.
fn boundary_x(model: &JointModel, y: f64, sx: f64) -> Option<f64> {
    let lam = |x: f64| model.log_mgf(x, y).to_f64();
    let unit = 1.0 / sx;
    let (mut lo, mut hi, mut flo, mut fhi);
    let l0 = lam(0.0);
    if l0 <= 0.0 {
        lo = 0.0;
        flo = l0;
        let mut step = unit;
        loop {
            let v = lam(step);
            if v > 0.0 {
                hi = step;
                fhi = v;
                break;
            }
            lo = step;
            flo = v;
            step *= 2.0;
            if step > 1e300 {
                return None;
            }
        }
    } else {
        hi = 0.0;
        fhi = l0;
        let mut step = unit;
        loop {
            let v = lam(-step);
            if v <= 0.0 {
                lo = -step;
                flo = v;
                break;
            }
            hi = -step;
            fhi = v;
            step *= 2.0;
            if step > 1e15 * unit {
                return None;
            }
        }
    }
    // Illinois false position, falling back to bisection where L is infinite.
    let mut retained = 0i8;
    for _ in 0..300 {
        if flo == 0.0 || hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let c = if fhi.is_finite() {
            let s = lo - flo * (hi - lo) / (fhi - flo);
            if s > lo && s < hi {
                s
            } else {
                mid
            }
        } else {
            mid
        };
        if c <= lo || c >= hi {
            break;
        }
        let v = lam(c);
        if v <= 0.0 {
            lo = c;
            flo = v;
            if retained == 1 && fhi.is_finite() {
                fhi *= 0.5;
            }
            retained = 1;
        } else {
            hi = c;
            fhi = v;
            if retained == -1 {
                flo *= 0.5;
            }
            retained = -1;
        }
    }
    Some(lo)
}

/// `dL/dx` by central differences, one-sided next to the domain boundary.
fn d_dx(model: &JointModel, x: f64, y: f64, sx: f64) -> Option<f64> {
    let h = 1e-5 * (1.0 + x.abs() * sx) / sx;
    let f0 = model.log_mgf(x, y).finite()?;
    let fp = model.log_mgf(x + h, y).finite();
    let fm = model.log_mgf(x - h, y).finite();
    let d = match (fp, fm) {
        (Some(p), Some(q)) => (p - q) / (2.0 * h),
        (None, Some(q)) => (f0 - q) / h,
        (Some(p), None) => (p - f0) / h,
        (None, None) => return None,
    };
    (d.is_finite() && d > 0.0).then_some(d)
}

/// `sup { x + m y : L(x, y) <= 0 }` with its optimizers.
fn dual(model: &JointModel, m: f64, tol: &Tolerances) -> SaddleResult {
    let (sx, sy) = model.scales();
    let g = |y: f64| match boundary_x(model, y, sx) {
        Some(x) => x + m * y,
        None => f64::NEG_INFINITY,
    };
    match line(sy, tol).maximize(g, 0.0) {
        LineMax::Found(Maximum { arg: y, value }) => {
            let x = boundary_x(model, y, sx).expect("optimum lies in the feasible set");
            SaddleResult {
                value: XReal::from_f64(value.max(0.0)),
                beta_star: d_dx(model, x, y, sx).map(|d| 1.0 / d),
                x_star: Some(x),
                y_star: Some(y),
                status: SaddleStatus::Converged,
            }
        }
        LineMax::AtInfinity(m) => SaddleResult {
            value: XReal::from_f64(m.value.max(0.0)),
            beta_star: None,
            x_star: None,
            y_star: None,
            status: SaddleStatus::Unbounded,
        },
        LineMax::Unbounded => SaddleResult::infinite(),
    }
}

/// `J(m) = inf_{beta > 0} beta L*(1 / beta, m / beta)`.
pub fn rate_function_j(model: &JointModel, m: f64) -> Result<SaddleResult> {
    rate_function_j_with(model, m, &Tolerances::default())
}

pub fn rate_function_j_with(model: &JointModel, m: f64, tol: &Tolerances) -> Result<SaddleResult> {
    if !m.is_finite() {
        return Err(Error::Parameter(format!("m must be finite, got {m}")));
    }
    let theta0 = theta0_positive(model)?;
    let d = dual(model, m, tol);
    if m != 0.0 || theta0.is_infinite() {
        return Ok(d);
    }
    // At m = 0 the dual also admits beta = 0, whose value is sup { x : L(x, y)
    // finite }, so it equals J(0) only when a positive multiplier is found.
    match (d.status, d.beta_star) {
        (SaddleStatus::Converged, Some(b)) if b > 0.0 => Ok(d),
        _ => rate_function_j_primal_with(model, m, tol),
    }
}

/// `J` by a direct log-scale search over `beta` on `[1e-4, 1e4]`, each point
/// evaluated through [`cramer_transform`].
pub fn rate_function_j_primal(model: &JointModel, m: f64) -> Result<SaddleResult> {
    rate_function_j_primal_with(model, m, &Tolerances::default())
}

pub fn rate_function_j_primal_with(model: &JointModel, m: f64, tol: &Tolerances) -> Result<SaddleResult> {
    theta0_positive(model)?;
    let objective = |beta: f64| {
        let c = cramer_transform_with(model, 1.0 / beta, m / beta, tol);
        beta * c.value.to_f64()
    };
    let best = minimize_log_scale(objective, 1e-4, 1e4, 41, 60);
    if !best.value.is_finite() {
        return Ok(SaddleResult::infinite());
    }
    let beta = best.arg;
    let c = cramer_transform_with(model, 1.0 / beta, m / beta, tol);
    let (x_star, y_star, status) = match c.argmax {
        Some((x, y)) => (Some(x), Some(y), SaddleStatus::Converged),
        None => (None, None, SaddleStatus::Unbounded),
    };
    Ok(SaddleResult {
        value: XReal::from_f64(best.value.max(0.0)),
        beta_star: Some(beta),
        x_star,
        y_star,
        status,
    })
}

/// `J(m)` for `m != 0` and `min(J(0), theta0)` at `m = 0`.
pub fn rate_function_jbar(model: &JointModel, m: f64) -> Result<XReal> {
    let j = rate_function_j(model, m)?.value;
    Ok(jbar_from_j(model, m, j))
}

fn jbar_from_j(model: &JointModel, m: f64, j: XReal) -> XReal {
    if m == 0.0 {
        j.min(model.exp_moment_bounds().theta0)
    } else {
        j
    }
}

/// `J_tau(u) = sup_lambda { lambda - u log E e^{lambda tau} }`, `+inf` for `u < 0`.
pub fn renewal_rate_jtau(model: &JointModel, u: f64) -> XReal {
    if u < 0.0 {
        return PosInfinity;
    }
    if u == 0.0 {
        return model.exp_moment_bounds().theta0;
    }
    let (sx, _) = model.scales();
    let f = |l: f64| match model.log_mgf(l, 0.0) {
        XReal::Finite(v) => l - u * v,
        PosInfinity => f64::NEG_INFINITY,
    };
    match line(sx, &Tolerances::default()).maximize(f, 0.0) {
        LineMax::Found(m) | LineMax::AtInfinity(m) => XReal::from_f64(m.value.max(0.0)),
        LineMax::Unbounded => PosInfinity,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCheck {
    /// Most negative second difference of the finite part of the profile.
    pub worst_second_difference: f64,
    pub convex: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateProfile {
    pub m_grid: Vec<f64>,
    pub j_values: Vec<XReal>,
    pub jbar_values: Vec<XReal>,
    pub saddles: Vec<Option<SaddleResult>>,
    /// Per-point error messages; the sweep continues past failures.
    pub errors: Vec<Option<String>>,
    pub model_digest: String,
    pub convexity: ConvexityCheck,
}

/// Slack allowed in the convexity check of a profile.
pub const CONVEXITY_SLACK: f64 = 1e-6;

/// `J` and `J-bar` on a uniform grid. Points are evaluated independently (in
/// parallel), so the result does not depend on the number of workers.
pub fn rate_profile(model: &JointModel, m_lo: f64, m_hi: f64, n_points: usize) -> Result<RateProfile> {
    if !(m_lo < m_hi) || n_points < 2 {
        return Err(Error::Parameter(format!(
            "rate profile needs m_lo < m_hi and at least 2 points, got [{m_lo}, {m_hi}] with {n_points}"
        )));
    }
    let grid: Vec<f64> = (0..n_points)
        .map(|i| {
            if i == n_points - 1 {
                m_hi
            } else {
                m_lo + (m_hi - m_lo) * i as f64 / (n_points - 1) as f64
            }
        })
        .collect();
    rate_profile_on(model, &grid)
}

pub fn rate_profile_on(model: &JointModel, grid: &[f64]) -> Result<RateProfile> {
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Parameter("rate profile grid must be strictly increasing".into()));
    }
    let results: Vec<Result<SaddleResult>> = grid.par_iter().map(|&m| rate_function_j(model, m)).collect();
    let mut profile = RateProfile {
        m_grid: grid.to_vec(),
        j_values: Vec::with_capacity(grid.len()),
        jbar_values: Vec::with_capacity(grid.len()),
        saddles: Vec::with_capacity(grid.len()),
        errors: Vec::with_capacity(grid.len()),
        model_digest: model.digest(),
        convexity: ConvexityCheck {
            worst_second_difference: 0.0,
            convex: true,
        },
    };
    for (&m, r) in grid.iter().zip(results) {
        match r {
            Ok(s) => {
                profile.j_values.push(s.value);
                profile.jbar_values.push(jbar_from_j(model, m, s.value));
                profile.saddles.push(Some(s));
                profile.errors.push(None);
            }
            Err(e) => {
                profile.j_values.push(PosInfinity);
                profile.jbar_values.push(PosInfinity);
                profile.saddles.push(None);
                profile.errors.push(Some(e.to_string()));
            }
        }
    }
    profile.convexity = convexity(&profile.m_grid, &profile.jbar_values);
    Ok(profile)
}

/// Second differences of the finite part, normalized to unit spacing.
fn convexity(grid: &[f64], values: &[XReal]) -> ConvexityCheck {
    let mut worst = 0.0f64;
    for i in 1..grid.len().saturating_sub(1) {
        let (Some(a), Some(b), Some(c)) = (values[i - 1].finite(), values[i].finite(), values[i + 1].finite()) else {
            continue;
        };
        let (h1, h2) = (grid[i] - grid[i - 1], grid[i + 1] - grid[i]);
        // Divided second difference scaled back to the grid spacing.
        let d2 = ((c - b) / h2 - (b - a) / h1) * 0.5 * (h1 + h2);
        worst = worst.min(d2);
    }
    ConvexityCheck {
        worst_second_difference: worst,
        convex: worst >= -CONVEXITY_SLACK,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundBranch {
    /// `eta0 = inf`: the full rate `inf J-bar` beyond the threshold.
    FullLdp,
    /// `eta0 < inf`: `min(inf J-bar beyond m + kappa a, eta0 a (1 - kappa) / 4)`.
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationBound {
    pub bound: XReal,
    pub kappa_used: Option<f64>,
    pub branch: BoundBranch,
    pub mean: f64,
    pub theta0: XReal,
    pub eta0: XReal,
    /// `inf J-bar` beyond the (kappa-scaled) threshold.
    pub rate_term: XReal,
    /// `eta0 a (1 - kappa) / 4`, on the truncated branch.
    pub moment_term: Option<f64>,
}

/// `inf J-bar(z)` over `z >= z0` (upper) or `z <= z0` (lower), where `z0` lies
/// on the far side of the mean. Convexity makes `J-bar` monotone there, so the
/// value at `z0` is the infimum; this is checked on a short grid and an
/// exhaustive grid minimum is used if the check fails.
fn tail_infimum(model: &JointModel, z0: f64, side: Side, spread: f64) -> Result<XReal> {
    let dir = if side == Side::Upper { 1.0 } else { -1.0 };
    let at = |z: f64| rate_function_jbar(model, z);
    let v0 = at(z0)?;
    let probe: Vec<f64> = (1..=8).map(|k| z0 + dir * spread * k as f64 / 8.0).collect();
    let values: Vec<XReal> = probe.iter().map(|&z| at(z)).collect::<Result<_>>()?;
    let mut prev = v0;
    let mut monotone = true;
    for &v in &values {
        if let (Some(p), Some(c)) = (prev.finite(), v.finite()) {
            if c < p - 1e-9 {
                monotone = false;
            }
        } else if prev.is_infinite() && v.is_finite() {
            monotone = false;
        }
        prev = v;
    }
    if monotone {
        return Ok(v0);
    }
    let wide: Vec<f64> = (0..=100).map(|k| z0 + dir * 10.0 * spread * k as f64 / 100.0).collect();
    let mut best = v0;
    for z in wide {
        best = best.min(at(z)?);
    }
    Ok(best)
}

/// Asymptotic deviation bound for `P(Z_t / t >= m + a)` (upper) or
/// `P(Z_t / t <= m - a)` (lower), with `m = E W / E tau`.
pub fn deviation_bound(model: &JointModel, a: f64, side: Side, kappa: Option<f64>) -> Result<DeviationBound> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::Parameter(format!("deviation size a must be positive, got {a}")));
    }
    if let Some(k) = kappa {
        if !(k > 0.0 && k < 1.0) {
            return Err(Error::Parameter(format!("kappa must lie in (0, 1), got {k}")));
        }
    }
    let bounds = model.exp_moment_bounds();
    if bounds.theta0 == XReal::ZERO || bounds.eta0 == XReal::ZERO {
        return Err(Error::HypothesisViolation(format!(
            "the bound needs theta0 > 0 and eta0 > 0, got theta0 = {}, eta0 = {}",
            bounds.theta0, bounds.eta0
        )));
    }
    let m = model.mean_ratio()?;
    let dir = if side == Side::Upper { 1.0 } else { -1.0 };
    let spread = a.max(m.abs()).max(1e-3);
    let base = DeviationBound {
        bound: PosInfinity,
        kappa_used: None,
        branch: BoundBranch::FullLdp,
        mean: m,
        theta0: bounds.theta0,
        eta0: bounds.eta0,
        rate_term: PosInfinity,
        moment_term: None,
    };
    let eta0 = match bounds.eta0 {
        PosInfinity => {
            let r = tail_infimum(model, m + dir * a, side, spread)?;
            return Ok(DeviationBound {
                bound: r,
                rate_term: r,
                ..base
            });
        }
        XReal::Finite(e) => e,
    };
    let eval = |k: f64| -> Result<(XReal, f64)> {
        let r = tail_infimum(model, m + dir * k * a, side, spread)?;
        Ok((r, eta0 * a * (1.0 - k) / 4.0))
    };
    let combine = |(r, s): (XReal, f64)| r.min(XReal::Finite(s));
    let k = match kappa {
        Some(k) => k,
        None => optimize_kappa(|k| Ok(combine(eval(k)?).to_f64()))?,
    };
    let (r, s) = eval(k)?;
    Ok(DeviationBound {
        bound: combine((r, s)),
        kappa_used: Some(k),
        branch: BoundBranch::Truncated,
        rate_term: r,
        moment_term: Some(s),
        ..base
    })
}

/// Maximizes a unimodal `h` on `(0, 1)`: grid `k / 40`, smallest maximizer on
/// ties, then golden-section refinement in the neighbouring cells.
fn optimize_kappa<H: FnMut(f64) -> Result<f64>>(mut h: H) -> Result<f64> {
    const N: usize = 40;
    let grid: Vec<f64> = (1..N).map(|i| i as f64 / N as f64).collect();
    let mut values = Vec::with_capacity(grid.len());
    for &k in &grid {
        values.push(h(k)?);
    }
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    let lo = if best == 0 { 1e-9 } else { grid[best - 1] };
    let hi = if best + 1 == grid.len() { 1.0 - 1e-9 } else { grid[best + 1] };
    let mut err = None;
    let mut f = |k: f64| match h(k) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            f64::NEG_INFINITY
        }
    };
    let ls = LineSearch {
        arg_tol: 1e-9,
        ..LineSearch::default()
    };
    let refined = ls.golden(&mut f, lo, grid[best], hi, values[best]);
    if let Some(e) = err {
        return Err(e);
    }
    // Keep the grid point unless refinement strictly improves on it.
    Ok(if refined.value > values[best] { refined.arg } else { grid[best] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Atom, TauFamily, WFamily};

    fn poisson() -> JointModel {
        JointModel::independent(TauFamily::Exponential { rate: 1.0 }, WFamily::Constant { value: 1.0 }).unwrap()
    }

    fn exp_exp() -> JointModel {
        JointModel::independent(TauFamily::Exponential { rate: 1.0 }, WFamily::Exponential { rate: 1.0 }).unwrap()
    }

    fn two_atom() -> JointModel {
        JointModel::discrete(vec![Atom { tau: 1.0, w: 0.0, p: 0.5 }, Atom { tau: 1.0, w: 2.0, p: 0.5 }]).unwrap()
    }

    fn poisson_rate(m: f64) -> f64 {
        1.0 - m + m * m.ln()
    }

    #[test]
    fn cramer_transform_examples() {
        let p = poisson();
        assert!(cramer_transform(&p, 1.0, 1.0).to_f64().abs() < 1e-12);
        let a: f64 = 0.5;
        let v = cramer_transform(&p, a, 1.0).to_f64();
        assert!((v - (a - 1.0 - a.ln())).abs() < 1e-10, "{v}");
        assert_eq!(cramer_transform(&p, 1.0, 2.0), PosInfinity);
    }

    #[test]
    fn poisson_rate_function() {
        let p = poisson();
        let s = rate_function_j(&p, 2.0).unwrap();
        assert_eq!(s.status, SaddleStatus::Converged);
        assert!((s.value.to_f64() - poisson_rate(2.0)).abs() < 1e-9);
        // beta* = 1 / E_tilted[tau] = 1 - x* = m
        assert!((s.beta_star.unwrap() - 2.0).abs() < 1e-6);
        let recomputed = saddle_function(&p, 2.0, s.beta_star.unwrap(), s.x_star.unwrap(), s.y_star.unwrap());
        assert!((recomputed - s.value.to_f64()).abs() < 1e-7);
        assert_eq!(rate_function_j(&p, -1.0).unwrap().value, PosInfinity);
        assert_eq!(rate_function_j(&p, 0.0).unwrap().value, PosInfinity);
        assert_eq!(rate_function_jbar(&p, 0.0).unwrap(), XReal::Finite(1.0));
        assert!(rate_function_jbar(&p, 1.0).unwrap().to_f64() < 1e-12);
    }

    #[test]
    fn exp_exp_rate_function() {
        let m = exp_exp();
        for z in [0.25, 1.5, 4.0] {
            let v = rate_function_j(&m, z).unwrap().value.to_f64();
            assert!((v - (z.sqrt() - 1.0).powi(2)).abs() < 1e-9, "m={z}: {v}");
        }
        assert_eq!(rate_function_j(&m, 0.0).unwrap().value, PosInfinity);
        assert!((rate_function_jbar(&m, 0.0).unwrap().to_f64() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_atom_rate_function() {
        let d = two_atom();
        assert!(rate_function_jbar(&d, 1.0).unwrap().to_f64() < 1e-12);
        let v = rate_function_j(&d, 1.5).unwrap().value.to_f64();
        let expect = 0.75 * 3f64.ln() - 2f64.ln();
        assert!((v - expect).abs() < 1e-9, "{v} vs {expect}");
        let edge = rate_function_j(&d, 2.0).unwrap();
        assert_eq!(edge.status, SaddleStatus::Unbounded);
        assert!((edge.value.to_f64() - 2f64.ln()).abs() < 1e-9);
        assert_eq!(rate_function_j(&d, 2.1).unwrap().value, PosInfinity);
        assert!((rate_function_j(&d, 0.0).unwrap().value.to_f64() - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn primal_route_agrees_with_dual() {
        let m = exp_exp();
        for z in [0.5, 2.0] {
            let d = rate_function_j(&m, z).unwrap().value.to_f64();
            let p = rate_function_j_primal(&m, z).unwrap().value.to_f64();
            assert!((d - p).abs() < 1e-7, "m={z}: dual {d} primal {p}");
        }
    }

    #[test]
    fn renewal_rate_examples() {
        let p = poisson();
        assert_eq!(renewal_rate_jtau(&p, -0.5), PosInfinity);
        assert!(renewal_rate_jtau(&p, 1.0).to_f64().abs() < 1e-14);
        assert!((renewal_rate_jtau(&p, 2.0).to_f64() - poisson_rate(2.0)).abs() < 1e-10);
    }

    #[test]
    fn profile_matches_poisson_formula() {
        let prof = rate_profile(&poisson(), 0.25, 4.0, 16).unwrap();
        for (m, v) in prof.m_grid.iter().zip(&prof.jbar_values) {
            assert!((v.to_f64() - poisson_rate(*m)).abs() < 1e-6);
        }
        assert!(prof.convexity.convex);
    }

    #[test]
    fn deviation_bound_branches() {
        let b = deviation_bound(&poisson(), 1.0, Side::Upper, None).unwrap();
        assert_eq!(b.branch, BoundBranch::FullLdp);
        assert!((b.bound.to_f64() - poisson_rate(2.0)).abs() < 1e-9);
        let e = deviation_bound(&exp_exp(), 1.0, Side::Upper, Some(0.5)).unwrap();
        let expect = (1.5f64.sqrt() - 1.0).powi(2).min(0.125);
        assert!((e.bound.to_f64() - expect).abs() < 1e-9);
        let near_one = deviation_bound(&exp_exp(), 1.0, Side::Upper, Some(0.999_999)).unwrap();
        assert!(near_one.bound.to_f64() < 1e-6);
        let opt = deviation_bound(&exp_exp(), 1.0, Side::Upper, None).unwrap();
        let k = opt.kappa_used.unwrap();
        // Optimal kappa balances (sqrt(1 + k) - 1)^2 = (1 - k) / 4.
        assert!(((1.0 + k).sqrt() - 1.0).powi(2) - (1.0 - k) / 4.0 < 1e-6);
        assert!(opt.bound.to_f64() > expect);
    }
}
