//! Measure-level rate `I(nu)` for finite-support laws and its minimization
//! under the contraction constraint `nu(phi) = m`, `phi(u, w) = w / u`.
//!
//! The minimization works in the variables `s_k = q_k / u_k`, where the
//! objective `sum s_k log(s_k / (S p_k)) + (1 - u.s) theta0` (`S = sum s_k`)
//! is jointly convex. It is solved by a log-barrier Newton method on each
//! face that can carry the optimum, from several strictly feasible starts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Atom, JointModel};
use crate::seeding::{domain_of, stream_rng};
use crate::xreal::{XReal, PosInfinity};

pub const N_STARTS: usize = 16;
pub const BARRIER_DAMPING: f64 = 0.5;
pub const KKT_TOL: f64 = 1e-9;
/// Slack on the total mass of a sub-probability.
pub const MASS_TOL: f64 = 1e-12;
/// Values closer than this to the null-measure value are flagged at `m = 0`.
pub const NULL_GAP_TOL: f64 = 1e-6;
const START_SEED: u64 = 0x0dac_1e5e_ed00_0001;
const FINAL_GAP: f64 = 1e-12;

/// Weights `q_k` on the atoms of a discrete law, `sum q_k <= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubMeasure {
    pub weights: Vec<f64>,
}

impl SubMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(Error::Parameter("sub-measure weights must be finite and >= 0".into()));
        }
        let mass: f64 = weights.iter().sum();
        if mass > 1.0 + MASS_TOL {
            return Err(Error::Parameter(format!("sub-measure mass {mass} exceeds 1")));
        }
        Ok(SubMeasure { weights })
    }

    pub fn null(n: usize) -> Self {
        SubMeasure { weights: vec![0.0; n] }
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_null(&self) -> bool {
        self.weights.iter().all(|&q| q == 0.0)
    }
}

fn discrete_atoms(model: &JointModel) -> Result<&[Atom]> {
    model
        .atoms()
        .ok_or_else(|| Error::Structural("the entropy oracle needs a discrete joint law".into()))
}

fn check_aligned(atoms: &[Atom], nu: &SubMeasure) -> Result<()> {
    if atoms.len() != nu.weights.len() {
        return Err(Error::Structural(format!(
            "sub-measure has {} weights but the law has {} atoms",
            nu.weights.len(),
            atoms.len()
        )));
    }
    Ok(())
}

/// `nu(1/u) H(nu_bar | psi) + (1 - nu(X)) theta0`, with `I(0) = theta0`.
pub fn entropy_rate_i(model: &JointModel, nu: &SubMeasure, theta0: XReal) -> Result<XReal> {
    let atoms = discrete_atoms(model)?;
    check_aligned(atoms, nu)?;
    Ok(rate_i(atoms, &nu.weights, theta0))
}

fn rate_i(atoms: &[Atom], q: &[f64], theta0: XReal) -> XReal {
    let mass: f64 = q.iter().sum();
    let deficit = (1.0 - mass).max(0.0);
    let deficit_term = match theta0 {
        XReal::Finite(th) => XReal::Finite(deficit * th),
        PosInfinity if deficit <= 1e-9 => XReal::ZERO,
        PosInfinity => return PosInfinity,
    };
    let s_total: f64 = atoms.iter().zip(q).map(|(a, &qk)| qk / a.tau).sum();
    if s_total == 0.0 {
        return deficit_term;
    }
    let mut entropy = 0.0;
    for (a, &qk) in atoms.iter().zip(q) {
        if qk == 0.0 {
            continue;
        }
        if a.p == 0.0 {
            return PosInfinity;
        }
        let s = qk / a.tau;
        entropy += s * (s / (s_total * a.p)).ln();
    }
    deficit_term + entropy
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Optimum over probability measures (`nu(X) = 1`).
    FullMass,
    /// Optimum over sub-probabilities with the mass left free.
    FreeMass,
    /// The null measure.
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktDiagnostics {
    /// Largest stationarity residual on the support of the minimizer.
    pub stationarity: f64,
    /// `|nu(phi) - m|`.
    pub constraint_residual: f64,
    pub newton_decrement: f64,
    pub barrier_weight: f64,
    pub start_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub m: f64,
    pub value: XReal,
    pub minimizer: Option<SubMeasure>,
    pub mass: f64,
    pub regime: Option<Regime>,
    pub diagnostics: Option<KktDiagnostics>,
    /// Value `theta0` of the null measure, reported at `m = 0`.
    pub null_value: Option<XReal>,
    /// At `m = 0`: the null value and the constrained optimum are within
    /// `NULL_GAP_TOL` of each other.
    pub null_close: bool,
    /// Dense-grid minimum, computed for laws with at most three atoms.
    pub grid_value: Option<f64>,
    pub note: Option<String>,
}

/// One face of the feasible set: atoms `idx`, with or without the
/// constraint `nu(phi) = m`, and with the mass pinned to one or free.
#[derive(Debug, Clone)]
struct Face {
    idx: Vec<usize>,
    with_phi: bool,
    full_mass: bool,
}

struct FaceSolution {
    s: Vec<f64>,
    value: f64,
    diagnostics: KktDiagnostics,
}

fn phi(a: &Atom) -> f64 {
    a.w / a.tau
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn candidate_faces(atoms: &[Atom], m: f64, theta0: XReal) -> Vec<Face> {
    let phis: Vec<f64> = atoms.iter().map(phi).collect();
    let lo = phis.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = phis.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let all: Vec<usize> = (0..atoms.len()).collect();
    let level = |v: f64| -> Vec<usize> { all.iter().copied().filter(|&k| near(phis[k], v)).collect() };
    let mut faces = Vec::new();

    if near(lo, hi) {
        if near(m, lo) {
            faces.push(Face { idx: all.clone(), with_phi: false, full_mass: true });
        }
    } else if near(m, hi) {
        faces.push(Face { idx: level(hi), with_phi: false, full_mass: true });
    } else if near(m, lo) {
        faces.push(Face { idx: level(lo), with_phi: false, full_mass: true });
    } else if m > lo && m < hi {
        faces.push(Face { idx: all.clone(), with_phi: true, full_mass: true });
    }

    if theta0.is_finite() {
        let (flo, fhi) = (lo.min(0.0), hi.max(0.0));
        let interior = m > flo && m < fhi && !near(m, flo) && !near(m, fhi);
        if near(flo, fhi) {
            // Every atom has phi = 0.
            if near(m, 0.0) {
                faces.push(Face { idx: all.clone(), with_phi: false, full_mass: false });
            }
        } else if interior {
            faces.push(Face { idx: all.clone(), with_phi: true, full_mass: false });
        } else if near(m, 0.0) {
            let zero = level(0.0);
            if !zero.is_empty() {
                faces.push(Face { idx: zero, with_phi: false, full_mass: false });
            }
        }
    }
    faces
}

/// Strictly feasible start on a face: positive barycentric weights on its
/// vertices (the atoms, plus the origin when the mass is free), pushed toward
/// the extreme vertex on the side of `m` until `nu(phi) = m`.
fn start_point<R: Rng>(atoms: &[Atom], face: &Face, m: f64, rng: Option<&mut R>) -> Vec<f64> {
    let n = face.idx.len();
    let n_vert = n + usize::from(!face.full_mass);
    let mut lambda: Vec<f64> = match rng {
        Some(r) => (0..n_vert).map(|_| r.random_range(0.05..1.0)).collect(),
        None => vec![1.0; n_vert],
    };
    let total: f64 = lambda.iter().sum();
    lambda.iter_mut().for_each(|l| *l /= total);
    let vert_phi = |j: usize| if j < n { phi(&atoms[face.idx[j]]) } else { 0.0 };
    if face.with_phi {
        let m0: f64 = (0..n_vert).map(|j| lambda[j] * vert_phi(j)).sum();
        if m0 != m {
            let pick = (0..n_vert)
                .map(|j| (j, vert_phi(j)))
                .fold(None::<(usize, f64)>, |best, (j, v)| match best {
                    Some((_, bv)) if (m > m0 && bv >= v) || (m < m0 && bv <= v) => best,
                    _ => Some((j, v)),
                })
                .unwrap();
            let gamma = (m - m0) / (pick.1 - m0);
            lambda.iter_mut().for_each(|l| *l *= 1.0 - gamma);
            lambda[pick.0] += gamma;
        }
    }
    (0..n).map(|j| lambda[j] / atoms[face.idx[j]].tau).collect()
}

struct FaceProblem<'a> {
    u: Vec<f64>,
    w: Vec<f64>,
    p: Vec<f64>,
    face: &'a Face,
    m: f64,
    theta0: f64,
}

impl FaceProblem<'_> {
    fn rows(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.u.len();
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        if self.face.with_phi {
            rows.push((self.w.clone(), self.m));
        }
        if self.face.full_mass {
            rows.push((self.u.clone(), 1.0));
        }
        let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i].0[j]);
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        (a, b)
    }

    fn mass(&self, s: &[f64]) -> f64 {
        self.u.iter().zip(s).map(|(u, s)| u * s).sum()
    }

    fn inside(&self, s: &[f64]) -> bool {
        s.iter().all(|&v| v > 0.0) && (self.face.full_mass || self.mass(s) < 1.0)
    }

    fn objective(&self, s: &[f64]) -> f64 {
        let total: f64 = s.iter().sum();
        let ent: f64 = s.iter().zip(&self.p).map(|(&s, &p)| s * (s / (total * p)).ln()).sum();
        if self.face.full_mass {
            ent
        } else {
            ent + self.theta0 * (1.0 - self.mass(s))
        }
    }

    fn gradient(&self, s: &[f64]) -> Vec<f64> {
        let total: f64 = s.iter().sum();
        let th = if self.face.full_mass { 0.0 } else { self.theta0 };
        (0..s.len()).map(|k| (s[k] / (total * self.p[k])).ln() - th * self.u[k]).collect()
    }

    fn barrier(&self, t: f64, s: &[f64]) -> f64 {
        let mut f = t * self.objective(s) - s.iter().map(|v| v.ln()).sum::<f64>();
        if !self.face.full_mass {
            f -= (1.0 - self.mass(s)).ln();
        }
        f
    }

    /// Orthonormal basis of the null space of `a`, by Gram-Schmidt on the
    /// rows of `a` followed by the coordinate vectors.
    fn null_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.ncols();
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let mut rank = 0;
        let candidates = (0..a.nrows())
            .map(|i| (true, a.row(i).transpose()))
            .chain((0..n).map(|j| (false, DVector::from_fn(n, |k, _| if k == j { 1.0 } else { 0.0 }))));
        for (is_row, mut v) in candidates {
            let scale = v.norm();
            for b in &basis {
                let c = b.dot(&v);
                v -= b * c;
            }
            if v.norm() > 1e-9 * scale.max(1e-300) {
                let nv = v.norm();
                basis.push(v / nv);
                if is_row {
                    rank += 1;
                }
            }
        }
        let null: Vec<DVector<f64>> = basis.into_iter().skip(rank).collect();
        if null.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&null)
        }
    }

    /// Newton step in null-space coordinates for the barrier problem at
    /// weight `t`; returns the step, the gradient and the Newton decrement.
    fn newton_step(&self, t: f64, s: &[f64], basis: &DMatrix<f64>) -> Option<(DVector<f64>, DVector<f64>, f64)> {
        let n = s.len();
        let total: f64 = s.iter().sum();
        let g0 = self.gradient(s);
        let slack = 1.0 - self.mass(s);
        let mut g = DVector::from_fn(n, |k, _| t * g0[k] - 1.0 / s[k]);
        let mut h = DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { t / s[i] + 1.0 / (s[i] * s[i]) } else { 0.0 };
            diag - t / total
        });
        if !self.face.full_mass {
            for i in 0..n {
                g[i] += self.u[i] / slack;
                for j in 0..n {
                    h[(i, j)] += self.u[i] * self.u[j] / (slack * slack);
                }
            }
        }
        let gr = basis.transpose() * &g;
        let hr = basis.transpose() * &h * basis;
        let z = match hr.clone().cholesky() {
            Some(ch) => ch.solve(&(-&gr)),
            None => hr.lu().solve(&(-&gr))?,
        };
        let decrement = -gr.dot(&z);
        Some((basis * z, g, decrement))
    }

    /// Moves `s` back onto `a s = b` along the row space.
    fn reproject(a: &DMatrix<f64>, b: &DVector<f64>, s: &[f64]) -> Option<Vec<f64>> {
        if a.nrows() == 0 {
            return Some(s.to_vec());
        }
        let sv = DVector::from_column_slice(s);
        let residual = b - a * &sv;
        let coef = (a * a.transpose()).lu().solve(&residual)?;
        Some((sv + a.transpose() * coef).iter().copied().collect())
    }

    fn solve(&self, start: Vec<f64>, start_index: usize) -> Option<FaceSolution> {
        let (a, b) = self.rows();
        let basis = Self::null_basis(&a);
        let mut s = start;
        let n_barrier = (s.len() + usize::from(!self.face.full_mass)) as f64;
        let mut t = 1.0;
        let mut decrement = 0.0;
        if basis.ncols() > 0 {
            for _ in 0..60 {
                for _ in 0..100 {
                    let (step, g, dec) = self.newton_step(t, &s, &basis)?;
                    decrement = dec;
                    if dec / 2.0 <= KKT_TOL {
                        break;
                    }
                    let trial = |h: f64| -> Vec<f64> { s.iter().zip(step.iter()).map(|(v, d)| v + h * d).collect() };
                    let mut h = 1.0;
                    while !self.inside(&trial(h)) {
                        h *= BARRIER_DAMPING;
                        if h < 1e-30 {
                            return None;
                        }
                    }
                    if dec > 1e-6 {
                        let f0 = self.barrier(t, &s);
                        let slope = g.dot(&step);
                        while self.barrier(t, &trial(h)) > f0 + 0.25 * h * slope && h > 1e-12 {
                            h *= BARRIER_DAMPING;
                        }
                    }
                    let next = trial(h);
                    s = match Self::reproject(&a, &b, &next) {
                        Some(p) if self.inside(&p) => p,
                        _ => next,
                    };
                }
                if n_barrier / t < FINAL_GAP {
                    break;
                }
                t *= 10.0;
            }
        }
        let value = self.objective(&s);
        let diagnostics = self.diagnostics(&s, decrement, t, start_index);
        Some(FaceSolution { s, value, diagnostics })
    }

    /// Stationarity residual of `grad F - lambda w - mu u` on the support,
    /// with multipliers fitted by least squares.
    fn diagnostics(&self, s: &[f64], decrement: f64, t: f64, start_index: usize) -> KktDiagnostics {
        let total: f64 = s.iter().sum();
        let g = self.gradient(s);
        let support: Vec<usize> = (0..s.len()).filter(|&k| s[k] > 1e-6 * total).collect();
        let mut cols: Vec<&[f64]> = Vec::new();
        if self.face.with_phi {
            cols.push(&self.w);
        }
        if self.face.full_mass || self.mass(s) > 1.0 - 1e-6 {
            cols.push(&self.u);
        }
        let basis = DMatrix::from_fn(support.len(), cols.len(), |i, j| cols[j][support[i]]);
        let target = DVector::from_iterator(support.len(), support.iter().map(|&k| g[k]));
        let stationarity = if cols.is_empty() {
            target.amax()
        } else {
            let coef = basis
                .clone()
                .svd(true, true)
                .solve(&target, 1e-12)
                .unwrap_or_else(|_| DVector::zeros(cols.len()));
            (&target - &basis * coef).amax()
        };
        let phi_value: f64 = self.w.iter().zip(s).map(|(w, s)| w * s).sum();
        KktDiagnostics {
            stationarity,
            constraint_residual: (phi_value - self.m).abs(),
            newton_decrement: decrement,
            barrier_weight: t,
            start_index,
        }
    }
}

fn solve_face(atoms: &[Atom], face: &Face, m: f64, theta0: f64) -> Option<FaceSolution> {
    let problem = FaceProblem {
        u: face.idx.iter().map(|&k| atoms[k].tau).collect(),
        w: face.idx.iter().map(|&k| atoms[k].w).collect(),
        p: face.idx.iter().map(|&k| atoms[k].p).collect(),
        face,
        m,
        theta0,
    };
    let domain = domain_of("oracle-start", face.idx.len() as f64);
    let solutions: Vec<Option<FaceSolution>> = (0..N_STARTS)
        .into_par_iter()
        .map(|k| {
            let start = if k == 0 {
                start_point::<rand_chacha::ChaCha8Rng>(atoms, face, m, None)
            } else {
                start_point(atoms, face, m, Some(&mut stream_rng(START_SEED, domain, k as u64)))
            };
            if !problem.inside(&start) {
                return None;
            }
            problem.solve(start, k)
        })
        .collect();
    solutions
        .into_iter()
        .flatten()
        .fold(None, |best: Option<FaceSolution>, sol| match best {
            Some(b) if b.value <= sol.value => Some(b),
            _ => Some(sol),
        })
}

/// `inf { I(nu) : nu(phi) = m }` over sub-probabilities on the atoms of
/// `model`.
pub fn minimize_i(model: &JointModel, m: f64, theta0: XReal) -> Result<OracleResult> {
    let atoms = discrete_atoms(model)?;
    if !m.is_finite() {
        return Err(Error::Parameter(format!("m must be finite, got {m}")));
    }
    let n = atoms.len();
    let th = theta0.finite().unwrap_or(0.0);
    let mut best: Option<(f64, Vec<f64>, Regime, KktDiagnostics)> = None;
    for face in candidate_faces(atoms, m, theta0) {
        if let Some(sol) = solve_face(atoms, &face, m, th) {
            let mut q = vec![0.0; n];
            for (j, &k) in face.idx.iter().enumerate() {
                q[k] = sol.s[j] * atoms[k].tau;
            }
            let value = rate_i(atoms, &q, theta0).to_f64();
            let regime = if face.full_mass { Regime::FullMass } else { Regime::FreeMass };
            if best.as_ref().map(|b| value < b.0).unwrap_or(true) {
                best = Some((value, q, regime, sol.diagnostics));
            }
        }
    }
    let null_value = (m == 0.0).then_some(theta0);
    let grid_value = if n <= 3 { grid_minimum(atoms, m, theta0) } else { None };
    let mut result = OracleResult {
        m,
        value: PosInfinity,
        minimizer: None,
        mass: 0.0,
        regime: None,
        diagnostics: None,
        null_value,
        null_close: false,
        grid_value,
        note: None,
    };
    if let Some((value, q, regime, diag)) = best {
        result.mass = q.iter().sum();
        result.value = XReal::Finite(value);
        result.minimizer = Some(SubMeasure { weights: q });
        result.regime = Some(regime);
        result.diagnostics = Some(diag);
    }
    if let Some(XReal::Finite(nv)) = null_value {
        if let XReal::Finite(v) = result.value {
            result.null_close = (v - nv).abs() <= NULL_GAP_TOL;
        }
        if XReal::Finite(nv) < result.value {
            result.value = XReal::Finite(nv);
            result.minimizer = Some(SubMeasure::null(n));
            result.mass = 0.0;
            result.regime = Some(Regime::Null);
            result.diagnostics = None;
        }
    }
    if result.value.is_infinite() {
        let phis: Vec<f64> = atoms.iter().map(phi).collect();
        let lo = phis.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = phis.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if theta0.is_finite() { (lo.min(0.0), hi.max(0.0)) } else { (lo, hi) };
        result.note = Some(format!("m = {m} is not reachable: nu(phi) ranges over [{lo}, {hi}]"));
    }
    Ok(result)
}

/// `minimize_i` with `theta0` taken from the model.
pub fn oracle_jbar(model: &JointModel, m: f64) -> Result<OracleResult> {
    minimize_i(model, m, model.exp_moment_bounds().theta0)
}

/// Brute-force minimum over a dense grid of feasible weights, for at most
/// three atoms.
fn grid_minimum(atoms: &[Atom], m: f64, theta0: XReal) -> Option<f64> {
    let n = atoms.len();
    let phis: Vec<f64> = atoms.iter().map(phi).collect();
    let eval = |q: &[f64]| -> Option<f64> {
        let mass: f64 = q.iter().sum();
        if q.iter().any(|&v| v < 0.0) || mass > 1.0 + 1e-12 {
            return None;
        }
        rate_i(atoms, q, theta0).finite()
    };
    let mut best: Option<f64> = None;
    let mut keep = |v: Option<f64>| {
        if let Some(v) = v {
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    };
    if theta0.is_finite() {
        if m == 0.0 {
            keep(theta0.finite());
        }
        let pivot = (0..n).max_by(|&i, &j| phis[i].abs().total_cmp(&phis[j].abs()))?;
        if phis[pivot] == 0.0 {
            return best;
        }
        let others: Vec<usize> = (0..n).filter(|&k| k != pivot).collect();
        let steps = if others.len() <= 1 { 200_000 } else { 1500 };
        let axis = |i: usize| i as f64 / steps as f64;
        let dims = others.len();
        let total = (steps + 1usize).pow(dims as u32);
        for flat in 0..total {
            let mut q = vec![0.0; n];
            let mut rem = flat;
            for &k in &others {
                q[k] = axis(rem % (steps + 1));
                rem /= steps + 1;
            }
            let partial: f64 = others.iter().map(|&k| q[k] * phis[k]).sum();
            q[pivot] = (m - partial) / phis[pivot];
            keep(eval(&q));
        }
    } else {
        if n == 1 {
            if near(phis[0], m) {
                keep(eval(&[1.0]));
            }
            return best;
        }
        // Pin the pair with the widest phi spread from sum q = 1 and
        // sum q phi = m; scan the remaining coordinate.
        let mut pair = (0, 1);
        for i in 0..n {
            for j in i + 1..n {
                if (phis[i] - phis[j]).abs() > (phis[pair.0] - phis[pair.1]).abs() {
                    pair = (i, j);
                }
            }
        }
        let (i, j) = pair;
        if phis[i] == phis[j] {
            return best;
        }
        let free: Vec<usize> = (0..n).filter(|&k| k != i && k != j).collect();
        let steps = if free.is_empty() { 0 } else { 200_000 };
        for step in 0..=steps {
            let mut q = vec![0.0; n];
            if let Some(&f) = free.first() {
                q[f] = step as f64 / steps as f64;
            }
            let rest_mass = 1.0 - free.iter().map(|&k| q[k]).sum::<f64>();
            let rest_phi = m - free.iter().map(|&k| q[k] * phis[k]).sum::<f64>();
            q[j] = (rest_phi - phis[i] * rest_mass) / (phis[j] - phis[i]);
            q[i] = rest_mass - q[j];
            keep(eval(&q));
        }
    }
    best
}
