//! Adaptive Gauss–Legendre quadrature.

const NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];

const WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_3,
    0.219_086_362_515_982,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

const MAX_DEPTH: u32 = 40;

fn gauss10<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in NODES.iter().zip(WEIGHTS.iter()) {
        acc += w * (f(mid - half * x) + f(mid + half * x));
    }
    acc * half
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let mid = 0.5 * (a + b);
    let left = gauss10(f, a, mid);
    let right = gauss10(f, mid, b);
    let refined = left + right;
    if depth >= MAX_DEPTH || (refined - whole).abs() <= tol || mid <= a || mid >= b {
        return refined;
    }
    adapt(f, a, mid, left, 0.5 * tol, depth + 1) + adapt(f, mid, b, right, 0.5 * tol, depth + 1)
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let whole = gauss10(&f, a, b);
    adapt(&f, a, b, whole, tol, 0)
}

/// Integrates over `[a, b]` split at the given interior breakpoints.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&c| c > a && c < b).collect();
    cuts.sort_by(|x, y| x.total_cmp(y));
    cuts.dedup();
    let pieces = cuts.len() + 1;
    let mut lo = a;
    let mut acc = 0.0;
    for hi in cuts.into_iter().chain(std::iter::once(b)) {
        acc += integrate(&f, lo, hi, tol / pieces as f64);
        lo = hi;
    }
    acc
}
