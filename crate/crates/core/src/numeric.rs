//! Quadrature, bracketing root finding and deterministic summation.

use crate::error::{Error, Result};

const SIMPSON_MAX_DEPTH: u32 = 48;
const INITIAL_PANELS: usize = 8;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// The interval is first cut into a few panels so that narrow features are not
/// skipped by the initial five-point rule.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let h = (b - a) / INITIAL_PANELS as f64;
    let panel_tol = tol / INITIAL_PANELS as f64;
    let mut parts = [0.0; INITIAL_PANELS];
    for (i, part) in parts.iter_mut().enumerate() {
        let lo = a + h * i as f64;
        let hi = if i + 1 == INITIAL_PANELS { b } else { lo + h };
        let fa = f(lo);
        let fb = f(hi);
        let m = 0.5 * (lo + hi);
        let fm = f(m);
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        *part = simpson_rec(f, lo, hi, fa, fm, fb, whole, panel_tol, SIMPSON_MAX_DEPTH);
    }
    pairwise_sum(&parts)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || (m - a) <= f64::EPSILON * m.abs().max(1.0) {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integrates over `[a, b]`, splitting at every breakpoint strictly inside the interval.
///
/// Breakpoints mark kinks or jumps of the integrand; the rule never straddles one.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let mut pts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&t| t > a && t < b && t.is_finite())
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut edges = Vec::with_capacity(pts.len() + 2);
    edges.push(a);
    edges.extend(pts);
    edges.push(b);
    let pieces = edges.len() - 1;
    let piece_tol = tol / pieces as f64;
    let parts: Vec<f64> = edges
        .windows(2)
        .map(|w| simpson(f, w[0], w[1], piece_tol))
        .collect();
    pairwise_sum(&parts)
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = K_WEIGHTS[7] * fc;
    let mut g = G_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let s = f(c - dx) + f(c + dx);
        k += K_WEIGHTS[i] * s;
        if i % 2 == 1 {
            g += G_WEIGHTS[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature; cheaper than Simpson on smooth integrands.
pub fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    gk_rec(f, a, b, tol, 30)
}

fn gk_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (val, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return val;
    }
    let m = 0.5 * (a + b);
    gk_rec(f, a, m, 0.5 * tol, depth - 1) + gk_rec(f, m, b, 0.5 * tol, depth - 1)
}

/// Gauss-Kronrod over `[a, b]` split at interior breakpoints.
pub fn gauss_kronrod_with_breaks<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let mut edges: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&t| t > a && t < b && t.is_finite())
        .collect();
    edges.push(a);
    edges.push(b);
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let piece_tol = tol / (edges.len() - 1) as f64;
    let parts: Vec<f64> = edges
        .windows(2)
        .map(|w| gauss_kronrod(f, w[0], w[1], piece_tol))
        .collect();
    pairwise_sum(&parts)
}

/// Stopping rule for [`find_root`].
#[derive(Debug, Clone, Copy)]
pub struct RootTolerance {
    pub f_abs: f64,
    pub x_rel: f64,
    pub max_iter: usize,
}

impl Default for RootTolerance {
    fn default() -> Self {
        RootTolerance {
            f_abs: 1e-13,
            x_rel: 4.0 * f64::EPSILON,
            max_iter: 400,
        }
    }
}

/// Finds a root of `f` inside `[lo, hi]`, given that `f(lo)` and `f(hi)` differ in sign.
///
/// Illinois-modified false position, falling back to bisection whenever the
/// bracket fails to halve within three steps.
pub fn find_root<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: RootTolerance,
    what: &'static str,
) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(Error::NoBracket {
            what,
            detail: format!("f({a}) = {fa}, f({b}) = {fb}"),
        });
    }
    let mut side = 0i8;
    let mut width_at_check = (b - a).abs();
    let mut steps_since_check = 0;
    for _ in 0..tol.max_iter {
        let width = (b - a).abs();
        if width <= tol.x_rel * a.abs().max(b.abs()).max(1.0) {
            break;
        }
        let mut x = (a * fb - b * fa) / (fb - fa);
        steps_since_check += 1;
        if steps_since_check >= 3 {
            if width > 0.5 * width_at_check {
                x = 0.5 * (a + b);
            }
            width_at_check = width;
            steps_since_check = 0;
        }
        if !(x > a.min(b) && x < a.max(b)) {
            x = 0.5 * (a + b);
        }
        let fx = f(x);
        if fx.abs() <= tol.f_abs || fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fb.signum() {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    let x = if fa.abs() < fb.abs() { a } else { b };
    let fx = f(x);
    if fx.abs() <= tol.f_abs.max(1e-11) {
        Ok(x)
    } else if (b - a).abs() <= 1e-12 * a.abs().max(1.0) {
        // f jumps across the root (atoms); the bracket has collapsed onto it.
        Ok(x)
    } else {
        Err(Error::NoConvergence(what))
    }
}

/// Grows a bracket around `center` for a non-increasing function, geometrically
/// widening by `scale`. Returns `(lo, hi)` with `f(lo) >= 0 >= f(hi)`.
pub fn bracket_decreasing<F: FnMut(f64) -> f64>(
    mut f: F,
    center: f64,
    scale: f64,
    what: &'static str,
) -> Result<(f64, f64)> {
    let scale = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
    let mut step = scale;
    let mut lo = center - step;
    let mut flo = f(lo);
    let mut n = 0;
    while flo < 0.0 {
        step *= 2.0;
        lo = center - step;
        flo = f(lo);
        n += 1;
        if n > 80 || !lo.is_finite() {
            return Err(Error::NoBracket {
                what,
                detail: format!("function negative down to {lo}"),
            });
        }
    }
    let mut step = scale;
    let mut hi = center + step;
    let mut fhi = f(hi);
    n = 0;
    while fhi > 0.0 {
        step *= 2.0;
        hi = center + step;
        fhi = f(hi);
        n += 1;
        if n > 80 || !hi.is_finite() {
            return Err(Error::NoBracket {
                what,
                detail: format!("function positive up to {hi}"),
            });
        }
    }
    Ok((lo, hi))
}

/// Pairwise summation: the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean and standard error (of the mean) using pairwise sums.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// `log(sum(exp(xs)))`, stable for large magnitudes. Empty input gives `-inf`.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    let s: f64 = xs.into_iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}
