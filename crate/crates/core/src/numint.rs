//! One-dimensional integration rules: Gauss–Kronrod (7/15) with adaptive
//! bisection, Gauss–Legendre node generation, and panel drivers for
//! semi-infinite ranges and ranges ending at the origin.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Single 15-point Kronrod panel; returns (estimate, error estimate).
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod on a finite interval.
pub fn adaptive<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = gk15(f, a, b);
    let mut total = v;
    let mut stack = vec![(a, b, v, e)];
    let mut done = 0.0;
    let mut evals = 0usize;
    while let Some((lo, hi, v, e)) = stack.pop() {
        let tol = abs_tol.max(rel_tol * total.abs());
        let width_ok = (hi - lo).abs() > 1e-13 * (a.abs() + b.abs()).max(1e-300);
        if e <= tol * (hi - lo).abs() / (b - a).abs() || !width_ok || evals > 4_000 {
            done += v;
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        evals += 1;
        total += v1 + v2 - v;
        stack.push((lo, mid, v1, e1));
        stack.push((mid, hi, v2, e2));
    }
    if !done.is_finite() {
        return Err(Error::Numerical(format!("non-finite integral on [{a}, {b}]")));
    }
    Ok(done)
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to `[a, b]` split into `panels` equal pieces.
pub fn panel_rule(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((lo + 0.5 * h * (xi + 1.0), 0.5 * h * wi));
        }
    }
    out
}

/// Integral over `[a, ∞)` by consecutive panels whose widths grow
/// geometrically (capped at `max_width`), stopping once a panel contributes
/// less than `rel_tol` of the running total. `breaks` are forced panel edges.
pub fn to_infinity<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    breaks: &[f64],
    max_width: f64,
    rel_tol: f64,
) -> Result<f64> {
    let mut lo = a;
    let mut total = 0.0;
    let mut quiet = 0;
    let mut brk: Vec<f64> = breaks.iter().copied().filter(|&b| b > a).collect();
    brk.sort_by(f64::total_cmp);
    let mut bi = 0;
    for _ in 0..20_000 {
        let mut width = (lo.abs().max(1e-3)).min(max_width);
        while bi < brk.len() && brk[bi] <= lo {
            bi += 1;
        }
        let mut hi = lo + width;
        if bi < brk.len() && brk[bi] < hi {
            hi = brk[bi];
            width = hi - lo;
        }
        let part = adaptive(f, lo, hi, 0.0, 1e-12)?;
        total += part;
        lo += width;
        if part.abs() <= rel_tol * total.abs() && bi >= brk.len() {
            quiet += 1;
            if quiet >= 3 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::Divergence(format!("integral over [{a}, inf) did not settle")))
}

/// ∫₀^r g(u) du through u = e^{-v}, which flattens logarithmic and power
/// singularities at the origin.
pub fn to_zero<F: FnMut(f64) -> f64>(g: &mut F, r: f64, rel_tol: f64) -> Result<f64> {
    let start = -r.ln();
    let mut h = |v: f64| {
        let u = (-v).exp();
        g(u) * u
    };
    let mut lo = start;
    let mut total = 0.0;
    let mut width = 1.0;
    let mut quiet = 0;
    for _ in 0..5_000 {
        let part = adaptive(&mut h, lo, lo + width, 0.0, 1e-13)?;
        total += part;
        lo += width;
        if lo > 700.0 {
            return Ok(total);
        }
        if part.abs() <= rel_tol * total.abs() {
            quiet += 1;
            if quiet >= 2 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
        width = (width * 1.5).min(32.0);
    }
    Err(Error::Divergence("integral towards the origin did not settle".into()))
}
