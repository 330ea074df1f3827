//! Fixed-size point arithmetic. Kernels live in dimension 1..=3, so every
//! point is stored as `[f64; 3]` with trailing zeros.

pub const MAX_DIM: usize = 3;

pub type Pt = [f64; MAX_DIM];

pub const ORIGIN: Pt = [0.0; MAX_DIM];

pub fn to_pt(x: &[f64]) -> Pt {
    let mut p = ORIGIN;
    p[..x.len()].copy_from_slice(x);
    p
}

#[inline]
pub fn dot(a: &Pt, b: &Pt) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: &Pt) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn add(a: &Pt, b: &Pt) -> Pt {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: &Pt, b: &Pt) -> Pt {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: &Pt, s: f64) -> Pt {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn axpy(x: &Pt, t: f64, dir: &Pt) -> Pt {
    [x[0] + t * dir[0], x[1] + t * dir[1], x[2] + t * dir[2]]
}

#[inline]
pub fn neg(a: &Pt) -> Pt {
    [-a[0], -a[1], -a[2]]
}

#[inline]
pub fn dist(a: &Pt, b: &Pt) -> f64 {
    norm(&sub(a, b))
}

/// Two unit vectors completing `axis` to an orthonormal frame (only the
/// first `dim - 1` are meaningful).
pub fn orthonormal_complement(axis: &Pt) -> (Pt, Pt) {
    let pick = if axis[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let mut t1 = sub(&pick, &scale(axis, dot(&pick, axis)));
    t1 = scale(&t1, 1.0 / norm(&t1));
    let t2 = [
        axis[1] * t1[2] - axis[2] * t1[1],
        axis[2] * t1[0] - axis[0] * t1[2],
        axis[0] * t1[1] - axis[1] * t1[0],
    ];
    (t1, t2)
}
