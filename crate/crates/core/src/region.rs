//! Simple regions (balls, annuli, ball complements), their intersections with
//! rays, and piecewise-constant exterior data built from them.

use serde::{Deserialize, Serialize};

use crate::vecmath::{dist, dot, sub, Pt};

/// Sorted, disjoint parameter intervals along a ray (t ≥ 0).
pub type Intervals = Vec<(f64, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    /// Open ball.
    Ball { center: Pt, radius: f64 },
    /// inner ≤ |z − c| < outer.
    Annulus { center: Pt, inner: f64, outer: f64 },
    /// |z − c| ≥ radius.
    BallComplement { center: Pt, radius: f64 },
}

/// Parameter interval where a ray from `o` along unit `dir` is inside the
/// open ball, clipped to t ≥ 0.
fn ball_chord(o: &Pt, dir: &Pt, center: &Pt, radius: f64) -> Option<(f64, f64)> {
    let oc = sub(o, center);
    let b = dot(&oc, dir);
    let c = dot(&oc, &oc) - radius * radius;
    let disc = b * b - c;
    if disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    // Stable roots of t² + 2bt + c.
    let q = if b > 0.0 { -b - s } else { -b + s };
    let (mut t1, mut t2) = if q != 0.0 { (q, c / q) } else { (-s, s) };
    if t1 > t2 {
        std::mem::swap(&mut t1, &mut t2);
    }
    if t2 <= 0.0 {
        return None;
    }
    Some((t1.max(0.0), t2))
}

pub fn intersect(a: &[(f64, f64)], b: &[(f64, f64)]) -> Intervals {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo < hi {
            out.push((lo, hi));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

pub fn subtract(a: &[(f64, f64)], b: &[(f64, f64)]) -> Intervals {
    let mut out = Vec::new();
    for &(lo0, hi) in a {
        let mut lo = lo0;
        for &(blo, bhi) in b {
            if bhi <= lo || blo >= hi {
                continue;
            }
            if blo > lo {
                out.push((lo, blo));
            }
            lo = lo.max(bhi);
            if lo >= hi {
                break;
            }
        }
        if lo < hi {
            out.push((lo, hi));
        }
    }
    out
}

impl Region {
    pub fn contains(&self, z: &Pt) -> bool {
        match *self {
            Region::Ball { center, radius } => dist(z, &center) < radius,
            Region::Annulus { center, inner, outer } => {
                let s = dist(z, &center);
                s >= inner && s < outer
            }
            Region::BallComplement { center, radius } => dist(z, &center) >= radius,
        }
    }

    /// Parameters t > 0 with o + t·dir inside the region.
    pub fn ray_intervals(&self, o: &Pt, dir: &Pt) -> Intervals {
        let whole = [(0.0, f64::INFINITY)];
        match *self {
            Region::Ball { center, radius } => ball_chord(o, dir, &center, radius).into_iter().collect(),
            Region::Annulus { center, inner, outer } => {
                let outer_c: Intervals = ball_chord(o, dir, &center, outer).into_iter().collect();
                let inner_c: Intervals = ball_chord(o, dir, &center, inner).into_iter().collect();
                subtract(&outer_c, &inner_c)
            }
            Region::BallComplement { center, radius } => {
                let c: Intervals = ball_chord(o, dir, &center, radius).into_iter().collect();
                subtract(&whole, &c)
            }
        }
    }

    /// Whether the region avoids the open ball B(c, s).
    pub fn avoids_ball(&self, c: &Pt, s: f64) -> bool {
        let tol = 1e-12 * (1.0 + s);
        match *self {
            Region::Ball { center, radius } => dist(&center, c) + tol >= s + radius,
            Region::Annulus { center, inner, outer } => {
                let e = dist(&center, c);
                e + s <= inner + tol || e + tol >= s + outer
            }
            Region::BallComplement { center, radius } => dist(&center, c) + s <= radius + tol,
        }
    }

    /// Whether the region lies inside the closed ball B(c, s).
    pub fn inside_ball(&self, c: &Pt, s: f64) -> bool {
        match *self {
            Region::Ball { center, radius } | Region::Annulus { center, outer: radius, .. } => {
                dist(&center, c) + radius <= s * (1.0 + 1e-12)
            }
            Region::BallComplement { .. } => false,
        }
    }

    /// Lebesgue measure (infinite for complements).
    pub fn volume(&self, dim: usize) -> f64 {
        let v = crate::sphere::unit_ball_volume(dim);
        match *self {
            Region::Ball { radius, .. } => v * radius.powi(dim as i32),
            Region::Annulus { inner, outer, .. } => v * (outer.powi(dim as i32) - inner.powi(dim as i32)),
            Region::BallComplement { .. } => f64::INFINITY,
        }
    }
}

/// Bounded data prescribed outside a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExteriorData {
    Constant { value: f64 },
    IndicatorOfBall { center: Pt, radius: f64 },
    /// Positive values on `positive` regions and negative values on
    /// `negative` regions; all regions pairwise disjoint.
    SignedBump { positive: Vec<(Region, f64)>, negative: Vec<(Region, f64)> },
    /// g(z) = values[k] for radii[k] ≤ |z − center| < radii[k + 1]
    /// (the last value extends to infinity, 0 below radii[0]).
    RadialProfileData { center: Pt, radii: Vec<f64>, values: Vec<f64> },
}

impl ExteriorData {
    pub fn eval(&self, z: &Pt) -> f64 {
        let (base, pieces) = self.pieces();
        pieces.iter().find(|(r, _)| r.contains(z)).map_or(base, |(_, v)| *v)
    }

    /// Decomposition g = base off the pieces and g = value on each disjoint piece.
    pub fn pieces(&self) -> (f64, Vec<(Region, f64)>) {
        match self {
            ExteriorData::Constant { value } => (*value, vec![]),
            ExteriorData::IndicatorOfBall { center, radius } => {
                (0.0, vec![(Region::Ball { center: *center, radius: *radius }, 1.0)])
            }
            ExteriorData::SignedBump { positive, negative } => {
                let mut p: Vec<(Region, f64)> = positive.iter().map(|(r, v)| (*r, v.abs())).collect();
                p.extend(negative.iter().map(|(r, v)| (*r, -v.abs())));
                (0.0, p)
            }
            ExteriorData::RadialProfileData { center, radii, values } => {
                let mut p = Vec::new();
                for (k, v) in values.iter().enumerate() {
                    let inner = radii[k];
                    let region = match radii.get(k + 1) {
                        Some(&outer) => Region::Annulus { center: *center, inner, outer },
                        None => Region::BallComplement { center: *center, radius: inner },
                    };
                    p.push((region, *v));
                }
                (0.0, p)
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        let (base, pieces) = self.pieces();
        pieces.iter().map(|(_, v)| v.abs()).fold(base.abs(), f64::max)
    }

    pub fn check(&self) -> crate::Result<()> {
        if let ExteriorData::RadialProfileData { radii, values, .. } = self {
            if radii.len() != values.len() || radii.windows(2).any(|w| w[0] >= w[1]) || radii.first().is_some_and(|r| *r < 0.0) {
                return crate::error::invalid("radial data needs increasing radii, one value per radius");
            }
        }
        let (base, pieces) = self.pieces();
        if !base.is_finite() || pieces.iter().any(|(_, v)| !v.is_finite()) {
            return crate::error::invalid("exterior data must be finite");
        }
        Ok(())
    }

    /// Segments (a, b, g) of the ray from `o` along `dir` restricted to the
    /// parameter set `within`, where g is constant on each segment.
    pub fn ray_segments(&self, o: &Pt, dir: &Pt, within: &[(f64, f64)]) -> Vec<(f64, f64, f64)> {
        let (base, pieces) = self.pieces();
        let mut rest: Intervals = within.to_vec();
        let mut out = Vec::new();
        for (region, v) in &pieces {
            let hit = intersect(&region.ray_intervals(o, dir), &rest);
            if hit.is_empty() {
                continue;
            }
            rest = subtract(&rest, &hit);
            out.extend(hit.into_iter().map(|(a, b)| (a, b, *v)));
        }
        out.extend(rest.into_iter().map(|(a, b)| (a, b, base)));
        out
    }
}
