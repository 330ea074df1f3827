//! Spherical measures, angular quadrature rules and deterministic point sets.

use std::f64::consts::PI;

use crate::numint::panel_rule;
use crate::vecmath::{add, orthonormal_complement, scale, Pt, ORIGIN};

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

/// Surface measure of S^{d-1} (counting measure for d = 1).
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("dimension {dim} unsupported"),
    }
}

/// Lebesgue measure of the unit ball.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => panic!("dimension {dim} unsupported"),
    }
}

/// Area of one polar cap {ξ : ⟨ξ, η⟩ ≥ cos ψ} with ψ ∈ [0, π/2].
pub fn half_cap_area(dim: usize, psi: f64) -> f64 {
    match dim {
        1 => 1.0,
        2 => 2.0 * psi,
        3 => 2.0 * PI * (1.0 - psi.cos()),
        _ => panic!("dimension {dim} unsupported"),
    }
}

/// Weighted directions approximating integration over a subset of the sphere.
#[derive(Debug, Clone, Default)]
pub struct AngularRule {
    pub nodes: Vec<(Pt, f64)>,
}

impl AngularRule {
    pub fn integrate(&self, mut f: impl FnMut(&Pt) -> f64) -> f64 {
        self.nodes.iter().map(|(xi, w)| w * f(xi)).sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|(_, w)| w).sum()
    }
}

/// Resolution knobs for angular rules.
#[derive(Debug, Clone, Copy)]
pub struct AngularResolution {
    /// Gauss–Legendre order per angular panel.
    pub order: usize,
    /// Maximum panel width in radians.
    pub max_panel: f64,
    /// Uniform azimuth nodes around a polar axis (d = 3).
    pub azimuth: usize,
}

impl Default for AngularResolution {
    fn default() -> Self {
        Self { order: 12, max_panel: PI / 12.0, azimuth: 48 }
    }
}

fn polar_direction(axis: &Pt, t1: &Pt, t2: &Pt, psi: f64, phi: f64) -> Pt {
    let (s, c) = psi.sin_cos();
    let a = scale(axis, c);
    let b = scale(t1, s * phi.cos());
    let d = scale(t2, s * phi.sin());
    add(&add(&a, &b), &d)
}

/// Angular rule for a polar cap of half-angle `psi_max` about `axis`
/// (d = 3) or the arc of half-width `psi_max` (d = 2).
pub fn cap_rule(dim: usize, axis: &Pt, psi_max: f64, res: AngularResolution) -> AngularRule {
    let mut nodes = Vec::new();
    match dim {
        1 => nodes.push((*axis, 1.0)),
        2 => {
            let base = axis[1].atan2(axis[0]);
            let panels = ((2.0 * psi_max / res.max_panel).ceil() as usize).max(1);
            for (phi, w) in panel_rule(base - psi_max, base + psi_max, panels, res.order) {
                nodes.push(([phi.cos(), phi.sin(), 0.0], w));
            }
        }
        3 => {
            let (t1, t2) = orthonormal_complement(axis);
            let panels = ((psi_max / res.max_panel).ceil() as usize).max(1);
            let dphi = 2.0 * PI / res.azimuth as f64;
            for (psi, w) in panel_rule(0.0, psi_max, panels, res.order) {
                for k in 0..res.azimuth {
                    let phi = (k as f64 + 0.5) * dphi;
                    nodes.push((polar_direction(axis, &t1, &t2, psi, phi), w * psi.sin() * dphi));
                }
            }
        }
        _ => panic!("dimension {dim} unsupported"),
    }
    AngularRule { nodes }
}

/// Rule over the whole sphere.
pub fn full_sphere_rule(dim: usize, res: AngularResolution) -> AngularRule {
    match dim {
        1 => AngularRule { nodes: vec![([1.0, 0.0, 0.0], 1.0), ([-1.0, 0.0, 0.0], 1.0)] },
        2 => {
            let panels = ((2.0 * PI / res.max_panel).ceil() as usize).max(1);
            let nodes = panel_rule(0.0, 2.0 * PI, panels, res.order)
                .into_iter()
                .map(|(phi, w)| ([phi.cos(), phi.sin(), 0.0], w))
                .collect();
            AngularRule { nodes }
        }
        3 => {
            let mut rule = cap_rule(3, &[0.0, 0.0, 1.0], PI / 2.0, res);
            let lower = cap_rule(3, &[0.0, 0.0, -1.0], PI / 2.0, res);
            rule.nodes.extend(lower.nodes);
            rule
        }
        _ => panic!("dimension {dim} unsupported"),
    }
}

/// Rule over the directions from an exterior point that hit a ball seen under
/// half-angle `psi_max` around `axis`. The substitution ψ = ψ_max sin φ
/// removes the square-root edge of chord-length integrands.
pub fn subtended_rule(dim: usize, axis: &Pt, psi_max: f64, res: AngularResolution) -> AngularRule {
    let mut nodes = Vec::new();
    let panels = 4;
    match dim {
        1 => nodes.push((*axis, 1.0)),
        2 => {
            let base = axis[1].atan2(axis[0]);
            for (u, w) in panel_rule(-PI / 2.0, PI / 2.0, panels, res.order) {
                let psi = psi_max * u.sin();
                let jac = psi_max * u.cos();
                let phi = base + psi;
                nodes.push(([phi.cos(), phi.sin(), 0.0], w * jac));
            }
        }
        3 => {
            let (t1, t2) = orthonormal_complement(axis);
            let dphi = 2.0 * PI / res.azimuth as f64;
            for (u, w) in panel_rule(0.0, PI / 2.0, panels, res.order) {
                let psi = psi_max * u.sin();
                let jac = psi_max * u.cos() * psi.sin();
                for k in 0..res.azimuth {
                    let phi = (k as f64 + 0.5) * dphi;
                    nodes.push((polar_direction(axis, &t1, &t2, psi, phi), w * jac * dphi));
                }
            }
        }
        _ => panic!("dimension {dim} unsupported"),
    }
    AngularRule { nodes }
}

/// `count` nearly uniform unit vectors: equispaced on the circle (d = 2), a
/// Fibonacci lattice (d = 3), or ±1 (d = 1).
pub fn sphere_points(dim: usize, count: usize) -> Vec<Pt> {
    match dim {
        1 => vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        2 => (0..count)
            .map(|k| {
                let phi = 2.0 * PI * k as f64 / count as f64;
                [phi.cos(), phi.sin(), 0.0]
            })
            .collect(),
        3 => (0..count)
            .map(|k| {
                let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
                let rho = (1.0 - z * z).max(0.0).sqrt();
                let phi = GOLDEN_ANGLE * k as f64;
                [rho * phi.cos(), rho * phi.sin(), z]
            })
            .collect(),
        _ => panic!("dimension {dim} unsupported"),
    }
}

/// Deterministic low-discrepancy points filling a ball (sunflower / spiral
/// layouts), centre included as the first point.
pub fn ball_points(dim: usize, center: &Pt, radius: f64, count: usize) -> Vec<Pt> {
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let frac = (k as f64 + 0.5) / count as f64;
        let p = match dim {
            1 => [radius * (2.0 * frac - 1.0), 0.0, 0.0],
            2 => {
                let rho = radius * frac.sqrt();
                let phi = GOLDEN_ANGLE * k as f64;
                [rho * phi.cos(), rho * phi.sin(), 0.0]
            }
            3 => {
                let rho = radius * frac.cbrt();
                let dir = sphere_points(3, count)[(k * 7919) % count];
                scale(&dir, rho)
            }
            _ => panic!("dimension {dim} unsupported"),
        };
        out.push(add(center, &p));
    }
    if count > 0 {
        out[0] = *center;
    }
    out
}

pub fn origin() -> Pt {
    ORIGIN
}
