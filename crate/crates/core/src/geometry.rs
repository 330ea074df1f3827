//! Cone geometry behind the restricted Harnack argument: cones V(η, ρ), the
//! admissible λ range and the auxiliary centres x̃₀, z̃₀ with checked margins.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{domain, invalid, Error, Result};
use crate::kernel::{half_angle_from_chordal, Cap, JumpKernel, UnitVector};
use crate::sphere::sphere_points;
use crate::vecmath::{add, axpy, dist, dot, norm, orthonormal_complement, scale, sub, Pt};

/// Double cone {x ≠ 0 : min(|x̂ − η|, |x̂ + η|) ≤ ρ}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cone {
    pub axis: Pt,
    pub dim: usize,
    pub chordal_radius: f64,
    /// Polar half-angle θ ∈ (0, π/2].
    pub theta: f64,
}

impl Cone {
    pub fn new(axis: UnitVector, chordal_radius: f64) -> Result<Self> {
        let theta = half_angle_from_chordal(chordal_radius)?.min(PI / 2.0);
        Ok(Self { axis: *axis.as_pt(), dim: axis.dim(), chordal_radius, theta })
    }

    pub fn from_cap(cap: &Cap) -> Self {
        Self {
            axis: *cap.axis.as_pt(),
            dim: cap.axis.dim(),
            chordal_radius: cap.chordal_radius,
            theta: cap.polar_half_angle(),
        }
    }

    pub fn cos_theta(&self) -> f64 {
        self.theta.cos()
    }

    pub fn contains(&self, x: &Pt) -> bool {
        let n = norm(x);
        if n == 0.0 {
            return false;
        }
        let xh = scale(x, 1.0 / n);
        let plus = dist(&xh, &self.axis);
        let minus = dist(&xh, &scale(&self.axis, -1.0));
        plus.min(minus) <= self.chordal_radius
    }
}

/// Largest admissible λ for the Krylov–Safonov step: sin θ / 8.
pub fn lambda_max(theta: f64) -> f64 {
    theta.sin() / 8.0
}

/// Default λ for the chain construction, strictly inside sin θ / 16.
pub fn default_lambda(theta: f64) -> f64 {
    0.9 * theta.sin() / 16.0
}

/// |⟨u − v, ξ⟩| / |u − v|.
pub fn separation_cosine(u: &Pt, v: &Pt, xi: &Pt) -> Result<f64> {
    let d = sub(u, v);
    let n = norm(&d);
    if n == 0.0 {
        return domain("separation cosine of coincident points");
    }
    Ok((dot(&d, xi).abs() / n).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainConfig {
    pub dim: usize,
    pub x0: Pt,
    pub r: f64,
    pub lambda: f64,
    pub xi: Pt,
    pub x_tilde: Pt,
    pub z_tilde: Pt,
    pub z: Pt,
    /// Margins of conditions (1)–(4); cone conditions in cosine units,
    /// the distance condition in units of r.
    pub margins: [f64; 4],
}

/// Smallest |cos| between ξ and the directions of c + B(0, s); −1 when the
/// ball contains the origin (no direction set).
fn min_abs_cos_ball(c: &Pt, s: f64, xi: &Pt) -> f64 {
    let n = norm(c);
    if n <= s {
        return -1.0;
    }
    let phi = (dot(c, xi).abs() / n).min(1.0).acos();
    let beta = (s / n).asin();
    (phi + beta).min(PI / 2.0).cos()
}

/// Exact margins: the difference set of two balls is again a ball.
fn margins_exact(cfg: &ChainConfig, cos_theta: f64) -> [f64; 4] {
    let lr = cfg.lambda * cfg.r;
    let m1 = min_abs_cos_ball(&sub(&cfg.x_tilde, &cfg.x0), 4.0 * lr, &cfg.xi) - cos_theta;
    let m2 = min_abs_cos_ball(&sub(&cfg.z_tilde, &cfg.x_tilde), 2.0 * lr + 0.25 * lr, &cfg.xi) - cos_theta;
    let m3 = min_abs_cos_ball(&sub(&cfg.z, &cfg.z_tilde), 0.25 * lr, &cfg.xi) - cos_theta;
    let m4 = ((dist(&cfg.z, &cfg.x0) - 4.0 * lr) - (dist(&cfg.z, &cfg.z_tilde) + 0.25 * lr)) / cfg.r;
    [m1, m2, m3, m4]
}

fn sphere_samples(dim: usize) -> usize {
    if dim == 3 {
        1024
    } else {
        256
    }
}

/// Condition margins from deterministic boundary samples: each set inclusion
/// is reduced to the boundary of the difference ball, and (4) compares the
/// nearest sampled u with the farthest sampled w.
pub fn verify_chain(cfg: &ChainConfig, cone: &Cone) -> [f64; 4] {
    verify_chain_with(cfg, cone, sphere_samples(cfg.dim))
}

pub fn verify_chain_with(cfg: &ChainConfig, cone: &Cone, samples: usize) -> [f64; 4] {
    let dirs = sphere_points(cfg.dim, samples);
    let lr = cfg.lambda * cfg.r;
    let ct = cone.cos_theta();
    let sampled_cos = |c: Pt, s: f64| -> f64 {
        if norm(&c) <= s {
            return -1.0;
        }
        dirs.iter()
            .map(|e| {
                let p = axpy(&c, s, e);
                dot(&p, &cfg.xi).abs() / norm(&p)
            })
            .fold(f64::INFINITY, f64::min)
    };
    let m1 = sampled_cos(sub(&cfg.x_tilde, &cfg.x0), 4.0 * lr) - ct;
    let m2 = sampled_cos(sub(&cfg.z_tilde, &cfg.x_tilde), 2.25 * lr) - ct;
    let m3 = sampled_cos(sub(&cfg.z, &cfg.z_tilde), 0.25 * lr) - ct;
    let near_u = dirs.iter().map(|e| dist(&cfg.z, &axpy(&cfg.x0, 4.0 * lr, e))).fold(f64::INFINITY, f64::min);
    let far_w = dirs.iter().map(|e| dist(&cfg.z, &axpy(&cfg.z_tilde, 0.25 * lr, e))).fold(0.0, f64::max);
    [m1, m2, m3, (near_u - far_w) / cfg.r]
}

fn min4(m: &[f64; 4]) -> f64 {
    m.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Builds x̃₀ and z̃₀ for the kernel cone that carries z − u₀; `lambda`
/// defaults to 0.9·sin θ/16 for that cone.
pub fn build_chain(
    x0: &[f64],
    r: f64,
    kernel: &JumpKernel,
    u0: &[f64],
    z: &[f64],
    lambda: Option<f64>,
) -> Result<(ChainConfig, Cone)> {
    let dim = kernel.dim;
    if x0.len() != dim || u0.len() != dim || z.len() != dim {
        return invalid(format!("points must have dimension {dim}"));
    }
    if !(r > 0.0 && r.is_finite()) {
        return domain(format!("scale r = {r} must be positive"));
    }
    let (x0, u0, z) = (crate::vecmath::to_pt(x0), crate::vecmath::to_pt(u0), crate::vecmath::to_pt(z));
    if dist(&z, &x0) < 1.5 * r {
        return invalid("z must lie outside B(x₀, 3r/2)");
    }

    let zu = sub(&z, &u0);
    let zu_hat = scale(&zu, 1.0 / norm(&zu));
    let caps = kernel.cones.caps();
    let seeing: Vec<&Cap> = caps.iter().filter(|c| c.contains(&zu_hat)).collect();
    if seeing.is_empty() {
        // Case 2 if no point of the small ball sees z through a cap.
        let lam = lambda.unwrap_or_else(|| default_lambda(kernel.cones.governing_half_angle()));
        let zx = sub(&z, &x0);
        let spread = (lam * r / norm(&zx)).min(1.0).asin();
        let reachable = caps.iter().any(|c| {
            let phi = (dot(&zx, c.axis.as_pt()).abs() / norm(&zx)).min(1.0).acos();
            phi <= c.polar_half_angle() + spread
        });
        return if reachable {
            invalid("u₀ does not see z through a cone, but other points of B(x₀, λr) do")
        } else {
            Err(Error::NoCone)
        };
    }

    let mut best: Option<(ChainConfig, Cone)> = None;
    for cap in seeing {
        let mut cone = Cone::from_cap(cap);
        let lam = lambda.unwrap_or_else(|| default_lambda(cone.theta));
        if !(lam > 0.0) {
            return domain(format!("λ = {lam} must be positive"));
        }
        if dist(&u0, &x0) >= lam * r {
            return invalid("u₀ must lie in B(x₀, λr)");
        }
        // For a full cap every axis works; align it with z − u₀.
        let axis = if cap.is_full() { zu_hat } else { cone.axis };
        let xi = if dot(&zu, &axis) > 0.0 { axis } else { scale(&axis, -1.0) };
        cone.axis = xi;
        let cfg = place_z_tilde(dim, &x0, r, lam, &xi, &z, cone.cos_theta());
        if best.as_ref().is_none_or(|(b, _)| min4(&cfg.margins) > min4(&b.margins)) {
            best = Some((cfg, cone));
        }
    }
    let (cfg, cone) = best.expect("at least one cap sees z");
    if min4(&cfg.margins) <= 0.0 {
        return Err(Error::Infeasible(cfg.margins));
    }
    Ok((cfg, cone))
}

/// Maximizes the smallest margin of conditions (2)–(4) over candidates on
/// ∂B(x₀, r/2), then polishes by golden-section search along great circles.
fn place_z_tilde(dim: usize, x0: &Pt, r: f64, lambda: f64, xi: &Pt, z: &Pt, cos_theta: f64) -> ChainConfig {
    let x_tilde = axpy(x0, -0.5 * r, xi);
    let mut cfg = ChainConfig { dim, x0: *x0, r, lambda, xi: *xi, x_tilde, z_tilde: *x0, z: *z, margins: [0.0; 4] };
    let score = |zeta: &Pt, cfg: &mut ChainConfig| -> f64 {
        cfg.z_tilde = axpy(x0, 0.5 * r, zeta);
        let m = margins_exact(cfg, cos_theta);
        m[1].min(m[2]).min(m[3])
    };

    let candidates = if dim == 1 { sphere_points(1, 2) } else { sphere_points(dim, 1024) };
    let mut best = candidates[0];
    let mut best_s = f64::NEG_INFINITY;
    for c in &candidates {
        let s = score(c, &mut cfg);
        if s > best_s {
            best_s = s;
            best = *c;
        }
    }

    if dim > 1 {
        let spacing = if dim == 2 { 2.0 * PI / 1024.0 } else { (4.0 * PI / 1024.0f64).sqrt() };
        for _ in 0..2 {
            let tangents: Vec<Pt> = match dim {
                2 => vec![[-best[1], best[0], 0.0]],
                _ => {
                    let (t1, t2) = orthonormal_complement(&best);
                    vec![t1, t2]
                }
            };
            for t in tangents {
                let base = best;
                let rotate = |phi: f64| add(&scale(&base, phi.cos()), &scale(&t, phi.sin()));
                let phi = golden_max(|p| score(&rotate(p), &mut cfg.clone()), -spacing, spacing, 20);
                let s = score(&rotate(phi), &mut cfg);
                if s > best_s {
                    best_s = s;
                    best = rotate(phi);
                }
            }
        }
    }
    cfg.z_tilde = axpy(x0, 0.5 * r, &best);
    cfg.margins = margins_exact(&cfg, cos_theta);
    cfg
}

fn golden_max(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, steps: usize) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..steps {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}

/// Cone condition margins for a given λ (no z̃₀ optimization), used to search
/// for violations when λ leaves the admissible range.
pub fn chain_margins(cfg: &ChainConfig, cone: &Cone) -> [f64; 4] {
    margins_exact(cfg, cone.cos_theta())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_bounds() {
        assert!((lambda_max(PI / 2.0) - 0.125).abs() < 1e-15);
        assert!((lambda_max(PI / 6.0) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn separation_cosine_cases() {
        let xi = [1.0, 0.0, 0.0];
        assert!((separation_cosine(&[2.0, 0.0, 0.0], &[0.0; 3], &xi).unwrap() - 1.0).abs() < 1e-15);
        assert!(separation_cosine(&[0.0, 2.0, 0.0], &[0.0; 3], &xi).unwrap().abs() < 1e-15);
        assert!(separation_cosine(&[1.0; 3], &[1.0; 3], &xi).is_err());
    }

    #[test]
    fn difference_ball_cosine() {
        let c = [1.0, 0.0, 0.0];
        let v = min_abs_cos_ball(&c, 0.5, &[1.0, 0.0, 0.0]);
        assert!((v - (0.5f64).asin().cos()).abs() < 1e-15);
        assert_eq!(min_abs_cos_ball(&c, 1.5, &[1.0, 0.0, 0.0]), -1.0);
    }

    #[test]
    fn golden_finds_peak() {
        let p = golden_max(|x| -(x - 0.3).powi(2), -1.0, 1.0, 60);
        assert!((p - 0.3).abs() < 1e-6);
    }
}
