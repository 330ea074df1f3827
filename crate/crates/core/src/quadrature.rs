//! Deterministic integrals against the kernel: the nonlocal operator L, the
//! Harnack tail term, the exterior mass M(x₀, r) and the normalized tail
//! measures ν_r^x with their decay rates.

use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::kernel::{JumpKernel, RadialProfile};
use crate::numint::adaptive;
use crate::region::{intersect, ExteriorData, Intervals, Region};
use crate::sphere::{ball_points, full_sphere_rule, subtended_rule, unit_ball_volume, AngularResolution, AngularRule};
use crate::vecmath::{axpy, dist, dot, norm, scale, sub, Pt};

/// C² bounded functions with coded derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    Constant { value: f64 },
    /// height·(1 − |z − c|²/R²)³ inside the ball, 0 outside.
    CompactBump { center: Pt, radius: f64, height: f64 },
    /// cos⟨ω, z⟩.
    Cosine { frequency: Pt },
    /// Barrier around x₀ at scale r: |z − x₀|² for |z − x₀| ≤ r/2, r² for
    /// |z − x₀| ≥ r, joined by a quintic that keeps the function C².
    Barrier { center: Pt, r: f64 },
}

/// Quintic join on u ∈ [0, 1] matching value ¼, slope ½, curvature ½ at 0
/// and value 1 with vanishing derivatives at 1 (in units u = 2s − 1).
const JOIN: [f64; 6] = [0.25, 0.5, 0.25, 3.75, -6.5, 2.75];

fn join(u: f64) -> (f64, f64, f64) {
    let c = JOIN;
    let p = c[0] + u * (c[1] + u * (c[2] + u * (c[3] + u * (c[4] + u * c[5]))));
    let dp = c[1] + u * (2.0 * c[2] + u * (3.0 * c[3] + u * (4.0 * c[4] + u * 5.0 * c[5])));
    let ddp = 2.0 * c[2] + u * (6.0 * c[3] + u * (12.0 * c[4] + u * 20.0 * c[5]));
    (p, dp, ddp)
}

impl TestFunction {
    /// Profile q(s) of the barrier with its first two derivatives in s.
    fn barrier_profile(s: f64) -> (f64, f64, f64) {
        if s <= 0.5 {
            (s * s, 2.0 * s, 2.0)
        } else if s >= 1.0 {
            (1.0, 0.0, 0.0)
        } else {
            let (p, dp, ddp) = join(2.0 * s - 1.0);
            (p, 2.0 * dp, 4.0 * ddp)
        }
    }

    pub fn value(&self, z: &Pt) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::CompactBump { center, radius, height } => {
                let s2 = dot(&sub(z, center), &sub(z, center)) / (radius * radius);
                if s2 >= 1.0 {
                    0.0
                } else {
                    height * (1.0 - s2).powi(3)
                }
            }
            TestFunction::Cosine { frequency } => dot(frequency, z).cos(),
            TestFunction::Barrier { center, r } => r * r * Self::barrier_profile(dist(z, center) / r).0,
        }
    }

    pub fn gradient(&self, z: &Pt) -> Pt {
        match self {
            TestFunction::Constant { .. } => [0.0; 3],
            TestFunction::CompactBump { center, radius, height } => {
                let d = sub(z, center);
                let s2 = dot(&d, &d) / (radius * radius);
                if s2 >= 1.0 {
                    return [0.0; 3];
                }
                scale(&d, -6.0 * height * (1.0 - s2).powi(2) / (radius * radius))
            }
            TestFunction::Cosine { frequency } => scale(frequency, -dot(frequency, z).sin()),
            TestFunction::Barrier { center, r } => {
                let d = sub(z, center);
                let rho = norm(&d);
                if rho == 0.0 {
                    return [0.0; 3];
                }
                let (_, dq, _) = Self::barrier_profile(rho / r);
                scale(&d, r * dq / rho)
            }
        }
    }

    pub fn hessian(&self, z: &Pt) -> [[f64; 3]; 3] {
        let mut h = [[0.0; 3]; 3];
        match self {
            TestFunction::Constant { .. } => {}
            TestFunction::CompactBump { center, radius, height } => {
                let d = sub(z, center);
                let r2 = radius * radius;
                let u = 1.0 - dot(&d, &d) / r2;
                if u > 0.0 {
                    for i in 0..3 {
                        for j in 0..3 {
                            let delta = if i == j { 1.0 } else { 0.0 };
                            h[i][j] = height * (24.0 * u * d[i] * d[j] / (r2 * r2) - 6.0 * u * u * delta / r2);
                        }
                    }
                }
            }
            TestFunction::Cosine { frequency } => {
                let c = dot(frequency, z).cos();
                for i in 0..3 {
                    for j in 0..3 {
                        h[i][j] = -c * frequency[i] * frequency[j];
                    }
                }
            }
            TestFunction::Barrier { center, r } => {
                let d = sub(z, center);
                let rho = norm(&d);
                let s = rho / r;
                let (_, dq, ddq) = Self::barrier_profile(s);
                // f(ρ) = r² q(ρ/r): f'' = q''(s), f'/ρ = q'(s)/s.
                let radial = ddq;
                let tangential = if s <= 0.5 { 2.0 } else { dq / s };
                let e = if rho > 0.0 { scale(&d, 1.0 / rho) } else { [0.0; 3] };
                for i in 0..3 {
                    for j in 0..3 {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        h[i][j] = radial * e[i] * e[j] + tangential * (delta - e[i] * e[j]);
                    }
                }
            }
        }
        h
    }

    /// Largest radial panel that resolves the function along a ray.
    fn max_panel(&self) -> f64 {
        match self {
            TestFunction::Constant { .. } => f64::INFINITY,
            TestFunction::CompactBump { radius, .. } => radius / 4.0,
            TestFunction::Cosine { frequency } => std::f64::consts::PI / (4.0 * norm(frequency).max(1e-12)),
            TestFunction::Barrier { r, .. } => r / 8.0,
        }
    }

    /// Magnitude used to scale absolute quadrature tolerances.
    fn magnitude(&self) -> f64 {
        match self {
            TestFunction::Constant { value } => value.abs(),
            TestFunction::CompactBump { height, .. } => height.abs(),
            TestFunction::Cosine { .. } => 1.0,
            TestFunction::Barrier { r, .. } => r * r,
        }
    }

    /// Radius beyond which f(x ± tξ) equals `far_value` exactly, if any.
    fn settle_radius(&self, x: &Pt) -> Option<f64> {
        match self {
            TestFunction::Constant { .. } => Some(0.0),
            TestFunction::CompactBump { center, radius, .. } => Some(dist(x, center) + radius),
            TestFunction::Cosine { .. } => None,
            TestFunction::Barrier { center, r } => Some(dist(x, center) + r),
        }
    }

    /// Value (or mean value) far away.
    fn far_value(&self) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::CompactBump { .. } | TestFunction::Cosine { .. } => 0.0,
            TestFunction::Barrier { r, .. } => r * r,
        }
    }
}

/// Radius beyond which oscillatory test functions are replaced by their mean.
const R_FAR: f64 = 64.0;

fn radial_integral(kernel: &JumpKernel, f: &TestFunction, x: &Pt, fx: f64, xi: &Pt, hess: &[[f64; 3]; 3]) -> Result<f64> {
    let rad = &kernel.radial;
    let d = kernel.dim as i32;
    let mut end = f.settle_radius(x).unwrap_or(R_FAR);
    if let Some(cut) = rad.tail.support_end() {
        end = end.min(cut);
    }
    let mut s = |t: f64| {
        let second = 0.5 * (f.value(&axpy(x, t, xi)) + f.value(&axpy(x, -t, xi))) - fx;
        second * rad.j(t) * t.powi(d - 1)
    };
    let panel = f.max_panel();
    let t0 = panel.min(1.0).min(end.max(0.0));
    let mut total = 0.0;
    if end > t0 {
        let mut cuts: Vec<f64> = rad.breakpoints().into_iter().filter(|b| *b > t0 && *b < end).collect();
        cuts.push(t0);
        cuts.push(end);
        cuts.sort_by(f64::total_cmp);
        for w in cuts.windows(2) {
            let n = ((w[1] - w[0]) / panel).ceil().max(1.0) as usize;
            let h = (w[1] - w[0]) / n as f64;
            for k in 0..n {
                let (lo, hi) = (w[0] + k as f64 * h, w[0] + (k + 1) as f64 * h);
                // Oscillating integrands may cancel on a panel; tolerate an
                // error relative to the panel's absolute scale.
                let abs_tol = 1e-11 * f.magnitude() * rad.shell(lo, hi)?;
                total += adaptive(&mut s, lo, hi, abs_tol, 1e-10)?;
            }
        }
    }
    if end.is_finite() {
        let tail_from = end.max(t0);
        total += (f.far_value() - fx) * rad.radial_tail(tail_from)?;
    }
    // Geometric shells towards the origin, then the Taylor remainder.
    let mut hi = t0;
    let mut k = 0;
    if hi > 0.0 {
        loop {
            let lo = 0.5 * hi;
            // The second difference loses digits to cancellation near 0;
            // accept errors at the roundoff level of f.
            let abs_tol = 1e-13 * f.magnitude() * rad.shell(lo, hi)?;
            let part = adaptive(&mut s, lo, hi, abs_tol, 1e-10)?;
            total += part;
            hi = lo;
            k += 1;
            if (k >= 4 && part.abs() <= 1e-6 * total.abs()) || k >= 200 {
                break;
            }
        }
        let mut quad = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                quad += hess[i][j] * xi[i] * xi[j];
            }
        }
        total += 0.5 * quad * rad.moment2(hi)?;
    }
    Ok(total)
}

/// Lf(x) = ∫ (f(x+h) − f(x) − ⟨∇f(x), h⟩1_{|h|≤1}) n(x, h) dh, evaluated in
/// the symmetrized form ½(f(x+h) + f(x−h) − 2f(x)).
pub fn apply_l(kernel: &JumpKernel, f: &TestFunction, x: &[f64]) -> Result<f64> {
    if x.len() != kernel.dim {
        return invalid("evaluation point has the wrong dimension");
    }
    if let TestFunction::Constant { .. } = f {
        return Ok(0.0);
    }
    let xp = crate::vecmath::to_pt(x);
    let fx = f.value(&xp);
    let hess = f.hessian(&xp);
    let mut total = 0.0;
    for (xi, w) in &kernel.angular_rule().nodes {
        let k = kernel.angular(&xp, xi);
        if k == 0.0 {
            continue;
        }
        total += w * k * radial_integral(kernel, f, &xp, fx, xi, &hess)?;
    }
    if !total.is_finite() {
        return Err(Error::Numerical(format!("operator value at {x:?} is not finite")));
    }
    Ok(total)
}

/// ∫ over the parameter set of j(t) t^{d−1} dt.
fn shells(radial: &RadialProfile, iv: &[(f64, f64)]) -> Result<f64> {
    iv.iter().try_fold(0.0, |acc, &(a, b)| Ok(acc + radial.shell(a, b)?))
}

fn outside_ball(o: &Pt, dir: &Pt, c: &Pt, s: f64) -> Intervals {
    Region::BallComplement { center: *c, radius: s }.ray_intervals(o, dir)
}

/// ∫_{region ∖ B(c, s)} n(v, z − v) dz, with |z − v| > eps.
pub fn region_rate(kernel: &JumpKernel, v: &Pt, region: &Region, exclude: Option<(&Pt, f64)>, eps: f64) -> Result<f64> {
    if region.contains(v) && eps <= 0.0 {
        return Err(Error::Divergence("region contains the base point".into()));
    }
    let window = |o: &Pt, dir: &Pt| -> Intervals {
        let mut iv = vec![(eps.max(0.0), f64::INFINITY)];
        if let Some((c, s)) = exclude {
            iv = intersect(&iv, &outside_ball(o, dir, c, s));
        }
        iv
    };
    if let Region::Ball { center, radius } = region {
        let e = dist(center, v);
        let clear = exclude.is_none_or(|(c, s)| region.avoids_ball(c, s));
        if clear && e > radius * (1.0 + 1e-9) {
            let axis = scale(&sub(center, v), 1.0 / e);
            let psi = (radius / e).asin();
            let rule = subtended_rule(kernel.dim, &axis, psi, AngularResolution::default());
            let mut total = 0.0;
            for (xi, w) in &rule.nodes {
                let k = kernel.angular(v, xi);
                if k == 0.0 {
                    continue;
                }
                let iv = intersect(&region.ray_intervals(v, xi), &window(v, xi));
                total += w * k * shells(&kernel.radial, &iv)?;
            }
            return Ok(total);
        }
    }
    let mut total = 0.0;
    for (xi, w) in &kernel.angular_rule().nodes {
        let k = kernel.angular(v, xi);
        if k == 0.0 {
            continue;
        }
        let iv = intersect(&region.ray_intervals(v, xi), &window(v, xi));
        total += w * k * shells(&kernel.radial, &iv)?;
    }
    Ok(total)
}

/// ∫_{B(x₀,4r)^c} g⁻(z) n(v, z − v) dz.
fn negative_part_integral(kernel: &JumpKernel, v: &Pt, x0: &Pt, outer: f64, g: &ExteriorData) -> Result<f64> {
    let (base, pieces) = g.pieces();
    let neg = |val: f64| (-val).max(0.0);
    let mut total = 0.0;
    if neg(base) > 0.0 {
        let exterior = Region::BallComplement { center: *x0, radius: outer };
        total += neg(base) * region_rate(kernel, v, &exterior, None, 0.0)?;
    }
    for (region, val) in &pieces {
        let coeff = neg(*val) - neg(base);
        if coeff == 0.0 || region.inside_ball(x0, outer) {
            continue;
        }
        total += coeff * region_rate(kernel, v, region, Some((x0, outer)), 0.0)?;
    }
    Ok(total)
}

/// (r^α/ℓ(r)) · max over `probes` points v ∈ B(x₀, 2r) of ∫_{B(x₀,4r)^c} g⁻ n(v, ·).
pub fn harnack_tail_term(kernel: &JumpKernel, x0: &[f64], r: f64, g: &ExteriorData, probes: usize) -> Result<f64> {
    if !(r > 0.0) {
        return domain("scale must be positive");
    }
    let x0p = crate::vecmath::to_pt(x0);
    g.check()?;
    let mut best = 0.0f64;
    for v in ball_points(kernel.dim, &x0p, 2.0 * r, probes.max(1)) {
        best = best.max(negative_part_integral(kernel, &v, &x0p, 4.0 * r, g)?);
    }
    let rad = &kernel.radial;
    Ok(r.powf(rad.alpha) / rad.ell_at(r) * best)
}

/// M(x₀, r) = (∫_{B(x₀,4r)^c} n(x₀, z − x₀) dz)^{−1}.
pub fn big_m(kernel: &JumpKernel, x0: &[f64], r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 0.25) {
        return domain(format!("scale r = {r} outside (0, 1/4)"));
    }
    let mass = kernel.angular_mass(&crate::vecmath::to_pt(x0)) * kernel.radial.radial_tail(4.0 * r)?;
    if !(mass > 0.0) {
        return Err(Error::Divergence(format!("no kernel mass outside B(x0, {})", 4.0 * r)));
    }
    Ok(1.0 / mass)
}

/// Radial densities γ used for the normalized tail measures.
pub trait RadialDensity: Sync {
    fn dim(&self) -> usize;
    fn value(&self, t: f64) -> f64;
    /// ∫_a^b γ(t) t^{d−1} dt.
    fn shell(&self, a: f64, b: f64) -> Result<f64>;
}

impl RadialDensity for RadialProfile {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, t: f64) -> f64 {
        self.j(t)
    }
    fn shell(&self, a: f64, b: f64) -> Result<f64> {
        RadialProfile::shell(self, a, b)
    }
}

/// γ(t) = t^{−p}.
#[derive(Debug, Clone, Copy)]
pub struct PowerDensity {
    pub dim: usize,
    pub exponent: f64,
}

impl RadialDensity for PowerDensity {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, t: f64) -> f64 {
        t.powf(-self.exponent)
    }
    fn shell(&self, a: f64, b: f64) -> Result<f64> {
        let q = self.dim as f64 - self.exponent;
        if q == 0.0 {
            return Ok((b / a).ln());
        }
        if b.is_infinite() && q > 0.0 {
            return Err(Error::Divergence("power density is not integrable at infinity".into()));
        }
        if a == 0.0 && q < 0.0 {
            return Err(Error::Divergence("power density is not integrable at the origin".into()));
        }
        Ok((b.powf(q) - a.powf(q)) / q)
    }
}

/// Query for ν_r^x(A).
#[derive(Debug, Clone)]
pub struct TailMeasureQuery {
    pub x0: Pt,
    pub r: f64,
    pub x: Pt,
    /// `None` is the empty set.
    pub region: Option<Region>,
}

fn nu_rule(dim: usize) -> AngularRule {
    full_sphere_rule(dim, AngularResolution { order: 16, max_panel: std::f64::consts::PI / 16.0, azimuth: 64 })
}

fn density_over(gamma: &dyn RadialDensity, rule: &AngularRule, x: &Pt, region: &Region) -> Result<f64> {
    let mut total = 0.0;
    for (xi, w) in &rule.nodes {
        for (a, b) in region.ray_intervals(x, xi) {
            total += w * gamma.shell(a, b)?;
        }
    }
    Ok(total)
}

/// ν_r^x(A) = ∫_A γ(|z − x|) dz / ∫_{B(x₀,r)^c} γ(|z − x₀|) dz.
pub fn nu_measure(gamma: &dyn RadialDensity, q: &TailMeasureQuery) -> Result<f64> {
    let dim = gamma.dim();
    if !(q.r > 0.0) {
        return domain("scale must be positive");
    }
    if dist(&q.x, &q.x0) > 0.5 * q.r * (1.0 + 1e-12) {
        return domain("evaluation point must lie in B(x0, r/2)");
    }
    let Some(region) = q.region else { return Ok(0.0) };
    if !region.avoids_ball(&q.x0, q.r) {
        return domain("measured region must lie outside B(x0, r)");
    }
    let denom = crate::sphere::sphere_area(dim) * gamma.shell(q.r, f64::INFINITY)?;
    if !(denom > 0.0 && denom.is_finite()) {
        return Err(Error::Divergence("normalizing mass is zero or infinite".into()));
    }
    Ok(density_over(gamma, &nu_rule(dim), &q.x, &region)? / denom)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EtaReport {
    pub j: u32,
    pub eta: f64,
    /// η^{1/j}.
    pub root: f64,
}

/// η_{r,j} = max over `xs` ⊂ B(x₀, r/2) of ν_r^x(B(x₀, 2^j r)^c).
pub fn eta_rj(gamma: &dyn RadialDensity, x0: &Pt, r: f64, j: u32, xs: &[Pt]) -> Result<EtaReport> {
    if j < 1 {
        return domain("j must be at least 1");
    }
    let region = Region::BallComplement { center: *x0, radius: 2f64.powi(j as i32) * r };
    let mut eta = 0.0f64;
    for x in xs {
        eta = eta.max(nu_measure(gamma, &TailMeasureQuery { x0: *x0, r, x: *x, region: Some(region) })?);
    }
    Ok(EtaReport { j, eta, root: eta.powf(1.0 / j as f64) })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AveragingReport {
    /// max_x γ(|z − x|) r^d / ∫_{B(x₀,r)} γ(|z − u|) du.
    pub c_prime: f64,
    pub ball_integral: f64,
    pub worst_x: Pt,
}

/// Empirical constant comparing a point value of γ(|z − ·|) on B(x₀, r/2)
/// with its average over B(x₀, r).
pub fn averaging_check(gamma: &dyn RadialDensity, x0: &Pt, r: f64, z: &Pt, xs: &[Pt]) -> Result<AveragingReport> {
    let dim = gamma.dim();
    let e = dist(z, x0);
    if !(e > 2.0 * r) {
        return domain("reference point must satisfy |z − x0| > 2r");
    }
    let axis = scale(&sub(x0, z), 1.0 / e);
    let rule = subtended_rule(dim, &axis, (r / e).asin(), AngularResolution { order: 24, ..Default::default() });
    let ball = Region::Ball { center: *x0, radius: r };
    let integral = density_over(gamma, &rule, z, &ball)?;
    let mut best = (f64::NEG_INFINITY, *x0);
    for x in xs {
        if dist(x, x0) > 0.5 * r * (1.0 + 1e-12) {
            return domain("sample points must lie in B(x0, r/2)");
        }
        let v = gamma.value(dist(z, x)) * r.powi(dim as i32) / integral;
        if v > best.0 {
            best = (v, *x);
        }
    }
    Ok(AveragingReport { c_prime: best.0, ball_integral: integral, worst_x: best.1 })
}

/// Volume-normalized constant for reference: 1/|B(0, 1)|.
pub fn unit_ball_reciprocal(dim: usize) -> f64 {
    1.0 / unit_ball_volume(dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barrier_join_is_c2() {
        let f = TestFunction::Barrier { center: [0.0; 3], r: 1.0 };
        for s in [0.5, 1.0] {
            let lo = TestFunction::barrier_profile(s - 1e-9);
            let hi = TestFunction::barrier_profile(s + 1e-9);
            assert!((lo.0 - hi.0).abs() < 1e-8 && (lo.1 - hi.1).abs() < 1e-7 && (lo.2 - hi.2).abs() < 1e-6);
        }
        assert_eq!(f.value(&[3.0, 0.0, 0.0]), 1.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let fs = [
            TestFunction::CompactBump { center: [0.1, 0.2, 0.0], radius: 0.7, height: 2.0 },
            TestFunction::Cosine { frequency: [1.3, -0.4, 0.2] },
            TestFunction::Barrier { center: [0.0; 3], r: 0.4 },
        ];
        let x = [0.25, 0.1, 0.05];
        let h = 1e-5;
        for f in &fs {
            let g = f.gradient(&x);
            let hs = f.hessian(&x);
            for i in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-6, "{f:?} grad {i}");
                let gp = f.gradient(&xp);
                let gm = f.gradient(&xm);
                for j in 0..3 {
                    assert!(((gp[j] - gm[j]) / (2.0 * h) - hs[i][j]).abs() < 1e-5, "{f:?} hess {i}{j}");
                }
            }
        }
    }

    #[test]
    fn power_density_shell() {
        let g = PowerDensity { dim: 2, exponent: 3.0 };
        assert!((g.shell(1.0, f64::INFINITY).unwrap() - 1.0).abs() < 1e-15);
        assert!(g.shell(0.0, 1.0).is_err());
    }
}
