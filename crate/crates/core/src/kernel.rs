//! Cone-structured jump kernels n(x, h) = [k₁(ĥ) + m(x, ĥ)(k₂(ĥ) − k₁(ĥ))]·j(|h|).

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::numint::{adaptive, panel_rule, to_infinity, to_zero};
use crate::regvar::SlowlyVarying;
use crate::sphere::{
    cap_rule, full_sphere_rule, half_cap_area, sphere_area, AngularResolution, AngularRule,
};
use crate::vecmath::{dot, norm, scale, to_pt, Pt, MAX_DIM};

/// A direction on S^{d−1}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector {
    v: Pt,
    dim: usize,
}

impl UnitVector {
    /// Accepts components whose Euclidean norm is within 1e-12 of one.
    pub fn new(components: &[f64]) -> Result<Self> {
        let u = Self::checked_dim(components)?;
        let n = norm(&u.v);
        if (n - 1.0).abs() > 1e-12 {
            return invalid(format!("vector of norm {n} is not a unit vector"));
        }
        Ok(u)
    }

    /// Rescales a non-zero vector to unit length.
    pub fn normalized(components: &[f64]) -> Result<Self> {
        let u = Self::checked_dim(components)?;
        let n = norm(&u.v);
        if n == 0.0 || !n.is_finite() {
            return invalid("cannot normalize a zero or non-finite vector");
        }
        Ok(Self { v: scale(&u.v, 1.0 / n), dim: u.dim })
    }

    fn checked_dim(components: &[f64]) -> Result<Self> {
        if components.is_empty() || components.len() > MAX_DIM {
            return invalid(format!("dimension {} unsupported (1..=3)", components.len()));
        }
        Ok(Self { v: to_pt(components), dim: components.len() })
    }

    pub fn as_pt(&self) -> &Pt {
        &self.v
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[f64] {
        &self.v[..self.dim]
    }
}

/// Chordal radius → half-angle: ρ² = 2(1 − cos θ).
pub fn half_angle_from_chordal(rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho <= 2.0) {
        return domain(format!("chordal radius {rho} outside (0, 2]"));
    }
    // 2·asin(ρ/2) is the same angle without cancellation for small ρ.
    Ok(2.0 * (0.5 * rho).min(1.0).asin())
}

/// Symmetrized spherical cap {ξ : |⟨ξ, η⟩| ≥ cos θ}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cap {
    pub axis: UnitVector,
    pub chordal_radius: f64,
    cos_theta: f64,
}

impl Cap {
    pub fn new(axis: UnitVector, chordal_radius: f64) -> Result<Self> {
        half_angle_from_chordal(chordal_radius)?;
        Ok(Self { axis, chordal_radius, cos_theta: 1.0 - 0.5 * chordal_radius * chordal_radius })
    }

    /// Builds the cap from cos θ directly so that membership tests against
    /// a given cosine are exact.
    pub fn from_cos(axis: UnitVector, cos_theta: f64) -> Result<Self> {
        if !(-1.0..1.0).contains(&cos_theta) {
            return invalid(format!("cap cosine {cos_theta} outside [−1, 1)"));
        }
        Ok(Self { axis, chordal_radius: (2.0 * (1.0 - cos_theta)).sqrt(), cos_theta })
    }

    pub fn cos_theta(&self) -> f64 {
        self.cos_theta
    }

    pub fn half_angle(&self) -> f64 {
        self.cos_theta.acos()
    }

    /// Half-angle of each of the two antipodal pieces, at most π/2.
    pub fn polar_half_angle(&self) -> f64 {
        self.half_angle().min(PI / 2.0)
    }

    pub fn is_full(&self) -> bool {
        self.cos_theta <= 0.0
    }

    #[inline]
    pub fn contains(&self, xi: &Pt) -> bool {
        dot(xi, self.axis.as_pt()).abs() >= self.cos_theta
    }

    /// Surface measure of the symmetrized cap in S^{d−1}.
    pub fn measure(&self, dim: usize) -> f64 {
        if self.is_full() {
            sphere_area(dim)
        } else {
            2.0 * half_cap_area(dim, self.polar_half_angle())
        }
    }
}

/// Angular structure: caps S_i with lower value δ and per-cap upper values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSystem {
    caps: Vec<Cap>,
    delta: f64,
    upper: Vec<f64>,
}

impl ConeSystem {
    pub fn new(caps: Vec<Cap>, delta: f64, upper_values: Vec<f64>) -> Result<Self> {
        if caps.is_empty() {
            return invalid("cone system needs at least one cap");
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return invalid(format!("lower angular value must be positive, got {delta}"));
        }
        if upper_values.len() != caps.len() {
            return invalid("one upper value per cap required");
        }
        if let Some(u) = upper_values.iter().find(|u| !(**u >= delta && u.is_finite())) {
            return invalid(format!("upper value {u} below the lower value {delta}"));
        }
        let dim = caps[0].axis.dim();
        if caps.iter().any(|c| c.axis.dim() != dim) {
            return invalid("cap axes of mixed dimension");
        }
        Ok(Self { caps, delta, upper: upper_values })
    }

    pub fn caps(&self) -> &[Cap] {
        &self.caps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn upper_values(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.caps[0].axis.dim()
    }

    pub fn in_union(&self, xi: &Pt) -> bool {
        self.caps.iter().any(|c| c.contains(xi))
    }

    pub fn covers_sphere(&self) -> bool {
        self.dim() == 1 || self.caps.iter().any(Cap::is_full)
    }

    #[inline]
    pub fn k1(&self, xi: &Pt) -> f64 {
        if self.in_union(xi) {
            self.delta
        } else {
            0.0
        }
    }

    /// Upper angular value; where caps overlap the largest one applies.
    #[inline]
    pub fn k2(&self, xi: &Pt) -> f64 {
        self.caps
            .iter()
            .zip(&self.upper)
            .filter(|(c, _)| c.contains(xi))
            .map(|(_, u)| *u)
            .fold(0.0, f64::max)
    }

    /// Smallest polar half-angle among the caps.
    pub fn governing_half_angle(&self) -> f64 {
        self.caps.iter().map(Cap::polar_half_angle).fold(PI / 2.0, f64::min)
    }

    /// Cap whose axis is closest (up to sign) to `dir`, if `dir` lies in it.
    pub fn cap_containing(&self, dir: &Pt) -> Option<&Cap> {
        self.caps
            .iter()
            .filter(|c| c.contains(dir))
            .max_by(|a, b| {
                let sa = dot(dir, a.axis.as_pt()).abs() - a.cos_theta;
                let sb = dot(dir, b.axis.as_pt()).abs() - b.cos_theta;
                sa.total_cmp(&sb)
            })
    }

    /// Quadrature rule over the union of caps. Integrands that are smooth on
    /// each cap are integrated without smearing across cap boundaries.
    pub fn angular_rule(&self, res: AngularResolution) -> AngularRule {
        let dim = self.dim();
        if self.covers_sphere() {
            return full_sphere_rule(dim, res);
        }
        match dim {
            2 => {
                let mut cuts = vec![0.0, 2.0 * PI];
                for c in &self.caps {
                    let a = c.axis.as_pt();
                    let base = a[1].atan2(a[0]);
                    let th = c.polar_half_angle();
                    for shift in [0.0, PI] {
                        for s in [-th, th] {
                            cuts.push((base + shift + s).rem_euclid(2.0 * PI));
                        }
                    }
                }
                cuts.sort_by(f64::total_cmp);
                cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
                let mut nodes = Vec::new();
                for w in cuts.windows(2) {
                    let (lo, hi) = (w[0], w[1]);
                    let mid = 0.5 * (lo + hi);
                    if hi - lo < 1e-15 || !self.in_union(&[mid.cos(), mid.sin(), 0.0]) {
                        continue;
                    }
                    let panels = ((hi - lo) / res.max_panel).ceil().max(1.0) as usize;
                    for (phi, wt) in panel_rule(lo, hi, panels, res.order) {
                        nodes.push(([phi.cos(), phi.sin(), 0.0], wt));
                    }
                }
                AngularRule { nodes }
            }
            _ => {
                let halves: Vec<(Pt, f64)> = self
                    .caps
                    .iter()
                    .flat_map(|c| {
                        let a = *c.axis.as_pt();
                        [(a, c.cos_theta), (scale(&a, -1.0), c.cos_theta)]
                    })
                    .collect();
                let mut nodes = Vec::new();
                for c in &self.caps {
                    for sign in [1.0, -1.0] {
                        let axis = scale(c.axis.as_pt(), sign);
                        for (xi, w) in cap_rule(3, &axis, c.polar_half_angle(), res).nodes {
                            let mult = halves.iter().filter(|(a, ct)| dot(&xi, a) >= *ct).count().max(1);
                            nodes.push((xi, w / mult as f64));
                        }
                    }
                }
                AngularRule { nodes }
            }
        }
    }
}

/// Continuation of j beyond t = 1, where j(t) = ℓ(1)·t^{−d−α}·factor(t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TailRule {
    Power,
    Truncated { cutoff: f64 },
    Exponential { rate: f64 },
    /// Multiplies the power continuation by `factor` from `at` onwards;
    /// with factor > κ this violates the comparability condition.
    Step { at: f64, factor: f64 },
}

impl TailRule {
    #[inline]
    pub fn factor(&self, t: f64) -> f64 {
        match *self {
            TailRule::Power => 1.0,
            TailRule::Truncated { cutoff } => {
                if t <= cutoff {
                    1.0
                } else {
                    0.0
                }
            }
            TailRule::Exponential { rate } => (-rate * (t - 1.0)).exp(),
            TailRule::Step { at, factor } => {
                if t >= at {
                    factor
                } else {
                    1.0
                }
            }
        }
    }

    /// Points beyond 1 where j may be discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            TailRule::Truncated { cutoff } => vec![cutoff],
            TailRule::Step { at, .. } => vec![at],
            _ => vec![],
        }
    }

    /// End of the support of j, if finite.
    pub fn support_end(&self) -> Option<f64> {
        match *self {
            TailRule::Truncated { cutoff } => Some(cutoff),
            _ => None,
        }
    }
}

/// Radial density j with its comparability constants.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub dim: usize,
    pub alpha: f64,
    pub ell: SlowlyVarying,
    pub tail: TailRule,
    pub kappa: f64,
    pub sigma: f64,
}

/// (a^{−α} − b^{−α})/α, valid for b = ∞.
#[inline]
fn power_shell(alpha: f64, a: f64, b: f64) -> f64 {
    (a.powf(-alpha) - b.powf(-alpha)) / alpha
}

impl RadialProfile {
    pub fn new(dim: usize, alpha: f64, ell: SlowlyVarying, tail: TailRule, kappa: f64, sigma: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return invalid(format!("dimension {dim} unsupported (1..=3)"));
        }
        if !(alpha > 0.0 && alpha < 2.0) {
            return invalid(format!("stability index {alpha} outside (0, 2)"));
        }
        ell.check()?;
        if !(kappa >= 1.0 && kappa.is_finite()) {
            return invalid(format!("comparability constant {kappa} must be ≥ 1"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid(format!("tail exponent {sigma} must be positive"));
        }
        match tail {
            TailRule::Truncated { cutoff } if !(cutoff > 1.0 && cutoff.is_finite()) => {
                return invalid(format!("truncation cutoff {cutoff} must exceed 1"))
            }
            TailRule::Exponential { rate } if !(rate > 0.0 && rate.is_finite()) => {
                return invalid(format!("exponential rate {rate} must be positive"))
            }
            TailRule::Step { at, factor } if !(at >= 1.0 && factor > 0.0 && factor.is_finite()) => {
                return invalid("step tail needs at ≥ 1 and a positive factor")
            }
            _ => {}
        }
        Ok(Self { dim, alpha, ell, tail, kappa, sigma })
    }

    /// j(t) = t^{−d−α} with ℓ ≡ 1 and a power tail.
    pub fn pure_power(dim: usize, alpha: f64) -> Result<Self> {
        Self::new(dim, alpha, SlowlyVarying::Constant(1.0), TailRule::Power, 1.0, alpha / 2.0)
    }

    #[inline]
    pub fn exponent(&self) -> f64 {
        self.dim as f64 + self.alpha
    }

    /// ℓ(min(t, 1)).
    #[inline]
    pub fn ell_at(&self, t: f64) -> f64 {
        self.ell.value(t.min(1.0))
    }

    #[inline]
    pub fn j(&self, t: f64) -> f64 {
        if t <= 1.0 {
            self.ell.value(t) * t.powf(-self.exponent())
        } else {
            self.ell.value(1.0) * t.powf(-self.exponent()) * self.tail.factor(t)
        }
    }

    /// Interior points of (0, ∞) where j may fail to be smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![1.0];
        b.extend(self.tail.breakpoints());
        b
    }

    /// ∫_a^b j(t) t^{d−1} dt for 0 < a ≤ b ≤ ∞, closed form where available.
    pub fn shell(&self, a: f64, b: f64) -> Result<f64> {
        if !(a > 0.0) || b < a || a.is_nan() || b.is_nan() {
            return domain(format!("radial shell [{a}, {b}] is not a valid interval in (0, ∞]"));
        }
        let mut total = 0.0;
        if a < 1.0 {
            total += self.inner_shell(a, b.min(1.0))?;
        }
        if b > 1.0 {
            total += self.outer_shell(a.max(1.0), b)?;
        }
        Ok(total)
    }

    fn inner_shell(&self, a: f64, b: f64) -> Result<f64> {
        if let Some(c) = self.ell.as_constant() {
            return Ok(c * power_shell(self.alpha, a, b));
        }
        let alpha = self.alpha;
        let ell = &self.ell;
        adaptive(&mut |s: f64| ell.value(s.exp()) * (-alpha * s).exp(), a.ln(), b.ln(), 0.0, 1e-13)
    }

    fn outer_shell(&self, a: f64, b: f64) -> Result<f64> {
        let c1 = self.ell.value(1.0);
        let alpha = self.alpha;
        Ok(match self.tail {
            TailRule::Power => c1 * power_shell(alpha, a, b),
            TailRule::Truncated { cutoff } => {
                if a >= cutoff {
                    0.0
                } else {
                    c1 * power_shell(alpha, a, b.min(cutoff))
                }
            }
            TailRule::Step { at, factor } => {
                let below = if a < at { power_shell(alpha, a, b.min(at)) } else { 0.0 };
                let above = if b > at { power_shell(alpha, a.max(at), b) } else { 0.0 };
                c1 * (below + factor * above)
            }
            TailRule::Exponential { rate } => {
                let mut g = |t: f64| c1 * t.powf(-1.0 - alpha) * (-rate * (t - 1.0)).exp();
                if b.is_finite() {
                    adaptive(&mut g, a, b, 0.0, 1e-13)?
                } else {
                    to_infinity(&mut g, a, &[], f64::INFINITY, 1e-15)?
                }
            }
        })
    }

    /// ∫_R^∞ j(t) t^{d−1} dt.
    pub fn radial_tail(&self, r: f64) -> Result<f64> {
        self.shell(r, f64::INFINITY)
    }

    /// ∫_0^ρ t^{d+1} j(t) dt, the radial factor of the small-jump second moment.
    pub fn moment2(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return domain(format!("moment radius {rho} must be positive"));
        }
        let alpha = self.alpha;
        let inner_end = rho.min(1.0);
        let inner = match self.ell.as_constant() {
            Some(c) => c * inner_end.powf(2.0 - alpha) / (2.0 - alpha),
            None => {
                let ell = &self.ell;
                to_zero(&mut |t: f64| ell.value(t) * t.powf(1.0 - alpha), inner_end, 1e-15)?
            }
        };
        let outer = if rho > 1.0 {
            let d = self.dim as i32;
            adaptive(&mut |t: f64| self.j(t) * t.powi(d + 1), 1.0, rho, 0.0, 1e-13)?
        } else {
            0.0
        };
        Ok(inner + outer)
    }
}

/// ∫_{|z|>R} j(|z|) dz by panel quadrature of the radial integrand
/// (independent of the closed forms used by [`RadialProfile::shell`]).
pub fn tail_mass(radial: &RadialProfile, r: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return domain(format!("tail radius {r} must be positive"));
    }
    let d = radial.dim as i32;
    let area = sphere_area(radial.dim);
    let mut g = |t: f64| area * radial.j(t) * t.powi(d - 1);
    let v = to_infinity(&mut g, r, &radial.breakpoints(), f64::INFINITY, 1e-14)?;
    if !v.is_finite() {
        return Err(Error::Divergence(format!("tail mass beyond {r} is not finite")));
    }
    Ok(v)
}

/// Spatial interpolation weight m(x, ĥ) ∈ [0, 1] between k₁ and k₂.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Modulator {
    /// m ≡ 1: n = k₂ j, a Lévy kernel.
    ConstantOne,
    /// m = ½(1 + sin⟨ω, x⟩ · (2ĥ₁² − 1)).
    Sinusoidal { frequency: Vec<f64> },
    /// Piecewise constant in x over a periodic grid of cubes of side `cell`.
    Patchwise { cell: f64, values: Vec<f64> },
}

impl Modulator {
    fn check(&self, dim: usize) -> Result<()> {
        match self {
            Modulator::ConstantOne => Ok(()),
            Modulator::Sinusoidal { frequency } => {
                if frequency.len() != dim || frequency.iter().any(|w| !w.is_finite()) {
                    return invalid("sinusoidal modulator frequency must be a finite vector of the kernel dimension");
                }
                Ok(())
            }
            Modulator::Patchwise { cell, values } => {
                if !(*cell > 0.0) || values.is_empty() || values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return invalid("patchwise modulator needs a positive cell and values in [0, 1]");
                }
                Ok(())
            }
        }
    }

    /// Depends on h only through ĥ₁², hence is exactly even in h.
    #[inline]
    pub fn value(&self, x: &Pt, xi: &Pt) -> f64 {
        match self {
            Modulator::ConstantOne => 1.0,
            Modulator::Sinusoidal { frequency } => {
                let phase: f64 = frequency.iter().zip(x).map(|(w, xi)| w * xi).sum();
                0.5 * (1.0 + phase.sin() * (2.0 * xi[0] * xi[0] - 1.0))
            }
            Modulator::Patchwise { cell, values } => {
                let mut idx: i64 = 0;
                for (k, c) in x.iter().enumerate() {
                    idx += (c / cell).floor() as i64 * [1, 7, 49][k];
                }
                values[idx.rem_euclid(values.len() as i64) as usize]
            }
        }
    }
}

/// A full kernel n(x, h).
#[derive(Debug, Clone)]
pub struct JumpKernel {
    pub dim: usize,
    pub cones: ConeSystem,
    pub radial: RadialProfile,
    pub modulator: Modulator,
    rule: AngularRule,
}

impl JumpKernel {
    pub fn new(cones: ConeSystem, radial: RadialProfile, modulator: Modulator) -> Result<Self> {
        let dim = radial.dim;
        if cones.dim() != dim {
            return invalid(format!("cone dimension {} differs from radial dimension {dim}", cones.dim()));
        }
        modulator.check(dim)?;
        let rule = cones.angular_rule(AngularResolution::default());
        Ok(Self { dim, cones, radial, modulator, rule })
    }

    /// n(h) = |h|^{−d−α} on all of ℝ^d.
    pub fn isotropic(dim: usize, alpha: f64) -> Result<Self> {
        let mut e1 = [0.0; MAX_DIM];
        e1[0] = 1.0;
        let cap = Cap::new(UnitVector::new(&e1[..dim])?, 2.0)?;
        Self::new(ConeSystem::new(vec![cap], 1.0, vec![1.0])?, RadialProfile::pure_power(dim, alpha)?, Modulator::ConstantOne)
    }

    /// n(h) = |h|^{−d−α} on the double cone |h₁| ≥ c|h|, zero elsewhere.
    pub fn axial_cone(dim: usize, alpha: f64, cos_theta: f64) -> Result<Self> {
        let mut e1 = [0.0; MAX_DIM];
        e1[0] = 1.0;
        let cap = Cap::from_cos(UnitVector::new(&e1[..dim])?, cos_theta)?;
        Self::new(ConeSystem::new(vec![cap], 1.0, vec![1.0])?, RadialProfile::pure_power(dim, alpha)?, Modulator::ConstantOne)
    }

    /// Replaces the angular resolution used by the deterministic integrals.
    pub fn with_resolution(mut self, res: AngularResolution) -> Self {
        self.rule = self.cones.angular_rule(res);
        self
    }

    pub fn angular_rule(&self) -> &AngularRule {
        &self.rule
    }

    /// Angular factor k₁ + m(k₂ − k₁) at unit direction ξ.
    #[inline]
    pub fn angular(&self, x: &Pt, xi: &Pt) -> f64 {
        let k2 = self.cones.k2(xi);
        if k2 == 0.0 {
            return 0.0;
        }
        let k1 = self.cones.delta;
        if k2 == k1 {
            return k1;
        }
        k1 + self.modulator.value(x, xi) * (k2 - k1)
    }

    /// Envelope angular factor k₂.
    #[inline]
    pub fn upper(&self, xi: &Pt) -> f64 {
        self.cones.k2(xi)
    }

    /// Whether n(x, ·) does not depend on x.
    pub fn is_translation_invariant(&self) -> bool {
        matches!(self.modulator, Modulator::ConstantOne) || self.cones.upper.iter().all(|u| *u == self.cones.delta)
    }

    pub fn eval_n(&self, x: &[f64], h: &[f64]) -> Result<f64> {
        if x.len() != self.dim || h.len() != self.dim {
            return invalid(format!("expected points of dimension {}", self.dim));
        }
        self.eval_pt(&to_pt(x), &to_pt(h))
    }

    pub fn eval_pt(&self, x: &Pt, h: &Pt) -> Result<f64> {
        let t = norm(h);
        if t == 0.0 {
            return domain("kernel is singular at h = 0");
        }
        let xi = scale(h, 1.0 / t);
        Ok(self.angular(x, &xi) * self.radial.j(t))
    }

    /// ∫_{S^{d−1}} K(x, ξ) dσ(ξ).
    pub fn angular_mass(&self, x: &Pt) -> f64 {
        self.rule.integrate(|xi| self.angular(x, xi))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NondegeneracyReport {
    pub matrix: Vec<Vec<f64>>,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// A^ρ_{ij}(x) = N(ρ) ∫_{|h|≤ρ} h_i h_j n(x, h) dh with default N(ρ) = ρ^{α−2}.
pub fn nondegeneracy_matrix(kernel: &JumpKernel, x: &[f64], rho: f64, normalizer: Option<f64>) -> Result<NondegeneracyReport> {
    if !(rho > 0.0 && rho < 1.0) {
        return domain(format!("radius ρ = {rho} outside (0, 1)"));
    }
    let n_rho = normalizer.unwrap_or_else(|| rho.powf(kernel.radial.alpha - 2.0));
    if !(n_rho > 0.0) {
        return domain("normalizer must be positive");
    }
    let xp = to_pt(x);
    let d = kernel.dim;
    let radial = kernel.radial.moment2(rho)?;
    let mut m = DMatrix::<f64>::zeros(d, d);
    for (xi, w) in &kernel.angular_rule().nodes {
        let k = w * kernel.angular(&xp, xi);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] += k * xi[i] * xi[j];
            }
        }
    }
    m *= n_rho * radial;
    let sym = (&m + m.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let lambda_min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let lambda_max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let matrix = (0..d).map(|i| (0..d).map(|j| sym[(i, j)]).collect()).collect();
    Ok(NondegeneracyReport { matrix, lambda_min, lambda_max })
}

/// Sample sizes for [`validate_kernel`].
#[derive(Debug, Clone, Copy)]
pub struct ValidationGrid {
    pub radial_points: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub tolerance: f64,
    pub pair_samples: usize,
    pub seed: u64,
}

impl Default for ValidationGrid {
    fn default() -> Self {
        Self { radial_points: 64, r_min: 1.0, r_max: 64.0, tolerance: 1e-9, pair_samples: 4096, seed: 7 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Smallest slack of the defining inequality (negative when violated).
    pub worst_margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &'static str, worst_margin: f64) -> Check {
    Check { name, passed: worst_margin >= 0.0, worst_margin }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1).max(1) as f64)).collect()
}

/// Numerical verification of symmetry, the angular sandwich, the cone lower
/// bound and the three radial conditions. Failures are reported, not raised.
pub fn validate_kernel(kernel: &JumpKernel, grid: &ValidationGrid) -> ValidationReport {
    let d = kernel.dim;
    let rad = &kernel.radial;
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
    let mut sym = 0.0f64;
    let mut sandwich = f64::INFINITY;
    let mut lower = f64::INFINITY;
    for _ in 0..grid.pair_samples {
        let mut x = [0.0; MAX_DIM];
        let mut h = [0.0; MAX_DIM];
        for k in 0..d {
            x[k] = rng.random_range(-4.0..4.0);
            h[k] = rng.random_range(-1.0..1.0);
        }
        let t = norm(&h);
        if t == 0.0 {
            continue;
        }
        h = scale(&h, 10f64.powf(rng.random_range(-3.0..1.5)) / t);
        let xi = scale(&h, 1.0 / norm(&h));
        let n = kernel.eval_pt(&x, &h).unwrap_or(f64::NAN);
        let nm = kernel.eval_pt(&x, &scale(&h, -1.0)).unwrap_or(f64::NAN);
        sym = sym.max(if n.to_bits() == nm.to_bits() { 0.0 } else { (n - nm).abs().max(f64::MIN_POSITIVE) });
        let j = rad.j(norm(&h));
        let lo = kernel.cones.k1(&xi) * j;
        let hi = kernel.cones.k2(&xi) * j;
        let scale_ref = hi.max(f64::MIN_POSITIVE);
        sandwich = sandwich.min(((n - lo) / scale_ref).min((hi - n) / scale_ref));
        if kernel.cones.in_union(&xi) {
            lower = lower.min((n - kernel.cones.delta * j) / scale_ref);
        }
    }
    if lower == f64::INFINITY {
        lower = 0.0;
    }
    let mut checks = vec![check("symmetry", -sym), check("sandwich", sandwich), check("cone_lower_bound", lower)];

    // Profile on (0, 1], slow variation far out, integrability of (|z|² ∧ 1) j.
    let mut j1 = 1.0f64;
    for t in log_grid(1e-6, 1.0, grid.radial_points) {
        let l = rad.ell.value(t);
        let rel = (rad.j(t) * t.powf(rad.exponent()) - l).abs() / l;
        j1 = j1.min(if l > 0.0 && l.is_finite() { 1e-12 - rel } else { -1.0 });
    }
    let r_far = 1e-200;
    j1 = j1.min(0.1 - (rad.ell.value(0.5 * r_far) / rad.ell.value(r_far) - 1.0).abs());
    let integrable = rad.moment2(1.0).and_then(|m| tail_mass(rad, 1.0).map(|t| m + t));
    if !matches!(integrable, Ok(v) if v.is_finite()) {
        j1 = j1.min(-1.0);
    }
    checks.push(check("j1_profile", j1));

    // j(t) ≤ κ j(s) for 1 ≤ s ≤ t.
    let grid_t = log_grid(grid.r_min.max(1.0), grid.r_max, grid.radial_points);
    let mut worst_ratio = 0.0f64;
    let mut running_min = f64::INFINITY;
    for &t in &grid_t {
        let jt = rad.j(t);
        if running_min.is_finite() {
            if running_min > 0.0 {
                worst_ratio = worst_ratio.max(jt / running_min);
            } else if jt > 0.0 {
                worst_ratio = f64::INFINITY;
            }
        }
        running_min = running_min.min(jt);
    }
    checks.push(check("j2_comparability", 1.0 - worst_ratio / (rad.kappa * (1.0 + grid.tolerance))));

    // limsup R^σ ∫_{|z|>R} j ≤ 1: decide from the trend over the upper grid.
    let vals: Vec<(f64, f64)> = grid_t
        .iter()
        .map(|&r| (r, r.powf(rad.sigma) * tail_mass(rad, r).unwrap_or(f64::INFINITY)))
        .collect();
    let tail_part = &vals[vals.len() * 3 / 4..];
    let (r0, g0) = tail_part[0];
    let (r1, g1) = tail_part[tail_part.len() - 1];
    let j3 = if g1 == 0.0 {
        1.0
    } else if !g1.is_finite() || g0 <= 0.0 {
        -1.0
    } else {
        let slope = (g1 / g0).ln() / (r1 / r0).ln();
        if slope < -1e-3 {
            -slope
        } else if slope <= 1e-3 {
            1.0 + grid.tolerance - g1
        } else {
            -slope
        }
    };
    checks.push(check("j3_tail_decay", j3));
    ValidationReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_unit_value() {
        let k = JumpKernel::isotropic(2, 1.0).unwrap();
        assert_eq!(k.eval_n(&[0.3, -2.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert!(k.eval_n(&[0.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn cone_kernel_vanishes_off_cone() {
        let k = JumpKernel::axial_cone(2, 1.0, 0.99).unwrap();
        assert_eq!(k.eval_n(&[0.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(k.eval_n(&[0.0, 0.0], &[-2.0, 0.0]).unwrap(), 2f64.powi(-3));
    }

    #[test]
    fn half_angle_values() {
        assert!((half_angle_from_chordal(2f64.sqrt()).unwrap() - PI / 2.0).abs() < 1e-12);
        assert!((half_angle_from_chordal(1.0).unwrap() - PI / 3.0).abs() < 1e-12);
        assert!(half_angle_from_chordal(0.0).is_err());
        assert!(half_angle_from_chordal(2.5).is_err());
    }

    #[test]
    fn cone_system_invariants_enforced() {
        let axis = UnitVector::new(&[1.0, 0.0]).unwrap();
        let cap = Cap::new(axis, 0.5).unwrap();
        assert!(ConeSystem::new(vec![], 1.0, vec![]).is_err());
        assert!(ConeSystem::new(vec![cap], 0.0, vec![1.0]).is_err());
        assert!(ConeSystem::new(vec![cap], 1.0, vec![0.5]).is_err());
        assert!(UnitVector::new(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn union_rule_measures_caps() {
        let a = UnitVector::new(&[1.0, 0.0]).unwrap();
        let b = UnitVector::normalized(&[1.0, 0.2]).unwrap();
        let cones = ConeSystem::new(vec![Cap::new(a, 0.4).unwrap(), Cap::new(b, 0.4).unwrap()], 1.0, vec![1.0, 2.0]).unwrap();
        let rule = cones.angular_rule(AngularResolution::default());
        // Independent measure: fine midpoint sum over the circle.
        let n = 2_000_000;
        let exact: f64 = (0..n)
            .map(|k| {
                let phi = 2.0 * PI * (k as f64 + 0.5) / n as f64;
                if cones.in_union(&[phi.cos(), phi.sin(), 0.0]) {
                    2.0 * PI / n as f64
                } else {
                    0.0
                }
            })
            .sum();
        assert!((rule.total_weight() - exact).abs() < 1e-5);
    }

    #[test]
    fn step_shell_matches_quadrature() {
        let r = RadialProfile::new(2, 0.7, SlowlyVarying::LogPower(1.5), TailRule::Step { at: 1.5, factor: 3.0 }, 1.0, 0.1).unwrap();
        let closed = r.shell(0.2, 4.0).unwrap();
        let quad = adaptive(&mut |t: f64| r.j(t) * t, 0.2, 1.0, 0.0, 1e-13).unwrap()
            + adaptive(&mut |t: f64| r.j(t) * t, 1.0, 1.5, 0.0, 1e-13).unwrap()
            + adaptive(&mut |t: f64| r.j(t) * t, 1.5, 4.0, 0.0, 1e-13).unwrap();
        assert!((closed - quad).abs() < 1e-10 * quad);
    }

    #[test]
    fn exponential_tail_decreasing_mass() {
        let r = RadialProfile::new(3, 1.2, SlowlyVarying::Constant(1.0), TailRule::Exponential { rate: 2.0 }, 1.0, 0.5).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..10 {
            let m = tail_mass(&r, 0.5 * k as f64).unwrap();
            assert!(m < prev);
            prev = m;
            let fast = sphere_area(3) * r.radial_tail(0.5 * k as f64).unwrap();
            assert!((m - fast).abs() < 1e-9 * m);
        }
    }
}
