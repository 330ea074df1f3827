//! Slowly varying functions: the built-in family, Karamata integral ratios,
//! and the non-increasing envelope of t ↦ ℓ(t)/t^{d+α}.

use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};
use crate::kernel::RadialProfile;
use crate::numint::{adaptive, to_zero};

/// Closed family of slowly varying functions on (0, 2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlowlyVarying {
    /// ℓ ≡ c.
    Constant(f64),
    /// ℓ(t) = (log(e/t))^p.
    LogPower(f64),
    /// Pointwise product of the factors.
    Product(Vec<SlowlyVarying>),
}

impl Default for SlowlyVarying {
    fn default() -> Self {
        SlowlyVarying::Constant(1.0)
    }
}

impl SlowlyVarying {
    pub fn check(&self) -> Result<()> {
        match self {
            SlowlyVarying::Constant(c) if !(c.is_finite() && *c > 0.0) => {
                invalid(format!("constant slowly varying factor must be positive, got {c}"))
            }
            SlowlyVarying::LogPower(p) if !p.is_finite() => invalid("log power exponent must be finite"),
            SlowlyVarying::Product(fs) if fs.is_empty() => invalid("empty product of slowly varying factors"),
            SlowlyVarying::Product(fs) => fs.iter().try_for_each(|f| f.check()),
            _ => Ok(()),
        }
    }

    /// Value at `t` without domain checks (callers keep t in (0, 2)).
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match self {
            SlowlyVarying::Constant(c) => *c,
            SlowlyVarying::LogPower(p) => (1.0 - t.ln()).powf(*p),
            SlowlyVarying::Product(fs) => fs.iter().map(|f| f.value(t)).product(),
        }
    }

    /// `Some(c)` when the function is identically `c`.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            SlowlyVarying::Constant(c) => Some(*c),
            SlowlyVarying::LogPower(p) if *p == 0.0 => Some(1.0),
            SlowlyVarying::LogPower(_) => None,
            SlowlyVarying::Product(fs) => fs.iter().map(|f| f.as_constant()).product(),
        }
    }

    /// Upper bound of ℓ on `[a, b] ⊂ (0, 1]`; exact for single factors since
    /// every log power is monotone.
    pub fn sup_on(&self, a: f64, b: f64) -> f64 {
        match self {
            SlowlyVarying::Constant(c) => *c,
            SlowlyVarying::LogPower(p) => {
                if *p >= 0.0 {
                    self.value(a)
                } else {
                    self.value(b)
                }
            }
            SlowlyVarying::Product(fs) => fs.iter().map(|f| f.sup_on(a, b)).product(),
        }
    }
}

/// ℓ(t) with the domain check t ∈ (0, 2).
pub fn eval_ell(spec: &SlowlyVarying, t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 2.0) {
        return domain(format!("slowly varying function evaluated at t = {t}, outside (0, 2)"));
    }
    Ok(spec.value(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KaramataReport {
    pub r: f64,
    pub ratio: f64,
    pub beta: f64,
}

/// ∫₀^r u^β ℓ(u) du divided by r^{1+β} ℓ(r)/(1+β).
pub fn karamata_ratio_small(spec: &SlowlyVarying, beta1: f64, r: f64) -> Result<KaramataReport> {
    if beta1 <= -1.0 {
        return domain(format!("exponent {beta1} ≤ −1 makes the integral diverge"));
    }
    if !(r > 0.0 && r <= 1.0) {
        return domain(format!("scale r = {r} outside (0, 1]"));
    }
    spec.check()?;
    let integral = to_zero(&mut |u: f64| u.powf(beta1) * spec.value(u), r, 1e-15)?;
    let asym = r.powf(1.0 + beta1) * spec.value(r) / (1.0 + beta1);
    Ok(KaramataReport { r, ratio: integral / asym, beta: beta1 })
}

/// ∫_r^1 u^{−β} ℓ(u) du divided by r^{1−β} ℓ(r)/(β−1).
pub fn karamata_ratio_large(spec: &SlowlyVarying, beta2: f64, r: f64) -> Result<KaramataReport> {
    if beta2 <= 1.0 {
        return domain(format!("exponent {beta2} ≤ 1 breaks the large-exponent regime"));
    }
    if !(r > 0.0 && r < 1.0) {
        return domain(format!("scale r = {r} outside (0, 1)"));
    }
    spec.check()?;
    // u = e^s flattens the power singularity at the lower end.
    let mut g = |s: f64| ((1.0 - beta2) * s).exp() * spec.value(s.exp());
    let integral = adaptive(&mut g, r.ln(), 0.0, 0.0, 1e-13)?;
    let asym = r.powf(1.0 - beta2) * spec.value(r) / (beta2 - 1.0);
    Ok(KaramataReport { r, ratio: integral / asym, beta: beta2 })
}

fn envelope_on_grid(radial: &RadialProfile, t: f64, points: usize) -> f64 {
    let lt = t.ln();
    (0..points)
        .map(|k| {
            let s = if k + 1 == points { 1.0 } else { (lt * (1.0 - k as f64 / (points - 1) as f64)).exp() };
            radial.j(s.max(t))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// φ(t) = max_{s∈[t,1]} ℓ(s)/s^{d+α}: a non-increasing majorant that agrees
/// with the raw profile wherever the latter is already decreasing.
pub fn monotone_envelope(radial: &RadialProfile, t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return domain(format!("envelope argument t = {t} outside (0, 1]"));
    }
    let mut points = 4096;
    let mut prev = envelope_on_grid(radial, t, points);
    for _ in 0..4 {
        points *= 4;
        let next = envelope_on_grid(radial, t, points);
        let settled = (next - prev).abs() <= 1e-6 * next.abs();
        prev = next;
        if settled {
            break;
        }
    }
    Ok(prev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_power_value() {
        let t = (-13.0f64).exp();
        assert!((eval_ell(&SlowlyVarying::LogPower(1.0), t).unwrap() - 14.0).abs() < 1e-12);
        assert!(eval_ell(&SlowlyVarying::Constant(3.0), 2.0).is_err());
    }

    #[test]
    fn product_multiplies() {
        let p = SlowlyVarying::Product(vec![SlowlyVarying::Constant(2.0), SlowlyVarying::LogPower(2.0)]);
        let t: f64 = 0.3;
        assert!((p.value(t) - 2.0 * (1.0 - t.ln()).powi(2)).abs() < 1e-12);
        assert_eq!(p.as_constant(), None);
    }

    #[test]
    fn sup_bounds_values() {
        for p in [-2.0, -0.5, 0.5, 3.0] {
            let l = SlowlyVarying::LogPower(p);
            let s = l.sup_on(0.01, 0.5);
            for k in 0..100 {
                let t = 0.01 + (0.5 - 0.01) * k as f64 / 99.0;
                assert!(l.value(t) <= s * (1.0 + 1e-14));
            }
        }
    }

    #[test]
    fn rejects_bad_exponents() {
        assert!(karamata_ratio_small(&SlowlyVarying::Constant(1.0), -1.0, 0.1).is_err());
        assert!(karamata_ratio_large(&SlowlyVarying::Constant(1.0), 1.0, 0.1).is_err());
    }
}
