use std::f64::consts::PI;

use jumplab_core::estimators::{
    estimate_exit_stats, estimate_ks_ratio, evaluate_harmonic, extrapolate_epsilon, fit_harnack_constants,
    harnack_holds, harnack_report, holder_fit, restricted_harnack_check, signed_harnack_scan,
};
use jumplab_core::geometry::lambda_max;
use jumplab_core::{Ball, Error, ExteriorData, JumpKernel, Region, SimConfig};
use statrs::function::gamma::gamma;

fn outside(center: [f64; 3], radius: f64) -> ExteriorData {
    ExteriorData::SignedBump { positive: vec![(Region::BallComplement { center, radius }, 1.0)], negative: vec![] }
}

/// E^0 τ for n(h) = |h|^{−d−α} in the unit ball.
fn exit_time_at_centre(d: usize, alpha: f64) -> f64 {
    let df = d as f64;
    let classical = gamma(df / 2.0) / (2f64.powf(alpha) * gamma(1.0 + alpha / 2.0) * gamma((df + alpha) / 2.0));
    let symbol = PI.powf(df / 2.0) * gamma(1.0 - alpha / 2.0) / (alpha * 2f64.powf(alpha - 1.0) * gamma((df + alpha) / 2.0));
    classical / symbol
}

#[test]
fn exit_stats_in_two_dimensions() {
    let k = JumpKernel::isotropic(2, 1.0).unwrap();
    let ball = Ball::new(&[0.0, 0.0], 1.0);
    let times = [0.05, 0.1, 0.2];
    let run = |eps: f64| estimate_exit_stats(&k, &[0.0; 3], &ball, &times, 20_000, &SimConfig::new(eps, 7).unwrap());
    let (coarse, fine) = (run(0.04).unwrap(), run(0.02).unwrap());
    let x = extrapolate_epsilon(&coarse.tau, &fine.tau, 1.0, 0.04);
    let oracle = exit_time_at_centre(2, 1.0);
    assert!((x.mean - oracle).abs() < 3.0 * x.std_error, "{x:?} vs {oracle}");
    assert!(!fine.degenerate);
    // Distribution function rows are non-decreasing in t.
    for w in fine.survival.windows(2) {
        assert!(w[0].probability.mean <= w[1].probability.mean);
    }
    assert!((fine.normalized_mean - fine.tau.mean).abs() < 1e-15);
}

#[test]
fn exit_stats_scale_like_r_to_alpha() {
    let k = JumpKernel::isotropic(2, 1.5).unwrap();
    let mut means = Vec::new();
    for r in [0.25, 1.0] {
        let ball = Ball::new(&[0.0, 0.0], r);
        let cfg = SimConfig::new(0.03 * r, 3).unwrap();
        let s = estimate_exit_stats(&k, &[0.0; 3], &ball, &[], 8_000, &cfg).unwrap();
        means.push((s.normalized_mean, s.tau.std_error / r.powf(1.5)));
    }
    let gap = (means[0].0 - means[1].0).abs();
    assert!(gap < 3.0 * (means[0].1.hypot(means[1].1)), "{means:?}");
}

#[test]
fn exit_stats_boundary_and_outside() {
    let k = JumpKernel::isotropic(2, 1.0).unwrap();
    let ball = Ball::new(&[0.0, 0.0], 1.0);
    let cfg = SimConfig::new(0.05, 1).unwrap();
    let s = estimate_exit_stats(&k, &[1.0, 0.0, 0.0], &ball, &[0.1], 100, &cfg).unwrap();
    assert!(s.degenerate && s.tau.mean == 0.0);
    assert!(matches!(estimate_exit_stats(&k, &[1.5, 0.0, 0.0], &ball, &[0.1], 100, &cfg), Err(Error::Domain(_))));
}

#[test]
fn harmonic_constant_and_exit_law() {
    let k = JumpKernel::isotropic(1, 1.0).unwrap();
    let domain = Ball::new(&[0.0], 1.0);
    let cfg = SimConfig::new(0.01, 5).unwrap();
    let one = evaluate_harmonic(&k, &domain, &ExteriorData::Constant { value: 1.0 }, &[0.0; 3], 200, &cfg).unwrap();
    assert_eq!((one.mean, one.std_error), (1.0, 0.0));

    // Cauchy process from the centre of (−1, 1): P(|X_τ| > R) = (2/π) asin(1/R).
    let p = evaluate_harmonic(&k, &domain, &outside([0.0; 3], 2.0), &[0.0; 3], 40_000, &cfg).unwrap();
    let oracle = 2.0 / PI * 0.5f64.asin();
    assert!((p.mean - oracle).abs() < 3.0 * p.std_error + 0.01, "{p:?} vs {oracle}");
    assert!(evaluate_harmonic(&k, &domain, &outside([0.0; 3], 2.0), &[2.0, 0.0, 0.0], 10, &cfg).is_err());
}

#[test]
fn hitting_rows() {
    let k = JumpKernel::isotropic(2, 1.0).unwrap();
    let lam = lambda_max(PI / 2.0);
    let x0 = [0.0; 3];
    let start = [0.9 * lam * 0.5, 0.0, 0.0];
    let cfg = SimConfig::new(0.005, 9).unwrap();
    let rows = estimate_ks_ratio(&k, &x0, 0.5, lam, &start, &[0.0, 0.25, 1.0], 4_000, &cfg).unwrap();
    assert_eq!(rows[0].probability.mean, 0.0);
    assert!(rows[1].probability.mean > 0.0);
    assert!(rows[1].probability.mean <= rows[2].probability.mean);
    assert!(rows.iter().skip(1).all(|r| r.ratio > 0.0));
    assert!(matches!(
        estimate_ks_ratio(&k, &x0, 0.5, 1.01 * lam, &start, &[0.5], 10, &cfg),
        Err(Error::Domain(_))
    ));
}

#[test]
fn harnack_report_for_positive_data() {
    let k = JumpKernel::isotropic(2, 1.0).unwrap();
    let cfg = SimConfig::new(0.01, 2).unwrap();
    let x0 = [0.0; 3];
    let g = outside(x0, 1.0);
    let rep = harnack_report(&k, &x0, 0.2, &g, 8, 16, 2_000, &cfg).unwrap();
    assert!(!rep.flagged);
    let q = rep.quotient.unwrap();
    assert!((1.0..3.0).contains(&q), "{rep:?}");
    assert_eq!(rep.tail_term, 0.0);
    assert!(rep.c2.is_none());

    let neg = ExteriorData::Constant { value: -1.0 };
    assert!(matches!(harnack_report(&k, &x0, 0.2, &neg, 4, 4, 10, &cfg), Err(Error::InvalidInput(_))));
    assert!(matches!(harnack_report(&k, &x0, 0.3, &g, 4, 4, 10, &cfg), Err(Error::Domain(_))));
}

#[test]
fn signed_scan_needs_the_tail_term() {
    let k = JumpKernel::isotropic(2, 1.0).unwrap();
    let x0 = [0.0; 3];
    let r = 0.1;
    let positive = vec![(Region::Annulus { center: x0, inner: 0.4, outer: 0.8 }, 1.0)];
    let negative = vec![(Region::Ball { center: [0.6, 0.0, 0.0], radius: 0.15 }, 1.0)];
    let amps = [0.0, 1.0, 8.0, 64.0];
    let cfg = SimConfig::new(0.005, 12).unwrap();
    let rows = signed_harnack_scan(&k, &x0, r, &positive, &negative, &amps, 8, 16, 2_000, &cfg).unwrap();
    let (c1, c2) = fit_harnack_constants(&rows, 1.5).unwrap();
    assert!(c1 >= 1.5);
    // Constants fitted on one seed hold on an independent one.
    let other = SimConfig::new(0.005, 13).unwrap();
    let check = signed_harnack_scan(&k, &x0, r, &positive, &negative, &amps, 8, 16, 2_000, &other).unwrap();
    assert!(check.iter().all(|row| harnack_holds(row, c1, c2)), "{check:?}");
    // For large amplitude the infimum turns negative while the supremum stays
    // positive, so no multiplicative bound alone can hold.
    let big = check.last().unwrap();
    assert!(big.inf < 0.0 && !harnack_holds(big, c1, 0.0), "{check:?}");
    // Negative part inside B(x₀, 4r) is rejected.
    let bad = vec![(Region::Ball { center: [0.2, 0.0, 0.0], radius: 0.05 }, 1.0)];
    assert!(signed_harnack_scan(&k, &x0, r, &positive, &bad, &amps, 4, 4, 10, &cfg).is_err());
}

#[test]
fn restricted_check_vacuous_off_cone() {
    let k = JumpKernel::axial_cone(2, 1.0, 0.95).unwrap();
    let x0 = [0.0; 3];
    let lam = lambda_max(0.95f64.acos()) / 2.0;
    let h = ExteriorData::SignedBump {
        positive: vec![(Region::Ball { center: [0.0, 3.0, 0.0], radius: 0.5 }, 1.0)],
        negative: vec![],
    };
    let cfg = SimConfig::new(0.001, 4).unwrap();
    let rep = restricted_harnack_check(&k, &x0, 1.0, lam, &h, &x0, &x0, 500, &cfg).unwrap();
    assert!(rep.vacuous && rep.ratio.is_none());
    assert!(restricted_harnack_check(&k, &x0, 1.0, 1.5 * lam, &h, &x0, &x0, 10, &cfg).is_err());
    let inside = ExteriorData::SignedBump {
        positive: vec![(Region::Ball { center: [1.0, 0.0, 0.0], radius: 0.2 }, 1.0)],
        negative: vec![],
    };
    assert!(restricted_harnack_check(&k, &x0, 1.0, lam, &inside, &x0, &x0, 10, &cfg).is_err());
}

#[test]
fn restricted_check_on_cone() {
    let k = JumpKernel::axial_cone(2, 1.0, 0.95).unwrap();
    let x0 = [0.0; 3];
    let lam = lambda_max(0.95f64.acos()) / 2.0;
    let h = ExteriorData::SignedBump {
        positive: vec![(Region::Ball { center: [3.0, 0.0, 0.0], radius: 0.5 }, 1.0)],
        negative: vec![],
    };
    let cfg = SimConfig::new(0.002, 4).unwrap();
    let rep = restricted_harnack_check(&k, &x0, 1.0, lam, &h, &x0, &x0, 4_000, &cfg).unwrap();
    assert!(!rep.vacuous);
    assert!(rep.large.mean > 0.0 && rep.small.mean > 0.0, "{rep:?}");
}

#[test]
fn holder_fit_on_constant_data_is_degenerate() {
    let k = JumpKernel::isotropic(2, 1.0).unwrap();
    let cfg = SimConfig::new(0.05, 1).unwrap();
    let g = ExteriorData::Constant { value: 1.0 };
    let e = holder_fit(&k, &[0.0; 3], 1.0, &g, &[0.5, 0.25, 0.125], 4, 50, &cfg).unwrap_err();
    assert!(matches!(e, Error::Estimation(_)));
    assert!(holder_fit(&k, &[0.0; 3], 1.0, &g, &[0.25, 0.5, 0.125], 4, 50, &cfg).is_err());
}

#[test]
fn holder_fit_positive_exponent() {
    let k = JumpKernel::isotropic(2, 1.0).unwrap();
    let cfg = SimConfig::new(0.005, 6).unwrap();
    let g = ExteriorData::IndicatorOfBall { center: [2.5, 0.0, 0.0], radius: 0.5 };
    let fit = holder_fit(&k, &[0.0; 3], 1.0, &g, &[0.5, 0.25, 0.125, 0.0625], 6, 4_000, &cfg).unwrap();
    if let Some(beta) = fit.beta {
        assert!(beta > 0.0, "{fit:?}");
    }
    let first = &fit.scales[0];
    assert!(first.usable && first.osc > 0.0);
}
