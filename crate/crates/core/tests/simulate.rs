use std::f64::consts::PI;

use jumplab_core::estimators::extrapolate_epsilon;
use jumplab_core::region::Region;
use jumplab_core::simulate::{
    envelope_rate, hitting_before_exit, levy_system_paths, run_replicas, simulate_until_exit, stream, Jump,
    RateMode, StopRule,
};
use jumplab_core::{
    Ball, Cap, ConeSystem, JumpKernel, JumpSampler, MCEstimate, Modulator, RadialProfile, SimConfig, SlowlyVarying,
    TailRule, UnitVector,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::gamma;

fn two_cap_kernel() -> JumpKernel {
    let c1 = Cap::from_cos(UnitVector::new(&[1.0, 0.0]).unwrap(), 0.95).unwrap();
    let c2 = Cap::from_cos(UnitVector::new(&[0.0, 1.0]).unwrap(), 0.9).unwrap();
    let cones = ConeSystem::new(vec![c1, c2], 1.0, vec![1.0, 2.0]).unwrap();
    JumpKernel::new(cones, RadialProfile::pure_power(2, 1.0).unwrap(), Modulator::ConstantOne).unwrap()
}

/// E^x τ for the process with n(h) = |h|^{−d−α} in B(0, r): the classical
/// formula for symbol |ω|^α divided by the symbol constant of this kernel.
fn exit_time_oracle(d: usize, alpha: f64, r: f64, x2: f64) -> f64 {
    let df = d as f64;
    let classical = gamma(df / 2.0) * (r * r - x2).powf(alpha / 2.0)
        / (2f64.powf(alpha) * gamma(1.0 + alpha / 2.0) * gamma((df + alpha) / 2.0));
    let symbol = PI.powf(df / 2.0) * gamma(1.0 - alpha / 2.0)
        / (alpha * 2f64.powf(alpha - 1.0) * gamma((df + alpha) / 2.0));
    classical / symbol
}

#[test]
fn isotropic_envelope_rate() {
    let k = JumpKernel::isotropic(2, 1.0).unwrap();
    let rate = envelope_rate(&k, 0.1).unwrap();
    assert!((rate - 20.0 * PI).abs() < 1e-9 * rate);
    assert!(envelope_rate(&k, 0.0).is_err());
    let s = JumpSampler::new(&k, 0.1).unwrap();
    assert!((s.rate() - rate).abs() < 1e-9 * rate);
}

#[test]
fn cone_envelope_is_cap_fraction() {
    let ct: f64 = 0.8;
    let k = JumpKernel::axial_cone(2, 1.0, ct).unwrap();
    let iso = envelope_rate(&JumpKernel::isotropic(2, 1.0).unwrap(), 0.2).unwrap();
    let rate = envelope_rate(&k, 0.2).unwrap();
    let fraction = 4.0 * ct.acos() / (2.0 * PI);
    assert!((rate / iso - fraction).abs() < 1e-9);

    let k3 = JumpKernel::axial_cone(3, 1.0, ct).unwrap();
    let iso3 = envelope_rate(&JumpKernel::isotropic(3, 1.0).unwrap(), 0.2).unwrap();
    let fraction3 = 2.0 * 2.0 * PI * (1.0 - ct) / (4.0 * PI);
    assert!((envelope_rate(&k3, 0.2).unwrap() / iso3 - fraction3).abs() < 1e-9);
}

#[test]
fn truncated_tail_beyond_cutoff_is_degenerate() {
    let radial = RadialProfile::new(2, 1.0, SlowlyVarying::Constant(1.0), TailRule::Truncated { cutoff: 2.0 }, 1.0, 0.5)
        .unwrap();
    let cap = Cap::new(UnitVector::new(&[1.0, 0.0]).unwrap(), 2.0).unwrap();
    let k = JumpKernel::new(ConeSystem::new(vec![cap], 1.0, vec![1.0]).unwrap(), radial, Modulator::ConstantOne)
        .unwrap();
    assert_eq!(envelope_rate(&k, 2.5).unwrap(), 0.0);
    assert!(JumpSampler::new(&k, 2.5).is_err());
}

#[test]
fn flat_kernel_never_thins() {
    let k = two_cap_kernel();
    let s = JumpSampler::new(&k, 0.05).unwrap();
    let mut rng = stream(1, 0, 0);
    for _ in 0..20_000 {
        match s.sample(&[0.3, 0.1, 0.0], &mut rng).unwrap() {
            Jump::Real(h) => assert!(h[0].hypot(h[1]) > 0.05),
            Jump::Fictitious => panic!("fictitious jump with n equal to the envelope"),
        }
    }
}

#[test]
fn modulated_kernel_thins_and_respects_cutoff() {
    let cap = Cap::new(UnitVector::new(&[1.0, 0.0]).unwrap(), 2.0).unwrap();
    let cones = ConeSystem::new(vec![cap], 0.5, vec![2.0]).unwrap();
    let m = Modulator::Sinusoidal { frequency: vec![3.0, 1.0] };
    let k = JumpKernel::new(cones, RadialProfile::pure_power(2, 1.0).unwrap(), m).unwrap();
    let s = JumpSampler::new(&k, 0.05).unwrap();
    let mut rng = stream(2, 0, 0);
    let mut fict = 0;
    for _ in 0..20_000 {
        match s.sample(&[0.2, -0.4, 0.0], &mut rng).unwrap() {
            Jump::Real(h) => assert!(h[0].hypot(h[1]) > 0.05),
            Jump::Fictitious => fict += 1,
        }
    }
    assert!(fict > 0);
}

#[test]
fn cap_frequencies_match_weights() {
    let k = two_cap_kernel();
    let s = JumpSampler::new(&k, 0.1).unwrap();
    let mut rng = stream(3, 0, 0);
    let n = 100_000;
    let mut in2 = 0usize;
    for _ in 0..n {
        let h = s.propose(&mut rng);
        let t = h[0].hypot(h[1]);
        if (h[1] / t).abs() >= 0.9 {
            in2 += 1;
        }
    }
    let w1 = 1.0 * 4.0 * 0.95f64.acos();
    let w2 = 2.0 * 4.0 * 0.9f64.acos();
    let p = w2 / (w1 + w2);
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!(((in2 as f64 / n as f64) - p).abs() < 3.0 * se);
}

/// χ² over 4 radial × 4 angular cells against closed-form/quadrature masses.
fn chi_square_p(k: &JumpKernel, eps: f64, seed: u64) -> f64 {
    let s = JumpSampler::new(k, eps).unwrap();
    let radii = [eps, 2.0 * eps, 5.0 * eps, 1.0, f64::INFINITY];
    let rad_mass: Vec<f64> = radii.windows(2).map(|w| w[0].powf(-1.0) - w[1].powf(-1.0)).collect();
    // Angular cells: quarter turns offset so that no cap boundary is special.
    let cells = 4;
    let mut ang_mass = vec![0.0; cells];
    let m = 400_000;
    for i in 0..m {
        let phi = 2.0 * PI * (i as f64 + 0.5) / m as f64;
        let xi = [phi.cos(), phi.sin(), 0.0];
        let cell = ((phi + 0.3) / (PI / 2.0)).floor() as usize % cells;
        ang_mass[cell] += k.angular(&[0.0; 3], &xi) * 2.0 * PI / m as f64;
    }
    let total: f64 = rad_mass.iter().sum::<f64>() * ang_mass.iter().sum::<f64>();

    let n = 100_000;
    let mut counts = [0usize; 16];
    let mut rng = stream(seed, 7, 0);
    let mut got = 0;
    while got < n {
        if let Jump::Real(h) = s.sample(&[0.0; 3], &mut rng).unwrap() {
            let t = h[0].hypot(h[1]);
            let phi = h[1].atan2(h[0]).rem_euclid(2.0 * PI);
            let rc = radii.windows(2).position(|w| t > w[0] && t <= w[1]).unwrap();
            let ac = ((phi + 0.3) / (PI / 2.0)).floor() as usize % cells;
            counts[rc * cells + ac] += 1;
            got += 1;
        }
    }
    let mut chi2 = 0.0;
    let mut dof = 0;
    for rc in 0..4 {
        for ac in 0..cells {
            let e = n as f64 * rad_mass[rc] * ang_mass[ac] / total;
            if e > 0.0 {
                chi2 += (counts[rc * cells + ac] as f64 - e).powi(2) / e;
                dof += 1;
            }
        }
    }
    1.0 - ChiSquared::new((dof - 1) as f64).unwrap().cdf(chi2)
}

#[test]
fn sampler_goodness_of_fit() {
    let p_iso = chi_square_p(&JumpKernel::isotropic(2, 1.0).unwrap(), 0.05, 11);
    assert!(p_iso > 0.001, "isotropic p = {p_iso}");
    let p_cone = chi_square_p(&two_cap_kernel(), 0.05, 12);
    assert!(p_cone > 0.001, "two-cap p = {p_cone}");
}

#[test]
fn slowly_varying_and_exponential_radial_laws() {
    // Empirical CDF of |h| against shell-mass ratios.
    for radial in [
        RadialProfile::new(1, 0.8, SlowlyVarying::LogPower(2.0), TailRule::Power, 1.0, 0.4).unwrap(),
        RadialProfile::new(1, 1.2, SlowlyVarying::Constant(1.0), TailRule::Exponential { rate: 3.0 }, 1.0, 0.6).unwrap(),
        RadialProfile::new(1, 1.2, SlowlyVarying::Constant(1.0), TailRule::Step { at: 2.0, factor: 5.0 }, 5.0, 0.6)
            .unwrap(),
    ] {
        let cap = Cap::new(UnitVector::new(&[1.0]).unwrap(), 2.0).unwrap();
        let k = JumpKernel::new(ConeSystem::new(vec![cap], 1.0, vec![1.0]).unwrap(), radial.clone(), Modulator::ConstantOne)
            .unwrap();
        let eps = 0.01;
        let s = JumpSampler::new(&k, eps).unwrap();
        let mut rng = stream(4, 0, 0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| s.propose(&mut rng)[0].abs()).collect();
        let total = radial.shell(eps, f64::INFINITY).unwrap();
        for q in [0.02, 0.1, 0.5, 1.5, 2.5, 4.0] {
            let p = radial.shell(eps, q).unwrap() / total;
            let emp = draws.iter().filter(|t| **t <= q).count() as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt().max(1e-6);
            assert!((emp - p).abs() < 4.0 * se, "{radial:?}: q={q} emp={emp} p={p}");
        }
    }
}

#[test]
fn start_outside_exits_immediately() {
    let k = JumpKernel::isotropic(2, 1.0).unwrap();
    let s = JumpSampler::new(&k, 0.1).unwrap();
    let cfg = SimConfig::new(0.1, 0).unwrap();
    let ball = Ball::new(&[0.0, 0.0], 1.0);
    let e = simulate_until_exit(&s, &[2.0, 0.0, 0.0], &ball, &cfg, &mut stream(0, 0, 0), None).unwrap();
    assert_eq!(e.tau, 0.0);
    assert_eq!(e.x_post, [2.0, 0.0, 0.0]);
}

#[test]
fn exit_is_reproducible_and_consistent() {
    let k = JumpKernel::axial_cone(2, 1.2, 0.8).unwrap();
    let s = JumpSampler::new(&k, 0.02).unwrap();
    let cfg = SimConfig::new(0.02, 9).unwrap();
    let ball = Ball::new(&[0.0, 0.0], 0.5);
    let mut log = Vec::new();
    let a = simulate_until_exit(&s, &[0.1, 0.0, 0.0], &ball, &cfg, &mut stream(9, 1, 5), Some(&mut log)).unwrap();
    let b = simulate_until_exit(&s, &[0.1, 0.0, 0.0], &ball, &cfg, &mut stream(9, 1, 5), None).unwrap();
    assert_eq!(a, b);
    assert!(!a.censored && ball.contains(&a.x_pre) && !ball.contains(&a.x_post));
    assert_eq!(log.len() as u64, a.n_real_jumps + a.n_fictitious);
    assert_eq!(log.last().unwrap().time, a.tau);
}

#[test]
fn censoring_is_reported() {
    let k = JumpKernel::isotropic(1, 1.0).unwrap();
    let s = JumpSampler::new(&k, 0.01).unwrap();
    let mut cfg = SimConfig::new(0.01, 0).unwrap();
    cfg.max_events = 3;
    let ball = Ball::new(&[0.0], 10.0);
    let e = simulate_until_exit(&s, &[0.0; 3], &ball, &cfg, &mut stream(0, 0, 0), None).unwrap();
    assert!(e.censored);
}

#[test]
fn one_dimensional_exit_time_matches_closed_form() {
    let oracle = exit_time_oracle(1, 1.0, 1.0, 0.0);
    assert!((oracle - 1.0 / PI).abs() < 1e-12);
    let k = JumpKernel::isotropic(1, 1.0).unwrap();
    let ball = Ball::new(&[0.0], 1.0);
    let n = 40_000;
    let run = |eps: f64| {
        let s = JumpSampler::new(&k, eps).unwrap();
        let cfg = SimConfig::new(eps, 21).unwrap();
        let taus = run_replicas(n, cfg.seed, (eps * 1e6) as u64, |_, rng| {
            simulate_until_exit(&s, &[0.0; 3], &ball, &cfg, rng, None).map(|e| e.tau)
        })
        .unwrap();
        MCEstimate::from_values(&taus, 0).unwrap()
    };
    let (coarse, fine) = (run(0.02), run(0.01));
    // Truncation inflates the exit time; the bias decays like ε log(1/ε).
    assert!(coarse.mean > oracle && fine.mean < coarse.mean);
    let x = extrapolate_epsilon(&coarse, &fine, 1.0, 0.02);
    assert!((x.mean - oracle).abs() < 3.0 * x.std_error, "{x:?} vs {oracle}");
}

#[test]
fn hitting_trivial_cases() {
    let k = JumpKernel::isotropic(2, 1.0).unwrap();
    let s = JumpSampler::new(&k, 0.05).unwrap();
    let cfg = SimConfig::new(0.05, 0).unwrap();
    let container = Ball::new(&[0.0, 0.0], 1.0);
    let target = [Ball::new(&[0.0, 0.0], 0.1)];
    let h = hitting_before_exit(&s, &[0.05, 0.0, 0.0], &target, &container, &cfg, &mut stream(0, 0, 0)).unwrap();
    assert!(h.hit && h.sample.tau == 0.0);
    for i in 0..100 {
        let h = hitting_before_exit(&s, &[0.5, 0.0, 0.0], &[], &container, &cfg, &mut stream(0, 0, i)).unwrap();
        assert!(!h.hit);
    }
}

#[test]
fn levy_system_vanishes_off_cone() {
    let k = JumpKernel::axial_cone(2, 1.0, 0.9).unwrap();
    let a = Region::Ball { center: [0.0; 3], radius: 0.5 };
    let b = Region::Ball { center: [0.0, 5.0, 0.0], radius: 0.5 };
    let cfg = SimConfig::new(0.5, 3).unwrap();
    let rep =
        levy_system_paths(&k, &[0.0; 3], &a, &b, StopRule::FixedTime { t: 1.0 }, 500, &cfg, RateMode::Exact).unwrap();
    assert_eq!(rep.jumps.mean, 0.0);
    assert_eq!(rep.compensator.mean, 0.0);
    let overlap = Region::Ball { center: [0.3, 0.0, 0.0], radius: 0.5 };
    assert!(levy_system_paths(&k, &[0.0; 3], &a, &overlap, StopRule::FixedTime { t: 1.0 }, 5, &cfg, RateMode::Exact)
        .is_err());
}

#[test]
fn levy_system_identity_isotropic() {
    let k = JumpKernel::isotropic(2, 1.0).unwrap();
    let a = Region::Ball { center: [0.0; 3], radius: 0.5 };
    let b = Region::Annulus { center: [0.0; 3], inner: 2.0, outer: 3.0 };
    let cfg = SimConfig::new(0.5, 4).unwrap();
    let rep = levy_system_paths(&k, &[0.0; 3], &a, &b, StopRule::FixedTime { t: 1.0 }, 20_000, &cfg, RateMode::Grid {
        points: 33,
    })
    .unwrap();
    let gap = (rep.jumps.mean - rep.compensator.mean).abs();
    assert!(gap <= 3.0 * (rep.jumps.std_error + rep.compensator.std_error), "{rep:?}");
    assert!(rep.jumps.mean > 0.0);

    // Moving B outward lowers both sides.
    let far = Region::Annulus { center: [0.0; 3], inner: 4.0, outer: 5.0 };
    let rep2 = levy_system_paths(&k, &[0.0; 3], &a, &far, StopRule::FixedTime { t: 1.0 }, 20_000, &cfg, RateMode::Grid {
        points: 33,
    })
    .unwrap();
    assert!(rep2.compensator.mean < rep.compensator.mean);
    assert!(rep2.jumps.mean < rep.jumps.mean);
}
