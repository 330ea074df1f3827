use jumplab_core::regvar::{karamata_ratio_large, karamata_ratio_small, monotone_envelope};
use jumplab_core::{
    validate_kernel, Cap, ConeSystem, JumpKernel, Modulator, RadialProfile, SlowlyVarying, TailRule, UnitVector,
    ValidationGrid,
};
use proptest::prelude::*;

fn kernel_with(radial: RadialProfile, modulator: Modulator) -> JumpKernel {
    let d = radial.dim;
    let mut e1 = vec![0.0; d];
    e1[0] = 1.0;
    let cap = Cap::from_cos(UnitVector::new(&e1).unwrap(), 0.8).unwrap();
    JumpKernel::new(ConeSystem::new(vec![cap], 0.5, vec![2.0]).unwrap(), radial, modulator).unwrap()
}

#[test]
fn pure_power_kernel_passes_every_check() {
    for d in 1..=3 {
        for alpha in [0.5, 1.0, 1.5] {
            let k = JumpKernel::isotropic(d, alpha).unwrap();
            let rep = validate_kernel(&k, &ValidationGrid::default());
            assert!(rep.all_passed(), "d={d} α={alpha}: {rep:?}");
        }
    }
}

#[test]
fn tail_exponent_above_alpha_fails_only_tail_check() {
    let radial = RadialProfile::new(2, 1.0, SlowlyVarying::Constant(1.0), TailRule::Power, 1.0, 1.5).unwrap();
    let k = kernel_with(radial, Modulator::ConstantOne);
    let rep = validate_kernel(&k, &ValidationGrid::default());
    assert!(!rep.get("j3_tail_decay").unwrap().passed);
    let others: Vec<_> = rep.checks.iter().filter(|c| c.name != "j3_tail_decay").collect();
    assert!(others.iter().all(|c| c.passed), "{rep:?}");
}

#[test]
fn step_tail_beyond_kappa_fails_comparability() {
    let bad = RadialProfile::new(2, 1.0, SlowlyVarying::Constant(1.0), TailRule::Step { at: 4.0, factor: 3.0 }, 2.0, 0.5)
        .unwrap();
    let rep = validate_kernel(&kernel_with(bad, Modulator::ConstantOne), &ValidationGrid::default());
    assert!(!rep.get("j2_comparability").unwrap().passed);
    let ok = RadialProfile::new(2, 1.0, SlowlyVarying::Constant(1.0), TailRule::Step { at: 4.0, factor: 3.0 }, 4.0, 0.5)
        .unwrap();
    let rep = validate_kernel(&kernel_with(ok, Modulator::ConstantOne), &ValidationGrid::default());
    assert!(rep.get("j2_comparability").unwrap().passed, "{rep:?}");
}

#[test]
fn modulated_log_kernel_passes() {
    let radial =
        RadialProfile::new(2, 1.0, SlowlyVarying::LogPower(1.0), TailRule::Exponential { rate: 1.0 }, 1.0, 0.5).unwrap();
    for m in [
        Modulator::Sinusoidal { frequency: vec![1.0, 0.5] },
        Modulator::Patchwise { cell: 0.5, values: vec![0.0, 0.3, 1.0] },
    ] {
        let rep = validate_kernel(&kernel_with(radial.clone(), m), &ValidationGrid::default());
        assert!(rep.all_passed(), "{rep:?}");
    }
}

#[test]
fn cone_kernel_is_exact() {
    let k = JumpKernel::axial_cone(2, 1.0, 0.9).unwrap();
    for t in [0.01, 0.5, 3.0] {
        for phi in [0.0f64, 0.3, 0.45, std::f64::consts::PI - 0.2] {
            let h = [t * phi.cos(), t * phi.sin()];
            let v = k.eval_n(&[0.2, -0.7], &h).unwrap();
            let norm = (h[0] * h[0] + h[1] * h[1]).sqrt();
            let expect = if phi.cos().abs() >= 0.9 { norm.powf(-3.0) } else { 0.0 };
            assert_eq!(v, expect, "t={t} φ={phi}");
        }
    }
}

#[test]
fn karamata_log_power_closed_forms() {
    let ell = SlowlyVarying::LogPower(1.0);
    for r in [1e-1, 1e-3, 1e-6] {
        let l = (std::f64::consts::E / r).ln();
        let small = karamata_ratio_small(&ell, 0.0, r).unwrap().ratio;
        assert!((small / (1.0 + 1.0 / l) - 1.0).abs() < 1e-8, "r={r}: {small}");
        // ∫_r^1 u^{-2} log(e/u) du = −log(r)/r.
        let large = karamata_ratio_large(&ell, 2.0, r).unwrap().ratio;
        assert!((large / (1.0 - 1.0 / l) - 1.0).abs() < 1e-8, "r={r}: {large}");
    }
    let c = SlowlyVarying::Constant(3.0);
    assert!((karamata_ratio_small(&c, 0.5, 1e-4).unwrap().ratio - 1.0).abs() < 1e-10);
    assert!(karamata_ratio_small(&c, -1.0, 0.1).is_err());
    assert!(karamata_ratio_large(&c, 1.0, 0.1).is_err());
}

#[test]
fn envelope_dominates_and_is_monotone() {
    // A large log power makes the profile non-monotone near 1.
    let radial = RadialProfile::new(1, 0.5, SlowlyVarying::LogPower(5.0), TailRule::Power, 1.0, 0.25).unwrap();
    let ts: Vec<f64> = (1..=60).map(|k| 10f64.powf(-3.0 * k as f64 / 60.0)).collect();
    for &t in &ts {
        let e = monotone_envelope(&radial, t).unwrap();
        assert!(e >= radial.j(t) * (1.0 - 1e-12));
    }
    let mut last = 0.0;
    for &t in &ts {
        let e = monotone_envelope(&radial, t).unwrap();
        assert!(e >= last * (1.0 - 1e-12));
        last = e;
    }
}

proptest! {
    #[test]
    fn kernel_is_even_bit_exactly(x in prop::array::uniform2(-5.0f64..5.0), h in prop::array::uniform2(-3.0f64..3.0),
                                  w in prop::array::uniform2(-4.0f64..4.0)) {
        prop_assume!(h[0].abs() + h[1].abs() > 1e-9);
        let radial = RadialProfile::new(2, 1.3, SlowlyVarying::LogPower(0.5), TailRule::Truncated { cutoff: 2.0 }, 1.0, 0.5).unwrap();
        let k = kernel_with(radial, Modulator::Sinusoidal { frequency: w.to_vec() });
        let a = k.eval_n(&x, &h).unwrap();
        let b = k.eval_n(&x, &[-h[0], -h[1]]).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
        let t = (h[0] * h[0] + h[1] * h[1]).sqrt();
        let xi = [h[0] / t, h[1] / t, 0.0];
        let j = k.radial.j(t);
        prop_assert!(k.cones.k1(&xi) * j <= a && a <= k.cones.k2(&xi) * j);
    }
}
