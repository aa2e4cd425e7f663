mod common;

use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;

use trapcal_core::estimators::{
    estimate_arcsin, estimate_arctan2, estimate_arctan2_offset, estimate_settings, rpe_combine, EstimatorTag,
    PhaseEstimate, SettingsTag,
};
use trapcal_core::pulse::{
    drives_with_phases, evolve, ideal_probability, method_a_phases, run_drives, run_sequence, total_phase,
    Apparatus, NoiseModel, SequenceSpec, Timing,
};
use trapcal_core::protocol::abstract_method_a;
use trapcal_core::resonator::{dropout_depth, envelope, ResonatorParams, SourceSwitch};
use trapcal_core::trap::{
    displacement_change, equilibrium_displacement, sensitivity_direction, wrap_phase, IonSpecies, SensitivityMethod,
    StrayField, SubsetParity, Vec3,
};

use common::{beam, setting};

fn field() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-10.0f64..10.0).prop_map(|[x, y, z]| Vec3::new(x, y, z))
}

fn secular() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(0.1f64..3.0)
}

fn direction() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-1.0f64..1.0)
        .prop_filter("nonzero", |v| v.iter().map(|c| c * c).sum::<f64>() > 1e-3)
        .prop_map(|[x, y, z]| Vec3::new(x, y, z))
}

fn phases(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-PI..PI, n)
}

proptest! {
    #[test]
    fn displacement_is_linear(e1 in field(), e2 in field(), a in -3.0f64..3.0, mhz in secular()) {
        let ion = IonSpecies::strontium_88();
        let s = setting("A", mhz);
        let r = |e: Vec3| equilibrium_displacement(&ion, &s, &StrayField::new(e).unwrap());
        let lhs = r(e1 * a + e2);
        let rhs = r(e1) * a + r(e2);
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (lhs.norm() + rhs.norm()).max(1e-30));
    }

    #[test]
    fn displacement_change_is_antisymmetric(e in field(), ma in secular(), mb in secular()) {
        let ion = IonSpecies::strontium_88();
        let (a, b) = (setting("A", ma), setting("B", mb));
        let f = StrayField::new(e).unwrap();
        prop_assert_eq!(displacement_change(&ion, &a, &b, &f), -displacement_change(&ion, &b, &a, &f));
    }

    #[test]
    fn method_c_without_beta_scales_method_a(ka in direction(), kb in direction(), m_alpha in 1u32..16, ma in secular(), mb in secular()) {
        prop_assume!(ma.iter().zip(&mb).any(|(x, y)| (x - y).abs() > 1e-3));
        let (alpha, beta) = (beam(ka), beam(kb));
        let (a, b) = (setting("A", ma), setting("B", mb));
        for parity in [SubsetParity::Plus, SubsetParity::Minus] {
            let c = SensitivityMethod::C { alpha: &alpha, beta: &beta, m_alpha, m_beta: 0, parity };
            let dc = sensitivity_direction(c, &a, &b).unwrap().raw;
            let da = sensitivity_direction(SensitivityMethod::A { beam: &alpha }, &a, &b).unwrap().raw;
            prop_assert!((dc - da * m_alpha as f64).norm() <= 1e-12 * dc.norm());
        }
    }

    #[test]
    fn method_b_with_one_beam_is_blind(k in direction(), ma in secular(), mb in secular()) {
        let alpha = beam(k);
        let method = SensitivityMethod::B { alpha: &alpha, beta: &alpha };
        prop_assert_eq!(method.effective_k(), Vec3::zeros());
        prop_assert!(sensitivity_direction(method, &setting("A", ma), &setting("B", mb)).is_err());
    }
}

fn drives_strategy() -> impl Strategy<Value = (u32, Vec<f64>, Vec<f64>)> {
    (1u32..=32).prop_flat_map(|m| (Just(m), phases(m as usize + 1), phases(m as usize + 1)))
}

proptest! {
    #[test]
    fn evolution_is_unitary(
        (m, phis, thetas) in drives_strategy(),
        even in 0.7f64..1.3,
        odd in 0.7f64..1.3,
        detuning in -5e3f64..5e3,
    ) {
        let mut seq = abstract_method_a(m, &Timing::default()).unwrap();
        seq.set_control_phases(&thetas).unwrap();
        let drives = drives_with_phases(&seq, &phis).unwrap();
        let noise = NoiseModel::ideal().with_area_errors(even, odd).with_detuning(detuning);
        let state = evolve(&drives, seq.inter_pulse_wait, &noise);
        prop_assert!((state.purity_radius() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simulation_matches_closed_form((m, phis, thetas) in drives_strategy()) {
        let mut seq = abstract_method_a(m, &Timing::default()).unwrap();
        seq.set_control_phases(&thetas).unwrap();
        let drives = drives_with_phases(&seq, &phis).unwrap();
        let p = run_drives(&drives, seq.inter_pulse_wait, &NoiseModel::ideal());
        let (phi_t, theta_t) = total_phase(&phis, &thetas, m).unwrap();
        prop_assert!((p - ideal_probability(phi_t, theta_t, 1.0)).abs() < 1e-9);
    }

    #[test]
    fn fringe_has_m_periods(m in 1u32..=16, offset in 0.0f64..0.01) {
        let seq = abstract_method_a(m, &Timing::default()).unwrap();
        let n = 4000;
        let values: Vec<f64> = (0..n)
            .map(|i| {
                let phi = -PI + offset + 1e-4 + 2.0 * PI * i as f64 / n as f64;
                let drives = drives_with_phases(&seq, &method_a_phases(m, phi)).unwrap();
                run_drives(&drives, seq.inter_pulse_wait, &NoiseModel::ideal()) - 0.5
            })
            .collect();
        let crossings = (0..n).filter(|&i| values[i].signum() != values[(i + 1) % n].signum()).count();
        prop_assert_eq!(crossings, 2 * m as usize);
    }

    #[test]
    fn method_b_ignores_common_phase(
        (m, _, thetas) in drives_strategy(),
        ka in direction(),
        kb in direction(),
        e in field(),
        common in -10.0f64..10.0,
    ) {
        let build = |shift: f64| {
            Apparatus::new(IonSpecies::strontium_88())
                .with_setting(setting("A", [1.5, 1.5, 1.0]))
                .with_beam("a", beam(ka).with_phase_offset(0.3 + shift))
                .with_beam("b", beam(kb).with_phase_offset(-1.1 + shift))
        };
        let seq = SequenceSpec::method_b(m, "a", "b", "A", &thetas, &Timing::default()).unwrap();
        let f = StrayField::new(e * 1e-3).unwrap();
        let p0 = run_sequence(&seq, &build(0.0), &f, &NoiseModel::ideal()).unwrap();
        let p1 = run_sequence(&seq, &build(common), &f, &NoiseModel::ideal()).unwrap();
        prop_assert!((p0 - p1).abs() < 1e-12);
    }
}

fn probability() -> impl Strategy<Value = f64> {
    0.0f64..=1.0
}

proptest! {
    #[test]
    fn estimates_stay_in_range(a in probability(), b in probability(), c in 0.05f64..=1.0, half in 1u32..8) {
        if let Ok(e) = estimate_arctan2(a, b) {
            prop_assert!((-PI..PI).contains(&e.value));
        }
        if let Ok(e) = estimate_arctan2_offset(a, b) {
            prop_assert!((-PI..PI).contains(&e.value));
        }
        if let Ok(e) = estimate_arcsin(a, b, c) {
            prop_assert!((-FRAC_PI_2..=FRAC_PI_2).contains(&e.value));
        }
        for tag in [SettingsTag::I, SettingsTag::II, SettingsTag::III] {
            if let Ok(e) = estimate_settings(a, b, 2 * half, tag) {
                prop_assert!((-PI..PI).contains(&e.value));
            }
        }
    }

    #[test]
    fn arctan2_ignores_contrast(phi in -PI..PI, c in 1e-3f64..=1.0) {
        let p = |theta: f64, c: f64| 0.5 * (1.0 + c * (phi + theta).cos());
        let full = estimate_arctan2(p(-FRAC_PI_2, 1.0), p(0.0, 1.0)).unwrap().value;
        let reduced = estimate_arctan2(p(-FRAC_PI_2, c), p(0.0, c)).unwrap().value;
        prop_assert!(wrap_phase(full - reduced).abs() < 1e-12 / c);
        prop_assert!(wrap_phase(full - phi).abs() < 1e-12);
    }
}

fn rpe_passes(phi: f64, j_max: u32) -> Vec<PhaseEstimate> {
    (0..j_max)
        .map(|i| {
            let m = 1u32 << i;
            PhaseEstimate::new(wrap_phase(m as f64 * phi), PI, EstimatorTag::Arctan2).scaled(m)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn rpe_recovers_noiseless_phase(phi in -PI..PI, j_max in 1u32..=12) {
        let est = rpe_combine(&rpe_passes(phi, j_max)).unwrap();
        prop_assert!(wrap_phase(est - phi).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn rpe_branch_is_stable(phi in -PI..PI, j_max in 2u32..=10, pick in 0u32..10, frac in -0.999f64..0.999) {
        let j = pick % j_max;
        let bound = PI / f64::powi(2.0, j as i32 + 1);
        let delta = frac * bound;
        let mut passes = rpe_passes(phi, j_max);
        passes[j as usize].value += delta;
        let est = rpe_combine(&passes).unwrap();
        let expected = if j + 1 == j_max { delta } else { 0.0 };
        prop_assert!((wrap_phase(est - phi) - expected).abs() < 1e-9);
    }
}

fn switch_strategy() -> impl Strategy<Value = (f64, f64, SourceSwitch)> {
    (1e-6f64..1e-4, 0.0f64..1.5, -PI..PI, 0.0f64..1e-4, 1e-6f64..5e-4).prop_map(|(tau, a2, dphi, ts, len)| {
        (tau, dphi, SourceSwitch::new(1.0, a2, dphi, ts, ts + len).unwrap())
    })
}

proptest! {
    #[test]
    fn envelope_is_continuous((tau, _, sw) in switch_strategy()) {
        let p = ResonatorParams::new(tau).unwrap();
        prop_assert_eq!(envelope(&p, &sw, sw.t_switch).re, sw.a1);
        prop_assert_eq!(envelope(&p, &sw, sw.t_switch).im, 0.0);
        let eps = 1e-9 * tau;
        for t in [sw.t_switch, sw.t_revert] {
            let before = envelope(&p, &sw, t - eps);
            let at = envelope(&p, &sw, t);
            prop_assert!((before - at).norm() < 1e-6);
        }
        let limit = envelope(&p, &sw, sw.t_revert - 1e-15 * tau);
        let at = envelope(&p, &sw, sw.t_revert);
        prop_assert!((limit - at).norm() < 1e-12);
    }

    #[test]
    fn envelope_magnitude_is_symmetric_in_phase((tau, dphi, sw) in switch_strategy(), frac in 0.0f64..3.0) {
        let p = ResonatorParams::new(tau).unwrap();
        let mirrored = SourceSwitch { delta_phi: -dphi, ..sw };
        let t = sw.t_switch + frac * (sw.t_revert - sw.t_switch);
        let a = envelope(&p, &sw, t).norm();
        let b = envelope(&p, &mirrored, t).norm();
        prop_assert!((a - b).abs() <= 1e-15 * a.max(1.0));
    }

    #[test]
    fn dropout_deepens_with_phase(tau in 1e-6f64..1e-4, a2 in 0.0f64..1.5, x in 0.0..PI, y in 0.0..PI) {
        let p = ResonatorParams::new(tau).unwrap();
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let sw = |d| SourceSwitch::new(1.0, a2, d, 0.0, 1.0).unwrap();
        let d_lo = dropout_depth(&p, &sw(lo), 0.0).min_abs;
        let d_hi = dropout_depth(&p, &sw(hi), 0.0).min_abs;
        prop_assert!(d_hi <= d_lo + 1e-12);
    }
}
