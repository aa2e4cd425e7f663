//! Independent reference computations checked against the library.

mod common;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;
use rand::Rng;

use trapcal_core::compensation::{
    calibrate_gradient_matrix, closed_loop_run, hybrid_2d_minimize, scan_slopes, solve_voltages, DriftModel,
    ElectrodeGeometry, GradientMatrix, LoopConfig, ScanConfig,
};
use trapcal_core::pulse::{
    drives_with_phases, evolve, ideal_probability, total_phase, NoiseModel, SequenceSpec, Timing,
};
use trapcal_core::protocol::abstract_method_a;
use trapcal_core::rng::{trial_rng, StreamKey};
use trapcal_core::trap::{StrayField, Vec3};
use trapcal_core::Error;

use common::*;

type C2 = Matrix2<Complex64>;

fn pauli() -> [C2; 3] {
    let (o, l, i) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0));
    [C2::new(o, l, l, o), C2::new(o, -i, i, o), C2::new(l, o, o, -l)]
}

/// `exp(-i t H)` with `H = (rabi cos phi sx + rabi sin phi sy + detuning sz) / 2`.
fn propagator(rabi: f64, phase: f64, detuning: f64, t: f64) -> C2 {
    let [sx, sy, sz] = pauli();
    let h = (sx * Complex64::from(rabi * phase.cos()) + sy * Complex64::from(rabi * phase.sin()) + sz * Complex64::from(detuning))
        * Complex64::from(0.5);
    (h * Complex64::new(0.0, -t)).exp()
}

#[test]
fn bloch_evolution_matches_spinor_propagation() {
    let mut rng = trial_rng(1, "spinor", 0);
    for _ in 0..200 {
        let m = rng.random_range(1..=12u32);
        let mut seq = abstract_method_a(m, &Timing::new(8e-6, 20e-6).unwrap()).unwrap();
        let thetas: Vec<f64> = (0..=m).map(|_| rng.random_range(-PI..PI)).collect();
        seq.set_control_phases(&thetas).unwrap();
        for p in seq.pulses.iter_mut() {
            p.detuning = rng.random_range(-2e4..2e4);
            p.area_error = rng.random_range(0.8..1.2);
        }
        let phis: Vec<f64> = (0..=m).map(|_| rng.random_range(-PI..PI)).collect();
        let noise = NoiseModel::ideal()
            .with_area_errors(rng.random_range(0.9..1.1), rng.random_range(0.9..1.1))
            .with_detuning(rng.random_range(-1e4..1e4));

        let mut psi = Vector2::new(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
        for (i, (p, phi)) in seq.pulses.iter().zip(&phis).enumerate() {
            let j = i + 1;
            let area = p.area * p.area_error * noise.area_factor(j);
            let u = propagator(area / p.duration, phi + p.control_phase, p.detuning + noise.detuning, p.duration);
            psi = u * psi;
            if j <= m as usize {
                psi = propagator(0.0, 0.0, noise.detuning, seq.inter_pulse_wait) * psi;
            }
        }
        let expected = psi[0].norm_sqr();

        let drives = drives_with_phases(&seq, &phis).unwrap();
        let got = evolve(&drives, seq.inter_pulse_wait, &noise).excitation_probability();
        assert!((got - expected).abs() < 1e-9, "M={m}: {got} vs {expected}");
    }
}

#[test]
fn dephasing_between_pulses_scales_contrast() {
    // transverse decay only during the M waits: C = exp(-M wait / T2)
    let timing = Timing::default();
    let t2 = 400e-6;
    let mut noise = NoiseModel::ideal().with_t2(t2);
    noise.dephase_during_pulses = false;
    let mut rng = trial_rng(2, "contrast", 0);
    for m in [1u32, 2, 5, 8, 16] {
        let seq = abstract_method_a(m, &timing).unwrap();
        let contrast = (-(m as f64) * timing.wait / t2).exp();
        for _ in 0..20 {
            let phis: Vec<f64> = (0..=m).map(|_| rng.random_range(-PI..PI)).collect();
            let (phi_t, theta_t) = total_phase(&phis, &seq.control_phases(), m).unwrap();
            let p = evolve(&drives_with_phases(&seq, &phis).unwrap(), seq.inter_pulse_wait, &noise)
                .excitation_probability();
            assert!((p - ideal_probability(phi_t, theta_t, contrast)).abs() < 1e-12);
        }
    }
}

/// `d phi / d V_j = M (q/m) sum_i k_i (1/w_Ai^2 - 1/w_Bi^2) G_ij`.
fn analytic_gradient(cfg: &LoopConfig) -> DMatrix<f64> {
    let ion = &cfg.apparatus.ion;
    let a = cfg.apparatus.setting("A").unwrap().compliance();
    let b = cfg.apparatus.setting("B").unwrap().compliance();
    DMatrix::from_fn(cfg.observables.len(), cfg.geometry.n_electrodes(), |i, j| {
        let obs = &cfg.observables[i];
        let k = cfg.apparatus.beam(&obs.template.pulses[0].beam_id).unwrap().k();
        let d = k.component_mul(&(a - b)) * ion.charge_to_mass();
        obs.template.m as f64 * d.dot(&cfg.geometry.column(j))
    })
}

#[test]
fn calibrated_matrix_matches_chain_rule() {
    let mut cfg = radial_loop(NoiseModel::ideal(), 0);
    cfg.geometry = ElectrodeGeometry::new(&[Vec3::new(1.0, 0.2, 0.0), Vec3::new(-0.3, 0.8, 0.1)]).unwrap();
    cfg.observables[1] = method_a_observable("v", "v", 2, 0);
    let scan = ScanConfig {
        amplitude: 0.5,
        points: 7,
        base_field: StrayField::new(Vec3::new(0.2, -0.1, 0.3)).unwrap(),
    };
    let gm = calibrate_gradient_matrix(&cfg, &scan, &mut trial_rng(3, "cal", 0)).unwrap();
    let expected = analytic_gradient(&cfg);
    for (got, want) in gm.matrix.iter().zip(expected.iter()) {
        assert!((got / want - 1.0).abs() < 1e-6, "{got} vs {want}");
    }
    assert!(gm.residuals.iter().all(|r| *r < 1e-9));
    assert_eq!(gm.settings, vec!["A".to_string(), "B".to_string()]);
}

#[test]
fn calibration_rejects_degenerate_scans() {
    let cfg = radial_loop(NoiseModel::ideal(), 0);
    let zero = ScanConfig {
        amplitude: 0.0,
        points: 5,
        base_field: StrayField::zero(),
    };
    let mut rng = trial_rng(4, "cal", 0);
    assert_eq!(calibrate_gradient_matrix(&cfg, &zero, &mut rng), Err(Error::RankDeficient));
    let wide = ScanConfig {
        amplitude: 40.0,
        points: 9,
        base_field: StrayField::zero(),
    };
    assert!(matches!(
        calibrate_gradient_matrix(&cfg, &wide, &mut rng),
        Err(Error::RangeOverflow { .. })
    ));
    let few = ScanConfig { points: 2, ..zero };
    assert!(calibrate_gradient_matrix(&cfg, &few, &mut rng).is_err());
}

#[test]
fn noisy_calibration_of_a_flat_observable_is_rejected() {
    let mut cfg = radial_loop(NoiseModel::projection_only(), 50);
    cfg.apparatus = apparatus([1.5, 1.5, 1.0], [1.5, 1.5, 1.0]);
    let scan = ScanConfig {
        amplitude: 2.0,
        points: 11,
        base_field: StrayField::zero(),
    };
    for trial in 0..20 {
        let mut rng = trial_rng(10, "flat", trial);
        assert_eq!(calibrate_gradient_matrix(&cfg, &scan, &mut rng), Err(Error::RankDeficient));
    }
    let good = radial_loop(NoiseModel::projection_only(), 50);
    for trial in 0..20 {
        let gm = calibrate_gradient_matrix(&good, &scan, &mut trial_rng(11, "noisy", trial)).unwrap();
        assert!(gm.slope_errors.iter().all(|e| *e > 0.0));
    }
}

#[test]
fn solved_voltages_reproduce_phases() {
    let mut rng = trial_rng(5, "solve", 0);
    for _ in 0..100 {
        let m = DMatrix::from_fn(3, 3, |i, j| rng.random_range(-1.0..1.0) + if i == j { 3.0 } else { 0.0 });
        let phi = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let v = solve_voltages(&GradientMatrix::from_matrix(m.clone()), &phi, None).unwrap().voltages;
        assert!((&m * v - &phi).amax() < 1e-10);
    }
}

#[test]
fn one_update_zeroes_the_field() {
    let cfg = radial_loop(NoiseModel::ideal(), 0);
    let gm = GradientMatrix::from_matrix(analytic_gradient(&cfg));
    let initial = StrayField::new(Vec3::new(1.3, -0.7, 0.0)).unwrap();
    let trace = closed_loop_run(55.0, 11.0, &cfg, &gm, &DriftModel::none(), &initial, &StreamKey::new(6, "loop")).unwrap();
    assert_eq!(trace.samples.len(), 5);
    assert!((trace.samples[0].residual - initial.vector()).norm() < 1e-15);
    for s in &trace.samples[1..] {
        assert!(s.residual.norm() < 1e-9, "{}", s.residual.norm());
        assert!((s.e_est - initial.vector()).norm() < 1e-9);
    }
}

#[test]
fn loop_is_deterministic() {
    let cfg = radial_loop(NoiseModel::projection_only(), 50);
    let gm = GradientMatrix::from_matrix(analytic_gradient(&cfg));
    let drift = DriftModel::new(1e-3, 1e-3).unwrap();
    let initial = StrayField::new(Vec3::new(0.5, 0.5, 0.0)).unwrap();
    let run = |seed| closed_loop_run(110.0, 11.0, &cfg, &gm, &drift, &initial, &StreamKey::new(seed, "loop")).unwrap();
    assert_eq!(run(7), run(7));
    assert_ne!(run(7), run(8));
}

fn axial_loop(rf_axial_mhz: f64) -> LoopConfig {
    let model = drive_model([1.5, 1.6, 1.0], rf_axial_mhz);
    LoopConfig {
        apparatus: driven_apparatus(&model, 0.5),
        observables: vec![method_a_observable("z", "z", 1, 0)],
        geometry: ElectrodeGeometry::new(&[Vec3::z()]).unwrap(),
        noise: NoiseModel::ideal(),
        rf: None,
    }
}

#[test]
fn axial_loop_reduces_axial_field() {
    let cfg = axial_loop(0.4);
    let scan = ScanConfig {
        amplitude: 0.5,
        points: 5,
        base_field: StrayField::zero(),
    };
    let gm = calibrate_gradient_matrix(&cfg, &scan, &mut trial_rng(8, "axial", 0)).unwrap();
    assert!(gm.matrix[(0, 0)].abs() > 0.0);
    let initial = StrayField::new(Vec3::new(0.0, 0.0, 2.0)).unwrap();
    let trace = closed_loop_run(33.0, 11.0, &cfg, &gm, &DriftModel::none(), &initial, &StreamKey::new(8, "axial")).unwrap();
    assert!(trace.samples.last().unwrap().residual.z.abs() < 1e-9);
}

#[test]
fn axial_observable_is_flat_without_rf_axial_confinement() {
    let cfg = axial_loop(0.0);
    let scan = ScanConfig {
        amplitude: 0.5,
        points: 5,
        base_field: StrayField::zero(),
    };
    let mut rng = trial_rng(9, "axial", 0);
    let gm = scan_slopes(&cfg, &scan, &mut rng).unwrap();
    assert_eq!(gm.matrix[(0, 0)], 0.0);
    assert_eq!(calibrate_gradient_matrix(&cfg, &scan, &mut rng), Err(Error::RankDeficient));
}

fn split(field: &Vec3) -> (f64, f64) {
    (field.dot(&horizontal()), field.dot(&vertical()))
}

#[test]
fn hybrid_field_along_beam_needs_interferometry_only() {
    let cfg = hybrid_config(NoiseModel::ideal());
    let initial = StrayField::new(horizontal() * 1.5).unwrap();
    let r = hybrid_2d_minimize(&cfg, &initial, &StreamKey::new(10, "hybrid")).unwrap();
    assert!(r.converged);
    assert_eq!(r.rounds, 1);
    assert!(r.final_field.norm() < 1e-4, "{:?}", r.final_field);
}

#[test]
fn hybrid_field_across_beam_needs_sideband_only() {
    let cfg = hybrid_config(NoiseModel::ideal());
    let initial = StrayField::new(vertical() * 1.5).unwrap();
    let r = hybrid_2d_minimize(&cfg, &initial, &StreamKey::new(11, "hybrid")).unwrap();
    assert!(r.converged);
    let (h, v) = split(&r.final_field);
    assert!(h.abs() < 1e-6 && v.abs() < 0.05, "{h} {v}");
}

#[test]
fn hybrid_reduces_random_fields_with_projection_noise() {
    let cfg = hybrid_config(NoiseModel::projection_only());
    let mut rng = trial_rng(12, "hybrid-fields", 0);
    for trial in 0..5 {
        let e = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 0.0);
        let r = hybrid_2d_minimize(&cfg, &StrayField::new(e).unwrap(), &StreamKey::new(12, &format!("h{trial}"))).unwrap();
        let (h, v) = split(&r.final_field);
        assert!(r.converged, "trial {trial}: {:?}", r.history.last());
        assert!(h.abs() < 0.5 && v.abs() < 0.5, "trial {trial}: {h} {v}");
    }
}

#[test]
fn hybrid_rejects_blind_geometry() {
    let mut cfg = hybrid_config(NoiseModel::ideal());
    cfg.geometry = ElectrodeGeometry::new(&[Vec3::z(), Vec3::z() * 2.0]).unwrap();
    let r = hybrid_2d_minimize(&cfg, &StrayField::zero(), &StreamKey::new(13, "hybrid"));
    assert!(matches!(r, Err(Error::NoProgress(_))), "{r:?}");

    let mut cfg = hybrid_config(NoiseModel::ideal());
    cfg.geometry = ElectrodeGeometry::new(&[horizontal(), horizontal() * -0.5]).unwrap();
    let r = hybrid_2d_minimize(&cfg, &StrayField::zero(), &StreamKey::new(13, "hybrid"));
    assert!(matches!(r, Err(Error::NoProgress(_))), "{r:?}");
}

#[test]
fn method_c_layout_covers_subsets() {
    use trapcal_core::trap::SubsetParity;
    let timing = Timing::default();
    for (ma, mb) in [(2u32, 2u32), (4, 0), (2, 6), (1, 2), (3, 2)] {
        let m = ma + mb;
        let seq = SequenceSpec::method_c(ma, mb, SubsetParity::Plus, "a", "b", "A", "B", &vec![0.0; m as usize + 1], &timing)
            .unwrap();
        seq.validate().unwrap();
        let area = |beam: &str| -> f64 {
            seq.pulses.iter().filter(|p| p.beam_id == beam).map(|p| p.area).sum()
        };
        assert!((area("a") - ma as f64 * PI).abs() < 1e-12);
        assert!((area("b") - mb as f64 * PI).abs() < 1e-12);
    }
    // the only even pulse has area pi, so a pi/2 subset cannot be formed
    let thetas = [0.0; 3];
    assert!(SequenceSpec::method_c(1, 1, SubsetParity::Plus, "a", "b", "A", "B", &thetas, &timing).is_err());
}
