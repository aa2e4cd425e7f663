#![allow(dead_code)]

use std::f64::consts::FRAC_1_SQRT_2;

use trapcal_core::compensation::{ElectrodeGeometry, HybridConfig, LoopConfig, Observable, RfOperatingPoint};
use trapcal_core::protocol::Estimator;
use trapcal_core::pulse::{Apparatus, NoiseModel, SequenceSpec, Timing};
use trapcal_core::trap::{hz_to_angular, IonSpecies, LaserBeam, RfDriveModel, TrapSetting, Vec3};

pub const WAVELENGTH: f64 = 674e-9;

pub fn setting(label: &str, mhz: [f64; 3]) -> TrapSetting {
    TrapSetting::from_hz(label, mhz.map(|f| f * 1e6)).unwrap()
}

/// Lab horizontal and vertical in the radial eigenmode frame.
pub fn horizontal() -> Vec3 {
    Vec3::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0)
}

pub fn vertical() -> Vec3 {
    Vec3::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0)
}

pub fn beam(direction: Vec3) -> LaserBeam {
    LaserBeam::along(direction, WAVELENGTH).unwrap()
}

/// Ion with settings `A`/`B` and the horizontal (`h`), vertical (`v`) and
/// axial (`z`) beams.
pub fn apparatus(a: [f64; 3], b: [f64; 3]) -> Apparatus {
    Apparatus::new(IonSpecies::strontium_88())
        .with_setting(setting("A", a))
        .with_setting(setting("B", b))
        .with_beam("h", beam(horizontal()))
        .with_beam("v", beam(vertical()))
        .with_beam("z", beam(Vec3::z()))
}

pub fn method_a_observable(name: &str, beam_id: &str, m: u32, shots: u64) -> Observable {
    Observable {
        name: name.into(),
        template: SequenceSpec::method_a(m, beam_id, "A", "B", &vec![0.0; m as usize + 1], &Timing::default())
            .unwrap(),
        estimator: Estimator::Arctan2,
        shots,
    }
}

/// Two-beam radial loop with electrodes pushing along `x` and `y`.
pub fn radial_loop(noise: NoiseModel, shots: u64) -> LoopConfig {
    LoopConfig {
        apparatus: apparatus([1.5, 1.5, 1.0], [0.6, 0.6, 1.0]),
        observables: vec![
            method_a_observable("h", "h", 1, shots),
            method_a_observable("v", "v", 1, shots),
        ],
        geometry: ElectrodeGeometry::new(&[Vec3::x(), Vec3::y()]).unwrap(),
        noise,
        rf: None,
    }
}

pub const RF_DRIVE_HZ: f64 = 18.1e6;

pub fn drive_model(a_mhz: [f64; 3], rf_axial_mhz: f64) -> RfDriveModel {
    RfDriveModel::fit(
        &setting("A", a_mhz),
        hz_to_angular(rf_axial_mhz * 1e6),
        hz_to_angular(RF_DRIVE_HZ),
    )
    .unwrap()
}

/// Settings `A` at the model's operating point and `B` at RF scale `scale_b`.
pub fn driven_apparatus(model: &RfDriveModel, scale_b: f64) -> Apparatus {
    Apparatus::new(IonSpecies::strontium_88())
        .with_setting(model.secular_from_scale(1.0).unwrap().with_label("A"))
        .with_setting(model.secular_from_scale(scale_b).unwrap().with_label("B"))
        .with_beam("h", beam(horizontal()))
        .with_beam("v", beam(vertical()))
        .with_beam("z", beam(Vec3::z()))
}

/// Single horizontal beam: interferometry plus sideband minimization, with
/// electrodes along the radial principal axes.
pub fn hybrid_config(noise: NoiseModel) -> HybridConfig {
    let model = drive_model([1.5, 1.5, 1.0], 0.0);
    HybridConfig {
        apparatus: driven_apparatus(&model, 0.6),
        observable: method_a_observable("h", "h", 1, 200),
        beam_id: "h".into(),
        geometry: ElectrodeGeometry::new(&[Vec3::x(), Vec3::y()]).unwrap(),
        rf: RfOperatingPoint::new(model, 1.0).unwrap(),
        noise,
        sideband_area: 50.0 * std::f64::consts::PI,
        sideband_shots: 200,
        search_halfwidth: 2.0,
        search_steps: 25,
        phase_threshold: 0.15,
        sideband_threshold: 2e-3,
        max_rounds: 12,
    }
}
