//! Fixtures shared by the benchmarks.

use std::f64::consts::FRAC_1_SQRT_2;

use trapcal_core::compensation::{ElectrodeGeometry, LoopConfig, Observable};
use trapcal_core::protocol::Estimator;
use trapcal_core::pulse::{Apparatus, NoiseModel, SequenceSpec, Timing};
use trapcal_core::trap::{IonSpecies, LaserBeam, TrapSetting, Vec3};

const WAVELENGTH: f64 = 674e-9;

fn setting(label: &str, mhz: [f64; 3]) -> TrapSetting {
    TrapSetting::from_hz(label, mhz.map(|f| f * 1e6)).expect("valid frequencies")
}

fn beam(direction: Vec3) -> LaserBeam {
    LaserBeam::along(direction, WAVELENGTH).expect("valid beam")
}

/// Sr-88 with settings `A` (1.5 MHz radial) and `B` (0.6 MHz radial), and
/// beams `h`, `v` along the lab horizontal and vertical.
pub fn apparatus() -> Apparatus {
    Apparatus::new(IonSpecies::strontium_88())
        .with_setting(setting("A", [1.5, 1.5, 1.0]))
        .with_setting(setting("B", [0.6, 0.6, 1.0]))
        .with_beam("h", beam(Vec3::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0)))
        .with_beam("v", beam(Vec3::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0)))
}

pub fn observable(beam_id: &str, m: u32, shots: u64) -> Observable {
    Observable {
        name: beam_id.into(),
        template: SequenceSpec::method_a(m, beam_id, "A", "B", &vec![0.0; m as usize + 1], &Timing::default())
            .expect("valid sequence"),
        estimator: Estimator::Arctan2,
        shots,
    }
}

/// Two observables, two electrodes along `x` and `y`, projection noise only.
pub fn radial_loop(shots: u64) -> LoopConfig {
    LoopConfig {
        apparatus: apparatus(),
        observables: vec![observable("h", 1, shots), observable("v", 1, shots)],
        geometry: ElectrodeGeometry::new(&[Vec3::x(), Vec3::y()]).expect("two electrodes"),
        noise: NoiseModel::projection_only(),
        rf: None,
    }
}
