use crate::error::Result;
use crate::trap::{equilibrium_displacement, IonSpecies, LaserBeam, RfDriveModel, StrayField, TrapSetting, Vec3};

/// RF drive model evaluated at one amplitude scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfOperatingPoint {
    pub model: RfDriveModel,
    pub scale: f64,
}

impl RfOperatingPoint {
    pub fn new(model: RfDriveModel, scale: f64) -> Result<Self> {
        model.secular_from_scale(scale)?;
        Ok(Self { model, scale })
    }

    pub fn setting(&self) -> TrapSetting {
        self.model
            .secular_from_scale(self.scale)
            .expect("scale validated at construction")
    }
}

/// Excess-micromotion amplitude `u_i = (q_i / 2) r_i` (m), with `r` the
/// equilibrium displacement under `field`.
pub fn micromotion_amplitude(ion: &IonSpecies, op: &RfOperatingPoint, field: &StrayField) -> Vec3 {
    let r = equilibrium_displacement(ion, &op.setting(), field);
    op.model.mathieu_q(op.scale).component_mul(&r) * 0.5
}

/// Signed `k . u / 2`; linear in the field.
pub fn sideband_amplitude(beam: &LaserBeam, ion: &IonSpecies, op: &RfOperatingPoint, field: &StrayField) -> f64 {
    beam.k().dot(&micromotion_amplitude(ion, op, field)) * 0.5
}

/// Sideband-to-carrier Rabi ratio `|k . u| / 2` seen by `beam`.
pub fn sideband_signal(beam: &LaserBeam, ion: &IonSpecies, op: &RfOperatingPoint, field: &StrayField) -> f64 {
    sideband_amplitude(beam, ion, op, field).abs()
}

/// Oscillating dipole field (V/m) that would drive the same micromotion:
/// `m Omega^2 u / q`.
pub fn residual_rf_vector(ion: &IonSpecies, op: &RfOperatingPoint, field: &StrayField) -> Vec3 {
    let omega = op.model.rf_drive_freq();
    micromotion_amplitude(ion, op, field) * (omega * omega / ion.charge_to_mass())
}

/// Magnitude of [`residual_rf_vector`].
pub fn residual_rf_field(ion: &IonSpecies, op: &RfOperatingPoint, field: &StrayField) -> f64 {
    residual_rf_vector(ion, op, field).norm()
}
