//! Static trap physics: equilibrium displacement under a stray field, the
//! spatial laser phase, sensitivity directions of the interferometric methods
//! and a parametric model of secular frequencies versus RF amplitude.
//!
//! All quantities are SI. Axes are the secular eigenmode frame: `x`, `y`
//! radial and `z` axial.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Elementary charge (C), exact in SI.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Unified atomic mass unit (kg), CODATA 2018.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Default pi-time of a carrier pulse (s).
pub const DEFAULT_PI_TIME: f64 = 10e-6;

/// Wraps a phase to `[-pi, pi)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let wrapped = (phase + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if wrapped >= PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

/// Converts a frequency in Hz to an angular frequency in rad/s.
pub fn hz_to_angular(hz: f64) -> f64 {
    TAU * hz
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonSpecies {
    charge: f64,
    mass: f64,
}

impl IonSpecies {
    pub fn new(charge: f64, mass: f64) -> Result<Self> {
        if !(charge > 0.0 && charge.is_finite()) {
            return Err(Error::InvalidParameter(format!("ion charge must be > 0, got {charge}")));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParameter(format!("ion mass must be > 0, got {mass}")));
        }
        Ok(Self { charge, mass })
    }

    /// Singly charged ion of the given mass in atomic mass units.
    pub fn singly_charged(mass_u: f64) -> Result<Self> {
        Self::new(ELEMENTARY_CHARGE, mass_u * ATOMIC_MASS_UNIT)
    }

    /// 88Sr+, taken as exactly 88 u.
    pub fn strontium_88() -> Self {
        Self {
            charge: ELEMENTARY_CHARGE,
            mass: 88.0 * ATOMIC_MASS_UNIT,
        }
    }

    pub fn charge(&self) -> f64 {
        self.charge
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn charge_to_mass(&self) -> f64 {
        self.charge / self.mass
    }
}

/// Secular frequencies (rad/s) of one trap stiffness configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapSetting {
    label: String,
    secular: Vec3,
}

impl TrapSetting {
    pub fn new(label: impl Into<String>, secular: Vec3) -> Result<Self> {
        let label = label.into();
        for (axis, w) in secular.iter().enumerate() {
            if !(*w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "trap setting `{label}`: secular frequency on axis {axis} must be > 0, got {w}"
                )));
            }
        }
        Ok(Self { label, secular })
    }

    /// Builds a setting from frequencies in Hz.
    pub fn from_hz(label: impl Into<String>, hz: [f64; 3]) -> Result<Self> {
        Self::new(label, Vec3::new(hz_to_angular(hz[0]), hz_to_angular(hz[1]), hz_to_angular(hz[2])))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn secular(&self) -> &Vec3 {
        &self.secular
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Compliance `1/omega_i^2` per axis.
    pub fn compliance(&self) -> Vec3 {
        self.secular.map(|w| 1.0 / (w * w))
    }
}

/// Parametric secular-frequency model of a linear Paul trap as a function of
/// the RF amplitude scale `s` (`s = 1` is the calibrated operating point).
///
/// `omega_radial_i(s)^2 = s^2 pseudo_radial_i^2 - static_axial^2 / 2` and
/// `omega_z(s)^2 = static_axial^2 + s^2 rf_axial^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfDriveModel {
    pseudo_radial: [f64; 2],
    static_axial: f64,
    rf_axial: f64,
    rf_drive_freq: f64,
}

impl RfDriveModel {
    pub fn new(pseudo_radial: [f64; 2], static_axial: f64, rf_axial: f64, rf_drive_freq: f64) -> Result<Self> {
        if pseudo_radial.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "pseudopotential radial frequencies must be > 0, got {pseudo_radial:?}"
            )));
        }
        if !(static_axial >= 0.0 && static_axial.is_finite()) {
            return Err(Error::InvalidParameter(format!("static axial frequency must be >= 0, got {static_axial}")));
        }
        if !(rf_axial >= 0.0 && rf_axial.is_finite()) {
            return Err(Error::InvalidParameter(format!("RF axial frequency must be >= 0, got {rf_axial}")));
        }
        if !(rf_drive_freq > 0.0 && rf_drive_freq.is_finite()) {
            return Err(Error::InvalidParameter(format!("RF drive frequency must be > 0, got {rf_drive_freq}")));
        }
        if static_axial == 0.0 && rf_axial == 0.0 {
            return Err(Error::InvalidParameter("model has no axial confinement".into()));
        }
        let model = Self {
            pseudo_radial,
            static_axial,
            rf_axial,
            rf_drive_freq,
        };
        model.secular_from_scale(1.0)?;
        Ok(model)
    }

    /// Fits the model so that `s = 1` reproduces `setting` exactly, with the
    /// given share of axial confinement coming from the RF field.
    pub fn fit(setting: &TrapSetting, rf_axial: f64, rf_drive_freq: f64) -> Result<Self> {
        let w = setting.secular();
        let static_sq = w.z * w.z - rf_axial * rf_axial;
        if static_sq < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "RF axial frequency {rf_axial} exceeds the axial secular frequency {}",
                w.z
            )));
        }
        let half_static_sq = 0.5 * static_sq;
        let px = (w.x * w.x + half_static_sq).sqrt();
        let py = (w.y * w.y + half_static_sq).sqrt();
        Self::new([px, py], static_sq.sqrt(), rf_axial, rf_drive_freq)
    }

    pub fn pseudo_radial(&self) -> [f64; 2] {
        self.pseudo_radial
    }

    pub fn static_axial(&self) -> f64 {
        self.static_axial
    }

    pub fn rf_axial(&self) -> f64 {
        self.rf_axial
    }

    pub fn rf_drive_freq(&self) -> f64 {
        self.rf_drive_freq
    }

    /// Secular frequencies at RF amplitude scale `s`.
    pub fn secular_from_scale(&self, s: f64) -> Result<TrapSetting> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!("RF scale must be > 0, got {s}")));
        }
        let defocus = 0.5 * self.static_axial * self.static_axial;
        let mut secular = Vec3::zeros();
        for axis in 0..2 {
            let p = s * self.pseudo_radial[axis];
            let omega_sq = p * p - defocus;
            if !(omega_sq > 0.0) {
                return Err(Error::IonLost { axis, omega_sq });
            }
            secular[axis] = omega_sq.sqrt();
        }
        let axial_sq = self.static_axial * self.static_axial + s * s * self.rf_axial * self.rf_axial;
        secular.z = axial_sq.sqrt();
        TrapSetting::new(format!("s={s}"), secular)
    }

    /// Pure-pseudopotential frequencies at scale `s`; the axial entry is the
    /// RF contribution only.
    pub fn pseudo_frequencies(&self, s: f64) -> Vec3 {
        Vec3::new(s * self.pseudo_radial[0], s * self.pseudo_radial[1], s * self.rf_axial)
    }

    /// Signed lowest-order Mathieu parameters `2 sqrt(2) omega_pseudo / Omega`.
    ///
    /// The oscillating quadrupole has opposite curvature along `x` and `y`, so
    /// the `y` entry carries a minus sign.
    pub fn mathieu_q(&self, s: f64) -> Vec3 {
        let w = self.pseudo_frequencies(s);
        let scale = 2.0 * std::f64::consts::SQRT_2 / self.rf_drive_freq;
        Vec3::new(scale * w.x, -scale * w.y, scale * w.z)
    }

    /// Smallest scale at which the ion is still radially trapped.
    pub fn loss_scale(&self) -> f64 {
        let p_min = self.pseudo_radial[0].min(self.pseudo_radial[1]);
        (0.5 * self.static_axial * self.static_axial).sqrt() / p_min
    }

    /// Scale at which the radial frequency on `axis` equals `omega`.
    pub fn scale_for_radial(&self, axis: usize, omega: f64) -> f64 {
        let defocus = 0.5 * self.static_axial * self.static_axial;
        ((omega * omega + defocus).sqrt()) / self.pseudo_radial[axis]
    }
}

/// Quasi-static dipole field at the RF null (V/m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrayField(Vec3);

impl StrayField {
    pub fn new(field: Vec3) -> Result<Self> {
        if field.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!("stray field must be finite, got {field:?}")));
        }
        Ok(Self(field))
    }

    pub fn zero() -> Self {
        Self(Vec3::zeros())
    }

    pub fn vector(&self) -> &Vec3 {
        &self.0
    }
}

impl From<StrayField> for Vec3 {
    fn from(f: StrayField) -> Self {
        f.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaserBeam {
    k: Vec3,
    phase_offset: f64,
    nominal_rabi: f64,
}

impl LaserBeam {
    pub fn new(k: Vec3, phase_offset: f64, nominal_rabi: f64) -> Result<Self> {
        if !(k.norm() > 0.0) || k.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!("wavevector must be finite and nonzero, got {k:?}")));
        }
        if !(nominal_rabi > 0.0 && nominal_rabi.is_finite()) {
            return Err(Error::InvalidParameter(format!("nominal Rabi frequency must be > 0, got {nominal_rabi}")));
        }
        if !phase_offset.is_finite() {
            return Err(Error::InvalidParameter("phase offset must be finite".into()));
        }
        Ok(Self {
            k,
            phase_offset: wrap_phase(phase_offset),
            nominal_rabi,
        })
    }

    /// Beam of the given wavelength propagating along `direction`, with the
    /// default pi-time.
    pub fn along(direction: Vec3, wavelength: f64) -> Result<Self> {
        let norm = direction.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidParameter("beam direction must be nonzero".into()));
        }
        if !(wavelength > 0.0) {
            return Err(Error::InvalidParameter(format!("wavelength must be > 0, got {wavelength}")));
        }
        Self::new(direction * (TAU / wavelength / norm), 0.0, PI / DEFAULT_PI_TIME)
    }

    /// Beam in the radial plane at `azimuth` (rad) from `x`, tilted out of the
    /// plane by `elevation` (rad) towards `z`.
    pub fn at_angles(azimuth: f64, elevation: f64, wavelength: f64) -> Result<Self> {
        let dir = Vec3::new(
            elevation.cos() * azimuth.cos(),
            elevation.cos() * azimuth.sin(),
            elevation.sin(),
        );
        Self::along(dir, wavelength)
    }

    pub fn with_phase_offset(mut self, phase_offset: f64) -> Self {
        self.phase_offset = wrap_phase(phase_offset);
        self
    }

    pub fn with_nominal_rabi(mut self, nominal_rabi: f64) -> Result<Self> {
        if !(nominal_rabi > 0.0 && nominal_rabi.is_finite()) {
            return Err(Error::InvalidParameter(format!("nominal Rabi frequency must be > 0, got {nominal_rabi}")));
        }
        self.nominal_rabi = nominal_rabi;
        Ok(self)
    }

    pub fn k(&self) -> &Vec3 {
        &self.k
    }

    pub fn phase_offset(&self) -> f64 {
        self.phase_offset
    }

    pub fn nominal_rabi(&self) -> f64 {
        self.nominal_rabi
    }

    pub fn pi_time(&self) -> f64 {
        PI / self.nominal_rabi
    }
}

/// Equilibrium displacement `r_i = q E_i / (m omega_i^2)` from the RF null.
pub fn equilibrium_displacement(ion: &IonSpecies, setting: &TrapSetting, field: &StrayField) -> Vec3 {
    field.vector().component_mul(&setting.compliance()) * ion.charge_to_mass()
}

/// Change of equilibrium position when the stiffness goes from `a` to `b`.
pub fn displacement_change(ion: &IonSpecies, a: &TrapSetting, b: &TrapSetting, field: &StrayField) -> Vec3 {
    let dc = b.compliance() - a.compliance();
    field.vector().component_mul(&dc) * ion.charge_to_mass()
}

/// Laser phase `k . r + phi_0` at `position`, not wrapped.
pub fn field_phase_at(beam: &LaserBeam, position: &Vec3) -> f64 {
    beam.k().dot(position) + beam.phase_offset()
}

/// Which of the two Method C subset layouts is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetParity {
    /// Both beams' `A` pulses on odd indices: `M_a k_a + M_b k_b`.
    Plus,
    /// Second beam's `A` pulses on even indices: `M_a k_a - M_b k_b`.
    Minus,
}

#[derive(Debug, Clone, Copy)]
pub enum SensitivityMethod<'a> {
    A {
        beam: &'a LaserBeam,
    },
    B {
        alpha: &'a LaserBeam,
        beta: &'a LaserBeam,
    },
    C {
        alpha: &'a LaserBeam,
        beta: &'a LaserBeam,
        m_alpha: u32,
        m_beta: u32,
        parity: SubsetParity,
    },
}

impl SensitivityMethod<'_> {
    /// Effective wavevector `kappa` of the method.
    pub fn effective_k(&self) -> Vec3 {
        match *self {
            SensitivityMethod::A { beam } => *beam.k(),
            SensitivityMethod::B { alpha, beta } => alpha.k() - beta.k(),
            SensitivityMethod::C {
                alpha,
                beta,
                m_alpha,
                m_beta,
                parity,
            } => {
                let a = alpha.k() * m_alpha as f64;
                let b = beta.k() * m_beta as f64;
                match parity {
                    SubsetParity::Plus => a + b,
                    SubsetParity::Minus => a - b,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityDirection {
    /// Unnormalized `d` (rad m^-1 s^2).
    pub raw: Vec3,
    pub unit: Vec3,
}

/// Direction `d_i = kappa_i (1/omega_Ai^2 - 1/omega_Bi^2)` along which the
/// measured phase responds to the stray field.
pub fn sensitivity_direction(
    method: SensitivityMethod<'_>,
    a: &TrapSetting,
    b: &TrapSetting,
) -> Result<SensitivityDirection> {
    let raw = method.effective_k().component_mul(&(a.compliance() - b.compliance()));
    let norm = raw.norm();
    if !(norm > 0.0) {
        return Err(Error::DegenerateDirection);
    }
    Ok(SensitivityDirection { raw, unit: raw / norm })
}

/// Angle (rad, in `[0, pi/2]`) between the lines spanned by two directions.
pub fn line_angle(a: &Vec3, b: &Vec3) -> f64 {
    let c = (a.dot(b) / (a.norm() * b.norm())).abs().min(1.0);
    c.acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn setting(label: &str, mhz: [f64; 3]) -> TrapSetting {
        TrapSetting::from_hz(label, mhz.map(|f| f * 1e6)).unwrap()
    }

    #[test]
    fn zero_field_zero_displacement() {
        let ion = IonSpecies::strontium_88();
        let r = equilibrium_displacement(&ion, &setting("A", [1.0, 1.0, 1.0]), &StrayField::zero());
        assert_eq!(r, Vec3::zeros());
    }

    #[test]
    fn doubling_stiffness_quarters_displacement() {
        let ion = IonSpecies::strontium_88();
        let f = StrayField::new(Vec3::new(0.3, -1.2, 2.0)).unwrap();
        let r1 = equilibrium_displacement(&ion, &setting("A", [1.0, 1.3, 0.4]), &f);
        let r2 = equilibrium_displacement(&ion, &setting("B", [2.0, 2.6, 0.8]), &f);
        for i in 0..3 {
            assert_relative_eq!(r2[i], r1[i] / 4.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn strontium_displacement_one_volt_per_metre() {
        // q E / (m w^2) evaluated independently with CODATA constants
        let q = 1.602_176_634e-19;
        let m = 88.0 * 1.660_539_066_60e-27;
        let w = 2.0 * PI * 1e6;
        let expected = q * 1.0 / (m * w * w);
        assert_relative_eq!(expected, 2.7773e-8, max_relative = 1e-3);
        let r = equilibrium_displacement(
            &IonSpecies::strontium_88(),
            &setting("A", [1.0, 1.0, 1.0]),
            &StrayField::new(Vec3::new(1.0, 0.0, 0.0)).unwrap(),
        );
        assert_relative_eq!(r.x, expected, max_relative = 1e-12);
    }

    #[test]
    fn displacement_change_examples() {
        let ion = IonSpecies::strontium_88();
        let f = StrayField::new(Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let a = setting("A", [1.5, 1.5, 0.35]);
        let b = setting("B", [0.84, 0.84, 0.35]);
        assert_eq!(displacement_change(&ion, &a, &a, &f), Vec3::zeros());
        let rab = displacement_change(&ion, &a, &b, &f);
        assert_relative_eq!(rab.x, 2.70e-8, max_relative = 5e-3);
        let diff = equilibrium_displacement(&ion, &b, &f) - equilibrium_displacement(&ion, &a, &f);
        assert_relative_eq!(rab.x, diff.x, max_relative = 1e-12);
    }

    #[test]
    fn field_phase_examples() {
        let beam = LaserBeam::along(Vec3::x(), 674e-9).unwrap().with_phase_offset(0.4);
        assert_relative_eq!(field_phase_at(&beam, &Vec3::zeros()), 0.4, epsilon = 1e-15);
        let beam = beam.with_phase_offset(0.0);
        let phase = field_phase_at(&beam, &Vec3::new(2.70e-8, 0.0, 0.0));
        assert_relative_eq!(phase, 2.0 * PI / 674e-9 * 2.70e-8, max_relative = 1e-12);
        assert_relative_eq!(phase, 0.2517, max_relative = 1e-3);
    }

    #[test]
    fn phase_offset_is_reduced() {
        let beam = LaserBeam::along(Vec3::x(), 674e-9).unwrap().with_phase_offset(3.0 * PI);
        assert_relative_eq!(beam.phase_offset(), -PI, epsilon = 1e-12);
        assert!(wrap_phase(PI) == -PI);
        assert!(wrap_phase(-1e-9) < 0.0);
    }

    #[test]
    fn identical_settings_are_degenerate() {
        let beam = LaserBeam::along(Vec3::x(), 674e-9).unwrap();
        let a = setting("A", [1.5, 1.5, 1.0]);
        assert_eq!(
            sensitivity_direction(SensitivityMethod::A { beam: &beam }, &a, &a),
            Err(Error::DegenerateDirection)
        );
    }

    #[test]
    fn degenerate_radials_follow_beam_projection() {
        let beam = LaserBeam::at_angles(PI / 4.0, 0.0, 674e-9).unwrap();
        let a = setting("A", [1.5, 1.5, 1.0]);
        let b = setting("B", [0.8, 0.8, 1.0]);
        let d = sensitivity_direction(SensitivityMethod::A { beam: &beam }, &a, &b).unwrap();
        let expected = Vec3::new(1.0, 1.0, 0.0).normalize();
        assert_relative_eq!(d.unit.dot(&expected).abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn method_c_minus_with_balanced_beams_is_degenerate() {
        let beam = LaserBeam::along(Vec3::new(1.0, 1.0, 0.0), 674e-9).unwrap();
        let a = setting("A", [1.5, 1.5, 1.0]);
        let b = setting("B", [0.8, 0.8, 1.0]);
        let method = SensitivityMethod::C {
            alpha: &beam,
            beta: &beam,
            m_alpha: 2,
            m_beta: 2,
            parity: SubsetParity::Minus,
        };
        assert_eq!(sensitivity_direction(method, &a, &b), Err(Error::DegenerateDirection));
    }

    #[test]
    fn secular_model_fit_and_loss() {
        let a = setting("A", [1.5, 1.6, 1.0]);
        let model = RfDriveModel::fit(&a, 0.0, hz_to_angular(18.1e6)).unwrap();
        let at_one = model.secular_from_scale(1.0).unwrap();
        for i in 0..3 {
            assert_relative_eq!(at_one.secular()[i], a.secular()[i], max_relative = 1e-14);
        }
        // closed-form inversion: s*^2 = static^2 / (2 p_x^2)
        let wz = hz_to_angular(1.0e6);
        let px_sq = hz_to_angular(1.5e6).powi(2) + 0.5 * wz * wz;
        let s_star = (wz * wz / (2.0 * px_sq)).sqrt();
        assert_relative_eq!(model.loss_scale(), s_star, max_relative = 1e-12);
        assert!(matches!(model.secular_from_scale(s_star * 0.999), Err(Error::IonLost { axis: 0, .. })));
        let near = model.secular_from_scale(s_star * 1.001).unwrap();
        assert!(near.secular().x < near.secular().y);
    }

    #[test]
    fn rf_axial_changes_axial_frequency() {
        let a = setting("A", [1.5, 1.5, 1.0]);
        let model = RfDriveModel::fit(&a, hz_to_angular(0.5e6), hz_to_angular(18.1e6)).unwrap();
        let b = model.secular_from_scale(0.8).unwrap();
        assert!(b.secular().z < a.secular().z);
        let flat = RfDriveModel::fit(&a, 0.0, hz_to_angular(18.1e6)).unwrap();
        assert_relative_eq!(flat.secular_from_scale(0.8).unwrap().secular().z, a.secular().z, max_relative = 1e-14);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(IonSpecies::new(-1.0, 1.0).is_err());
        assert!(IonSpecies::new(1.0, 0.0).is_err());
        assert!(TrapSetting::new("bad", Vec3::new(1.0, 0.0, 1.0)).is_err());
        assert!(LaserBeam::new(Vec3::zeros(), 0.0, 1.0).is_err());
        assert!(StrayField::new(Vec3::new(f64::NAN, 0.0, 0.0)).is_err());
    }
}
