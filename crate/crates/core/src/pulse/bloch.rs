use crate::trap::Vec3;

use super::sequence::PulseSpec;

/// Bloch vector `(u, v, w)`; `w = -1` is the ground state `|g>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    pub bloch: Vec3,
}

impl QubitState {
    pub fn ground() -> Self {
        Self {
            bloch: Vec3::new(0.0, 0.0, -1.0),
        }
    }

    pub fn excited() -> Self {
        Self {
            bloch: Vec3::new(0.0, 0.0, 1.0),
        }
    }

    /// Probability of finding the ion in `|e>`.
    pub fn excitation_probability(&self) -> f64 {
        ((self.bloch.z + 1.0) * 0.5).clamp(0.0, 1.0)
    }

    pub fn purity_radius(&self) -> f64 {
        self.bloch.norm()
    }
}

impl Default for QubitState {
    fn default() -> Self {
        Self::ground()
    }
}

/// Right-handed rotation of `state` by `angle` about the unit vector `axis`.
pub fn rotate(state: QubitState, axis: &Vec3, angle: f64) -> QubitState {
    let v = state.bloch;
    let (s, c) = angle.sin_cos();
    let rotated = v * c + axis.cross(&v) * s + axis * (axis.dot(&v) * (1.0 - c));
    QubitState { bloch: rotated }
}

/// Applies one pulse with total laser phase `laser_phase` (`phi_j + theta_j`).
///
/// The rotation axis is `(cos phi Omega', sin phi Omega', Delta) / Omega_gen`
/// with `Omega' = area_error * area / duration`. A zero-duration pulse is an
/// instantaneous rotation by `area_error * area` about the equatorial axis.
pub fn propagate_pulse(state: QubitState, pulse: &PulseSpec, laser_phase: f64) -> QubitState {
    let (sin_phi, cos_phi) = laser_phase.sin_cos();
    let effective_area = pulse.area_error * pulse.area;
    if pulse.duration == 0.0 {
        let axis = Vec3::new(cos_phi, sin_phi, 0.0);
        return rotate(state, &axis, effective_area);
    }
    let rabi = effective_area / pulse.duration;
    let generalized = rabi.hypot(pulse.detuning);
    if generalized == 0.0 {
        return state;
    }
    let axis = Vec3::new(cos_phi * rabi, sin_phi * rabi, pulse.detuning) / generalized;
    rotate(state, &axis, generalized * pulse.duration)
}

/// Pure dephasing: transverse components decay by `exp(-wait / t2)`.
pub fn apply_dephasing(state: QubitState, wait: f64, t2: f64) -> QubitState {
    if t2.is_infinite() || wait == 0.0 {
        return state;
    }
    let decay = (-wait / t2).exp();
    QubitState {
        bloch: Vec3::new(state.bloch.x * decay, state.bloch.y * decay, state.bloch.z),
    }
}

/// Free evolution in the laser frame: precession by `detuning * wait` about
/// `z` followed by dephasing.
pub fn free_evolution(state: QubitState, wait: f64, detuning: f64, t2: f64) -> QubitState {
    let precessed = if detuning == 0.0 {
        state
    } else {
        rotate(state, &Vec3::z(), detuning * wait)
    };
    apply_dephasing(precessed, wait, t2)
}
