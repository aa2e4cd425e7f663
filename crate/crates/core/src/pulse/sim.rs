use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::trap::{equilibrium_displacement, field_phase_at, IonSpecies, LaserBeam, StrayField, TrapSetting};

use super::bloch::{apply_dephasing, free_evolution, propagate_pulse, QubitState};
use super::noise::NoiseModel;
use super::sequence::{PulseSpec, SequenceSpec};

/// Ion, named trap settings and named beams that sequences refer to by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Apparatus {
    pub ion: IonSpecies,
    settings: BTreeMap<String, TrapSetting>,
    beams: BTreeMap<String, LaserBeam>,
}

impl Apparatus {
    pub fn new(ion: IonSpecies) -> Self {
        Self {
            ion,
            settings: BTreeMap::new(),
            beams: BTreeMap::new(),
        }
    }

    /// Registers a setting under its label, replacing any previous one.
    pub fn with_setting(mut self, setting: TrapSetting) -> Self {
        self.insert_setting(setting);
        self
    }

    pub fn with_beam(mut self, id: impl Into<String>, beam: LaserBeam) -> Self {
        self.insert_beam(id, beam);
        self
    }

    pub fn insert_setting(&mut self, setting: TrapSetting) {
        self.settings.insert(setting.label().to_string(), setting);
    }

    pub fn insert_beam(&mut self, id: impl Into<String>, beam: LaserBeam) {
        self.beams.insert(id.into(), beam);
    }

    pub fn setting(&self, id: &str) -> Result<&TrapSetting> {
        self.settings.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn beam(&self, id: &str) -> Result<&LaserBeam> {
        self.beams.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn beam_mut(&mut self, id: &str) -> Result<&mut LaserBeam> {
        self.beams.get_mut(id).ok_or_else(|| Error::UnknownId(id.to_string()))
    }
}

/// `(phi_T, theta_T)` of a length-`m` sequence from per-pulse phases.
///
/// `phi_T = phi_1 + 2 sum_{j=2..M} (-1)^(j-1) phi_j + (-1)^M phi_{M+1}`;
/// `theta_T` is formed the same way plus `pi` for even `M`.
pub fn total_phase(phi: &[f64], theta: &[f64], m: u32) -> Result<(f64, f64)> {
    let n = m as usize + 1;
    if m == 0 {
        return Err(Error::InvalidSequence("M must be >= 1".into()));
    }
    for len in [phi.len(), theta.len()] {
        if len != n {
            return Err(Error::LengthMismatch { expected: n, got: len });
        }
    }
    let weight = |j: usize| -> f64 {
        if j == 1 {
            1.0
        } else if j == n {
            if m % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        } else if j % 2 == 0 {
            -2.0
        } else {
            2.0
        }
    };
    let combine = |xs: &[f64]| xs.iter().enumerate().map(|(i, x)| weight(i + 1) * x).sum::<f64>();
    let xi = if m % 2 == 0 { PI } else { 0.0 };
    Ok((combine(phi), combine(theta) + xi))
}

/// `p = (1 + C cos(phi_T + theta_T)) / 2`.
pub fn ideal_probability(phi_t: f64, theta_t: f64, contrast: f64) -> f64 {
    0.5 * (1.0 + contrast * (phi_t + theta_t).cos())
}

/// Position-dependent laser phase `phi_j` of every pulse: the beam's phase at
/// the equilibrium position of the pulse's trap setting.
pub fn laser_phases(seq: &SequenceSpec, apparatus: &Apparatus, field: &StrayField) -> Result<Vec<f64>> {
    seq.pulses
        .iter()
        .map(|p| {
            let setting = apparatus.setting(&p.setting_id)?;
            let beam = apparatus.beam(&p.beam_id)?;
            let r = equilibrium_displacement(&apparatus.ion, setting, field);
            Ok(field_phase_at(beam, &r))
        })
        .collect()
}

/// Per-pulse drive after resolving geometry: the input of [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseDrive {
    pub area: f64,
    /// Total laser phase `phi_j + theta_j` (rad).
    pub phase: f64,
    pub area_error: f64,
    pub detuning: f64,
    pub duration: f64,
}

impl PulseDrive {
    fn from_spec(spec: &PulseSpec, phi: f64) -> Self {
        Self {
            area: spec.area,
            phase: phi + spec.control_phase,
            area_error: spec.area_error,
            detuning: spec.detuning,
            duration: spec.duration,
        }
    }
}

/// Evolves `|g>` through `drives` with `wait` between consecutive pulses.
///
/// Noise area factors multiply each pulse's own factor and the noise detuning
/// adds to each pulse's own detuning; waits precess at the noise detuning.
/// With `dephase_during_pulses`, half of each pulse's dephasing is applied on
/// either side of the rotation.
pub fn evolve(drives: &[PulseDrive], wait: f64, noise: &NoiseModel) -> QubitState {
    let mut state = QubitState::ground();
    let last = drives.len();
    for (i, d) in drives.iter().enumerate() {
        let j = i + 1;
        let pulse = PulseSpec {
            beam_id: String::new(),
            setting_id: String::new(),
            area: d.area,
            control_phase: 0.0,
            detuning: d.detuning + noise.detuning,
            duration: d.duration,
            area_error: d.area_error * noise.area_factor(j),
        };
        let half = if noise.dephase_during_pulses { 0.5 * d.duration } else { 0.0 };
        state = apply_dephasing(state, half, noise.t2);
        state = propagate_pulse(state, &pulse, d.phase);
        state = apply_dephasing(state, half, noise.t2);
        if j < last {
            state = free_evolution(state, wait, noise.detuning, noise.t2);
        }
    }
    state
}

/// Pairs the pulses of `seq` with explicit position phases `phis`.
pub fn drives_with_phases(seq: &SequenceSpec, phis: &[f64]) -> Result<Vec<PulseDrive>> {
    if phis.len() != seq.pulses.len() {
        return Err(Error::LengthMismatch {
            expected: seq.pulses.len(),
            got: phis.len(),
        });
    }
    Ok(seq.pulses.iter().zip(phis).map(|(p, phi)| PulseDrive::from_spec(p, *phi)).collect())
}

/// Excitation probability after `drives`.
pub fn run_drives(drives: &[PulseDrive], wait: f64, noise: &NoiseModel) -> f64 {
    evolve(drives, wait, noise).excitation_probability()
}

/// Final state of `seq` run from `|g>` with the ion at the equilibrium
/// position of each pulse's trap setting.
pub fn run_sequence_state(
    seq: &SequenceSpec,
    apparatus: &Apparatus,
    field: &StrayField,
    noise: &NoiseModel,
) -> Result<QubitState> {
    noise.validate()?;
    let phis = laser_phases(seq, apparatus, field)?;
    let drives = drives_with_phases(seq, &phis)?;
    Ok(evolve(&drives, seq.inter_pulse_wait, noise))
}

/// Excitation probability at the end of `seq`.
pub fn run_sequence(seq: &SequenceSpec, apparatus: &Apparatus, field: &StrayField, noise: &NoiseModel) -> Result<f64> {
    run_sequence_state(seq, apparatus, field, noise).map(|s| s.excitation_probability())
}

/// Closed-form probability with unit contrast; equals [`run_sequence`] for
/// noiseless sequences.
pub fn closed_form_probability(seq: &SequenceSpec, apparatus: &Apparatus, field: &StrayField) -> Result<f64> {
    let phis = laser_phases(seq, apparatus, field)?;
    let (phi_t, theta_t) = total_phase(&phis, &seq.control_phases(), seq.m)?;
    Ok(ideal_probability(phi_t, theta_t, 1.0))
}

/// Method A position phases for a given `phi_PD`: `phi_PD` on odd pulses
/// (setting A) and 0 on even pulses (setting B).
pub fn method_a_phases(m: u32, phi_pd: f64) -> Vec<f64> {
    (1..=m as usize + 1).map(|j| if j % 2 == 1 { phi_pd } else { 0.0 }).collect()
}

/// Number of `|e>` outcomes in `n` projective measurements.
pub fn sample_measurements<R: Rng + ?Sized>(p: f64, n: u64, rng: &mut R) -> u64 {
    let p = p.clamp(0.0, 1.0);
    if n == 0 || p == 0.0 {
        return 0;
    }
    if p == 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("p in (0, 1)").sample(rng)
}
