//! Two-level dynamics for the Method A/B/C pulse sequences.
//!
//! The full path rotates a Bloch vector pulse by pulse with detuning,
//! pulse-area errors and dephasing. The closed-form path evaluates
//! `p = (1 + C cos(phi_T + theta_T)) / 2` from the sequence's total phases.

mod bloch;
mod noise;
mod sequence;
mod sim;

pub use bloch::{apply_dephasing, free_evolution, propagate_pulse, rotate, QubitState};
pub use noise::NoiseModel;
pub use sequence::{Method, PulseSpec, SequenceSpec, Timing};
pub use sim::{
    closed_form_probability, drives_with_phases, evolve, ideal_probability, laser_phases, method_a_phases, run_drives,
    run_sequence, run_sequence_state, sample_measurements, total_phase, Apparatus, PulseDrive,
};
