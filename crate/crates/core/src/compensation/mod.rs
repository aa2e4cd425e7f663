//! Stray-field compensation: calibration, voltage solving, closed-loop
//! simulation and its stability analysis, micromotion observables, and RF
//! duty-cycle bookkeeping.

mod allan;
mod duty;
mod gradient;
mod hybrid;
mod looping;
mod micromotion;

pub use allan::{allan_style_deviation, allan_style_deviation_vec, AllanPoint};
pub use duty::{duty_cycle_report, DutyCycleReport, RfSegment};
pub use gradient::{
    calibrate_gradient_matrix, scan_slopes, solve_voltages, ElectrodeGeometry, GradientMatrix, LoopConfig, Observable,
    ScanConfig, VoltageSolution,
};
pub use hybrid::{hybrid_2d_minimize, HybridConfig, HybridResult, HybridStep};
pub use looping::{closed_loop_run, DriftModel, LoopSample, LoopTrace};
pub use micromotion::{
    micromotion_amplitude, residual_rf_field, residual_rf_vector, sideband_amplitude, sideband_signal, RfOperatingPoint,
};
