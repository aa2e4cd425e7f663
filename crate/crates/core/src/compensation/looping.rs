use nalgebra::DVector;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::trap::{StrayField, Vec3};

use super::gradient::{solve_voltages, GradientMatrix, LoopConfig};
use super::micromotion::residual_rf_field;

/// Slow changes between loop updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftModel {
    /// Random-walk rate of each stray-field component (V/m per sqrt(s)).
    pub field_rate: f64,
    /// White noise on every applied electrode voltage (V rms per update).
    pub voltage_noise: f64,
}

impl DriftModel {
    pub fn new(field_rate: f64, voltage_noise: f64) -> Result<Self> {
        if !(field_rate >= 0.0 && field_rate.is_finite()) || !(voltage_noise >= 0.0 && voltage_noise.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "drift rates must be >= 0, got field_rate={field_rate}, voltage_noise={voltage_noise}"
            )));
        }
        Ok(Self {
            field_rate,
            voltage_noise,
        })
    }

    pub fn none() -> Self {
        Self {
            field_rate: 0.0,
            voltage_noise: 0.0,
        }
    }
}

/// State of the loop during one update interval.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSample {
    /// End of the interval (s).
    pub t: f64,
    /// True stray field.
    pub e_true: Vec3,
    /// Stray-field estimate: field equivalent of the solved correction minus
    /// the field of the commanded voltages.
    pub e_est: Vec3,
    /// Commanded voltages during the interval.
    pub voltages: Vec<f64>,
    /// Net field at the ion during the interval.
    pub residual: Vec3,
    /// Residual oscillating dipole field (V/m).
    pub e_rf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopTrace {
    pub interval: f64,
    pub samples: Vec<LoopSample>,
}

impl LoopTrace {
    pub fn estimates(&self) -> Vec<Vec3> {
        self.samples.iter().map(|s| s.e_est).collect()
    }
}

/// Simulates `duration / update_interval` measure-and-correct cycles.
///
/// Each cycle drifts the stray field, applies the commanded voltages plus
/// source noise, measures every observable, and subtracts `M^-1 phi` from the
/// commanded voltages. Interval `k` draws from stream `k` of `key`.
pub fn closed_loop_run(
    duration: f64,
    update_interval: f64,
    cfg: &LoopConfig,
    gm: &GradientMatrix,
    drift: &DriftModel,
    initial: &StrayField,
    key: &StreamKey,
) -> Result<LoopTrace> {
    if !(update_interval > 0.0) || !(duration >= update_interval) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < update_interval <= duration, got {update_interval} and {duration}"
        )));
    }
    cfg.validate()?;
    let n_el = cfg.geometry.n_electrodes();
    if gm.matrix.ncols() != n_el || gm.matrix.nrows() != cfg.observables.len() {
        return Err(Error::LengthMismatch {
            expected: n_el,
            got: gm.matrix.ncols(),
        });
    }
    let steps = (duration / update_interval + 1e-9).floor() as u64;
    let walk = Normal::new(0.0, drift.field_rate * update_interval.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let vnoise = Normal::new(0.0, drift.voltage_noise).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut stray = *initial.vector();
    let mut commanded = DVector::<f64>::zeros(n_el);
    let mut samples = Vec::with_capacity(steps as usize);
    for k in 0..steps {
        let mut rng = key.stream(k);
        if drift.field_rate > 0.0 {
            for c in stray.iter_mut() {
                *c += walk.sample(&mut rng);
            }
        }
        let mut applied = commanded.clone();
        if drift.voltage_noise > 0.0 {
            for v in applied.iter_mut() {
                *v += vnoise.sample(&mut rng);
            }
        }
        let residual = stray + cfg.geometry.field(&applied);
        let net = StrayField::new(residual)?;
        let phases = cfg.measure_all(&net, &mut rng)?;
        let correction = solve_voltages(gm, &phases, None)?.voltages;
        let e_est = cfg.geometry.field(&correction) - cfg.geometry.field(&commanded);
        let e_rf = match &cfg.rf {
            Some(op) => residual_rf_field(&cfg.apparatus.ion, op, &net),
            None => 0.0,
        };
        samples.push(LoopSample {
            t: (k + 1) as f64 * update_interval,
            e_true: stray,
            e_est,
            voltages: commanded.iter().copied().collect(),
            residual,
            e_rf,
        });
        commanded -= correction;
    }
    Ok(LoopTrace {
        interval: update_interval,
        samples,
    })
}
