use nalgebra::{DMatrix, DVector, Matrix3xX};
use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::PhaseEstimate;
use crate::protocol::{measure_in_apparatus, Estimator};
use crate::pulse::{Apparatus, NoiseModel, SequenceSpec};
use crate::stats::linear_fit;
use crate::trap::{StrayField, Vec3};

use super::micromotion::RfOperatingPoint;

/// Field at the RF null per volt on each compensation electrode (V/m per V).
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeGeometry {
    field_per_volt: Matrix3xX<f64>,
}

impl ElectrodeGeometry {
    pub fn new(columns: &[Vec3]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidParameter("at least one electrode required".into()));
        }
        if columns.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidParameter("electrode fields must be finite".into()));
        }
        Ok(Self {
            field_per_volt: Matrix3xX::from_columns(columns),
        })
    }

    pub fn n_electrodes(&self) -> usize {
        self.field_per_volt.ncols()
    }

    pub fn matrix(&self) -> &Matrix3xX<f64> {
        &self.field_per_volt
    }

    pub fn column(&self, j: usize) -> Vec3 {
        self.field_per_volt.column(j).into()
    }

    /// Field produced by `voltages`.
    pub fn field(&self, voltages: &DVector<f64>) -> Vec3 {
        &self.field_per_volt * voltages
    }
}

/// One phase measurement used by a compensation loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub name: String,
    pub template: SequenceSpec,
    pub estimator: Estimator,
    /// Shots per probe when sampling is on.
    pub shots: u64,
}

impl Observable {
    pub fn measure<R: Rng + ?Sized>(
        &self,
        apparatus: &Apparatus,
        field: &StrayField,
        noise: &NoiseModel,
        rng: &mut R,
    ) -> Result<PhaseEstimate> {
        measure_in_apparatus(&self.template, apparatus, field, noise, self.estimator, self.shots, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub apparatus: Apparatus,
    pub observables: Vec<Observable>,
    pub geometry: ElectrodeGeometry,
    pub noise: NoiseModel,
    /// Operating point used to report the residual RF field; `None` reports 0.
    pub rf: Option<RfOperatingPoint>,
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.observables.is_empty() {
            return Err(Error::InvalidParameter("at least one observable required".into()));
        }
        self.noise.validate()?;
        for obs in &self.observables {
            obs.template.validate()?;
            obs.estimator.probes(obs.template.m)?;
            for p in &obs.template.pulses {
                self.apparatus.beam(&p.beam_id)?;
                self.apparatus.setting(&p.setting_id)?;
            }
        }
        Ok(())
    }

    /// Estimated `phi_T` of every observable at `field`.
    pub fn measure_all<R: Rng + ?Sized>(&self, field: &StrayField, rng: &mut R) -> Result<DVector<f64>> {
        let values = self
            .observables
            .iter()
            .map(|o| o.measure(&self.apparatus, field, &self.noise, rng).map(|e| e.value))
            .collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(values))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    /// Voltages span `[-amplitude, amplitude]` on each electrode in turn.
    pub amplitude: f64,
    pub points: usize,
    /// Field present at zero applied voltage.
    pub base_field: StrayField,
}

/// `d phi_i / d V_j` (rad/V) with fit diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMatrix {
    pub matrix: DMatrix<f64>,
    /// RMS residual of each linear fit (rad).
    pub residuals: DMatrix<f64>,
    /// Standard error of each fitted slope (rad/V); zero for exact matrices.
    pub slope_errors: DMatrix<f64>,
    /// Trap settings used by the observables.
    pub settings: Vec<String>,
}

impl GradientMatrix {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        let residuals = DMatrix::zeros(matrix.nrows(), matrix.ncols());
        Self {
            slope_errors: residuals.clone(),
            matrix,
            residuals,
            settings: Vec::new(),
        }
    }

    pub fn condition_number(&self) -> f64 {
        let sv = self.matrix.clone().svd(false, false).singular_values;
        let max = sv.max();
        let min = sv.min();
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    fn check_invertible(&self) -> Result<()> {
        if !self.matrix.is_square() || !(self.condition_number() < 1e12) {
            return Err(Error::RankDeficient);
        }
        Ok(())
    }
}

/// Scans every electrode and fits the phase slopes, without requiring the
/// result to be invertible.
pub fn scan_slopes<R: Rng + ?Sized>(cfg: &LoopConfig, scan: &ScanConfig, rng: &mut R) -> Result<GradientMatrix> {
    cfg.validate()?;
    if scan.points < 3 {
        return Err(Error::InvalidParameter(format!("scan needs >= 3 points, got {}", scan.points)));
    }
    if !(scan.amplitude >= 0.0 && scan.amplitude.is_finite()) {
        return Err(Error::InvalidParameter(format!("scan amplitude {} must be >= 0", scan.amplitude)));
    }
    let n_obs = cfg.observables.len();
    let n_el = cfg.geometry.n_electrodes();
    let volts: Vec<f64> = (0..scan.points)
        .map(|k| -scan.amplitude + 2.0 * scan.amplitude * k as f64 / (scan.points - 1) as f64)
        .collect();
    let mut matrix = DMatrix::zeros(n_obs, n_el);
    let mut residuals = DMatrix::zeros(n_obs, n_el);
    let mut slope_errors = DMatrix::zeros(n_obs, n_el);
    let n = scan.points as f64;
    let vbar = volts.iter().sum::<f64>() / n;
    let sxx: f64 = volts.iter().map(|v| (v - vbar).powi(2)).sum();
    for j in 0..n_el {
        let mut phases = vec![Vec::with_capacity(scan.points); n_obs];
        for &v in &volts {
            let field = StrayField::new(scan.base_field.vector() + cfg.geometry.column(j) * v)?;
            for (i, obs) in cfg.observables.iter().enumerate() {
                let est = obs.measure(&cfg.apparatus, &field, &cfg.noise, rng)?;
                if est.clamped {
                    return Err(Error::RangeOverflow { observable: i, electrode: j });
                }
                phases[i].push(est.value);
            }
        }
        for (i, series) in phases.iter().enumerate() {
            if series.windows(2).any(|w| (w[1] - w[0]).abs() > std::f64::consts::PI) {
                return Err(Error::RangeOverflow { observable: i, electrode: j });
            }
            let fit = linear_fit(&volts, series)?;
            matrix[(i, j)] = fit.slope;
            residuals[(i, j)] = fit.rms_residual;
            slope_errors[(i, j)] = if sxx > 0.0 {
                fit.rms_residual * (n / (n - 2.0) / sxx).sqrt()
            } else {
                0.0
            };
        }
    }
    let mut settings: Vec<String> = cfg
        .observables
        .iter()
        .flat_map(|o| o.template.pulses.iter().map(|p| p.setting_id.clone()))
        .collect();
    settings.sort();
    settings.dedup();
    Ok(GradientMatrix {
        matrix,
        residuals,
        slope_errors,
        settings,
    })
}

/// Measures the square gradient matrix of `cfg` by voltage scans.
///
/// Fails with `RankDeficient` when the smallest singular value is not
/// resolved: it must exceed twice the Frobenius norm of the slope errors,
/// which bounds how far noise can move it.
pub fn calibrate_gradient_matrix<R: Rng + ?Sized>(
    cfg: &LoopConfig,
    scan: &ScanConfig,
    rng: &mut R,
) -> Result<GradientMatrix> {
    if cfg.observables.len() != cfg.geometry.n_electrodes() {
        return Err(Error::RankDeficient);
    }
    let gm = scan_slopes(cfg, scan, rng)?;
    gm.check_invertible()?;
    let smallest = gm.matrix.clone().svd(false, false).singular_values.min();
    if !(smallest > 2.0 * gm.slope_errors.norm()) {
        return Err(Error::RankDeficient);
    }
    Ok(gm)
}

/// Voltage change `V = M^-1 phi` with its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageSolution {
    pub voltages: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Solves `M V = phi`; `phase_sigma` gives each phase's standard deviation
/// for the propagated covariance (zero when absent).
pub fn solve_voltages(gm: &GradientMatrix, phases: &DVector<f64>, phase_sigma: Option<&[f64]>) -> Result<VoltageSolution> {
    gm.check_invertible()?;
    let n = gm.matrix.nrows();
    if phases.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: phases.len(),
        });
    }
    let inv = gm.matrix.clone().try_inverse().ok_or(Error::RankDeficient)?;
    let voltages = &inv * phases;
    let sigma = match phase_sigma {
        Some(s) if s.len() != n => {
            return Err(Error::LengthMismatch { expected: n, got: s.len() });
        }
        Some(s) => DMatrix::from_diagonal(&DVector::from_iterator(n, s.iter().map(|v| v * v))),
        None => DMatrix::zeros(n, n),
    };
    let covariance = &inv * sigma * inv.transpose();
    Ok(VoltageSolution { voltages, covariance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solve_examples() {
        let gm = GradientMatrix::from_matrix(DMatrix::identity(2, 2) * 2.0);
        let zero = solve_voltages(&gm, &DVector::zeros(2), None).unwrap();
        assert_eq!(zero.voltages, DVector::zeros(2));
        let v = solve_voltages(&gm, &DVector::from_vec(vec![0.1, -0.2]), Some(&[0.1, 0.1])).unwrap();
        assert_relative_eq!(v.voltages[0], 0.05);
        assert_relative_eq!(v.voltages[1], -0.1);
        assert_relative_eq!(v.covariance[(0, 0)], 0.0025, epsilon = 1e-15);
        assert_eq!(v.covariance[(0, 1)], 0.0);
    }

    #[test]
    fn singular_rejected() {
        let gm = GradientMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        assert_eq!(solve_voltages(&gm, &DVector::zeros(2), None), Err(Error::RankDeficient));
        let rect = GradientMatrix::from_matrix(DMatrix::zeros(2, 3));
        assert_eq!(solve_voltages(&rect, &DVector::zeros(2), None), Err(Error::RankDeficient));
    }

    #[test]
    fn geometry_field() {
        let g = ElectrodeGeometry::new(&[Vec3::x(), Vec3::new(0.0, 2.0, 0.0)]).unwrap();
        assert_eq!(g.field(&DVector::from_vec(vec![1.0, -1.0])), Vec3::new(1.0, -2.0, 0.0));
        assert!(ElectrodeGeometry::new(&[]).is_err());
    }
}
