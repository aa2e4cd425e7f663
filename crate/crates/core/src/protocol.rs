//! Measurement protocols: which control phases to run, how to turn the
//! resulting probabilities into a phase, and Monte Carlo studies built on them.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{
    average_settings, control_phases, estimate_arcsin, estimate_arctan2, estimate_arctan2_offset, estimate_settings,
    rpe_combine, ControlPhaseSettings, EstimatorTag, PhaseEstimate, RpeSchedule, SettingsTag,
};
use crate::pulse::{
    drives_with_phases, laser_phases, method_a_phases, run_drives, sample_measurements, Apparatus, NoiseModel,
    PulseDrive, SequenceSpec, Timing,
};
use crate::rng::{StreamKey, StreamRng};
use crate::stats::rms;
use crate::trap::{wrap_phase, StrayField};

/// Runs `f` once per trial index on its own stream, in parallel, returning
/// results in trial order.
pub fn run_trials<T, F>(key: &StreamKey, trials: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut StreamRng) -> T + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = key.stream(t);
            f(t, &mut rng)
        })
        .collect()
}

/// How probabilities are turned into a phase, including which control phases
/// are probed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    /// Probes `theta_T = -pi/2, +pi/2`; `contrast` is the assumed fringe contrast.
    Arcsin { contrast: f64 },
    /// Probes `theta_T = -pi/2, 0`.
    Arctan2,
    /// Probes `theta_T = pi/4, 3pi/4`.
    Arctan2Offset,
    /// Probes `theta_1 = pi/2, pi` with the given settings (even `M` only).
    Settings(SettingsTag),
    /// Settings I and II, circular-mean averaged.
    AveragedSettings,
}

impl Estimator {
    /// Control-phase lists to run, one per probe.
    pub fn probes(&self, m: u32) -> Result<Vec<Vec<f64>>> {
        let totals = |a: f64, b: f64| vec![thetas_for(m, a), thetas_for(m, b)];
        Ok(match *self {
            Self::Arcsin { .. } => totals(-FRAC_PI_2, FRAC_PI_2),
            Self::Arctan2 => totals(-FRAC_PI_2, 0.0),
            Self::Arctan2Offset => totals(FRAC_PI_4, 3.0 * FRAC_PI_4),
            Self::Settings(tag) => {
                let s = ControlPhaseSettings::new(tag, m)?;
                vec![control_phases(s, FRAC_PI_2)?, control_phases(s, PI)?]
            }
            Self::AveragedSettings => {
                let i = ControlPhaseSettings::new(SettingsTag::I, m)?;
                let ii = ControlPhaseSettings::new(SettingsTag::II, m)?;
                vec![
                    control_phases(i, FRAC_PI_2)?,
                    control_phases(i, PI)?,
                    control_phases(ii, FRAC_PI_2)?,
                    control_phases(ii, PI)?,
                ]
            }
        })
    }

    /// Estimate of `phi_T` from the probe probabilities, in probe order.
    pub fn reduce(&self, p: &[f64], m: u32) -> Result<PhaseEstimate> {
        match *self {
            Self::Arcsin { contrast } => estimate_arcsin(p[0], p[1], contrast),
            Self::Arctan2 => estimate_arctan2(p[0], p[1]),
            Self::Arctan2Offset => estimate_arctan2_offset(p[0], p[1]),
            Self::Settings(tag) => estimate_settings(p[0], p[1], m, tag),
            Self::AveragedSettings => {
                let i = estimate_settings(p[0], p[1], m, SettingsTag::I)?;
                let ii = estimate_settings(p[2], p[3], m, SettingsTag::II)?;
                average_settings(&i, &ii)
            }
        }
    }

    pub fn tag(&self) -> EstimatorTag {
        match self {
            Self::Arcsin { .. } => EstimatorTag::Arcsin,
            Self::Arctan2 => EstimatorTag::Arctan2,
            Self::Arctan2Offset => EstimatorTag::Arctan2Offset,
            Self::Settings(SettingsTag::I) => EstimatorTag::SettingsI,
            Self::Settings(SettingsTag::II) => EstimatorTag::SettingsII,
            Self::Settings(SettingsTag::III) => EstimatorTag::SettingsIII,
            Self::Settings(SettingsTag::Plain) => EstimatorTag::Arctan2,
            Self::AveragedSettings => EstimatorTag::Averaged,
        }
    }

    pub fn range_halfwidth(&self) -> f64 {
        match self {
            Self::Arcsin { .. } => FRAC_PI_2,
            _ => PI,
        }
    }
}

fn thetas_for(m: u32, theta_t: f64) -> Vec<f64> {
    crate::estimators::thetas_for_total(m, theta_t)
}

/// Runs every probe of `estimator` on `template` with position phases `phis`.
///
/// With `noise.projection_sampling` each probe is measured `shots` times;
/// otherwise exact probabilities are used. A sampled estimate that carries no
/// information (both arctan2 arguments exactly 1/2) is replaced by a uniform
/// guess over the estimator's range.
pub fn measure_phi_t<R: Rng + ?Sized>(
    template: &SequenceSpec,
    phis: &[f64],
    noise: &NoiseModel,
    estimator: Estimator,
    shots: u64,
    rng: &mut R,
) -> Result<PhaseEstimate> {
    noise.validate()?;
    let base = drives_with_phases(template, phis)?;
    let probes = estimator.probes(template.m)?;
    let sampled = noise.projection_sampling;
    if sampled && shots == 0 {
        return Err(Error::InvalidParameter("sampled measurement needs shots > 0".into()));
    }
    let mut drives: Vec<PulseDrive> = base;
    let mut probs = Vec::with_capacity(probes.len());
    for thetas in &probes {
        for ((d, phi), theta) in drives.iter_mut().zip(phis).zip(thetas) {
            d.phase = phi + theta;
        }
        let p = run_drives(&drives, template.inter_pulse_wait, noise);
        probs.push(if sampled {
            sample_measurements(p, shots, rng) as f64 / shots as f64
        } else {
            p
        });
    }
    let n_total = if sampled { shots * probes.len() as u64 } else { 0 };
    match estimator.reduce(&probs, template.m) {
        Ok(e) => Ok(e.with_samples(n_total)),
        Err(Error::Undefined) if sampled => {
            let r = estimator.range_halfwidth();
            let guess = rng.random_range(-r..r);
            Ok(PhaseEstimate::new(guess, r, estimator.tag()).with_samples(n_total))
        }
        Err(e) => Err(e),
    }
}

/// [`measure_phi_t`] with position phases from the ion's equilibrium positions
/// in `apparatus` under `field`.
pub fn measure_in_apparatus<R: Rng + ?Sized>(
    template: &SequenceSpec,
    apparatus: &Apparatus,
    field: &StrayField,
    noise: &NoiseModel,
    estimator: Estimator,
    shots: u64,
    rng: &mut R,
) -> Result<PhaseEstimate> {
    let phis = laser_phases(template, apparatus, field)?;
    measure_phi_t(template, &phis, noise, estimator, shots, rng)
}

/// A Method A template with placeholder ids, for studies that supply the
/// position phases directly.
pub fn abstract_method_a(m: u32, timing: &Timing) -> Result<SequenceSpec> {
    SequenceSpec::method_a(m, "beam", "A", "B", &vec![0.0; m as usize + 1], timing)
}

/// Draws `(k_mhalf, k_zero)` with `n/2` shots each at unit contrast and
/// returns the arctan2 estimate, guessing uniformly when undefined.
fn arctan2_draw<R: Rng + ?Sized>(phi_t: f64, n: u64, rng: &mut R) -> f64 {
    let half = n / 2;
    let p_m = 0.5 * (1.0 + (phi_t - FRAC_PI_2).cos());
    let p_0 = 0.5 * (1.0 + phi_t.cos());
    let a = sample_measurements(p_m, half, rng) as f64 / half as f64;
    let b = sample_measurements(p_0, half, rng) as f64 / half as f64;
    match estimate_arctan2(a, b) {
        Ok(e) => e.value,
        Err(_) => rng.random_range(-PI..PI),
    }
}

/// Same as [`arctan2_draw`] for the arcsin estimator at contrast `c`, probing
/// `theta_T = -pi/2, +pi/2`.
fn arcsin_draw<R: Rng + ?Sized>(phi_t: f64, n: u64, c: f64, rng: &mut R) -> f64 {
    let half = n / 2;
    let p_m = 0.5 * (1.0 + c * (phi_t - FRAC_PI_2).cos());
    let p_p = 0.5 * (1.0 + c * (phi_t + FRAC_PI_2).cos());
    let a = sample_measurements(p_m, half, rng) as f64 / half as f64;
    let b = sample_measurements(p_p, half, rng) as f64 / half as f64;
    match estimate_arcsin(a, b, c) {
        Ok(e) => e.value,
        Err(_) => rng.random_range(-FRAC_PI_2..FRAC_PI_2),
    }
}

/// Same as [`arctan2_draw`] for the offset estimator at contrast `c`.
fn offset_draw<R: Rng + ?Sized>(phi_t: f64, n: u64, c: f64, rng: &mut R) -> f64 {
    let half = n / 2;
    let p_q = 0.5 * (1.0 + c * (phi_t + FRAC_PI_4).cos());
    let p_3q = 0.5 * (1.0 + c * (phi_t + 3.0 * FRAC_PI_4).cos());
    let a = sample_measurements(p_q, half, rng) as f64 / half as f64;
    let b = sample_measurements(p_3q, half, rng) as f64 / half as f64;
    match estimate_arctan2_offset(a, b) {
        Ok(e) => e.value,
        Err(_) => rng.random_range(-PI..PI),
    }
}

/// RMS error of the arctan2 estimator at a fixed true `phi_t` with `n` total
/// shots split evenly between the two probes.
pub fn arctan2_rms_at(phi_t: f64, n: u64, trials: u64, key: &StreamKey) -> f64 {
    let errs = run_trials(key, trials, |_, rng| wrap_phase(arctan2_draw(phi_t, n, rng) - phi_t));
    rms(&errs)
}

/// RMS error of the arctan2 estimator with the true phase drawn uniformly
/// from `[-pi, pi)` on every trial.
pub fn arctan2_rms_uniform(n: u64, trials: u64, key: &StreamKey) -> f64 {
    let errs = run_trials(key, trials, |_, rng| {
        let phi = rng.random_range(-PI..PI);
        wrap_phase(arctan2_draw(phi, n, rng) - phi)
    });
    rms(&errs)
}

/// RMS error against the true phase for each entry of `phis`.
pub fn arctan2_rms_curve(phis: &[f64], n: u64, trials: u64, key: &StreamKey) -> Vec<f64> {
    phis.iter()
        .enumerate()
        .map(|(i, &phi)| arctan2_rms_at(phi, n, trials, &key.child(&format!("phi{i}"))))
        .collect()
}

/// RMS errors of the arcsin and offset-arctan2 estimators at contrast `c`.
pub fn arcsin_vs_offset_rms(phi_t: f64, n: u64, c: f64, trials: u64, key: &StreamKey) -> (f64, f64) {
    let errs = run_trials(key, trials, |_, rng| {
        let a = wrap_phase(arcsin_draw(phi_t, n, c, rng) - phi_t);
        let b = wrap_phase(offset_draw(phi_t, n, c, rng) - phi_t);
        (a, b)
    });
    let (a, b): (Vec<f64>, Vec<f64>) = errs.into_iter().unzip();
    (rms(&a), rms(&b))
}

/// Binary-search estimation of `phi_PD` with Method A sequences of length
/// `M_j = 2^(j-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RpeExperiment {
    pub schedule: RpeSchedule,
    pub timing: Timing,
    pub noise: NoiseModel,
}

impl RpeExperiment {
    pub fn new(schedule: RpeSchedule, timing: Timing, noise: NoiseModel) -> Self {
        Self { schedule, timing, noise }
    }

    /// One run of all passes for the true `phi_pd`; returns the combined estimate.
    pub fn run<R: Rng + ?Sized>(&self, phi_pd: f64, rng: &mut R) -> Result<f64> {
        let mut passes = Vec::with_capacity(self.schedule.j_max() as usize);
        for (_, m, n) in self.schedule.passes() {
            let template = abstract_method_a(m, &self.timing)?;
            let phis = method_a_phases(m, phi_pd);
            let est = measure_phi_t(&template, &phis, &self.noise, Estimator::Arctan2, n / 2, rng)?;
            passes.push(est.scaled(m));
        }
        rpe_combine(&passes)
    }

    /// RMS error over `trials` runs with `phi_PD` uniform in `[-pi, pi)`.
    pub fn rms_error(&self, trials: u64, key: &StreamKey) -> Result<f64> {
        let errs = run_trials(key, trials, |_, rng| {
            let phi = rng.random_range(-PI..PI);
            self.run(phi, rng).map(|e| wrap_phase(e - phi))
        });
        let errs: Vec<f64> = errs.into_iter().collect::<Result<_>>()?;
        Ok(rms(&errs))
    }

    pub fn total_area(&self) -> f64 {
        self.schedule.total_area()
    }
}

/// Systematic error of a `phi_PD` estimate from a noiseless-readout Method A
/// sequence of length `m` (exact probabilities, imperfect dynamics).
pub fn phi_pd_bias(phi_pd: f64, m: u32, estimator: Estimator, noise: &NoiseModel, timing: &Timing) -> Result<f64> {
    let template = abstract_method_a(m, timing)?;
    let phis = method_a_phases(m, phi_pd);
    let exact = noise.with_sampling(false);
    let mut rng = StreamKey::new(0, "unused").stream(0);
    let est = measure_phi_t(&template, &phis, &exact, estimator, 0, &mut rng)?;
    Ok(wrap_phase(est.value - m as f64 * phi_pd) / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_readout_recovers_phase() {
        let timing = Timing::default();
        for est in [
            Estimator::Arctan2,
            Estimator::Arctan2Offset,
            Estimator::Arcsin { contrast: 1.0 },
            Estimator::Settings(SettingsTag::I),
            Estimator::Settings(SettingsTag::III),
            Estimator::AveragedSettings,
        ] {
            for m in [2u32, 4, 8] {
                let b = phi_pd_bias(0.05, m, est, &NoiseModel::ideal(), &timing).unwrap();
                assert!(b.abs() < 1e-9, "{est:?} M={m}: {b}");
            }
        }
    }

    #[test]
    fn settings_need_even_m() {
        let r = phi_pd_bias(0.0, 3, Estimator::Settings(SettingsTag::I), &NoiseModel::ideal(), &Timing::default());
        assert_eq!(r, Err(Error::OddM(3)));
    }

    #[test]
    fn trials_are_order_stable() {
        let key = StreamKey::new(9, "order");
        let a = run_trials(&key, 64, |t, rng| (t, rng.random::<u64>()));
        let b = run_trials(&key, 64, |t, rng| (t, rng.random::<u64>()));
        assert_eq!(a, b);
        assert!(a.iter().enumerate().all(|(i, (t, _))| *t == i as u64));
    }

    #[test]
    fn rpe_noiseless_readout_is_exact() {
        let exp = RpeExperiment::new(RpeSchedule::uniform(5, 2).unwrap(), Timing::default(), NoiseModel::ideal());
        let mut rng = StreamKey::new(1, "rpe").stream(0);
        for phi in [-3.0, -1.0, 0.0, 0.3, 2.9] {
            let e = exp.run(phi, &mut rng).unwrap();
            assert!(wrap_phase(e - phi).abs() < 1e-9);
        }
    }
}
