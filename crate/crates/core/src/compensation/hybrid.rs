use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::protocol::measure_in_apparatus;
use crate::pulse::{sample_measurements, Apparatus, NoiseModel};
use crate::rng::StreamKey;
use crate::trap::{StrayField, Vec3};

use super::gradient::{ElectrodeGeometry, Observable};
use super::micromotion::{sideband_amplitude, sideband_signal, RfOperatingPoint};

/// Single-beam compensation in the radial plane: interferometry fixes the
/// field along the beam's sensitive direction, resolved-sideband minimization
/// the orthogonal one.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridConfig {
    pub apparatus: Apparatus,
    /// Interferometric observable driven by `beam_id`.
    pub observable: Observable,
    pub beam_id: String,
    /// Exactly two electrodes.
    pub geometry: ElectrodeGeometry,
    pub rf: RfOperatingPoint,
    pub noise: NoiseModel,
    /// Carrier-equivalent area of the sideband probe pulse (rad).
    pub sideband_area: f64,
    pub sideband_shots: u64,
    /// Initial half-width of the sideband line search (V).
    pub search_halfwidth: f64,
    /// Golden-section iterations per line search.
    pub search_steps: usize,
    /// Convergence threshold on `|phi_T|` (rad).
    pub phase_threshold: f64,
    /// Convergence threshold on the estimated sideband ratio.
    pub sideband_threshold: f64,
    pub max_rounds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridStep {
    pub round: usize,
    /// Measured `phi_T` after the round.
    pub phase: f64,
    /// Estimated sideband ratio after the round.
    pub sideband: f64,
    /// True net field after the round.
    pub field: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridResult {
    pub converged: bool,
    pub rounds: usize,
    pub voltages: Vec<f64>,
    pub final_field: Vec3,
    pub history: Vec<HybridStep>,
}

struct Probe<'a> {
    cfg: &'a HybridConfig,
    stray: Vec3,
}

impl Probe<'_> {
    fn field(&self, v: &Vector2<f64>) -> Result<StrayField> {
        let g = self.cfg.geometry.matrix();
        StrayField::new(self.stray + g.column(0) * v[0] + g.column(1) * v[1])
    }

    fn phase<R: Rng + ?Sized>(&self, v: &Vector2<f64>, noise: &NoiseModel, rng: &mut R) -> Result<f64> {
        let o = &self.cfg.observable;
        measure_in_apparatus(&o.template, &self.cfg.apparatus, &self.field(v)?, noise, o.estimator, o.shots, rng)
            .map(|e| e.value)
    }

    /// Sideband ratio estimated from `p = sin^2(A ratio / 2)`.
    ///
    /// The probe area climbs from below `pi` to `sideband_area` in factors of
    /// 2, stopping before a longer pulse could leave the monotone branch.
    fn sideband<R: Rng + ?Sized>(&self, v: &Vector2<f64>, rng: &mut R) -> Result<f64> {
        let cfg = self.cfg;
        let beam = cfg.apparatus.beam(&cfg.beam_id)?;
        let ratio = sideband_signal(beam, &cfg.apparatus.ion, &cfg.rf, &self.field(v)?);
        if !cfg.noise.projection_sampling {
            return Ok(ratio);
        }
        let mut area = cfg.sideband_area;
        while area > PI {
            area /= LADDER;
        }
        let mut estimate = f64::INFINITY;
        loop {
            if estimate.is_finite() && estimate * area > 0.75 * PI {
                break;
            }
            let p = (0.5 * area * ratio).sin().powi(2);
            let k = sample_measurements(p, cfg.sideband_shots, rng);
            let p_est = k as f64 / cfg.sideband_shots as f64;
            estimate = 2.0 * p_est.sqrt().asin() / area;
            if area >= cfg.sideband_area {
                break;
            }
            area = (area * LADDER).min(cfg.sideband_area);
        }
        Ok(estimate)
    }
}

const LADDER: f64 = 2.0;

fn golden_section(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64, steps: usize) -> Result<f64> {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..steps {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Runs the hybrid loop from stray field `initial` with all voltages at zero.
///
/// Each round applies an interferometric correction along the voltage
/// direction that leaves the sideband amplitude unchanged, then line-searches
/// the sideband signal along the direction that leaves the interferometric
/// phase unchanged. Round `r` draws from stream `r` of `key`.
pub fn hybrid_2d_minimize(cfg: &HybridConfig, initial: &StrayField, key: &StreamKey) -> Result<HybridResult> {
    if cfg.geometry.n_electrodes() != 2 {
        return Err(Error::InvalidParameter(format!(
            "hybrid loop uses two electrodes, got {}",
            cfg.geometry.n_electrodes()
        )));
    }
    if !(cfg.sideband_area > 0.0) || cfg.sideband_shots == 0 || !(cfg.search_halfwidth > 0.0) {
        return Err(Error::InvalidParameter(
            "sideband area, shots and search half-width must be positive".into(),
        ));
    }
    cfg.noise.validate()?;
    cfg.observable.template.validate()?;
    let beam = cfg.apparatus.beam(&cfg.beam_id)?;
    let probe = Probe {
        cfg,
        stray: *initial.vector(),
    };

    // calibration from the exact model: phase and signed sideband slopes per volt
    let exact = cfg.noise.with_sampling(false);
    let mut unused = key.stream(u64::MAX);
    let delta = cfg.search_halfwidth.min(1.0) * 1e-3;
    let mut b = Vector2::zeros();
    let mut a = Vector2::zeros();
    for j in 0..2 {
        let mut e = Vector2::zeros();
        e[j] = delta;
        b[j] = (probe.phase(&e, &exact, &mut unused)? - probe.phase(&(-e), &exact, &mut unused)?) / (2.0 * delta);
        a[j] = sideband_amplitude(
            beam,
            &cfg.apparatus.ion,
            &cfg.rf,
            &StrayField::new(cfg.geometry.column(j))?,
        );
    }
    let scale_b = b.norm();
    let scale_a = a.norm();
    if !(scale_b > 0.0) {
        return Err(Error::NoProgress("interferometric phase does not depend on the electrodes".into()));
    }
    if !(scale_a > 0.0) {
        return Err(Error::NoProgress("sideband signal does not depend on the electrodes".into()));
    }
    let system = Matrix2::new(b[0], b[1], a[0], a[1]);
    if system.determinant().abs() <= 1e-9 * scale_a * scale_b {
        return Err(Error::NoProgress("interferometric and sideband directions coincide".into()));
    }
    let inv = system.try_inverse().ok_or(Error::RankDeficient)?;
    // keeps phi fixed
    let along = Vector2::new(-b[1], b[0]) / scale_b;

    let mut v = Vector2::zeros();
    let mut width = cfg.search_halfwidth;
    let mut history = Vec::new();
    for round in 0..cfg.max_rounds {
        let mut rng = key.stream(round as u64);
        let phi = probe.phase(&v, &cfg.noise, &mut rng)?;
        v -= inv * Vector2::new(phi, 0.0);

        let start = v;
        let t = golden_section(
            |t| probe.sideband(&(start + along * t), &mut rng),
            -width,
            width,
            cfg.search_steps,
        )?;
        v = start + along * t;
        width = if t.abs() > 0.8 * width { 2.0 * width } else { (0.5 * width).max(2.0 * t.abs()) };
        width = width.max(cfg.search_halfwidth * 1e-3);

        let phase = probe.phase(&v, &cfg.noise, &mut rng)?;
        let sideband = probe.sideband(&v, &mut rng)?;
        let field = *probe.field(&v)?.vector();
        history.push(HybridStep {
            round,
            phase,
            sideband,
            field,
        });
        if phase.abs() < cfg.phase_threshold && sideband < cfg.sideband_threshold {
            return Ok(HybridResult {
                converged: true,
                rounds: round + 1,
                voltages: vec![v[0], v[1]],
                final_field: field,
                history,
            });
        }
    }
    Ok(HybridResult {
        converged: false,
        rounds: cfg.max_rounds,
        voltages: vec![v[0], v[1]],
        final_field: *probe.field(&v)?.vector(),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_minimum() {
        let x = golden_section(|t| Ok((t - 0.3).abs()), -1.0, 1.0, 60).unwrap();
        assert!((x - 0.3).abs() < 1e-9);
    }
}
