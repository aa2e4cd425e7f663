//! Phase reconstruction from excitation probabilities.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::num::NonZeroU64;

use crate::error::{Error, Result};
use crate::trap::wrap_phase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorTag {
    Arcsin,
    Arctan2,
    Arctan2Offset,
    SettingsI,
    SettingsII,
    SettingsIII,
    /// Circular mean of settings I and II.
    Averaged,
    Rpe,
}

impl fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Arcsin => "arcsin",
            Self::Arctan2 => "arctan2",
            Self::Arctan2Offset => "arctan2_offset",
            Self::SettingsI => "settingsI",
            Self::SettingsII => "settingsII",
            Self::SettingsIII => "settingsIII",
            Self::Averaged => "averagedI_II",
            Self::Rpe => "rpe",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEstimate {
    pub value: f64,
    pub range_halfwidth: f64,
    /// Measurements behind the estimate; `None` when built from exact probabilities.
    pub samples: Option<NonZeroU64>,
    pub tag: EstimatorTag,
    /// Set when an arcsin argument had to be clamped into [-1, 1].
    pub clamped: bool,
}

impl PhaseEstimate {
    pub fn new(value: f64, range_halfwidth: f64, tag: EstimatorTag) -> Self {
        Self {
            value,
            range_halfwidth,
            samples: None,
            tag,
            clamped: false,
        }
    }

    pub fn with_samples(mut self, n: u64) -> Self {
        self.samples = NonZeroU64::new(n);
        self
    }

    /// Estimate of `phi_T / m`, e.g. `phi_PD` from a length-`m` Method A sequence.
    pub fn scaled(mut self, m: u32) -> Self {
        let m = m.max(1) as f64;
        self.value /= m;
        self.range_halfwidth /= m;
        self
    }

    pub fn with_tag(mut self, tag: EstimatorTag) -> Self {
        self.tag = tag;
        self
    }
}

/// `arcsin[(p- - p+) / (C (p- + p+))]` from probabilities at `theta_T = -pi/2, +pi/2`.
pub fn estimate_arcsin(p_minus: f64, p_plus: f64, contrast: f64) -> Result<PhaseEstimate> {
    if !(contrast > 0.0 && contrast <= 1.0) {
        return Err(Error::InvalidParameter(format!("contrast {contrast} outside (0, 1]")));
    }
    let denom = contrast * (p_minus + p_plus);
    if denom == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let arg = (p_minus - p_plus) / denom;
    let clamped = arg.abs() > 1.0;
    let mut est = PhaseEstimate::new(arg.clamp(-1.0, 1.0).asin(), FRAC_PI_2, EstimatorTag::Arcsin);
    est.clamped = clamped;
    Ok(est)
}

fn arctan2_checked(y: f64, x: f64) -> Result<f64> {
    if y == 0.0 && x == 0.0 {
        return Err(Error::Undefined);
    }
    Ok(wrap_phase(y.atan2(x)))
}

/// `arctan2(p(-pi/2) - 1/2, p(0) - 1/2)`.
pub fn estimate_arctan2(p_mhalf: f64, p_zero: f64) -> Result<PhaseEstimate> {
    let v = arctan2_checked(p_mhalf - 0.5, p_zero - 0.5)?;
    Ok(PhaseEstimate::new(v, PI, EstimatorTag::Arctan2))
}

/// `arctan2(p(pi/4) - 1/2, p(3pi/4) - 1/2) - 3pi/4`, most precise near zero.
pub fn estimate_arctan2_offset(p_q: f64, p_3q: f64) -> Result<PhaseEstimate> {
    let v = arctan2_checked(p_q - 0.5, p_3q - 0.5)?;
    Ok(PhaseEstimate::new(wrap_phase(v - 3.0 * FRAC_PI_4), PI, EstimatorTag::Arctan2Offset))
}

/// Mean direction of unit phasors.
pub fn circular_mean(phases: &[f64]) -> Result<f64> {
    let (s, c) = phases.iter().fold((0.0, 0.0), |(s, c), p| (s + p.sin(), c + p.cos()));
    arctan2_checked(s, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SettingsTag {
    /// `theta_1` followed by zeros; any `M`.
    Plain,
    I,
    II,
    III,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlPhaseSettings {
    pub tag: SettingsTag,
    pub m: u32,
}

impl ControlPhaseSettings {
    pub fn new(tag: SettingsTag, m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidSequence("M must be >= 1".into()));
        }
        if tag != SettingsTag::Plain && m % 2 == 1 {
            return Err(Error::OddM(m));
        }
        Ok(Self { tag, m })
    }
}

/// The `M+1` control phases of `settings` with first phase `theta_1`.
pub fn control_phases(settings: ControlPhaseSettings, theta_1: f64) -> Result<Vec<f64>> {
    let ControlPhaseSettings { tag, m } = ControlPhaseSettings::new(settings.tag, settings.m)?;
    let n = m as usize + 1;
    let (even, odd) = match tag {
        SettingsTag::Plain => (0.0, 0.0),
        SettingsTag::I => (0.0, -FRAC_PI_2),
        SettingsTag::II => (0.0, FRAC_PI_2),
        SettingsTag::III => (FRAC_PI_2, -FRAC_PI_2),
    };
    let last = if tag == SettingsTag::Plain { 0.0 } else { PI };
    Ok((1..=n)
        .map(|j| match j {
            1 => theta_1,
            j if j == n => last,
            j if j % 2 == 0 => even,
            _ => odd,
        })
        .collect())
}

/// Control phases `(theta_1, 0, ..., 0)` giving total control phase `theta_t`
/// for a length-`m` sequence.
pub fn thetas_for_total(m: u32, theta_t: f64) -> Vec<f64> {
    let xi = if m % 2 == 0 { PI } else { 0.0 };
    let mut thetas = vec![0.0; m as usize + 1];
    thetas[0] = wrap_phase(theta_t - xi);
    thetas
}

/// Estimate of `phi_T` from the two `theta_1` runs of settings I, II or III.
///
/// `tag` selects the reconstruction; I and II share theirs.
pub fn estimate_settings(p_half: f64, p_pi: f64, m: u32, tag: SettingsTag) -> Result<PhaseEstimate> {
    ControlPhaseSettings::new(tag, m)?;
    let (value, out_tag) = match tag {
        SettingsTag::Plain => {
            return Err(Error::InvalidParameter("plain settings have no two-run estimate".into()));
        }
        SettingsTag::I | SettingsTag::II => {
            let sign = if (m / 2) % 2 == 0 { 1.0 } else { -1.0 };
            let tag = if tag == SettingsTag::I {
                EstimatorTag::SettingsI
            } else {
                EstimatorTag::SettingsII
            };
            (arctan2_checked(sign * (p_half - 0.5), sign * (p_pi - 0.5))?, tag)
        }
        SettingsTag::III => (arctan2_checked(p_half - 0.5, p_pi - 0.5)?, EstimatorTag::SettingsIII),
    };
    Ok(PhaseEstimate::new(value, PI, out_tag))
}

/// Circular mean of a settings I and a settings II estimate.
pub fn average_settings(est_i: &PhaseEstimate, est_ii: &PhaseEstimate) -> Result<PhaseEstimate> {
    let value = circular_mean(&[est_i.value, est_ii.value])?;
    let samples = match (est_i.samples, est_ii.samples) {
        (Some(a), Some(b)) => a.checked_add(b.get()),
        _ => None,
    };
    Ok(PhaseEstimate {
        value,
        range_halfwidth: est_i.range_halfwidth.max(est_ii.range_halfwidth),
        samples,
        tag: EstimatorTag::Averaged,
        clamped: est_i.clamped || est_ii.clamped,
    })
}

/// Measurement counts of a binary-search run; pass `j` uses `M_j = 2^(j-1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RpeSchedule {
    counts: Vec<u64>,
}

impl RpeSchedule {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::BadSchedule("at least one pass required".into()));
        }
        if counts.len() > 31 {
            return Err(Error::BadSchedule("at most 31 passes".into()));
        }
        if let Some(j) = counts.iter().position(|&n| n == 0 || n % 2 == 1) {
            return Err(Error::BadSchedule(format!("pass {} count must be positive and even", j + 1)));
        }
        Ok(Self { counts })
    }

    pub fn uniform(j_max: u32, n: u64) -> Result<Self> {
        Self::new(vec![n; j_max as usize])
    }

    pub fn j_max(&self) -> u32 {
        self.counts.len() as u32
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `M_j` for 1-based pass `j`.
    pub fn sequence_length(j: u32) -> u32 {
        1 << (j - 1)
    }

    pub fn passes(&self) -> impl Iterator<Item = (u32, u32, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &n)| (i as u32 + 1, Self::sequence_length(i as u32 + 1), n))
    }

    /// Total pulse area `sum_j N_j M_j pi`.
    pub fn total_area(&self) -> f64 {
        self.passes().map(|(_, m, n)| n as f64 * m as f64 * PI).sum()
    }
}

/// Combines per-pass estimates of `phi_PD`, pass `j` lying in `[-pi/2^(j-1), pi/2^(j-1)]`.
pub fn rpe_combine(passes: &[PhaseEstimate]) -> Result<f64> {
    if passes.is_empty() {
        return Err(Error::BadSchedule("no passes".into()));
    }
    let mut estimate = 0.0;
    for (i, pass) in passes.iter().enumerate() {
        let l = PI / f64::powi(2.0, i as i32);
        if (pass.range_halfwidth - l).abs() > 1e-9 * l {
            return Err(Error::BadSchedule(format!(
                "pass {} has half-width {}, expected {l}",
                i + 1,
                pass.range_halfwidth
            )));
        }
        let mut current = pass.value;
        while current < estimate - l {
            current += 2.0 * l;
        }
        while current > estimate + l {
            current -= 2.0 * l;
        }
        estimate = current;
    }
    Ok(estimate)
}

/// Standard quantum limit `sqrt(pi / A)` for total pulse area `A`.
pub fn sql_bound(total_area: f64) -> Result<f64> {
    if !(total_area > 0.0) {
        return Err(Error::InvalidParameter(format!("total area {total_area} must be > 0")));
    }
    Ok((PI / total_area).sqrt())
}
