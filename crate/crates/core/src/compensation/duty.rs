use crate::error::{Error, Result};

/// A stretch of constant RF power within a repeating schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfSegment {
    /// Duration (s).
    pub duration: f64,
    /// RF power relative to nominal operation (nominal = 1).
    pub power: f64,
}

impl RfSegment {
    pub fn new(duration: f64, power: f64) -> Self {
        Self { duration, power }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DutyCycleReport {
    /// Share of the schedule spent below nominal power.
    pub reduced_fraction: f64,
    /// Time-weighted mean power of the schedule.
    pub mean_power: f64,
    /// The schedule with a raised segment paired to every reduced one.
    pub balanced_profile: Vec<RfSegment>,
    /// Time-weighted mean power of `balanced_profile`.
    pub balanced_mean_power: f64,
}

fn weighted_mean(segments: &[RfSegment]) -> f64 {
    let total: f64 = segments.iter().map(|s| s.duration).sum();
    segments.iter().map(|s| s.duration * s.power).sum::<f64>() / total
}

/// Time at reduced RF and a balanced profile whose mean equals `nominal`.
///
/// Each reduced segment at power `P` is paired with a raised segment of the
/// same length at `2 nominal - P`, taken out of nominal-power time when
/// enough is available and appended otherwise.
pub fn duty_cycle_report(schedule: &[RfSegment], nominal: f64) -> Result<DutyCycleReport> {
    if schedule.is_empty() {
        return Err(Error::InvalidParameter("schedule is empty".into()));
    }
    if let Some(s) = schedule.iter().find(|s| !(s.duration > 0.0) || !(s.power >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "segments need positive duration and non-negative power, got {s:?}"
        )));
    }
    if !(nominal > 0.0) {
        return Err(Error::InvalidParameter(format!("nominal power {nominal} must be > 0")));
    }
    let total: f64 = schedule.iter().map(|s| s.duration).sum();
    let tol = 1e-12 * nominal;
    let reduced_time: f64 = schedule.iter().filter(|s| s.power < nominal - tol).map(|s| s.duration).sum();

    let mut raised: Vec<RfSegment> = schedule
        .iter()
        .filter(|s| (s.power - nominal).abs() > tol)
        .map(|s| RfSegment::new(s.duration, 2.0 * nominal - s.power))
        .collect();
    let mut needed: f64 = raised.iter().map(|s| s.duration).sum();
    let mut profile = Vec::with_capacity(schedule.len() + raised.len());
    for s in schedule {
        if (s.power - nominal).abs() > tol || needed <= 0.0 {
            profile.push(*s);
            continue;
        }
        // carve compensating segments out of nominal time
        let mut left = s.duration;
        while left > 0.0 && !raised.is_empty() {
            let r = raised[0];
            if r.duration <= left {
                profile.push(r);
                left -= r.duration;
                needed -= r.duration;
                raised.remove(0);
            } else {
                profile.push(RfSegment::new(left, r.power));
                raised[0].duration -= left;
                needed -= left;
                left = 0.0;
            }
        }
        if left > 0.0 {
            profile.push(RfSegment::new(left, s.power));
        }
    }
    profile.extend(raised);
    Ok(DutyCycleReport {
        reduced_fraction: reduced_time / total,
        mean_power: weighted_mean(schedule),
        balanced_mean_power: weighted_mean(&profile),
        balanced_profile: profile,
    })
}
