use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::trap::{SubsetParity, DEFAULT_PI_TIME};

/// One coherent pulse of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSpec {
    pub beam_id: String,
    pub setting_id: String,
    /// Nominal pulse area (rad).
    pub area: f64,
    /// Controlled phase shift `theta_j` (rad).
    pub control_phase: f64,
    /// Detuning intrinsic to this pulse (rad/s).
    pub detuning: f64,
    /// Pulse duration (s).
    pub duration: f64,
    /// Multiplicative area factor; 1 is ideal.
    pub area_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// One beam, stiffness alternated between two settings.
    A,
    /// Two beams alternated at a fixed stiffness.
    B,
    /// Two beams and two settings, split into four pulse subsets.
    C { m_alpha: u32, m_beta: u32, parity: SubsetParity },
}

/// Pulse timing shared by every pulse of a sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    /// Duration of a nominal pi pulse (s).
    pub pi_time: f64,
    /// Settling time between consecutive pulses (s).
    pub wait: f64,
}

impl Timing {
    pub fn new(pi_time: f64, wait: f64) -> Result<Self> {
        if !(pi_time >= 0.0 && pi_time.is_finite()) || !(wait >= 0.0 && wait.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "pulse timing must be non-negative, got pi_time={pi_time}, wait={wait}"
            )));
        }
        Ok(Self { pi_time, wait })
    }

    pub fn duration_of(&self, area: f64) -> f64 {
        area / PI * self.pi_time
    }

    /// Total duration of a length-`m` sequence.
    pub fn sequence_duration(&self, m: u32) -> f64 {
        m as f64 * (self.pi_time + self.wait)
    }
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            pi_time: DEFAULT_PI_TIME,
            wait: 50e-6,
        }
    }
}

/// Ordered pulses of a Method A/B/C sequence: `M + 1` pulses, the outer two of
/// area pi/2 and the rest of area pi.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub method: Method,
    pub m: u32,
    pub pulses: Vec<PulseSpec>,
    pub inter_pulse_wait: f64,
}

fn nominal_area(j: usize, m: u32) -> f64 {
    if j == 1 || j == m as usize + 1 {
        FRAC_PI_2
    } else {
        PI
    }
}

fn check_lengths(m: u32, thetas: &[f64]) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidSequence("M must be >= 1".into()));
    }
    if thetas.len() != m as usize + 1 {
        return Err(Error::LengthMismatch {
            expected: m as usize + 1,
            got: thetas.len(),
        });
    }
    Ok(())
}

/// Beam/setting assignment of each pulse for Method C. Subset budgets are in
/// units of pi/2 of pulse area; a pulse cannot be split across subsets.
fn method_c_layout(m_alpha: u32, m_beta: u32, parity: SubsetParity) -> Result<Vec<(bool, bool)>> {
    let m = m_alpha + m_beta;
    if m == 0 {
        return Err(Error::InvalidSequence("M_alpha + M_beta must be >= 1".into()));
    }
    let n = m as usize + 1;
    // areas in units of pi/2: 1 for the end pulses, 2 otherwise
    let units = |j: usize| if j == 1 || j == n { 1 } else { 2 };
    let mut use_alpha = vec![false; n + 1];
    for class in [1usize, 0] {
        let idx: Vec<usize> = (1..=n).filter(|j| j % 2 == class).collect();
        let ones: Vec<usize> = idx.iter().copied().filter(|&j| units(j) == 1).collect();
        let twos: Vec<usize> = idx.iter().copied().filter(|&j| units(j) == 2).collect();
        let target = m_alpha as usize;
        let c = (0..=ones.len())
            .rev()
            .find(|&c| c <= target && (target - c) % 2 == 0 && (target - c) / 2 <= twos.len())
            .ok_or_else(|| {
                Error::InvalidSequence(format!(
                    "subsets M_alpha={m_alpha}, M_beta={m_beta} cannot be realized without splitting a pulse"
                ))
            })?;
        for &j in ones.iter().take(c).chain(twos.iter().take((target - c) / 2)) {
            use_alpha[j] = true;
        }
    }
    Ok((1..=n)
        .map(|j| {
            let alpha = use_alpha[j];
            // alpha: A on odd, B on even. beta: same for Plus, swapped for Minus.
            let at_a = match (alpha, parity) {
                (true, _) | (false, SubsetParity::Plus) => j % 2 == 1,
                (false, SubsetParity::Minus) => j % 2 == 0,
            };
            (alpha, at_a)
        })
        .collect())
}

impl SequenceSpec {
    fn build(
        method: Method,
        m: u32,
        thetas: &[f64],
        timing: &Timing,
        assign: impl Fn(usize) -> (String, String),
    ) -> Result<Self> {
        check_lengths(m, thetas)?;
        let pulses = (1..=m as usize + 1)
            .map(|j| {
                let (beam_id, setting_id) = assign(j);
                let area = nominal_area(j, m);
                PulseSpec {
                    beam_id,
                    setting_id,
                    area,
                    control_phase: thetas[j - 1],
                    detuning: 0.0,
                    duration: timing.duration_of(area),
                    area_error: 1.0,
                }
            })
            .collect();
        Ok(Self {
            method,
            m,
            pulses,
            inter_pulse_wait: timing.wait,
        })
    }

    /// Method A: one beam, setting `a` on odd pulses and `b` on even pulses.
    pub fn method_a(m: u32, beam: &str, a: &str, b: &str, thetas: &[f64], timing: &Timing) -> Result<Self> {
        Self::build(Method::A, m, thetas, timing, |j| {
            let setting = if j % 2 == 1 { a } else { b };
            (beam.to_string(), setting.to_string())
        })
    }

    /// Method B: beam `alpha` on odd pulses, `beta` on even pulses, one setting.
    pub fn method_b(m: u32, alpha: &str, beta: &str, setting: &str, thetas: &[f64], timing: &Timing) -> Result<Self> {
        Self::build(Method::B, m, thetas, timing, |j| {
            let beam = if j % 2 == 1 { alpha } else { beta };
            (beam.to_string(), setting.to_string())
        })
    }

    /// Method C with subset sizes `m_alpha`, `m_beta` (`M = m_alpha + m_beta`).
    #[allow(clippy::too_many_arguments)]
    pub fn method_c(
        m_alpha: u32,
        m_beta: u32,
        parity: SubsetParity,
        alpha: &str,
        beta: &str,
        a: &str,
        b: &str,
        thetas: &[f64],
        timing: &Timing,
    ) -> Result<Self> {
        let layout = method_c_layout(m_alpha, m_beta, parity)?;
        let method = Method::C {
            m_alpha,
            m_beta,
            parity,
        };
        Self::build(method, m_alpha + m_beta, thetas, timing, |j| {
            let (use_alpha, at_a) = layout[j - 1];
            (
                if use_alpha { alpha } else { beta }.to_string(),
                if at_a { a } else { b }.to_string(),
            )
        })
    }

    pub fn control_phases(&self) -> Vec<f64> {
        self.pulses.iter().map(|p| p.control_phase).collect()
    }

    pub fn set_control_phases(&mut self, thetas: &[f64]) -> Result<()> {
        check_lengths(self.m, thetas)?;
        for (p, t) in self.pulses.iter_mut().zip(thetas) {
            p.control_phase = *t;
        }
        Ok(())
    }

    /// Total coherent pulse area (rad), nominally `M pi`.
    pub fn total_area(&self) -> f64 {
        self.pulses.iter().map(|p| p.area).sum()
    }

    pub fn stiffness_schedule(&self) -> Vec<&str> {
        self.pulses.iter().map(|p| p.setting_id.as_str()).collect()
    }

    /// Checks pulse count, areas, timing and the per-method beam/setting
    /// alternation pattern.
    pub fn validate(&self) -> Result<()> {
        let m = self.m as usize;
        if self.m == 0 {
            return Err(Error::InvalidSequence("M must be >= 1".into()));
        }
        if self.pulses.len() != m + 1 {
            return Err(Error::LengthMismatch {
                expected: m + 1,
                got: self.pulses.len(),
            });
        }
        if !(self.inter_pulse_wait >= 0.0) {
            return Err(Error::InvalidSequence("inter-pulse wait must be >= 0".into()));
        }
        for (i, p) in self.pulses.iter().enumerate() {
            let j = i + 1;
            if !(p.duration >= 0.0) || !(p.area >= 0.0) {
                return Err(Error::InvalidSequence(format!("pulse {j}: duration and area must be >= 0")));
            }
            if (p.area - nominal_area(j, self.m)).abs() > 1e-12 {
                return Err(Error::InvalidSequence(format!(
                    "pulse {j}: area {} does not match the pi/2, pi, ..., pi, pi/2 pattern",
                    p.area
                )));
            }
        }
        let first = &self.pulses[0];
        let second = self.pulses.get(1).unwrap_or(first);
        let pattern_ok = match self.method {
            Method::A => self.pulses.iter().enumerate().all(|(i, p)| {
                let reference = if i % 2 == 0 { first } else { second };
                p.beam_id == first.beam_id && p.setting_id == reference.setting_id
            }),
            Method::B => self.pulses.iter().enumerate().all(|(i, p)| {
                let reference = if i % 2 == 0 { first } else { second };
                p.setting_id == first.setting_id && p.beam_id == reference.beam_id
            }),
            Method::C {
                m_alpha,
                m_beta,
                parity,
            } => {
                if m_alpha + m_beta != self.m {
                    return Err(Error::InvalidSequence("M_alpha + M_beta must equal M".into()));
                }
                // reconstruct ids from the canonical layout
                let layout = method_c_layout(m_alpha, m_beta, parity)?;
                let mut alpha = None;
                let mut beta = None;
                let mut set_a = None;
                let mut set_b = None;
                self.pulses.iter().zip(&layout).all(|(p, (use_alpha, at_a))| {
                    let beam_slot = if *use_alpha { &mut alpha } else { &mut beta };
                    let set_slot = if *at_a { &mut set_a } else { &mut set_b };
                    let beam_ok = *beam_slot.get_or_insert(p.beam_id.as_str()) == p.beam_id;
                    let set_ok = *set_slot.get_or_insert(p.setting_id.as_str()) == p.setting_id;
                    beam_ok && set_ok
                })
            }
        };
        if !pattern_ok {
            return Err(Error::InvalidSequence(format!(
                "beam/setting pattern does not match method {:?}",
                self.method
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_a_alternates_settings() {
        let seq = SequenceSpec::method_a(3, "h", "A", "B", &[0.0; 4], &Timing::default()).unwrap();
        assert_eq!(seq.stiffness_schedule(), vec!["A", "B", "A", "B"]);
        assert!((seq.total_area() - 3.0 * PI).abs() < 1e-12);
        seq.validate().unwrap();
    }

    #[test]
    fn wrong_theta_count() {
        let err = SequenceSpec::method_b(2, "a", "b", "A", &[0.0; 2], &Timing::default()).unwrap_err();
        assert_eq!(err, Error::LengthMismatch { expected: 3, got: 2 });
    }

    #[test]
    fn method_c_plus_layout() {
        let seq = SequenceSpec::method_c(2, 2, SubsetParity::Plus, "a", "b", "A", "B", &[0.0; 5], &Timing::default())
            .unwrap();
        let ids: Vec<_> = seq.pulses.iter().map(|p| (p.beam_id.as_str(), p.setting_id.as_str())).collect();
        assert_eq!(ids, vec![("a", "A"), ("a", "B"), ("b", "A"), ("b", "B"), ("a", "A")]);
        seq.validate().unwrap();
    }

    #[test]
    fn method_c_unsplittable_subsets() {
        let err = SequenceSpec::method_c(1, 3, SubsetParity::Plus, "a", "b", "A", "B", &[0.0; 5], &Timing::default());
        assert!(matches!(err, Err(Error::InvalidSequence(_))));
    }

    #[test]
    fn tampered_pattern_rejected() {
        let mut seq = SequenceSpec::method_a(2, "h", "A", "B", &[0.0; 3], &Timing::default()).unwrap();
        seq.pulses[2].setting_id = "B".into();
        assert!(seq.validate().is_err());
    }
}
