//! Complex-envelope response of the trap's RF resonator when the drive is
//! handed from one source to another and back.
//!
//! The envelope obeys `db/dt = (s(t) - b) / tau` for a setpoint `s(t)` that
//! is piecewise linear in time, which has the exact solution used here.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonatorParams {
    /// Envelope time constant (s).
    pub tau: f64,
    /// Resonance (rad/s), if known.
    pub resonance: Option<f64>,
    pub q: Option<f64>,
}

impl ResonatorParams {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be > 0, got {tau}")));
        }
        Ok(Self {
            tau,
            resonance: None,
            q: None,
        })
    }

    /// `tau = 2 Q / resonance`.
    pub fn from_q(q: f64, resonance: f64) -> Result<Self> {
        if !(q > 0.0) || !(resonance > 0.0) {
            return Err(Error::InvalidParameter("Q and resonance must be > 0".into()));
        }
        Ok(Self {
            tau: 2.0 * q / resonance,
            resonance: Some(resonance),
            q: Some(q),
        })
    }

    /// All three given; they must agree within 20%.
    pub fn with_q(tau: f64, q: f64, resonance: f64) -> Result<Self> {
        let implied = Self::from_q(q, resonance)?.tau;
        let p = Self::new(tau)?;
        if (implied / tau - 1.0).abs() > 0.2 {
            return Err(Error::InvalidParameter(format!(
                "tau {tau:.3e} s disagrees with 2Q/resonance = {implied:.3e} s"
            )));
        }
        Ok(Self {
            resonance: Some(resonance),
            q: Some(q),
            ..p
        })
    }
}

/// Hand-over from source 1 (amplitude `a1`) to source 2 (`a2`, phase
/// `delta_phi` relative to source 1) at `t_switch`, and back at `t_revert`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSwitch {
    pub a1: f64,
    pub a2: f64,
    pub delta_phi: f64,
    pub t_switch: f64,
    pub t_revert: f64,
}

impl SourceSwitch {
    pub fn new(a1: f64, a2: f64, delta_phi: f64, t_switch: f64, t_revert: f64) -> Result<Self> {
        if !(a1 >= 0.0) || !(a2 >= 0.0) {
            return Err(Error::InvalidParameter("amplitudes must be >= 0".into()));
        }
        if !(t_switch >= 0.0) || !(t_revert > t_switch) || !delta_phi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= t_switch < t_revert, got {t_switch} and {t_revert}"
            )));
        }
        Ok(Self {
            a1,
            a2,
            delta_phi,
            t_switch,
            t_revert,
        })
    }

    fn target(&self) -> Complex64 {
        Complex64::from_polar(self.a2, self.delta_phi)
    }
}

/// How the amplitude servo shapes the setpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServoMode {
    /// Setpoints jump to the requested amplitudes.
    Ideal,
    /// Source 2's path has gain `path_gain`; a correction derived from the
    /// steady state is applied `delay` seconds after the switch.
    SteadyStateCorrected { path_gain: f64, delay: f64 },
    /// Setpoints ramp linearly over `ramp_time` at both hand-overs.
    Ramped { ramp_time: f64 },
}

/// Setpoint `s(t) = s0 + rate (t - t0)` from `t0` until the next piece.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    t0: f64,
    s0: Complex64,
    rate: Complex64,
}

fn pieces(sw: &SourceSwitch, mode: ServoMode) -> Result<Vec<Piece>> {
    let one = Complex64::new(sw.a1, 0.0);
    let two = sw.target();
    let zero = Complex64::new(0.0, 0.0);
    let flat = |t0, s0| Piece { t0, s0, rate: zero };
    Ok(match mode {
        ServoMode::Ideal => vec![flat(sw.t_switch, two), flat(sw.t_revert, one)],
        ServoMode::SteadyStateCorrected { path_gain, delay } => {
            if !(path_gain > 0.0) || !(delay >= 0.0) {
                return Err(Error::InvalidParameter("path gain must be > 0 and delay >= 0".into()));
            }
            let mut v = vec![flat(sw.t_switch, two * path_gain)];
            if sw.t_switch + delay < sw.t_revert {
                v.push(flat(sw.t_switch + delay, two));
            }
            v.push(flat(sw.t_revert, one));
            v
        }
        ServoMode::Ramped { ramp_time } => {
            if !(ramp_time > 0.0) || sw.t_switch + ramp_time > sw.t_revert {
                return Err(Error::InvalidParameter(format!(
                    "ramp time {ramp_time} must be > 0 and fit between switch and revert"
                )));
            }
            vec![
                Piece {
                    t0: sw.t_switch,
                    s0: one,
                    rate: (two - one) / ramp_time,
                },
                flat(sw.t_switch + ramp_time, two),
                Piece {
                    t0: sw.t_revert,
                    s0: two,
                    rate: (one - two) / ramp_time,
                },
                flat(sw.t_revert + ramp_time, one),
            ]
        }
    })
}

/// Exact advance of `b` from `t0` by `dt` under a linear setpoint.
fn advance(b0: Complex64, p: &Piece, dt: f64, tau: f64) -> Complex64 {
    // b = s(t) - rate tau + (b0 - s0 + rate tau) e^{-dt/tau}, arranged so
    // that dt = 0 returns b0 bit for bit
    let rise = -(-dt / tau).exp_m1();
    b0 + (p.s0 - p.rate * tau - b0) * rise + p.rate * dt
}

/// Envelope at every piece boundary, starting from the settled source 1.
fn boundary_states(params: &ResonatorParams, sw: &SourceSwitch, ps: &[Piece]) -> Vec<Complex64> {
    let mut states = Vec::with_capacity(ps.len());
    let mut b = Complex64::new(sw.a1, 0.0);
    for (i, p) in ps.iter().enumerate() {
        states.push(b);
        if let Some(next) = ps.get(i + 1) {
            b = advance(b, p, next.t0 - p.t0, params.tau);
        }
    }
    states
}

/// Complex envelope at time `t` under `mode`.
pub fn envelope_with(params: &ResonatorParams, sw: &SourceSwitch, mode: ServoMode, t: f64) -> Result<Complex64> {
    let ps = pieces(sw, mode)?;
    let states = boundary_states(params, sw, &ps);
    let idx = ps.iter().rposition(|p| p.t0 <= t);
    Ok(match idx {
        None => Complex64::new(sw.a1, 0.0),
        Some(i) => advance(states[i], &ps[i], t - ps[i].t0, params.tau),
    })
}

/// Complex envelope at time `t` with ideal setpoints.
pub fn envelope(params: &ResonatorParams, sw: &SourceSwitch, t: f64) -> Complex64 {
    envelope_with(params, sw, ServoMode::Ideal, t).expect("ideal setpoints are always valid")
}

/// Time after the switch from which `||b| - a2|` stays within
/// `tolerance |a1 - a2|` until the revert (`tolerance a2` when `a1 = a2`).
pub fn settle_time(params: &ResonatorParams, sw: &SourceSwitch, tolerance: f64) -> Result<f64> {
    settle_time_with(params, sw, ServoMode::Ideal, tolerance)
}

pub fn settle_time_with(params: &ResonatorParams, sw: &SourceSwitch, mode: ServoMode, tolerance: f64) -> Result<f64> {
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tolerance} outside (0, 1)")));
    }
    let step = (sw.a1 - sw.a2).abs();
    let band = tolerance * if step > 0.0 { step } else { sw.a2 };
    let outside = |t: f64| -> Result<bool> {
        Ok((envelope_with(params, sw, mode, t)?.norm() - sw.a2).abs() > band)
    };
    let window = (sw.t_revert - sw.t_switch).min(60.0 * params.tau);
    let n = 20_000usize;
    let dt = window / n as f64;
    let mut last_out = None;
    for k in 0..=n {
        if outside(sw.t_switch + k as f64 * dt)? {
            last_out = Some(k);
        }
    }
    let Some(k) = last_out else {
        return Ok(0.0);
    };
    if k == n {
        return Err(Error::NoProgress("envelope does not settle before the revert".into()));
    }
    let (mut lo, mut hi) = (k as f64 * dt, (k + 1) as f64 * dt);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if outside(sw.t_switch + mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    /// Minimum of `|b|` over the whole transient.
    pub min_abs: f64,
    pub t_min: f64,
    /// `min_abs` fell below the trap-stability floor.
    pub ion_loss_risk: bool,
}

/// Closest approach of the segment `p -> q` to the origin, as `(distance, fraction)`.
fn segment_min(p: Complex64, q: Complex64) -> (f64, f64) {
    let d = q - p;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (p.norm(), 0.0);
    }
    let f = (-(p.re * d.re + p.im * d.im) / len2).clamp(0.0, 1.0);
    ((p + d * f).norm(), f)
}

/// Global minimum of `|b|`; `floor` is the amplitude below which the trap
/// no longer holds the ion.
pub fn dropout_depth(params: &ResonatorParams, sw: &SourceSwitch, floor: f64) -> Dropout {
    dropout_depth_with(params, sw, ServoMode::Ideal, floor).expect("ideal setpoints are always valid")
}

pub fn dropout_depth_with(params: &ResonatorParams, sw: &SourceSwitch, mode: ServoMode, floor: f64) -> Result<Dropout> {
    let ps = pieces(sw, mode)?;
    let states = boundary_states(params, sw, &ps);
    let mut best = (sw.a1, 0.0);
    for (i, p) in ps.iter().enumerate() {
        let b0 = states[i];
        // last piece: follow the decay for many time constants
        let span = ps.get(i + 1).map_or(60.0 * params.tau, |n| n.t0 - p.t0);
        let b1 = advance(b0, p, span, params.tau);
        if p.rate == Complex64::new(0.0, 0.0) {
            // constant setpoint: b moves on the straight line towards s0;
            // position along it is 1 - e^{-dt/tau}
            let full = p.s0;
            let (d, f) = segment_min(b0, full);
            let reach = 1.0 - (-span / params.tau).exp();
            let (d, f) = if f <= reach { (d, f) } else { (b1.norm(), reach) };
            if d < best.0 {
                let t = if f <= 0.0 { 0.0 } else { -params.tau * (1.0 - f).ln() };
                best = (d, p.t0 + t);
            }
        } else {
            let n = 4000;
            for k in 0..=n {
                let dt = span * k as f64 / n as f64;
                let v = advance(b0, p, dt, params.tau).norm();
                if v < best.0 {
                    best = (v, p.t0 + dt);
                }
            }
        }
    }
    Ok(Dropout {
        min_abs: best.0,
        t_min: best.1,
        ion_loss_risk: best.0 < floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    const TAU: f64 = 17e-6;

    fn switch(a2: f64, dphi: f64) -> SourceSwitch {
        SourceSwitch::new(1.0, a2, dphi, 10e-6, 1e-3).unwrap()
    }

    fn params() -> ResonatorParams {
        ResonatorParams::new(TAU).unwrap()
    }

    #[test]
    fn monotone_decay_in_phase() {
        let sw = switch(0.7, 0.0);
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let b = envelope(&params(), &sw, sw.t_switch + k as f64 * 1e-6);
            assert!(b.im.abs() < 1e-15);
            let expected = 0.7 + 0.3 * (-(k as f64) * 1e-6 / TAU).exp();
            assert!((b.norm() - expected).abs() < 1e-12);
            assert!(b.norm() <= prev);
            prev = b.norm();
        }
        assert!((envelope(&params(), &sw, 0.9e-3).norm() - 0.7).abs() < 1e-9);
        assert_eq!(envelope(&params(), &sw, 0.0).norm(), 1.0);
    }

    #[test]
    fn antiphase_crosses_zero() {
        let sw = switch(0.7, PI);
        let t0 = TAU * (1.7f64 / 0.7).ln();
        assert!(envelope(&params(), &sw, sw.t_switch + t0).norm() < 1e-12);
        assert!((t0 / TAU - 0.887).abs() < 1e-3);
    }

    #[test]
    fn settle_examples() {
        let sw = switch(0.7, 0.0);
        let t = settle_time(&params(), &sw, (-1.0f64).exp()).unwrap();
        assert!((t - TAU).abs() < 1e-12, "{t}");
        let t5 = settle_time(&params(), &sw, 0.05).unwrap();
        assert!((t5 - TAU * 20f64.ln()).abs() < 1e-12);
        assert!((t5 - 51e-6).abs() < 1e-6);
        let t_pi = settle_time(&params(), &switch(0.7, PI), 0.05).unwrap();
        assert!(t_pi > t5);
        assert!(settle_time(&params(), &sw, 1.5).is_err());
    }

    #[test]
    fn dropout_examples() {
        let d0 = dropout_depth(&params(), &switch(0.7, 0.0), 0.1);
        assert!((d0.min_abs - 0.7).abs() < 1e-9);
        assert!(!d0.ion_loss_risk);
        let dpi = dropout_depth(&params(), &switch(0.7, PI), 0.1);
        assert!(dpi.min_abs < 1e-12);
        assert!(dpi.ion_loss_risk);
        assert!((dpi.t_min - 10e-6 - TAU * (1.7f64 / 0.7).ln()).abs() < 1e-12);
        let dhalf = dropout_depth(&params(), &switch(0.7, FRAC_PI_2), 0.1);
        assert!(dhalf.min_abs > 0.0 && dhalf.min_abs < 0.7);
        // closest approach of the chord from 1 to 0.7i
        assert!((dhalf.min_abs - 0.7 / 1.49f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn q_consistency() {
        let omega = 2.0 * PI * 18.1e6;
        let p = ResonatorParams::from_q(300.0, omega).unwrap();
        assert!((p.tau - 600.0 / omega).abs() < 1e-18);
        assert!(ResonatorParams::with_q(p.tau * 1.1, 300.0, omega).is_ok());
        assert!(ResonatorParams::with_q(p.tau * 1.5, 300.0, omega).is_err());
    }

    #[test]
    fn servo_modes() {
        let sw = switch(0.7, PI);
        let ramp = ServoMode::Ramped { ramp_time: 30e-6 };
        let ideal = dropout_depth(&params(), &sw, 0.0).min_abs;
        let ramped = dropout_depth_with(&params(), &sw, ramp, 0.0).unwrap().min_abs;
        assert!(ramped >= ideal);
        let late = envelope_with(&params(), &sw, ramp, 0.9e-3).unwrap();
        assert!((late.norm() - 0.7).abs() < 1e-9);
        let corrected = ServoMode::SteadyStateCorrected {
            path_gain: 1.1,
            delay: 200e-6,
        };
        let mid = envelope_with(&params(), &sw, corrected, 190e-6).unwrap().norm();
        assert!((mid - 0.77).abs() < 1e-3);
        let end = envelope_with(&params(), &sw, corrected, 0.9e-3).unwrap().norm();
        assert!((end - 0.7).abs() < 1e-6);
        assert!(envelope_with(&params(), &sw, ServoMode::Ramped { ramp_time: 2e-3 }, 0.0).is_err());
    }
}
