use crate::error::{Error, Result};

/// Imperfections applied on top of a sequence's nominal pulses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Coherence time (s); `f64::INFINITY` disables dephasing.
    pub t2: f64,
    /// Multiplicative area factor on even-indexed pulses (1-based).
    pub area_error_even: f64,
    /// Multiplicative area factor on odd-indexed pulses (1-based).
    pub area_error_odd: f64,
    /// Laser detuning (rad/s), added to every pulse and wait.
    pub detuning: f64,
    /// Whether measurements are binomially sampled.
    pub projection_sampling: bool,
    /// Whether dephasing also acts while a pulse is on.
    pub dephase_during_pulses: bool,
}

impl NoiseModel {
    /// No imperfections and exact probabilities.
    pub fn ideal() -> Self {
        Self {
            t2: f64::INFINITY,
            area_error_even: 1.0,
            area_error_odd: 1.0,
            detuning: 0.0,
            projection_sampling: false,
            dephase_during_pulses: true,
        }
    }

    /// Ideal dynamics with binomial projection noise.
    pub fn projection_only() -> Self {
        Self {
            projection_sampling: true,
            ..Self::ideal()
        }
    }

    pub fn with_t2(mut self, t2: f64) -> Self {
        self.t2 = t2;
        self
    }

    pub fn with_area_errors(mut self, even: f64, odd: f64) -> Self {
        self.area_error_even = even;
        self.area_error_odd = odd;
        self
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn with_sampling(mut self, on: bool) -> Self {
        self.projection_sampling = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t2 > 0.0) {
            return Err(Error::InvalidParameter(format!("T2 must be > 0, got {}", self.t2)));
        }
        for (name, v) in [("even", self.area_error_even), ("odd", self.area_error_odd)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} area factor must be >= 0, got {v}")));
            }
        }
        if !self.detuning.is_finite() {
            return Err(Error::InvalidParameter("detuning must be finite".into()));
        }
        Ok(())
    }

    /// Area factor for the 1-based pulse index `j`.
    pub fn area_factor(&self, j: usize) -> f64 {
        if j % 2 == 0 {
            self.area_error_even
        } else {
            self.area_error_odd
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::ideal()
    }
}
