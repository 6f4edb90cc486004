use crate::error::{CloakError, Result};

/// Uniform time grid `t_k = kΔt`, `k = 0..=N`, `Δt = T/N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid { horizon: 5.0, steps: 100 }
    }
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<TimeGrid> {
        let g = TimeGrid { horizon, steps };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(CloakError::InvalidParameter(format!(
                "time grid needs N >= 1 and T > 0, got N = {}, T = {}",
                self.steps, self.horizon
            )));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    /// Trapezoidal weight of instant `k` (without the `Δt` factor).
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.steps {
            0.5
        } else {
            1.0
        }
    }

    /// `Δt Σ_k w_k a_k`.
    pub fn integrate(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        self.dt()
            * values
                .into_iter()
                .enumerate()
                .map(|(k, v)| self.weight(k) * v)
                .sum::<f64>()
    }
}
