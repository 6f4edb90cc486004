use crate::error::{CloakError, Result};

/// Physical parameters of one scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioParams {
    /// Thermal diffusivity (m²/s).
    pub diffusivity: f64,
    /// Intensity of the probing heat source (K/s).
    pub intensity: f64,
    /// Temperature imposed on the obstacle boundary, as an offset from ambient.
    pub obstacle_temperature: f64,
}

impl ScenarioParams {
    pub fn new(diffusivity: f64, intensity: f64, obstacle_temperature: f64) -> Self {
        ScenarioParams { diffusivity, intensity, obstacle_temperature }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.diffusivity, self.intensity, self.obstacle_temperature]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        ScenarioParams::new(a[0], a[1], a[2])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.diffusivity > 0.0 && self.diffusivity.is_finite()) {
            return Err(CloakError::InvalidParameter(format!(
                "diffusivity must be positive and finite, got {}",
                self.diffusivity
            )));
        }
        if !self.intensity.is_finite() || !self.obstacle_temperature.is_finite() {
            return Err(CloakError::InvalidParameter(
                "source intensity and obstacle temperature must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Weights of the control penalty `½β‖u‖² + ½β_g‖∇u‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlWeights {
    pub beta: f64,
    pub beta_g: f64,
}

impl Default for ControlWeights {
    fn default() -> Self {
        ControlWeights { beta: 1e-7, beta_g: 1e-8 }
    }
}

impl ControlWeights {
    pub fn new(beta: f64, beta_g: f64) -> Self {
        ControlWeights { beta, beta_g }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta_g >= 0.0) || !self.beta.is_finite() || !self.beta_g.is_finite() {
            return Err(CloakError::InvalidParameter(format!(
                "control weights must be finite and non-negative, got beta = {}, beta_g = {}",
                self.beta, self.beta_g
            )));
        }
        if self.beta == 0.0 {
            return Err(CloakError::Factorization {
                context: "control block",
                message: format!(
                    "beta = 0 (beta_g = {}) leaves the control block singular on constant controls",
                    self.beta_g
                ),
            });
        }
        Ok(())
    }
}

/// Axis-aligned box of admissible parameters, ordered as
/// `[diffusivity, intensity, obstacle temperature]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBox {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl Default for ParamBox {
    fn default() -> Self {
        ParamBox { lower: [1.0, 5e2, 0.0], upper: [5.0, 1.5e4, 200.0] }
    }
}

impl ParamBox {
    pub fn validate(&self) -> Result<()> {
        for d in 0..3 {
            let (lo, hi) = (self.lower[d], self.upper[d]);
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(CloakError::InvalidParameter(format!(
                    "parameter box dimension {d} is invalid: [{lo}, {hi}]"
                )));
            }
        }
        if !(self.lower[0] > 0.0) {
            return Err(CloakError::InvalidParameter(
                "parameter box must keep the diffusivity positive".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, p: &ScenarioParams) -> bool {
        p.as_array()
            .iter()
            .enumerate()
            .all(|(d, &x)| x >= self.lower[d] && x <= self.upper[d])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_are_reported_as_singular() {
        assert!(matches!(
            ControlWeights::new(0.0, 0.0).validate(),
            Err(CloakError::Factorization { .. })
        ));
        assert!(ControlWeights::default().validate().is_ok());
        assert!(ControlWeights::new(-1.0, 0.0).validate().is_err());
    }

    #[test]
    fn default_box_contains_test_point() {
        let b = ParamBox::default();
        b.validate().unwrap();
        assert!(b.contains(&ScenarioParams::new(3.5, 1e4, 0.0)));
        assert!(!b.contains(&ScenarioParams::new(0.5, 1e4, 0.0)));
    }
}
