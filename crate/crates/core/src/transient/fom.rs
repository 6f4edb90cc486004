use super::{ControlOperator, OcpModel, StepOperator};
use crate::error::Result;
use crate::fem::FemOperators;
use crate::params::{ControlWeights, ScenarioParams};
use crate::sparse::{sub, CsrMatrix, SparseCholesky};
use crate::steady::{solve_steady, SteadySolution};

/// Sparse Crank–Nicolson step with a Cholesky-factorized implicit matrix.
#[derive(Debug)]
pub struct FomStep {
    implicit: CsrMatrix,
    explicit: CsrMatrix,
    factor: SparseCholesky,
}

impl FomStep {
    pub fn new(context: &'static str, mass: &CsrMatrix, stiffness: &CsrMatrix, dt: f64) -> Result<FomStep> {
        let implicit = CsrMatrix::linear_combination(&[(1.0 / dt, mass), (0.5, stiffness)]);
        let explicit = CsrMatrix::linear_combination(&[(1.0 / dt, mass), (-0.5, stiffness)]);
        let factor = SparseCholesky::new(context, &implicit)?;
        Ok(FomStep { implicit, explicit, factor })
    }
}

impl StepOperator for FomStep {
    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.factor.solve(b)
    }

    fn explicit(&self, x: &[f64]) -> Vec<f64> {
        self.explicit.mul_vec(x)
    }

    fn implicit(&self, x: &[f64]) -> Vec<f64> {
        self.implicit.mul_vec(x)
    }
}

#[derive(Debug)]
pub struct FomControl {
    matrix: CsrMatrix,
    factor: SparseCholesky,
}

impl ControlOperator for FomControl {
    fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(u)
    }

    fn solve(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.factor.solve(g)
    }
}

impl OcpModel for FemOperators {
    type Step = FomStep;
    type Control = FomControl;

    fn dims(&self) -> (usize, usize, usize) {
        (self.n_z(), self.n_q(), self.n_u())
    }

    fn reference_step(&self, p: &ScenarioParams, dt: f64) -> Result<FomStep> {
        FomStep::new("reference time step", &self.mass, &self.affine_state_matrix(p.diffusivity)?, dt)
    }

    fn state_step(&self, p: &ScenarioParams, dt: f64) -> Result<FomStep> {
        FomStep::new("state time step", &self.mass_free, &self.restricted_state_matrix(p.diffusivity)?, dt)
    }

    fn reference_load(&self, p: &ScenarioParams) -> Vec<f64> {
        FemOperators::reference_load(self, p)
    }

    fn state_load(&self, p: &ScenarioParams) -> Vec<f64> {
        FemOperators::state_load(self, p)
    }

    fn couple(&self, u: &[f64]) -> Vec<f64> {
        self.control_coupling.mul_vec(u)
    }

    fn couple_transpose(&self, p: &[f64]) -> Vec<f64> {
        self.control_coupling.transpose_mul_vec(p)
    }

    fn observe(&self, q: &[f64], z: &[f64]) -> (Vec<f64>, f64) {
        let e = sub(q, &self.restriction.restrict(z));
        let r = self.obs_mass.mul_vec(&e);
        let energy = crate::sparse::dot(&e, &r);
        (r, energy)
    }

    fn observe_increment(&self, dq: &[f64]) -> Vec<f64> {
        self.obs_mass.mul_vec(dq)
    }

    fn control_operator(&self, w: &ControlWeights) -> Result<FomControl> {
        w.validate()?;
        let matrix = self.control_block(w);
        let factor = SparseCholesky::new("control block", &matrix)?;
        Ok(FomControl { matrix, factor })
    }

    fn steady(&self, p: &ScenarioParams, w: &ControlWeights) -> Result<SteadySolution> {
        solve_steady(self, p, w)
    }
}
