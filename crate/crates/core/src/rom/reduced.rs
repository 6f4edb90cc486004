use crate::dense::{Basis, DenseLu, DenseMatrix};
use crate::error::{CloakError, Result};
use crate::fem::FemOperators;
use crate::params::{ControlWeights, ScenarioParams};
use crate::sparse::{dot, CsrMatrix};
use crate::steady::{observed_restriction, SteadySolution};
use crate::transient::{ControlOperator, OcpModel, StepOperator, TerminalAdjoint};

/// Bases for the reference (`z`), the shared state/adjoint (`qp`) and the
/// control (`u`) spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    pub z: Basis,
    pub qp: Basis,
    pub u: Basis,
    pub sigma_z: Vec<f64>,
    pub sigma_qp: Vec<f64>,
    pub sigma_u: Vec<f64>,
    pub eps: f64,
}

impl PodBasis {
    /// Identity bases of the full spaces (reduced model equals the full one).
    pub fn identity(ops: &FemOperators) -> PodBasis {
        PodBasis {
            z: Basis::identity(ops.n_z()),
            qp: Basis::identity(ops.n_q()),
            u: Basis::identity(ops.n_u()),
            sigma_z: vec![1.0; ops.n_z()],
            sigma_qp: vec![1.0; ops.n_q()],
            sigma_u: vec![1.0; ops.n_u()],
            eps: 0.0,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.z.dim(), self.qp.dim(), self.u.dim())
    }
}

/// Galerkin projections of every parameter-independent operator. Parametric
/// reduced operators are affine combinations of these.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedOperators {
    pub basis: PodBasis,
    pub mass_z: DenseMatrix,
    pub diffusion_z: DenseMatrix,
    pub robin_z: DenseMatrix,
    pub source_z: Vec<f64>,
    pub mass_q: DenseMatrix,
    pub diffusion_q: DenseMatrix,
    pub robin_q: DenseMatrix,
    pub source_q: Vec<f64>,
    pub lift_diffusion_q: Vec<f64>,
    pub lift_robin_q: Vec<f64>,
    pub coupling: DenseMatrix,
    /// `V_qpᵀ M_obs V_qp`.
    pub obs_qq: DenseMatrix,
    /// `V_qpᵀ M_obs E V_z`.
    pub obs_qz: DenseMatrix,
    /// `V_zᵀ Eᵀ M_obs E V_z`.
    pub obs_zz: DenseMatrix,
    pub control_mass: DenseMatrix,
    pub control_stiffness: DenseMatrix,
}

/// Projects all operators onto the given bases.
pub fn project(ops: &FemOperators, basis: &PodBasis) -> Result<ReducedOperators> {
    let (vz, vq, vu) = (&basis.z, &basis.qp, &basis.u);
    for (context, expected, actual) in [
        ("reference basis rows", ops.n_z(), vz.n_rows()),
        ("state/adjoint basis rows", ops.n_q(), vq.n_rows()),
        ("control basis rows", ops.n_u(), vu.n_rows()),
    ] {
        if expected != actual {
            return Err(CloakError::DimensionMismatch { context, expected, actual });
        }
    }
    let obs_e = observed_restriction(ops);
    let e = ops.restriction.matrix();
    let ete_obs: CsrMatrix = {
        // Eᵀ M_obs E, assembled by relabeling M_obs entries to unperturbed indices
        let map = ops.restriction.free_to_unperturbed();
        let trip: Vec<_> = ops.obs_mass.triplets().map(|(r, c, v)| (map[r], map[c], v)).collect();
        CsrMatrix::from_triplets(e.ncols(), e.ncols(), &trip)
    };
    Ok(ReducedOperators {
        mass_z: vz.galerkin(&ops.mass, vz),
        diffusion_z: vz.galerkin(&ops.diffusion, vz),
        robin_z: vz.galerkin(&ops.robin, vz),
        source_z: vz.project(&ops.source_shape),
        mass_q: vq.galerkin(&ops.mass_free, vq),
        diffusion_q: vq.galerkin(&ops.diffusion_free, vq),
        robin_q: vq.galerkin(&ops.robin_free, vq),
        source_q: vq.project(&ops.source_free),
        lift_diffusion_q: vq.project(&ops.lift_diffusion),
        lift_robin_q: vq.project(&ops.lift_robin),
        coupling: vq.galerkin(&ops.control_coupling, vu),
        obs_qq: vq.galerkin(&ops.obs_mass, vq),
        obs_qz: vq.galerkin(&obs_e, vz),
        obs_zz: vz.galerkin(&ete_obs, vz),
        control_mass: vu.galerkin(&ops.control_mass, vu),
        control_stiffness: vu.galerkin(&ops.control_stiffness, vu),
        basis: basis.clone(),
    })
}

impl ReducedOperators {
    pub fn state_matrix_z(&self, diffusivity: f64) -> DenseMatrix {
        DenseMatrix::linear_combination(&[(diffusivity, &self.diffusion_z), (1.0, &self.robin_z)])
    }

    pub fn state_matrix_q(&self, diffusivity: f64) -> DenseMatrix {
        DenseMatrix::linear_combination(&[(diffusivity, &self.diffusion_q), (1.0, &self.robin_q)])
    }

    pub fn control_block(&self, w: &ControlWeights) -> DenseMatrix {
        DenseMatrix::linear_combination(&[(w.beta, &self.control_mass), (w.beta_g, &self.control_stiffness)])
    }

    /// Reduced steady optimality system, same block layout as the full one.
    pub fn steady_kkt(&self, p: &ScenarioParams, w: &ControlWeights) -> (DenseMatrix, Vec<f64>) {
        let (nz, nq, nu) = self.basis.dims();
        let n = nz + 2 * nq + nu;
        let (oq, op, ou) = (nz, nz + nq, nz + 2 * nq);
        let aq = self.state_matrix_q(p.diffusivity);
        let mut k = DenseMatrix::zeros(n, n);
        k.add_block(0, 0, 1.0, &self.state_matrix_z(p.diffusivity));
        k.add_block(oq, oq, 1.0, &aq);
        k.add_block(oq, ou, -1.0, &self.coupling);
        k.add_block(op, 0, 1.0, &self.obs_qz);
        k.add_block(op, oq, -1.0, &self.obs_qq);
        k.add_block(op, op, 1.0, &aq);
        k.add_block(ou, op, 1.0, &self.coupling.transpose());
        k.add_block(ou, ou, 1.0, &self.control_block(w));
        let mut rhs = vec![0.0; n];
        rhs[..nz].copy_from_slice(&OcpModel::reference_load(self, p));
        rhs[oq..op].copy_from_slice(&OcpModel::state_load(self, p));
        (k, rhs)
    }

    /// Lifts reduced coefficients of a steady solution to full fields.
    pub fn lift_steady(&self, s: &SteadySolution) -> SteadySolution {
        SteadySolution {
            z: self.basis.z.lift(&s.z),
            q: self.basis.qp.lift(&s.q),
            p: self.basis.qp.lift(&s.p),
            u: self.basis.u.lift(&s.u),
            tracking: s.tracking,
            control: s.control,
        }
    }

    /// Projects a full terminal adjoint condition onto the reduced space.
    pub fn project_terminal(&self, t: &TerminalAdjoint) -> TerminalAdjoint {
        match t {
            TerminalAdjoint::Natural => TerminalAdjoint::Natural,
            TerminalAdjoint::Prescribed(p) => TerminalAdjoint::Prescribed(self.basis.qp.project(p)),
        }
    }
}

/// Dense Crank–Nicolson step of the reduced model. The implicit matrix is
/// inverted once, so each step costs two small matrix-vector products.
#[derive(Debug)]
pub struct RomStep {
    implicit: DenseMatrix,
    explicit: DenseMatrix,
    inverse: DenseMatrix,
}

impl RomStep {
    fn new(context: &'static str, mass: &DenseMatrix, stiffness: &DenseMatrix, dt: f64) -> Result<RomStep> {
        let implicit = DenseMatrix::linear_combination(&[(1.0 / dt, mass), (0.5, stiffness)]);
        let explicit = DenseMatrix::linear_combination(&[(1.0 / dt, mass), (-0.5, stiffness)]);
        let inverse = DenseLu::new(context, &implicit)?.inverse()?;
        Ok(RomStep { implicit, explicit, inverse })
    }
}

impl StepOperator for RomStep {
    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.inverse.mul_vec(b))
    }

    fn explicit(&self, x: &[f64]) -> Vec<f64> {
        self.explicit.mul_vec(x)
    }

    fn implicit(&self, x: &[f64]) -> Vec<f64> {
        self.implicit.mul_vec(x)
    }
}

#[derive(Debug)]
pub struct RomControl {
    matrix: DenseMatrix,
    inverse: DenseMatrix,
}

impl ControlOperator for RomControl {
    fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(u)
    }

    fn solve(&self, g: &[f64]) -> Result<Vec<f64>> {
        Ok(self.inverse.mul_vec(g))
    }
}

impl OcpModel for ReducedOperators {
    type Step = RomStep;
    type Control = RomControl;

    fn dims(&self) -> (usize, usize, usize) {
        self.basis.dims()
    }

    fn reference_step(&self, p: &ScenarioParams, dt: f64) -> Result<RomStep> {
        RomStep::new("reduced reference step", &self.mass_z, &self.state_matrix_z(p.diffusivity), dt)
    }

    fn state_step(&self, p: &ScenarioParams, dt: f64) -> Result<RomStep> {
        RomStep::new("reduced state step", &self.mass_q, &self.state_matrix_q(p.diffusivity), dt)
    }

    fn reference_load(&self, p: &ScenarioParams) -> Vec<f64> {
        self.source_z.iter().map(|f| p.intensity * f).collect()
    }

    fn state_load(&self, p: &ScenarioParams) -> Vec<f64> {
        let t = p.obstacle_temperature;
        (0..self.source_q.len())
            .map(|i| {
                t * (p.diffusivity * self.lift_diffusion_q[i] + self.lift_robin_q[i])
                    + p.intensity * self.source_q[i]
            })
            .collect()
    }

    fn couple(&self, u: &[f64]) -> Vec<f64> {
        self.coupling.mul_vec(u)
    }

    fn couple_transpose(&self, p: &[f64]) -> Vec<f64> {
        self.coupling.transpose_mul_vec(p)
    }

    fn observe(&self, q: &[f64], z: &[f64]) -> (Vec<f64>, f64) {
        let mq = self.obs_qq.mul_vec(q);
        let mz = self.obs_qz.mul_vec(z);
        let r: Vec<f64> = mq.iter().zip(&mz).map(|(a, b)| a - b).collect();
        let energy = dot(q, &mq) - 2.0 * dot(q, &mz) + dot(z, &self.obs_zz.mul_vec(z));
        (r, energy.max(0.0))
    }

    fn observe_increment(&self, dq: &[f64]) -> Vec<f64> {
        self.obs_qq.mul_vec(dq)
    }

    fn control_operator(&self, w: &ControlWeights) -> Result<RomControl> {
        w.validate()?;
        let matrix = self.control_block(w);
        let inverse = DenseLu::new("reduced control block", &matrix)?.inverse()?;
        Ok(RomControl { matrix, inverse })
    }

    fn steady(&self, p: &ScenarioParams, w: &ControlWeights) -> Result<SteadySolution> {
        solve_rom_steady(self, p, w)
    }
}

/// Dense solve of the reduced steady optimality system; returns reduced
/// coefficients (use [`ReducedOperators::lift_steady`] for full fields).
pub fn solve_rom_steady(rom: &ReducedOperators, p: &ScenarioParams, w: &ControlWeights) -> Result<SteadySolution> {
    w.validate()?;
    p.validate()?;
    let (nz, nq, _) = rom.basis.dims();
    let (k, rhs) = rom.steady_kkt(p, w);
    let y = DenseLu::new("reduced steady optimality system", &k)?.solve(&rhs)?;
    let z = y[..nz].to_vec();
    let q = y[nz..nz + nq].to_vec();
    let pp = y[nz + nq..nz + 2 * nq].to_vec();
    let u = y[nz + 2 * nq..].to_vec();
    let (_, energy) = rom.observe(&q, &z);
    let control = 0.5 * dot(&u, &rom.control_block(w).mul_vec(&u));
    Ok(SteadySolution { z, q, p: pp, u, tracking: 0.5 * energy, control })
}
