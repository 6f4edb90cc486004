//! One-shot solution of the steady optimality system.

use crate::error::{CloakError, Result};
use crate::fem::FemOperators;
use crate::params::{ControlWeights, ScenarioParams};
use crate::sparse::{axpy, norm, sub, BlockBuilder, CsrMatrix, SparseLu};

/// Steady reference, state, adjoint and control together with the cost split.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadySolution {
    pub z: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub u: Vec<f64>,
    /// `½ (q − Ez)ᵀ M_obs (q − Ez)`.
    pub tracking: f64,
    /// `½ uᵀ (β M_u + β_g A_u) u`.
    pub control: f64,
}

impl SteadySolution {
    pub fn cost(&self) -> f64 {
        self.tracking + self.control
    }
}

/// `M_obs E` as an `n_q × n_z` matrix.
pub fn observed_restriction(ops: &FemOperators) -> CsrMatrix {
    let map = ops.restriction.free_to_unperturbed();
    let trip: Vec<_> = ops.obs_mass.triplets().map(|(r, c, v)| (r, map[c], v)).collect();
    CsrMatrix::from_triplets(ops.n_q(), ops.n_z(), &trip)
}

/// Builds the block system
///
/// ```text
/// [ A                         ] [z]   [ F        ]
/// [        Ã           −B     ] [q] = [ F_o + EF ]
/// [ M_obs E  −M_obs  Ã        ] [p]   [ 0        ]
/// [              Bᵀ    R      ] [u]   [ 0        ]
/// ```
///
/// with `A = μA_diff + A_robin`, `Ã = EAEᵀ` and `R = βM_u + β_gA_u`.
pub fn assemble_kkt(
    ops: &FemOperators,
    params: &ScenarioParams,
    w: &ControlWeights,
) -> Result<(CsrMatrix, Vec<f64>)> {
    let (nz, nq, nu) = (ops.n_z(), ops.n_q(), ops.n_u());
    if ops.control_coupling.nrows() != nq || ops.control_coupling.ncols() != nu {
        return Err(CloakError::DimensionMismatch {
            context: "control coupling block",
            expected: nq * nu,
            actual: ops.control_coupling.nrows() * ops.control_coupling.ncols(),
        });
    }
    if ops.obs_mass.nrows() != nq {
        return Err(CloakError::DimensionMismatch {
            context: "observation block",
            expected: nq,
            actual: ops.obs_mass.nrows(),
        });
    }
    let a = ops.affine_state_matrix(params.diffusivity)?;
    let a_free = ops.restricted_state_matrix(params.diffusivity)?;
    let n = nz + 2 * nq + nu;
    let (oq, op, ou) = (nz, nz + nq, nz + 2 * nq);

    let mut k = BlockBuilder::new(n, n);
    k.add(0, 0, 1.0, &a);
    k.add(oq, oq, 1.0, &a_free);
    k.add(oq, ou, -1.0, &ops.control_coupling);
    k.add(op, 0, 1.0, &observed_restriction(ops));
    k.add(op, oq, -1.0, &ops.obs_mass);
    k.add(op, op, 1.0, &a_free);
    k.add(ou, op, 1.0, &ops.control_coupling.transpose());
    k.add(ou, ou, 1.0, &ops.control_block(w));

    let mut rhs = vec![0.0; n];
    rhs[..nz].copy_from_slice(&ops.reference_load(params));
    rhs[oq..op].copy_from_slice(&ops.state_load(params));
    Ok((k.build(), rhs))
}

/// Cost split of a steady configuration.
pub fn steady_cost(ops: &FemOperators, w: &ControlWeights, z: &[f64], q: &[f64], u: &[f64]) -> (f64, f64) {
    let e = sub(q, &ops.restriction.restrict(z));
    let tracking = 0.5 * ops.obs_mass.quadratic_form(&e);
    let control = 0.5 * ops.control_block(w).quadratic_form(u);
    (tracking, control)
}

/// Solves a sparse system with a couple of steps of iterative refinement,
/// which recovers digits lost to the poor scaling of the control block.
pub(crate) fn solve_refined(lu: &SparseLu, k: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let mut x = lu.solve(rhs)?;
    let scale = norm(rhs).max(f64::MIN_POSITIVE);
    for _ in 0..3 {
        let r = sub(rhs, &k.mul_vec(&x));
        if norm(&r) <= 1e-15 * scale {
            break;
        }
        let dx = lu.solve(&r)?;
        axpy(1.0, &dx, &mut x);
    }
    Ok(x)
}

/// Solves the steady optimality system with a sparse direct factorization.
pub fn solve_steady(ops: &FemOperators, params: &ScenarioParams, w: &ControlWeights) -> Result<SteadySolution> {
    w.validate()?;
    params.validate()?;
    let (k, rhs) = assemble_kkt(ops, params, w)?;
    let lu = SparseLu::new("steady optimality system", &k)?;
    let y = solve_refined(&lu, &k, &rhs)?;
    let (nz, nq) = (ops.n_z(), ops.n_q());
    let z = y[..nz].to_vec();
    let q = y[nz..nz + nq].to_vec();
    let p = y[nz + nq..nz + 2 * nq].to_vec();
    let u = y[nz + 2 * nq..].to_vec();
    let (tracking, control) = steady_cost(ops, w, &z, &q, &u);
    Ok(SteadySolution { z, q, p, u, tracking, control })
}

/// Uncontrolled steady fields: reference and state with `u = 0`.
pub fn solve_uncontrolled(ops: &FemOperators, params: &ScenarioParams) -> Result<(Vec<f64>, Vec<f64>)> {
    params.validate()?;
    let a = ops.affine_state_matrix(params.diffusivity)?;
    let z = crate::sparse::SparseCholesky::new("reference operator", &a)?.solve(&ops.reference_load(params))?;
    let a_free = ops.restricted_state_matrix(params.diffusivity)?;
    let q = crate::sparse::SparseCholesky::new("state operator", &a_free)?.solve(&ops.state_load(params))?;
    Ok((z, q))
}

/// Norms of the optimality and state residuals of a steady solution.
pub fn steady_residuals(
    ops: &FemOperators,
    params: &ScenarioParams,
    w: &ControlWeights,
    s: &SteadySolution,
) -> Result<(f64, f64)> {
    let mut opt = ops.control_block(w).mul_vec(&s.u);
    axpy(1.0, &ops.control_coupling.transpose_mul_vec(&s.p), &mut opt);
    let a_free = ops.restricted_state_matrix(params.diffusivity)?;
    let mut state = a_free.mul_vec(&s.q);
    axpy(-1.0, &ops.state_load(params), &mut state);
    axpy(-1.0, &ops.control_coupling.mul_vec(&s.u), &mut state);
    Ok((norm(&opt), norm(&state)))
}
