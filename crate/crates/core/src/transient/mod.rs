//! Finite-horizon optimal control with Crank–Nicolson time stepping and a
//! preconditioned gradient iteration with Armijo backtracking.
//!
//! The algorithms are written against [`OcpModel`], which is implemented by
//! the full-order operators and by the reduced-order model.

mod fom;
mod grid;

use log::warn;

use crate::error::{CloakError, Result};
use crate::params::{ControlWeights, ScenarioParams};
use crate::sparse::{axpy, dot};
use crate::steady::SteadySolution;

pub use fom::{FomControl, FomStep};
pub use grid::TimeGrid;

/// Factorized Crank–Nicolson step `S x_{k+1} = T x_k + …` with
/// `S = M/Δt + A/2` and `T = M/Δt − A/2`.
pub trait StepOperator: Send + Sync {
    /// `S⁻¹ b`.
    fn solve(&self, b: &[f64]) -> Result<Vec<f64>>;
    /// `T x`.
    fn explicit(&self, x: &[f64]) -> Vec<f64>;
    /// `S x`.
    fn implicit(&self, x: &[f64]) -> Vec<f64>;
}

/// The control penalty matrix `R = βM_u + β_gA_u` and its inverse.
pub trait ControlOperator: Send + Sync {
    fn apply(&self, u: &[f64]) -> Vec<f64>;
    fn solve(&self, g: &[f64]) -> Result<Vec<f64>>;
}

/// A discretization of the cloaking optimal control problem.
pub trait OcpModel: Sync {
    type Step: StepOperator;
    type Control: ControlOperator;

    /// `(n_z, n_q, n_u)`.
    fn dims(&self) -> (usize, usize, usize);
    fn reference_step(&self, p: &ScenarioParams, dt: f64) -> Result<Self::Step>;
    fn state_step(&self, p: &ScenarioParams, dt: f64) -> Result<Self::Step>;
    /// Right-hand side of the reference equation.
    fn reference_load(&self, p: &ScenarioParams) -> Vec<f64>;
    /// Right-hand side of the state equation without control.
    fn state_load(&self, p: &ScenarioParams) -> Vec<f64>;
    /// `B u`.
    fn couple(&self, u: &[f64]) -> Vec<f64>;
    /// `Bᵀ p`.
    fn couple_transpose(&self, p: &[f64]) -> Vec<f64>;
    /// `(M_obs(q − Ez), (q − Ez)ᵀ M_obs (q − Ez))`.
    fn observe(&self, q: &[f64], z: &[f64]) -> (Vec<f64>, f64);
    /// `M_obs δq` for a state increment (no reference).
    fn observe_increment(&self, dq: &[f64]) -> Vec<f64>;
    fn control_operator(&self, w: &ControlWeights) -> Result<Self::Control>;
    fn steady(&self, p: &ScenarioParams, w: &ControlWeights) -> Result<SteadySolution>;
}

/// Condition closing the backward adjoint recursion.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalAdjoint {
    /// The condition induced by the discrete cost itself.
    Natural,
    /// Imposed final adjoint, typically the steady adjoint.
    Prescribed(Vec<f64>),
}

/// Time-dependent field stored as one vector per instant `k = 0..=N`.
pub type Series = Vec<Vec<f64>>;

/// Per-instant tracking residuals `M_obs(q_k − Ez_k)` and energies.
#[derive(Debug, Clone)]
pub struct Observation {
    pub residuals: Series,
    pub energies: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoParams {
    pub initial_step: f64,
    pub contraction: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        ArmijoParams {
            initial_step: 1.0,
            contraction: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 30,
        }
    }
}

/// Search direction rule of the transient iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirectionRule {
    /// `d = −R⁻¹g` with backtracking from `τ₀`.
    #[default]
    Preconditioned,
    /// Preconditioned conjugate directions `d = −R⁻¹g + γ d_prev`
    /// (Fletcher–Reeves `γ`), with backtracking started from the exact
    /// minimizing step along `d`. Same gradient, preconditioner and acceptance
    /// test, much faster when `R` is a poor Hessian approximation.
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative gradient tolerance: stop when `‖g‖ ≤ tol · max(1, ‖g⁰‖)`.
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: ArmijoParams,
    pub direction: DirectionRule,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 50,
            armijo: ArmijoParams::default(),
            direction: DirectionRule::Preconditioned,
        }
    }
}

impl SolverOptions {
    pub fn conjugate(tol: f64, max_iter: usize) -> SolverOptions {
        SolverOptions { tol, max_iter, direction: DirectionRule::ConjugateGradient, ..SolverOptions::default() }
    }
}

/// Time-integrated cost split.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransientCost {
    /// `Δt Σ w_k ½ e_kᵀ M_obs e_k`.
    pub tracking: f64,
    /// `Δt Σ w_k ½ u_kᵀ R u_k`.
    pub control: f64,
    /// Extra terminal term whose optimality condition is the prescribed final
    /// adjoint; zero for the natural condition.
    pub terminal: f64,
}

impl TransientCost {
    /// The tracking-plus-control functional.
    pub fn total(&self) -> f64 {
        self.tracking + self.control
    }

    /// The functional minimized by the iteration (includes the terminal term).
    pub fn objective(&self) -> f64 {
        self.tracking + self.control + self.terminal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub cost: f64,
    pub grad_norm: f64,
    /// Accepted step, NaN on the final (non-updating) iteration.
    pub step: f64,
    pub backtracks: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub z: Series,
    pub q: Series,
    pub p: Series,
    pub u: Series,
    pub cost: TransientCost,
    pub log: Vec<IterationRecord>,
    pub converged: bool,
    /// The steady solution used for initialization and the terminal adjoint.
    pub steady: SteadySolution,
}

fn zeros(n: usize, len: usize) -> Series {
    vec![vec![0.0; len]; n + 1]
}

fn check_series(context: &'static str, s: &Series, grid: &TimeGrid, len: usize) -> Result<()> {
    if s.len() != grid.steps + 1 {
        return Err(CloakError::DimensionMismatch { context, expected: grid.steps + 1, actual: s.len() });
    }
    if let Some(bad) = s.iter().find(|v| v.len() != len) {
        return Err(CloakError::DimensionMismatch { context, expected: len, actual: bad.len() });
    }
    Ok(())
}

/// Crank–Nicolson propagation from a zero initial state:
/// `S x_{k+1} = T x_k + load + (f_k + f_{k+1})/2`.
fn propagate<S: StepOperator>(
    step: &S,
    steps: usize,
    len: usize,
    load: Option<&[f64]>,
    forcing: Option<&Series>,
) -> Result<Series> {
    let mut x = zeros(steps, len);
    for k in 0..steps {
        let mut rhs = step.explicit(&x[k]);
        if let Some(f) = load {
            axpy(1.0, f, &mut rhs);
        }
        if let Some(f) = forcing {
            axpy(0.5, &f[k], &mut rhs);
            axpy(0.5, &f[k + 1], &mut rhs);
        }
        x[k + 1] = step.solve(&rhs)?;
    }
    Ok(x)
}

/// Reference dynamics `M ż + A z = F`, `z(0) = 0`.
pub fn solve_reference<M: OcpModel>(model: &M, params: &ScenarioParams, grid: &TimeGrid) -> Result<Series> {
    grid.validate()?;
    let step = model.reference_step(params, grid.dt())?;
    let load = model.reference_load(params);
    propagate(&step, grid.steps, model.dims().0, Some(&load), None)
}

/// Controlled state dynamics `M̃ q̇ + Ã q = F_o + EF + Bu`, `q(0) = 0`.
pub fn solve_state<M: OcpModel>(model: &M, params: &ScenarioParams, grid: &TimeGrid, u: &Series) -> Result<Series> {
    grid.validate()?;
    let (_, nq, nu) = model.dims();
    check_series("control trajectory", u, grid, nu)?;
    let step = model.state_step(params, grid.dt())?;
    let bu: Series = u.iter().map(|uk| model.couple(uk)).collect();
    propagate(&step, grid.steps, nq, Some(&model.state_load(params)), Some(&bu))
}

/// Backward adjoint recursion for the tracking residuals `r_k = M_obs(q_k − Ez_k)`.
///
/// The recursion is the exact transpose of the Crank–Nicolson state scheme:
/// intermediate multipliers `S μ_k = T μ_{k+1} + r_k` are averaged onto the
/// time nodes, so that `R u_k + Bᵀ p_k` is the gradient of the discrete cost
/// in the trapezoidal inner product.
fn adjoint_recursion<S: StepOperator>(
    step: &S,
    residuals: &Series,
    terminal: &TerminalAdjoint,
) -> Result<Series> {
    let n = residuals.len() - 1;
    let mut mu: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    mu[n] = match terminal {
        TerminalAdjoint::Natural => {
            step.solve(&residuals[n].iter().map(|r| 0.5 * r).collect::<Vec<_>>())?
        }
        TerminalAdjoint::Prescribed(p) => {
            if p.len() != residuals[n].len() {
                return Err(CloakError::DimensionMismatch {
                    context: "terminal adjoint",
                    expected: residuals[n].len(),
                    actual: p.len(),
                });
            }
            p.clone()
        }
    };
    for k in (1..n).rev() {
        let mut rhs = step.explicit(&mu[k + 1]);
        axpy(1.0, &residuals[k], &mut rhs);
        mu[k] = step.solve(&rhs)?;
    }
    let mut p = Vec::with_capacity(n + 1);
    p.push(mu[1].clone());
    for k in 1..n {
        p.push(mu[k].iter().zip(&mu[k + 1]).map(|(a, b)| 0.5 * (a + b)).collect());
    }
    p.push(mu[n].clone());
    Ok(p)
}

/// Adjoint trajectory for given state and reference trajectories.
pub fn solve_adjoint<M: OcpModel>(
    model: &M,
    params: &ScenarioParams,
    grid: &TimeGrid,
    q: &Series,
    z: &Series,
    terminal: &TerminalAdjoint,
) -> Result<Series> {
    grid.validate()?;
    let (nz, nq, _) = model.dims();
    check_series("state trajectory", q, grid, nq)?;
    check_series("reference trajectory", z, grid, nz)?;
    let step = model.state_step(params, grid.dt())?;
    let r: Series = q.iter().zip(z).map(|(qk, zk)| model.observe(qk, zk).0).collect();
    adjoint_recursion(&step, &r, terminal)
}

/// Result of a successful backtracking search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepAcceptance {
    pub step: f64,
    pub backtracks: usize,
    /// `J(u + τd) − J(u)` at the accepted step.
    pub decrease: f64,
}

/// Largest `τ = τ₀ρ^m` with `J(u+τd) − J(u) ≤ c₁ τ ⟨g, d⟩`.
///
/// `change(τ)` returns `J(u + τd) − J(u)`; `slope` is `⟨g, d⟩`, which must be
/// negative.
pub fn armijo_backtracking(
    mut change: impl FnMut(f64) -> Result<f64>,
    slope: f64,
    reference_cost: f64,
    params: &ArmijoParams,
) -> Result<StepAcceptance> {
    if !(slope < 0.0) {
        return Err(CloakError::InvalidParameter(format!(
            "line search needs a descent direction, got slope {slope:e}"
        )));
    }
    let mut tau = params.initial_step;
    let mut last = f64::NAN;
    for m in 0..=params.max_backtracks {
        let delta = change(tau)?;
        last = delta;
        if delta <= params.sufficient_decrease * tau * slope {
            return Ok(StepAcceptance { step: tau, backtracks: m, decrease: delta });
        }
        if m < params.max_backtracks {
            tau *= params.contraction;
        }
    }
    Err(CloakError::LineSearch {
        backtracks: params.max_backtracks,
        last_step: tau,
        last_cost: reference_cost + last,
        reference_cost,
    })
}

/// A transient problem instance: fixed parameters, weights, time grid,
/// reference trajectory and terminal adjoint condition.
pub struct TransientProblem<'a, M: OcpModel> {
    model: &'a M,
    grid: TimeGrid,
    step: M::Step,
    control: M::Control,
    load: Vec<f64>,
    z: Series,
    terminal: TerminalAdjoint,
}

impl<'a, M: OcpModel> TransientProblem<'a, M> {
    pub fn new(
        model: &'a M,
        params: &ScenarioParams,
        weights: &ControlWeights,
        grid: &TimeGrid,
        terminal: TerminalAdjoint,
    ) -> Result<Self> {
        params.validate()?;
        weights.validate()?;
        let z = solve_reference(model, params, grid)?;
        Ok(TransientProblem {
            model,
            grid: *grid,
            step: model.state_step(params, grid.dt())?,
            control: model.control_operator(weights)?,
            load: model.state_load(params),
            z,
            terminal,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn reference(&self) -> &Series {
        &self.z
    }

    pub fn terminal(&self) -> &TerminalAdjoint {
        &self.terminal
    }

    /// State trajectory driven by `u`.
    pub fn state(&self, u: &Series) -> Result<Series> {
        let (_, nq, nu) = self.model.dims();
        check_series("control trajectory", u, &self.grid, nu)?;
        let bu: Series = u.iter().map(|uk| self.model.couple(uk)).collect();
        propagate(&self.step, self.grid.steps, nq, Some(&self.load), Some(&bu))
    }

    /// Response of the state to a control perturbation `d` (no loads).
    pub fn state_increment(&self, d: &Series) -> Result<Series> {
        let (_, nq, nu) = self.model.dims();
        check_series("control increment", d, &self.grid, nu)?;
        let bd: Series = d.iter().map(|dk| self.model.couple(dk)).collect();
        propagate(&self.step, self.grid.steps, nq, None, Some(&bd))
    }

    /// Tracking residuals `M_obs(q_k − Ez_k)` and energies `e_kᵀ M_obs e_k`.
    pub fn observe(&self, q: &Series) -> Observation {
        let (residuals, energies) = q.iter().zip(&self.z).map(|(qk, zk)| self.model.observe(qk, zk)).unzip();
        Observation { residuals, energies }
    }

    pub fn adjoint(&self, q: &Series) -> Result<Series> {
        self.adjoint_of(&self.observe(q))
    }

    pub fn adjoint_of(&self, obs: &Observation) -> Result<Series> {
        adjoint_recursion(&self.step, &obs.residuals, &self.terminal)
    }

    pub fn cost(&self, q: &Series, u: &Series) -> TransientCost {
        self.cost_of(&self.observe(q), q, u)
    }

    pub fn cost_of(&self, obs: &Observation, q: &Series, u: &Series) -> TransientCost {
        let n = self.grid.steps;
        let dt = self.grid.dt();
        let tracking = self.grid.integrate(obs.energies.iter().map(|e| 0.5 * e));
        let control = self
            .grid
            .integrate(u.iter().map(|uk| 0.5 * dot(uk, &self.control.apply(uk))));
        let terminal = match &self.terminal {
            TerminalAdjoint::Natural => 0.0,
            TerminalAdjoint::Prescribed(pt) => {
                dt * dot(pt, &self.step.implicit(&q[n])) - 0.25 * dt * obs.energies[n]
            }
        };
        TransientCost { tracking, control, terminal }
    }

    /// `g_k = R u_k + Bᵀ p_k`.
    pub fn gradient(&self, u: &Series, p: &Series) -> Series {
        u.iter()
            .zip(p)
            .map(|(uk, pk)| {
                let mut g = self.control.apply(uk);
                axpy(1.0, &self.model.couple_transpose(pk), &mut g);
                g
            })
            .collect()
    }

    /// Preconditioned direction `d_k = −R⁻¹ g_k`.
    pub fn direction(&self, g: &Series) -> Result<Series> {
        g.iter()
            .map(|gk| Ok(self.control.solve(gk)?.into_iter().map(|x| -x).collect()))
            .collect()
    }

    /// Quasi-Newton direction and reduced gradient at `(u, p)`.
    pub fn quasi_newton_step(&self, u: &Series, p: &Series) -> Result<(Series, Series)> {
        let g = self.gradient(u, p);
        Ok((self.direction(&g)?, g))
    }

    /// Trapezoidal inner product `Δt Σ w_k a_kᵀ b_k`.
    pub fn inner(&self, a: &Series, b: &Series) -> f64 {
        self.grid.integrate(a.iter().zip(b).map(|(x, y)| dot(x, y)))
    }

    /// Coefficients `(c₁, c₂)` of `J(u + τd) − J(u) = c₁τ + c₂τ²`, where `dq`
    /// is the state response to `d`. Evaluating the change this way avoids
    /// the cancellation of subtracting two nearly equal costs.
    fn change_coefficients(&self, obs: &Observation, u: &Series, d: &Series, dq: &Series) -> (f64, f64) {
        let n = self.grid.steps;
        let dt = self.grid.dt();
        let mut lin = 0.0;
        let mut quad = 0.0;
        let mut dd_last = 0.0;
        for k in 0..=n {
            let w = dt * self.grid.weight(k);
            let dd = dot(&dq[k], &self.model.observe_increment(&dq[k]));
            lin += w * dot(&dq[k], &obs.residuals[k]);
            quad += w * 0.5 * dd;
            let ru = self.control.apply(&d[k]);
            lin += w * dot(&u[k], &ru);
            quad += w * 0.5 * dot(&d[k], &ru);
            dd_last = dd;
        }
        if let TerminalAdjoint::Prescribed(pt) = &self.terminal {
            lin += dt * dot(pt, &self.step.implicit(&dq[n])) - 0.5 * dt * dot(&dq[n], &obs.residuals[n]);
            quad -= 0.25 * dt * dd_last;
        }
        (lin, quad)
    }
}

fn euclidean_norm(s: &Series) -> f64 {
    s.iter().map(|v| dot(v, v)).sum::<f64>().sqrt()
}

/// Runs the preconditioned gradient iteration from the steady control with
/// the steady adjoint as final condition.
pub fn solve_transient_ocp<M: OcpModel>(
    model: &M,
    params: &ScenarioParams,
    weights: &ControlWeights,
    grid: &TimeGrid,
    options: &SolverOptions,
) -> Result<Trajectory> {
    let steady = model.steady(params, weights)?;
    let problem = TransientProblem::new(
        model,
        params,
        weights,
        grid,
        TerminalAdjoint::Prescribed(steady.p.clone()),
    )?;
    let mut u: Series = vec![steady.u.clone(); grid.steps + 1];
    let mut q = problem.state(&u)?;
    let mut log = Vec::new();
    let mut g0 = None;
    let mut converged = false;
    let mut iter = 0;
    // previous direction and ⟨g, R⁻¹g⟩ for conjugate directions
    let mut previous: Option<(Series, f64)> = None;
    let p = loop {
        let obs = problem.observe(&q);
        let p = problem.adjoint_of(&obs)?;
        let (mut d, g) = problem.quasi_newton_step(&u, &p)?;
        let gnorm = euclidean_norm(&g);
        let g0 = *g0.get_or_insert(gnorm);
        let cost = problem.cost_of(&obs, &q, &u);
        let mut record = IterationRecord {
            iter,
            objective: cost.objective(),
            cost: cost.total(),
            grad_norm: gnorm,
            step: f64::NAN,
            backtracks: 0,
        };
        if gnorm <= options.tol * g0.max(1.0) {
            converged = true;
            log.push(record);
            break p;
        }
        if iter == options.max_iter {
            log.push(record);
            break p;
        }
        let mut armijo = options.armijo;
        if options.direction == DirectionRule::ConjugateGradient {
            let rho = -problem.inner(&g, &d);
            if let Some((prev, prev_rho)) = &previous {
                let gamma = rho / prev_rho;
                for (dk, pk) in d.iter_mut().zip(prev) {
                    axpy(gamma, pk, dk);
                }
                if !(problem.inner(&g, &d) < 0.0) {
                    // lost conjugacy, restart along the preconditioned gradient
                    d = problem.direction(&g)?;
                }
            }
            previous = Some((d.clone(), rho));
        }
        let slope = problem.inner(&g, &d);
        let dq = problem.state_increment(&d)?;
        let (c1, c2) = problem.change_coefficients(&obs, &u, &d, &dq);
        if options.direction == DirectionRule::ConjugateGradient && c2 > 0.0 {
            armijo.initial_step = -c1 / (2.0 * c2);
        }
        let accepted = armijo_backtracking(
            |tau| Ok(tau * c1 + tau * tau * c2),
            slope,
            cost.objective(),
            &armijo,
        );
        let accepted = match accepted {
            Ok(a) => a,
            Err(e) => {
                warn!("stopping at iteration {iter}: {e}");
                log.push(record);
                break p;
            }
        };
        record.step = accepted.step;
        record.backtracks = accepted.backtracks;
        log.push(record);
        for k in 0..=grid.steps {
            axpy(accepted.step, &d[k], &mut u[k]);
            axpy(accepted.step, &dq[k], &mut q[k]);
        }
        iter += 1;
    };
    if !converged {
        warn!(
            "transient iteration stopped after {iter} iterations without reaching the gradient tolerance \
             (|g| = {:e})",
            log.last().map_or(f64::NAN, |r| r.grad_norm)
        );
    }
    let cost = problem.cost(&q, &u);
    Ok(Trajectory {
        grid: *grid,
        z: problem.z,
        q,
        p,
        u,
        cost,
        log,
        converged,
        steady,
    })
}
