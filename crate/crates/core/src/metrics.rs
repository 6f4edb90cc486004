//! Norms, tracking error, cloaking efficiency and reduced-versus-full error
//! reports.

use std::time::{Duration, Instant};

use crate::error::{CloakError, Result};
use crate::fem::FemOperators;
use crate::params::ScenarioParams;
use crate::sparse::CsrMatrix;
use crate::steady::{solve_uncontrolled, SteadySolution};
use crate::transient::{TimeGrid, Trajectory};

fn check_len(context: &'static str, m: &CsrMatrix, v: &[f64]) -> Result<()> {
    if m.nrows() != v.len() {
        return Err(CloakError::DimensionMismatch { context, expected: m.nrows(), actual: v.len() });
    }
    Ok(())
}

/// `√(fᵀ M f)`.
pub fn l2_norm(field: &[f64], mass: &CsrMatrix) -> Result<f64> {
    check_len("field for L2 norm", mass, field)?;
    Ok(mass.quadratic_form(field).max(0.0).sqrt())
}

/// `√(∫₀ᵀ ‖f(t)‖² dt)` with the trapezoidal rule in time.
pub fn l2_spacetime_norm(series: &[Vec<f64>], mass: &CsrMatrix, grid: &TimeGrid) -> Result<f64> {
    if series.len() != grid.steps + 1 {
        return Err(CloakError::DimensionMismatch {
            context: "trajectory for space-time norm",
            expected: grid.steps + 1,
            actual: series.len(),
        });
    }
    for f in series {
        check_len("trajectory for space-time norm", mass, f)?;
    }
    Ok(grid.integrate(series.iter().map(|f| mass.quadratic_form(f).max(0.0))).sqrt())
}

fn difference(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `‖a − b‖ / ‖b‖`; zero when both vanish and one when only `b` does.
pub fn relative_l2_error(approx: &[f64], reference: &[f64], mass: &CsrMatrix) -> Result<f64> {
    check_len("approximate field", mass, approx)?;
    let den = l2_norm(reference, mass)?;
    let num = l2_norm(&difference(approx, reference), mass)?;
    Ok(relative(num, den))
}

pub fn relative_spacetime_error(
    approx: &[Vec<f64>],
    reference: &[Vec<f64>],
    mass: &CsrMatrix,
    grid: &TimeGrid,
) -> Result<f64> {
    if approx.len() != reference.len() {
        return Err(CloakError::DimensionMismatch {
            context: "approximate trajectory",
            expected: reference.len(),
            actual: approx.len(),
        });
    }
    let diff: Vec<Vec<f64>> = approx.iter().zip(reference).map(|(a, r)| difference(a, r)).collect();
    let den = l2_spacetime_norm(reference, mass, grid)?;
    let num = l2_spacetime_norm(&diff, mass, grid)?;
    Ok(relative(num, den))
}

fn relative(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// `√((q − Ez)ᵀ M_obs (q − Ez) / |Ω_obs|)` with `|Ω_obs| = 1ᵀ M_obs 1`.
pub fn mean_tracking_error(q: &[f64], z: &[f64], ops: &FemOperators) -> Result<f64> {
    check_len("state for tracking error", &ops.obs_mass, q)?;
    if z.len() != ops.n_z() {
        return Err(CloakError::DimensionMismatch { context: "reference for tracking error", expected: ops.n_z(), actual: z.len() });
    }
    let measure = ops.observation_measure();
    if !(measure > 0.0) {
        return Err(CloakError::Undefined("tracking error over an observation region of zero measure".into()));
    }
    let e = difference(q, &ops.restriction.restrict(z));
    Ok((ops.obs_mass.quadratic_form(&e).max(0.0) / measure).sqrt())
}

/// `η = |MTE − MTE*| / MTE`.
pub fn cloaking_efficiency(mte_uncontrolled: f64, mte_optimal: f64) -> Result<f64> {
    if !(mte_uncontrolled > 0.0) {
        return Err(CloakError::Undefined(format!(
            "cloaking efficiency needs a positive uncontrolled tracking error, got {mte_uncontrolled:e}"
        )));
    }
    Ok((mte_uncontrolled - mte_optimal).abs() / mte_uncontrolled)
}

/// Relative errors of the four fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldErrors {
    pub z: f64,
    pub q: f64,
    pub p: f64,
    pub u: f64,
}

impl FieldErrors {
    pub fn max(&self) -> f64 {
        self.z.max(self.q).max(self.p).max(self.u)
    }
}

pub fn steady_field_errors(ops: &FemOperators, approx: &SteadySolution, reference: &SteadySolution) -> Result<FieldErrors> {
    Ok(FieldErrors {
        z: relative_l2_error(&approx.z, &reference.z, &ops.mass)?,
        q: relative_l2_error(&approx.q, &reference.q, &ops.mass_free)?,
        p: relative_l2_error(&approx.p, &reference.p, &ops.mass_free)?,
        u: relative_l2_error(&approx.u, &reference.u, &ops.control_mass)?,
    })
}

pub fn transient_field_errors(ops: &FemOperators, approx: &Trajectory, reference: &Trajectory) -> Result<FieldErrors> {
    if approx.grid != reference.grid {
        return Err(CloakError::InvalidParameter("trajectories live on different time grids".into()));
    }
    let g = &reference.grid;
    Ok(FieldErrors {
        z: relative_spacetime_error(&approx.z, &reference.z, &ops.mass, g)?,
        q: relative_spacetime_error(&approx.q, &reference.q, &ops.mass_free, g)?,
        p: relative_spacetime_error(&approx.p, &reference.p, &ops.mass_free, g)?,
        u: relative_spacetime_error(&approx.u, &reference.u, &ops.control_mass, g)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub full: Duration,
    pub reduced: Duration,
}

impl Timing {
    pub fn speedup(&self) -> f64 {
        self.full.as_secs_f64() / self.reduced.as_secs_f64().max(1e-12)
    }
}

/// Median wall time of `runs` calls of `f`, plus the value of the last call.
pub fn median_time<T>(runs: usize, mut f: impl FnMut() -> Result<T>) -> Result<(Duration, T)> {
    let mut times = Vec::with_capacity(runs.max(1));
    let mut last = None;
    for _ in 0..runs.max(1) {
        let t = Instant::now();
        let v = f()?;
        times.push(t.elapsed());
        last = Some(v);
    }
    times.sort_unstable();
    Ok((times[times.len() / 2], last.unwrap()))
}

/// Diagnostics of one optimal-control solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CloakReport {
    pub mte_uncontrolled: f64,
    pub mte_optimal: f64,
    pub efficiency: f64,
    pub tracking: f64,
    pub control: f64,
    /// Time-averaged tracking error of a transient run (an extension of the
    /// steady definition).
    pub mte_time_average: Option<f64>,
    pub errors: Option<FieldErrors>,
    pub timing: Option<Timing>,
}

impl CloakReport {
    pub fn csv_header() -> &'static str {
        "mte_uncontrolled,mte_optimal,efficiency,tracking,control,mte_time_average,\
         err_z,err_q,err_p,err_u,time_full_s,time_reduced_s,speedup"
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        let e = self.errors;
        let t = self.timing;
        [
            format!("{:e}", self.mte_uncontrolled),
            format!("{:e}", self.mte_optimal),
            format!("{:e}", self.efficiency),
            format!("{:e}", self.tracking),
            format!("{:e}", self.control),
            opt(self.mte_time_average),
            opt(e.map(|e| e.z)),
            opt(e.map(|e| e.q)),
            opt(e.map(|e| e.p)),
            opt(e.map(|e| e.u)),
            opt(t.map(|t| t.full.as_secs_f64())),
            opt(t.map(|t| t.reduced.as_secs_f64())),
            opt(t.map(|t| t.speedup())),
        ]
        .join(",")
    }
}

/// Tracking errors and efficiency of a steady optimum against the
/// uncontrolled perturbed field.
pub fn steady_report(ops: &FemOperators, params: &ScenarioParams, solution: &SteadySolution) -> Result<CloakReport> {
    let (z, q) = solve_uncontrolled(ops, params)?;
    let mte_uncontrolled = mean_tracking_error(&q, &z, ops)?;
    let mte_optimal = mean_tracking_error(&solution.q, &solution.z, ops)?;
    Ok(CloakReport {
        mte_uncontrolled,
        mte_optimal,
        efficiency: cloaking_efficiency(mte_uncontrolled, mte_optimal)?,
        tracking: solution.tracking,
        control: solution.control,
        mte_time_average: None,
        errors: None,
        timing: None,
    })
}

/// Report of a transient run: efficiency at the final time plus the
/// time-averaged tracking error.
pub fn transient_report(ops: &FemOperators, params: &ScenarioParams, t: &Trajectory) -> Result<CloakReport> {
    let (z, q) = solve_uncontrolled(ops, params)?;
    let mte_uncontrolled = mean_tracking_error(&q, &z, ops)?;
    let n = t.grid.steps;
    let mte_optimal = mean_tracking_error(&t.q[n], &t.z[n], ops)?;
    let mut sq = Vec::with_capacity(n + 1);
    for (qk, zk) in t.q.iter().zip(&t.z) {
        let m = mean_tracking_error(qk, zk, ops)?;
        sq.push(m * m);
    }
    let average = (t.grid.integrate(sq) / t.grid.horizon).sqrt();
    Ok(CloakReport {
        mte_uncontrolled,
        mte_optimal,
        efficiency: cloaking_efficiency(mte_uncontrolled, mte_optimal)?,
        tracking: t.cost.tracking,
        control: t.cost.control,
        mte_time_average: Some(average),
        errors: None,
        timing: None,
    })
}
