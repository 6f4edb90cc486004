//! Python bindings: layouts, full-order solves, reduced models and metrics.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use thermocloak::metrics::{steady_field_errors, steady_report, transient_report};
use thermocloak::mesh::LayoutSpec;
use thermocloak::rom::{
    load_archive, project, save_archive, solve_rom_steady, solve_rom_transient, AdjointScaling, BasisBuilder,
    ReducedOperators,
};
use thermocloak::scenarios::{lhs_sample, stream_snapshots, SnapshotSettings};
use thermocloak::{CloakError, ControlWeights, ParamBox, ScenarioParams, SolverOptions, SteadySolution, TimeGrid, Trajectory};

fn py_err(e: CloakError) -> PyErr {
    match e {
        CloakError::InvalidParameter(_) | CloakError::InvalidLayout(_) | CloakError::Config(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn params(mu: (f64, f64, f64)) -> ScenarioParams {
    ScenarioParams::new(mu.0, mu.1, mu.2)
}

fn solver(conjugate: bool, tol: f64, max_iter: usize) -> SolverOptions {
    if conjugate {
        SolverOptions::conjugate(tol, max_iter)
    } else {
        SolverOptions { tol, max_iter, ..SolverOptions::default() }
    }
}

/// Meshes and assembled operators of a layout.
#[pyclass(frozen)]
struct Problem {
    inner: thermocloak::Problem,
}

#[pymethods]
impl Problem {
    /// `kind` is `annulus` or `disc_ring`; `h` overrides the element size.
    #[new]
    #[pyo3(signature = (kind = "annulus", h = None))]
    fn new(kind: &str, h: Option<f64>) -> PyResult<Self> {
        let mut spec = match kind {
            "annulus" => LayoutSpec::annulus(),
            "disc_ring" => LayoutSpec::disc_ring(),
            _ => return Err(PyValueError::new_err(format!("unknown layout '{kind}'"))),
        };
        if let Some(h) = h {
            spec = spec.with_h(h);
        }
        let inner = thermocloak::Problem::from_layout(&spec).map_err(py_err)?;
        Ok(Problem { inner })
    }

    /// `(n_z, n_q, n_u)`.
    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        let o = &self.inner.ops;
        (o.n_z(), o.n_q(), o.n_u())
    }

    #[getter]
    fn mesh_hash(&self) -> String {
        self.inner.mesh_hash()
    }

    /// Node coordinates of the perforated mesh.
    fn nodes(&self) -> Vec<(f64, f64)> {
        self.inner.ocp.nodes.iter().map(|p| (p[0], p[1])).collect()
    }

    fn triangles(&self) -> Vec<(usize, usize, usize)> {
        self.inner.ocp.triangles.iter().map(|t| (t[0], t[1], t[2])).collect()
    }

    /// Steady optimal control. Returns fields, costs and the efficiency.
    #[pyo3(signature = (mu, beta = 1e-7, beta_g = 1e-8))]
    fn solve_steady<'py>(&self, py: Python<'py>, mu: (f64, f64, f64), beta: f64, beta_g: f64) -> PyResult<Bound<'py, PyDict>> {
        let p = params(mu);
        let ops = &self.inner.ops;
        let s = thermocloak::solve_steady(ops, &p, &ControlWeights::new(beta, beta_g)).map_err(py_err)?;
        let r = steady_report(ops, &p, &s).map_err(py_err)?;
        let d = steady_dict(py, &s)?;
        d.set_item("efficiency", r.efficiency)?;
        d.set_item("mte_uncontrolled", r.mte_uncontrolled)?;
        d.set_item("mte_optimal", r.mte_optimal)?;
        Ok(d)
    }

    /// Transient optimal control on `[0, horizon]` with `steps` steps.
    #[pyo3(signature = (mu, horizon = 5.0, steps = 100, beta = 1e-7, beta_g = 1e-8, conjugate = false, tol = 1e-8, max_iter = 50))]
    #[allow(clippy::too_many_arguments)]
    fn solve_transient<'py>(
        &self,
        py: Python<'py>,
        mu: (f64, f64, f64),
        horizon: f64,
        steps: usize,
        beta: f64,
        beta_g: f64,
        conjugate: bool,
        tol: f64,
        max_iter: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let p = params(mu);
        let ops = &self.inner.ops;
        let grid = TimeGrid::new(horizon, steps).map_err(py_err)?;
        let t = py
            .detach(|| {
                thermocloak::solve_transient_ocp(ops, &p, &ControlWeights::new(beta, beta_g), &grid, &solver(conjugate, tol, max_iter))
            })
            .map_err(py_err)?;
        let r = transient_report(ops, &p, &t).map_err(py_err)?;
        let d = trajectory_dict(py, &t)?;
        d.set_item("efficiency", r.efficiency)?;
        d.set_item("mte_time_average", r.mte_time_average)?;
        Ok(d)
    }
}

fn steady_dict<'py>(py: Python<'py>, s: &SteadySolution) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("z", &s.z)?;
    d.set_item("q", &s.q)?;
    d.set_item("p", &s.p)?;
    d.set_item("u", &s.u)?;
    d.set_item("tracking", s.tracking)?;
    d.set_item("control", s.control)?;
    d.set_item("cost", s.cost())?;
    Ok(d)
}

fn trajectory_dict<'py>(py: Python<'py>, t: &Trajectory) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("z", &t.z)?;
    d.set_item("q", &t.q)?;
    d.set_item("p", &t.p)?;
    d.set_item("u", &t.u)?;
    d.set_item("cost", t.cost.total())?;
    d.set_item("objective", t.cost.objective())?;
    d.set_item("iterations", t.log.len().saturating_sub(1))?;
    d.set_item("converged", t.converged)?;
    Ok(d)
}

/// POD-Galerkin reduced model of a problem.
#[pyclass(frozen)]
struct ReducedModel {
    rom: ReducedOperators,
    full_dims: (usize, usize, usize),
    mesh_hash: String,
}

#[pymethods]
impl ReducedModel {
    /// Offline phase: LHS training set of `n_s` samples, snapshots, POD with
    /// tolerance `eps`, Galerkin projection. `adjoint_scale` is a number or
    /// `"balanced"`.
    #[staticmethod]
    #[pyo3(signature = (problem, n_s = 50, eps = 1e-7, seed = 0, transient = false, beta = 1e-7, beta_g = 1e-8, adjoint_scale = "1"))]
    #[allow(clippy::too_many_arguments)]
    fn build(
        py: Python<'_>,
        problem: &Problem,
        n_s: usize,
        eps: f64,
        seed: u64,
        transient: bool,
        beta: f64,
        beta_g: f64,
        adjoint_scale: &str,
    ) -> PyResult<Self> {
        let scaling: AdjointScaling = adjoint_scale.parse().map_err(py_err)?;
        let ops = &problem.inner.ops;
        let hash = problem.inner.mesh_hash();
        let w = ControlWeights::new(beta, beta_g);
        let rom = py
            .detach(|| -> thermocloak::Result<ReducedOperators> {
                let samples = lhs_sample(&ParamBox::default(), n_s, seed)?;
                let settings = if transient {
                    SnapshotSettings::transient(w, TimeGrid::default(), SolverOptions::conjugate(1e-8, 200))
                } else {
                    SnapshotSettings::steady(w)
                };
                let mut b = BasisBuilder::new(eps)?.with_adjoint_scaling(scaling)?;
                stream_snapshots(ops, &samples, &settings, |r| b.add(&hash, r.block()))?;
                project(ops, &b.finish()?)
            })
            .map_err(py_err)?;
        Ok(ReducedModel { rom, full_dims: (ops.n_z(), ops.n_q(), ops.n_u()), mesh_hash: problem.inner.mesh_hash() })
    }

    #[staticmethod]
    fn load(problem: &Problem, path: PathBuf) -> PyResult<Self> {
        let ops = &problem.inner.ops;
        let (rom, _) = load_archive(&path, Some(&problem.inner.mesh_hash())).map_err(py_err)?;
        Ok(ReducedModel { rom, full_dims: (ops.n_z(), ops.n_q(), ops.n_u()), mesh_hash: problem.inner.mesh_hash() })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_archive(&path, &self.rom, self.full_dims, &self.mesh_hash, &[]).map_err(py_err)?;
        Ok(())
    }

    /// `(n_z, n_qp, n_u)`.
    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        self.rom.basis.dims()
    }

    /// Reduced steady solve, lifted to full fields.
    #[pyo3(signature = (mu, beta = 1e-7, beta_g = 1e-8))]
    fn solve_steady<'py>(&self, py: Python<'py>, mu: (f64, f64, f64), beta: f64, beta_g: f64) -> PyResult<Bound<'py, PyDict>> {
        let s = solve_rom_steady(&self.rom, &params(mu), &ControlWeights::new(beta, beta_g)).map_err(py_err)?;
        steady_dict(py, &self.rom.lift_steady(&s))
    }

    /// Reduced transient solve (conjugate directions), lifted to full fields.
    #[pyo3(signature = (mu, horizon = 5.0, steps = 100, beta = 1e-7, beta_g = 1e-8))]
    fn solve_transient<'py>(
        &self,
        py: Python<'py>,
        mu: (f64, f64, f64),
        horizon: f64,
        steps: usize,
        beta: f64,
        beta_g: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let grid = TimeGrid::new(horizon, steps).map_err(py_err)?;
        let t = solve_rom_transient(
            &self.rom,
            &params(mu),
            &ControlWeights::new(beta, beta_g),
            &grid,
            &SolverOptions::conjugate(1e-8, 200),
        )
        .map_err(py_err)?;
        trajectory_dict(py, &self.rom.lift_trajectory(&t))
    }

    /// Maximum relative error of the four steady fields against the full model.
    #[pyo3(signature = (problem, mu, beta = 1e-7, beta_g = 1e-8))]
    fn steady_error(&self, problem: &Problem, mu: (f64, f64, f64), beta: f64, beta_g: f64) -> PyResult<f64> {
        let (p, w) = (params(mu), ControlWeights::new(beta, beta_g));
        let ops = &problem.inner.ops;
        let full = thermocloak::solve_steady(ops, &p, &w).map_err(py_err)?;
        let reduced = self.rom.lift_steady(&solve_rom_steady(&self.rom, &p, &w).map_err(py_err)?);
        Ok(steady_field_errors(ops, &reduced, &full).map_err(py_err)?.max())
    }
}

/// Latin hypercube sample of the default parameter box.
#[pyfunction]
#[pyo3(signature = (n, seed = 0))]
fn lhs(n: usize, seed: u64) -> PyResult<Vec<(f64, f64, f64)>> {
    Ok(lhs_sample(&ParamBox::default(), n, seed)
        .map_err(py_err)?
        .into_iter()
        .map(|p| (p.diffusivity, p.intensity, p.obstacle_temperature))
        .collect())
}

#[pymodule]
fn thermocloak_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<ReducedModel>()?;
    m.add_function(wrap_pyfunction!(lhs, m)?)?;
    Ok(())
}
