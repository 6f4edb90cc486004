//! Dense reference computations. They share only the assembled sparse
//! operators with the library; every solve, cost and decomposition is redone
//! here with nalgebra.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use thermocloak::mesh::{Mesh, Point};
use thermocloak::sparse::CsrMatrix;
use thermocloak::{ControlWeights, FemOperators, ScenarioParams, TimeGrid};

pub fn dense(m: &CsrMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (r, c, v) in m.triplets() {
        d[(r, c)] += v;
    }
    d
}

pub fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Mass matrix of the triangle (0,0), (1,0), (0,1), by hand.
pub fn unit_triangle_mass() -> [[f64; 3]; 3] {
    let (d, o) = (1.0 / 12.0, 1.0 / 24.0);
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// Stiffness matrix of the same triangle: gradients (−1,−1), (1,0), (0,1)
/// times the area 1/2.
pub fn unit_triangle_stiffness() -> [[f64; 3]; 3] {
    [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]]
}

/// Element matrices of an arbitrary triangle through the affine map from the
/// reference element: stiffness from `J⁻ᵀ∇φ̂`, mass from the edge-midpoint
/// rule (exact for quadratics).
pub fn element_matrices(t: &[Point; 3]) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let j = Matrix2::new(t[1][0] - t[0][0], t[2][0] - t[0][0], t[1][1] - t[0][1], t[2][1] - t[0][1]);
    let det = j.determinant();
    let jit = j.try_inverse().expect("degenerate triangle").transpose();
    let ref_grad = [Vector2::new(-1.0, -1.0), Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)];
    let grad: Vec<Vector2<f64>> = ref_grad.iter().map(|g| jit * g).collect();
    let area = det.abs() / 2.0;
    let phi = |xi: f64, eta: f64| [1.0 - xi - eta, xi, eta];
    let midpoints = [phi(0.5, 0.0), phi(0.5, 0.5), phi(0.0, 0.5)];
    let mut mass = [[0.0; 3]; 3];
    let mut stiff = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            stiff[a][b] = area * grad[a].dot(&grad[b]);
            mass[a][b] = midpoints.iter().map(|v| area / 3.0 * v[a] * v[b]).sum();
        }
    }
    (mass, stiff)
}

/// `∫ f²` of a piecewise-linear field by the edge-midpoint rule, element by
/// element (no assembled matrix involved).
pub fn quadrature_l2_norm(mesh: &Mesh, f: &[f64]) -> f64 {
    let mut s = 0.0;
    for (e, t) in mesh.triangles.iter().enumerate() {
        let area = mesh.area(e);
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            let m = 0.5 * (f[t[a]] + f[t[b]]);
            s += area / 3.0 * m * m;
        }
    }
    s.sqrt()
}

/// Dense steady problem: reference and state are obtained by LU solves, the
/// cost by explicit quadratic forms.
pub struct DenseSteady {
    pub z: DVector<f64>,
    ez: DVector<f64>,
    state_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    load: DVector<f64>,
    coupling: DMatrix<f64>,
    obs: DMatrix<f64>,
    control: DMatrix<f64>,
}

impl DenseSteady {
    pub fn new(ops: &FemOperators, params: &ScenarioParams, w: &ControlWeights) -> DenseSteady {
        let mu = params.diffusivity;
        let a = dense(&ops.diffusion) * mu + dense(&ops.robin);
        let f = vector(&ops.source_shape) * params.intensity;
        let z = a.lu().solve(&f).expect("singular reference operator");
        let map = ops.restriction.free_to_unperturbed();
        let ez = DVector::from_iterator(map.len(), map.iter().map(|&i| z[i]));
        let a_free = dense(&ops.diffusion_free) * mu + dense(&ops.robin_free);
        let lift = vector(&ops.lift_diffusion) * mu + vector(&ops.lift_robin);
        let load = lift * params.obstacle_temperature + vector(&ops.source_free) * params.intensity;
        DenseSteady {
            z,
            ez,
            state_lu: a_free.lu(),
            load,
            coupling: dense(&ops.control_coupling),
            obs: dense(&ops.obs_mass),
            control: dense(&ops.control_mass) * w.beta + dense(&ops.control_stiffness) * w.beta_g,
        }
    }

    pub fn n_u(&self) -> usize {
        self.control.nrows()
    }

    pub fn state(&self, u: &DVector<f64>) -> DVector<f64> {
        self.state_lu.solve(&(&self.load + &self.coupling * u)).expect("singular state operator")
    }

    pub fn cost(&self, u: &DVector<f64>) -> f64 {
        let e = self.state(u) - &self.ez;
        0.5 * e.dot(&(&self.obs * &e)) + 0.5 * u.dot(&(&self.control * u))
    }
}

/// Minimizes a quadratic functional from function values only: central
/// finite-difference Hessian, then Newton steps driven by central
/// finite-difference gradients until the step stalls. Central differences of
/// a quadratic have no truncation error, so `h` only trades rounding.
pub fn finite_difference_newton(f: impl Fn(&DVector<f64>) -> f64, n: usize, h: f64, max_steps: usize) -> DVector<f64> {
    let mut u = DVector::zeros(n);
    let e = |i: usize| {
        let mut v = DVector::zeros(n);
        v[i] = h;
        v
    };
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let (ei, ej) = (e(i), e(j));
            let v = (f(&(&ei + &ej)) - f(&(&ei - &ej)) - f(&(&ej - &ei)) + f(&(-&ei - &ej))) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let lu = hess.lu();
    for _ in 0..max_steps {
        let g = DVector::from_iterator(n, (0..n).map(|i| (f(&(&u + e(i))) - f(&(&u - e(i)))) / (2.0 * h)));
        let step = lu.solve(&(-g)).expect("singular finite-difference Hessian");
        u += &step;
        if step.norm() <= 1e-13 * u.norm() {
            break;
        }
    }
    u
}

/// Dense Crank–Nicolson discretization with trapezoidal time integration of
/// the cost; controls enter the step through their average.
pub struct DenseTransient {
    grid: TimeGrid,
    ez: Vec<DVector<f64>>,
    step_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    implicit: DMatrix<f64>,
    explicit: DMatrix<f64>,
    load: DVector<f64>,
    coupling: DMatrix<f64>,
    obs: DMatrix<f64>,
    control: DMatrix<f64>,
}

fn crank_nicolson(mass: &DMatrix<f64>, a: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    (mass / dt + a * 0.5, mass / dt - a * 0.5)
}

impl DenseTransient {
    pub fn new(ops: &FemOperators, params: &ScenarioParams, w: &ControlWeights, grid: &TimeGrid) -> DenseTransient {
        let mu = params.diffusivity;
        let dt = grid.dt();
        let (s, t) = crank_nicolson(&dense(&ops.mass), &(dense(&ops.diffusion) * mu + dense(&ops.robin)), dt);
        let s_lu = s.lu();
        let f = vector(&ops.source_shape) * params.intensity;
        let map = ops.restriction.free_to_unperturbed();
        let mut z = DVector::zeros(ops.n_z());
        let mut ez = vec![DVector::zeros(map.len())];
        for _ in 0..grid.steps {
            z = s_lu.solve(&(&t * &z + &f)).expect("singular reference step");
            ez.push(DVector::from_iterator(map.len(), map.iter().map(|&i| z[i])));
        }
        let a_free = dense(&ops.diffusion_free) * mu + dense(&ops.robin_free);
        let (implicit, explicit) = crank_nicolson(&dense(&ops.mass_free), &a_free, dt);
        let lift = vector(&ops.lift_diffusion) * mu + vector(&ops.lift_robin);
        DenseTransient {
            grid: *grid,
            ez,
            step_lu: implicit.clone().lu(),
            implicit,
            explicit,
            load: lift * params.obstacle_temperature + vector(&ops.source_free) * params.intensity,
            coupling: dense(&ops.control_coupling),
            obs: dense(&ops.obs_mass),
            control: dense(&ops.control_mass) * w.beta + dense(&ops.control_stiffness) * w.beta_g,
        }
    }

    pub fn state(&self, u: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let mut q = vec![DVector::zeros(self.load.len())];
        for k in 0..self.grid.steps {
            let forcing = &self.coupling * (&u[k] + &u[k + 1]) * 0.5;
            let rhs = &self.explicit * &q[k] + &self.load + forcing;
            q.push(self.step_lu.solve(&rhs).expect("singular state step"));
        }
        q
    }

    /// Tracking plus control cost; with a terminal adjoint `p_T` the extra
    /// term `Δt p_Tᵀ S q_N − Δt/4 e_Nᵀ M_obs e_N` is added.
    pub fn cost(&self, u: &[DVector<f64>], terminal: Option<&DVector<f64>>) -> f64 {
        let q = self.state(u);
        let n = self.grid.steps;
        let dt = self.grid.dt();
        let mut j = 0.0;
        let mut last = 0.0;
        for k in 0..=n {
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            let e = &q[k] - &self.ez[k];
            let energy = e.dot(&(&self.obs * &e));
            j += dt * w * 0.5 * (energy + u[k].dot(&(&self.control * &u[k])));
            last = energy;
        }
        if let Some(p) = terminal {
            j += dt * p.dot(&(&self.implicit * &q[n])) - 0.25 * dt * last;
        }
        j
    }
}

/// Singular values of the snapshot matrix with the given columns.
pub fn singular_values(columns: &[Vec<f64>]) -> Vec<f64> {
    let m = DMatrix::from_fn(columns[0].len(), columns.len(), |i, j| columns[j][i]);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `‖X − VVᵀX‖_F / ‖X‖_F` for an orthonormal basis `V`.
pub fn projection_error(columns: &[Vec<f64>], basis: &[Vec<f64>]) -> f64 {
    let rows = columns[0].len();
    let x = DMatrix::from_fn(rows, columns.len(), |i, j| columns[j][i]);
    let v = DMatrix::from_fn(rows, basis.len(), |i, j| basis[j][i]);
    let r = &x - &v * (v.transpose() * &x);
    r.norm() / x.norm()
}

/// Smallest `n` whose discarded tail energy is at most `ε²` of the total.
pub fn energy_rank(sigma: &[f64], eps: f64) -> usize {
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    (0..=sigma.len())
        .find(|&n| sigma[n..].iter().map(|s| s * s).sum::<f64>() <= eps * eps * total)
        .unwrap_or(sigma.len())
}
