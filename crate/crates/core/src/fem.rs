//! P1 finite-element operators. Everything here is parameter independent;
//! parametric operators are affine combinations of the stored pieces.

use crate::error::{CloakError, Result};
use crate::mesh::{signed_area, BoundaryTag, Mesh, Point, Region, Restriction, SourceDisc};
use crate::params::{ControlWeights, ScenarioParams};
use crate::sparse::CsrMatrix;

pub type Element = [Point; 3];

fn positive_area(t: &Element) -> Result<f64> {
    let area = signed_area(t[0], t[1], t[2]);
    if area > 0.0 && area.is_finite() {
        Ok(area)
    } else {
        Err(CloakError::DegenerateTriangle { area })
    }
}

/// `∫ φ_i φ_j` over a triangle.
pub fn element_mass(t: &Element) -> Result<[[f64; 3]; 3]> {
    let a = positive_area(t)? / 12.0;
    Ok([
        [2.0 * a, a, a],
        [a, 2.0 * a, a],
        [a, a, 2.0 * a],
    ])
}

/// `∫ ∇φ_i · ∇φ_j` over a triangle (unit diffusivity).
pub fn element_stiffness(t: &Element) -> Result<[[f64; 3]; 3]> {
    let area = positive_area(t)?;
    let mut b = [0.0; 3];
    let mut c = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        b[i] = t[j][1] - t[k][1];
        c[i] = t[k][0] - t[j][0];
    }
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
        }
    }
    Ok(k)
}

/// `∫ φ_i φ_j` over a boundary edge.
pub fn edge_mass(a: Point, b: Point) -> [[f64; 2]; 2] {
    let l = (b[0] - a[0]).hypot(b[1] - a[1]) / 6.0;
    [[2.0 * l, l], [l, 2.0 * l]]
}

fn assemble_elements<F>(mesh: &Mesh, include: impl Fn(usize) -> bool, local: F) -> Result<CsrMatrix>
where
    F: Fn(&Element) -> Result<[[f64; 3]; 3]>,
{
    let mut trip = Vec::new();
    for (e, t) in mesh.triangles.iter().enumerate() {
        if !include(e) {
            continue;
        }
        let k = local(&mesh.vertices(e))?;
        for i in 0..3 {
            for j in 0..3 {
                trip.push((t[i], t[j], k[i][j]));
            }
        }
    }
    let n = mesh.node_count();
    Ok(CsrMatrix::from_triplets(n, n, &trip))
}

pub fn assemble_mass(mesh: &Mesh) -> Result<CsrMatrix> {
    assemble_elements(mesh, |_| true, element_mass)
}

pub fn assemble_stiffness(mesh: &Mesh) -> Result<CsrMatrix> {
    assemble_elements(mesh, |_| true, element_stiffness)
}

pub fn assemble_region_mass(mesh: &Mesh, region: Region) -> Result<CsrMatrix> {
    assemble_elements(mesh, |e| mesh.regions[e] == region, element_mass)
}

/// Boundary mass over the edges carrying `tag`.
#[allow(clippy::needless_range_loop)]
pub fn assemble_boundary_mass(mesh: &Mesh, tag: BoundaryTag) -> CsrMatrix {
    let mut trip = Vec::new();
    for e in mesh.boundary_edges.iter().filter(|e| e.tag == tag) {
        let m = edge_mass(mesh.nodes[e.nodes[0]], mesh.nodes[e.nodes[1]]);
        for i in 0..2 {
            for j in 0..2 {
                trip.push((e.nodes[i], e.nodes[j], m[i][j]));
            }
        }
    }
    let n = mesh.node_count();
    CsrMatrix::from_triplets(n, n, &trip)
}

/// Load vector of the indicator of `inside`, one third of the element area per
/// vertex for every element whose centroid satisfies the predicate.
pub fn assemble_indicator_load(mesh: &Mesh, inside: impl Fn(Point) -> bool) -> Vec<f64> {
    let mut f = vec![0.0; mesh.node_count()];
    for (e, t) in mesh.triangles.iter().enumerate() {
        if inside(mesh.centroid(e)) {
            let share = mesh.area(e) / 3.0;
            for &i in t {
                f[i] += share;
            }
        }
    }
    f
}

/// All parameter-independent operators of the cloaking problem.
///
/// Unperturbed quantities live on every node of the full square (`n_z`).
/// Restricted quantities live on the free nodes of the perforated mesh
/// (`n_q`); the obstacle-boundary nodes are eliminated and their coupling is
/// kept in the two lift vectors. Controls live on the nodes of the control
/// elements (`n_u`).
#[derive(Debug, Clone)]
pub struct FemOperators {
    pub mass: CsrMatrix,
    pub diffusion: CsrMatrix,
    pub robin: CsrMatrix,
    pub source_shape: Vec<f64>,

    pub mass_free: CsrMatrix,
    pub diffusion_free: CsrMatrix,
    pub robin_free: CsrMatrix,
    /// `E F_shape`.
    pub source_free: Vec<f64>,
    /// `−Ã_diff[free, Γ] 1`: lift per unit diffusivity and unit obstacle temperature.
    pub lift_diffusion: Vec<f64>,
    /// `−Ã_robin[free, Γ] 1`.
    pub lift_robin: Vec<f64>,

    pub obs_mass: CsrMatrix,
    pub control_coupling: CsrMatrix,
    pub control_mass: CsrMatrix,
    pub control_stiffness: CsrMatrix,
    /// Control-mesh node index of each control unknown.
    pub control_nodes: Vec<usize>,

    pub restriction: Restriction,
}

fn check_diffusivity(mu: f64) -> Result<()> {
    if mu >= 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(CloakError::InvalidParameter(format!(
            "diffusivity must be non-negative and finite, got {mu}"
        )))
    }
}

impl FemOperators {
    pub fn n_z(&self) -> usize {
        self.mass.nrows()
    }

    pub fn n_q(&self) -> usize {
        self.mass_free.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.control_mass.nrows()
    }

    /// `μ A_diff + A_robin` on the unperturbed mesh.
    pub fn affine_state_matrix(&self, diffusivity: f64) -> Result<CsrMatrix> {
        check_diffusivity(diffusivity)?;
        Ok(CsrMatrix::linear_combination(&[
            (diffusivity, &self.diffusion),
            (1.0, &self.robin),
        ]))
    }

    /// `E A(μ) Eᵀ`, assembled directly on the free nodes.
    pub fn restricted_state_matrix(&self, diffusivity: f64) -> Result<CsrMatrix> {
        check_diffusivity(diffusivity)?;
        Ok(CsrMatrix::linear_combination(&[
            (diffusivity, &self.diffusion_free),
            (1.0, &self.robin_free),
        ]))
    }

    /// Lift for a unit obstacle temperature at the given diffusivity.
    pub fn lift_unit(&self, diffusivity: f64) -> Vec<f64> {
        self.lift_diffusion
            .iter()
            .zip(&self.lift_robin)
            .map(|(d, r)| diffusivity * d + r)
            .collect()
    }

    /// Right-hand side of the reference problem, `I F_shape`.
    pub fn reference_load(&self, p: &ScenarioParams) -> Vec<f64> {
        self.source_shape.iter().map(|f| p.intensity * f).collect()
    }

    /// Right-hand side of the state problem without control, `F_o + E F`.
    pub fn state_load(&self, p: &ScenarioParams) -> Vec<f64> {
        let t = p.obstacle_temperature;
        (0..self.n_q())
            .map(|i| {
                t * (p.diffusivity * self.lift_diffusion[i] + self.lift_robin[i])
                    + p.intensity * self.source_free[i]
            })
            .collect()
    }

    /// `β M_u + β_g A_u`.
    pub fn control_block(&self, w: &ControlWeights) -> CsrMatrix {
        CsrMatrix::linear_combination(&[
            (w.beta, &self.control_mass),
            (w.beta_g, &self.control_stiffness),
        ])
    }

    /// `1ᵀ M_obs 1`.
    pub fn observation_measure(&self) -> f64 {
        self.obs_mass.sum()
    }
}

/// Assembles every operator from a mesh pair, the restriction between them
/// and the support of the probing source.
pub fn assemble_operators(
    un: &Mesh,
    ocp: &Mesh,
    restriction: &Restriction,
    source: &SourceDisc,
) -> Result<FemOperators> {
    if restriction.n_unperturbed() != un.node_count() || restriction.n_ocp() != ocp.node_count() {
        return Err(CloakError::DimensionMismatch {
            context: "restriction vs meshes",
            expected: un.node_count(),
            actual: restriction.n_unperturbed(),
        });
    }
    for (region, name) in [(Region::Control, "control"), (Region::Observation, "observation")] {
        if ocp.region_count(region) == 0 {
            return Err(CloakError::EmptyRegion(name));
        }
    }

    let mass = assemble_mass(un)?;
    let diffusion = assemble_stiffness(un)?;
    let robin = assemble_boundary_mass(un, BoundaryTag::OuterRobin);

    let source_shape = assemble_indicator_load(un, |c| source.contains(c));
    if source_shape.iter().all(|&f| f == 0.0) {
        return Err(CloakError::EmptyRegion("source"));
    }

    let free = restriction.free_nodes();
    let gamma = restriction.dirichlet_nodes();
    let m_ocp = assemble_mass(ocp)?;
    let a_ocp = assemble_stiffness(ocp)?;
    let r_ocp = assemble_boundary_mass(ocp, BoundaryTag::OuterRobin);
    let ones = vec![1.0; gamma.len()];
    let negate = |v: Vec<f64>| v.into_iter().map(|x| -x).collect::<Vec<_>>();
    let lift_diffusion = negate(a_ocp.submatrix(free, gamma).mul_vec(&ones));
    let lift_robin = negate(r_ocp.submatrix(free, gamma).mul_vec(&ones));

    let mut is_control = vec![false; ocp.node_count()];
    for (e, t) in ocp.triangles.iter().enumerate() {
        if ocp.regions[e] == Region::Control {
            for &i in t {
                is_control[i] = true;
            }
        }
    }
    let mut control_nodes = Vec::new();
    let mut control_index = vec![usize::MAX; ocp.node_count()];
    for (i, &c) in is_control.iter().enumerate() {
        if c {
            control_index[i] = control_nodes.len();
            control_nodes.push(i);
        }
    }
    let n_u = control_nodes.len();
    let n_q = free.len();

    let mut b_trip = Vec::new();
    let mut mu_trip = Vec::new();
    let mut au_trip = Vec::new();
    let mut obs_trip = Vec::new();
    for (e, t) in ocp.triangles.iter().enumerate() {
        let region = ocp.regions[e];
        if region == Region::Bulk {
            continue;
        }
        let v = ocp.vertices(e);
        let m = element_mass(&v)?;
        match region {
            Region::Control => {
                let k = element_stiffness(&v)?;
                for i in 0..3 {
                    for j in 0..3 {
                        let (ci, cj) = (control_index[t[i]], control_index[t[j]]);
                        mu_trip.push((ci, cj, m[i][j]));
                        au_trip.push((ci, cj, k[i][j]));
                        if let Some(r) = restriction.free_index(t[i]) {
                            b_trip.push((r, cj, m[i][j]));
                        }
                    }
                }
            }
            Region::Observation => {
                let rows: Option<Vec<usize>> = t.iter().map(|&i| restriction.free_index(i)).collect();
                let rows = rows.ok_or_else(|| {
                    CloakError::InvalidLayout(format!(
                        "observation element {e} touches the obstacle boundary"
                    ))
                })?;
                for i in 0..3 {
                    for j in 0..3 {
                        obs_trip.push((rows[i], rows[j], m[i][j]));
                    }
                }
            }
            Region::Bulk => unreachable!(),
        }
    }

    Ok(FemOperators {
        mass,
        diffusion,
        robin,
        source_free: restriction.restrict(&source_shape),
        source_shape,
        mass_free: m_ocp.submatrix(free, free),
        diffusion_free: a_ocp.submatrix(free, free),
        robin_free: r_ocp.submatrix(free, free),
        lift_diffusion,
        lift_robin,
        obs_mass: CsrMatrix::from_triplets(n_q, n_q, &obs_trip),
        control_coupling: CsrMatrix::from_triplets(n_q, n_u, &b_trip),
        control_mass: CsrMatrix::from_triplets(n_u, n_u, &mu_trip),
        control_stiffness: CsrMatrix::from_triplets(n_u, n_u, &au_trip),
        control_nodes,
        restriction: restriction.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT: Element = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

    #[test]
    fn unit_triangle_matrices() {
        let m = element_mass(&UNIT).unwrap();
        let expected = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[i][j] - expected[i][j] / 24.0).abs() < 1e-14);
            }
        }
        let k = element_stiffness(&UNIT).unwrap();
        let expected = [[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - 0.5 * expected[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn degenerate_and_clockwise_triangles_fail() {
        assert!(element_mass(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).is_err());
        assert!(element_stiffness(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).is_err());
    }

    #[test]
    fn edge_mass_integrates_length() {
        let m = edge_mass([0.0, 0.0], [3.0, 4.0]);
        let total: f64 = m.iter().flatten().sum();
        assert!((total - 5.0).abs() < 1e-14);
    }
}
