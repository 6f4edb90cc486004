use std::collections::{HashMap, HashSet};

use super::{BoundaryTag, Mesh};
use crate::error::{CloakError, Result};
use crate::sparse::CsrMatrix;

/// Selection of the free control-mesh nodes out of the unperturbed nodes.
///
/// Control-mesh nodes touched by a removed element carry the obstacle
/// temperature and are excluded from the free set.
#[derive(Debug, Clone, PartialEq)]
pub struct Restriction {
    n_unperturbed: usize,
    /// Control-mesh node index to unperturbed node index.
    ocp_to_un: Vec<usize>,
    /// Control-mesh node indices of the free nodes, increasing.
    free: Vec<usize>,
    /// Unperturbed index of each free node.
    free_to_un: Vec<usize>,
    /// Control-mesh node indices on the obstacle boundary, increasing.
    dirichlet: Vec<usize>,
    /// Free position of each control-mesh node.
    ocp_to_free: Vec<Option<usize>>,
}

impl Restriction {
    pub fn n_unperturbed(&self) -> usize {
        self.n_unperturbed
    }

    /// Number of free nodes (rows of the selection matrix).
    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn n_ocp(&self) -> usize {
        self.ocp_to_un.len()
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    pub fn free_to_unperturbed(&self) -> &[usize] {
        &self.free_to_un
    }

    pub fn ocp_to_unperturbed(&self) -> &[usize] {
        &self.ocp_to_un
    }

    pub fn dirichlet_nodes(&self) -> &[usize] {
        &self.dirichlet
    }

    pub fn free_index(&self, ocp_node: usize) -> Option<usize> {
        self.ocp_to_free[ocp_node]
    }

    /// `E v`: keeps the free-node entries of an unperturbed vector.
    pub fn restrict(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_unperturbed);
        self.free_to_un.iter().map(|&i| v[i]).collect()
    }

    /// `Eᵀ w`: scatters free-node values into a zero unperturbed vector.
    pub fn extend(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.free.len());
        let mut v = vec![0.0; self.n_unperturbed];
        for (&i, &x) in self.free_to_un.iter().zip(w) {
            v[i] = x;
        }
        v
    }

    pub fn matrix(&self) -> CsrMatrix {
        let trip: Vec<_> = self
            .free_to_un
            .iter()
            .enumerate()
            .map(|(r, &c)| (r, c, 1.0))
            .collect();
        CsrMatrix::from_triplets(self.free.len(), self.n_unperturbed, &trip)
    }
}

fn sorted(t: [usize; 3]) -> [usize; 3] {
    let mut t = t;
    t.sort_unstable();
    t
}

/// Matches the control mesh against the unperturbed mesh it was cut from.
///
/// Nodes are identified by exact coordinates; every control triangle must be
/// a triangle of the unperturbed mesh.
pub fn build_restriction(un: &Mesh, ocp: &Mesh) -> Result<Restriction> {
    let by_coord: HashMap<(u64, u64), usize> = un
        .nodes
        .iter()
        .enumerate()
        .map(|(i, p)| ((p[0].to_bits(), p[1].to_bits()), i))
        .collect();
    if by_coord.len() != un.nodes.len() {
        return Err(CloakError::NotNested("unperturbed mesh has coincident nodes".into()));
    }
    let ocp_to_un = ocp
        .nodes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            by_coord
                .get(&(p[0].to_bits(), p[1].to_bits()))
                .copied()
                .ok_or_else(|| {
                    CloakError::NotNested(format!(
                        "control mesh node {i} at ({}, {}) has no unperturbed counterpart",
                        p[0], p[1]
                    ))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut seen = HashSet::with_capacity(ocp_to_un.len());
    if !ocp_to_un.iter().all(|i| seen.insert(*i)) {
        return Err(CloakError::NotNested("two control mesh nodes coincide".into()));
    }

    let un_tris: HashSet<[usize; 3]> = un.triangles.iter().map(|&t| sorted(t)).collect();
    let mut kept = HashSet::with_capacity(ocp.triangles.len());
    for (e, t) in ocp.triangles.iter().enumerate() {
        let mapped = sorted(t.map(|i| ocp_to_un[i]));
        if !un_tris.contains(&mapped) {
            return Err(CloakError::NotNested(format!(
                "control mesh triangle {e} is not an unperturbed triangle"
            )));
        }
        kept.insert(mapped);
    }

    let mut touches_removed = vec![false; un.nodes.len()];
    for t in &un.triangles {
        if !kept.contains(&sorted(*t)) {
            for &i in t {
                touches_removed[i] = true;
            }
        }
    }

    let mut free = Vec::new();
    let mut dirichlet = Vec::new();
    let mut ocp_to_free = vec![None; ocp.nodes.len()];
    for (i, &u) in ocp_to_un.iter().enumerate() {
        if touches_removed[u] {
            dirichlet.push(i);
        } else {
            ocp_to_free[i] = Some(free.len());
            free.push(i);
        }
    }
    for e in &ocp.boundary_edges {
        if e.tag == BoundaryTag::ObstacleDirichlet && e.nodes.iter().any(|&i| ocp_to_free[i].is_some()) {
            return Err(CloakError::NotNested(format!(
                "obstacle edge ({}, {}) does not border a removed element",
                e.nodes[0], e.nodes[1]
            )));
        }
    }
    let free_to_un = free.iter().map(|&i| ocp_to_un[i]).collect();
    Ok(Restriction {
        n_unperturbed: un.nodes.len(),
        ocp_to_un,
        free,
        free_to_un,
        dirichlet,
        ocp_to_free,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_layout, LayoutSpec, Obstacle};

    #[test]
    fn empty_obstacle_gives_identity() {
        let spec = LayoutSpec::annulus().with_obstacle(Obstacle::None).with_h(0.2);
        let m = generate_layout(&spec).unwrap();
        let r = build_restriction(&m.unperturbed, &m.ocp).unwrap();
        assert!(r.dirichlet_nodes().is_empty());
        assert_eq!(r.n_free(), r.n_unperturbed());
        assert!(r.free_to_unperturbed().iter().enumerate().all(|(a, &b)| a == b));
    }

    #[test]
    fn restriction_selects_ones() {
        let m = generate_layout(&LayoutSpec::annulus().with_h(0.1)).unwrap();
        let r = build_restriction(&m.unperturbed, &m.ocp).unwrap();
        let ones = vec![1.0; r.n_unperturbed()];
        assert_eq!(r.restrict(&ones), vec![1.0; r.n_free()]);
        assert!(r.n_free() < m.ocp.node_count());
        let e = r.matrix();
        let eet = e.mul_vec(&e.transpose_mul_vec(&vec![2.0; r.n_free()]));
        assert_eq!(eet, vec![2.0; r.n_free()]);
    }

    #[test]
    fn foreign_mesh_is_not_nested() {
        let a = generate_layout(&LayoutSpec::annulus().with_h(0.1)).unwrap();
        let b = generate_layout(&LayoutSpec::annulus().with_h(0.125)).unwrap();
        assert!(matches!(
            build_restriction(&a.unperturbed, &b.ocp),
            Err(CloakError::NotNested(_))
        ));
    }
}
