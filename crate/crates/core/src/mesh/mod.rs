//! Triangular meshes of the square domain, layout descriptions and the
//! restriction between the unperturbed and the control (perforated) mesh.

mod generate;
mod io;
mod layout;
mod restriction;
mod shapes;

use std::collections::HashMap;

use crate::error::{CloakError, Result};

pub use generate::{generate_layout, LayoutMeshes};
pub use io::{load_mesh, parse_mesh, save_mesh, write_mesh};
pub use layout::LayoutSpec;
pub use restriction::{build_restriction, Restriction};
pub use shapes::{load_polygon, Cloak, Obstacle, Observation, SourceDisc};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    OuterRobin,
    ObstacleDirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Bulk,
    Control,
    Observation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// Conforming P1 triangulation with tagged boundary edges and per-element
/// region labels. Triangles are counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub regions: Vec<Region>,
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self, e: usize) -> [Point; 3] {
        let t = self.triangles[e];
        [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]]
    }

    pub fn area(&self, e: usize) -> f64 {
        let [a, b, c] = self.vertices(e);
        signed_area(a, b, c)
    }

    pub fn centroid(&self, e: usize) -> Point {
        let [a, b, c] = self.vertices(e);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.element_count()).map(|e| self.area(e)).sum()
    }

    pub fn region_count(&self, region: Region) -> usize {
        self.regions.iter().filter(|&&r| r == region).count()
    }

    /// Sum of the lengths of boundary edges with the given tag.
    pub fn boundary_length(&self, tag: BoundaryTag) -> f64 {
        self.boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .map(|e| {
                let (a, b) = (self.nodes[e.nodes[0]], self.nodes[e.nodes[1]]);
                (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .sum()
    }

    /// Number of triangles incident to every edge.
    pub(crate) fn edge_incidence(&self) -> HashMap<(usize, usize), usize> {
        let mut count = HashMap::with_capacity(self.triangles.len() * 2);
        for t in &self.triangles {
            for k in 0..3 {
                *count.entry(edge_key(t[k], t[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        count
    }

    /// Checks the structural invariants: index bounds, strictly positive
    /// orientation, one region label per triangle, and that the tagged edges
    /// are exactly the edges owned by a single triangle.
    pub fn validate(&self) -> Result<()> {
        if self.regions.len() != self.triangles.len() {
            return Err(CloakError::MeshStructure(format!(
                "{} region labels for {} triangles",
                self.regions.len(),
                self.triangles.len()
            )));
        }
        let n = self.nodes.len();
        for (e, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= n) {
                return Err(CloakError::MeshInvariant {
                    element: e,
                    message: format!("node index out of range (node count {n})"),
                });
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(CloakError::MeshInvariant {
                    element: e,
                    message: "repeated vertex".into(),
                });
            }
            let area = self.area(e);
            if !(area > 0.0) {
                return Err(CloakError::MeshInvariant {
                    element: e,
                    message: format!("non-positive signed area {area:e}"),
                });
            }
        }
        if self.nodes.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(CloakError::MeshStructure("non-finite node coordinate".into()));
        }

        let incidence = self.edge_incidence();
        if let Some((edge, c)) = incidence.iter().find(|(_, &c)| c > 2) {
            return Err(CloakError::MeshStructure(format!(
                "edge {edge:?} shared by {c} triangles"
            )));
        }
        let mut tagged = HashMap::with_capacity(self.boundary_edges.len());
        for be in &self.boundary_edges {
            let [a, b] = be.nodes;
            if a >= n || b >= n {
                return Err(CloakError::MeshStructure(format!(
                    "boundary edge ({a}, {b}) references a missing node"
                )));
            }
            let key = edge_key(a, b);
            if tagged.insert(key, be.tag).is_some() {
                return Err(CloakError::MeshStructure(format!(
                    "boundary edge ({a}, {b}) listed twice"
                )));
            }
            match incidence.get(&key) {
                Some(1) => {}
                other => {
                    return Err(CloakError::MeshStructure(format!(
                        "boundary edge ({a}, {b}) belongs to {} triangles",
                        other.copied().unwrap_or(0)
                    )))
                }
            }
        }
        let untagged = incidence
            .iter()
            .filter(|(k, &c)| c == 1 && !tagged.contains_key(k))
            .count();
        if untagged > 0 {
            return Err(CloakError::MeshStructure(format!(
                "{untagged} boundary edges carry no tag"
            )));
        }
        Ok(())
    }

    /// Stable content hash (coordinates by bit pattern, connectivity, tags).
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.nodes.len() as u64).to_le_bytes());
        for p in &self.nodes {
            h.update(p[0].to_bits().to_le_bytes());
            h.update(p[1].to_bits().to_le_bytes());
        }
        h.update((self.triangles.len() as u64).to_le_bytes());
        for (t, r) in self.triangles.iter().zip(&self.regions) {
            for &i in t {
                h.update((i as u64).to_le_bytes());
            }
            h.update([*r as u8]);
        }
        for e in &self.boundary_edges {
            h.update((e.nodes[0] as u64).to_le_bytes());
            h.update((e.nodes[1] as u64).to_le_bytes());
            h.update([e.tag as u8]);
        }
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Mesh {
        Mesh {
            nodes: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            boundary_edges: (0..4)
                .map(|i| BoundaryEdge {
                    nodes: [i, (i + 1) % 4],
                    tag: BoundaryTag::OuterRobin,
                })
                .collect(),
            regions: vec![Region::Bulk, Region::Control],
        }
    }

    #[test]
    fn two_triangle_square_is_valid() {
        let m = square();
        m.validate().unwrap();
        assert_eq!(m.total_area(), 1.0);
        assert_eq!(m.boundary_length(BoundaryTag::OuterRobin), 4.0);
    }

    #[test]
    fn clockwise_triangle_is_rejected() {
        let mut m = square();
        m.triangles[1] = [0, 3, 2];
        match m.validate() {
            Err(CloakError::MeshInvariant { element, .. }) => assert_eq!(element, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn interior_edge_cannot_be_tagged() {
        let mut m = square();
        m.boundary_edges.push(BoundaryEdge {
            nodes: [0, 2],
            tag: BoundaryTag::OuterRobin,
        });
        assert!(m.validate().is_err());
        let mut m = square();
        m.boundary_edges.pop();
        assert!(m.validate().is_err());
    }
}
