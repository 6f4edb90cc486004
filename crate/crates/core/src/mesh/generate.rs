use std::collections::HashMap;

use log::warn;

use super::layout::LayoutSpec;
use super::shapes::Obstacle;
use super::{signed_area, BoundaryEdge, BoundaryTag, Mesh, Point, Region};
use crate::error::{CloakError, Result};

/// The unperturbed mesh of the full square and the control mesh obtained by
/// dropping the elements covered by the obstacle.
#[derive(Debug, Clone)]
pub struct LayoutMeshes {
    pub unperturbed: Mesh,
    pub ocp: Mesh,
}

const SNAP_PASSES: usize = 50;
/// A snapped node may not shrink an incident triangle below this fraction of
/// a background triangle.
const MIN_AREA_FRACTION: f64 = 0.02;

struct Grid {
    n: usize,
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
}

impl Grid {
    fn new(half_width: f64, h: f64) -> Grid {
        let n = ((2.0 * half_width / h) - 1e-9).ceil().max(1.0) as usize;
        let coord = |i: usize| {
            if i == n {
                half_width
            } else {
                -half_width + 2.0 * half_width * i as f64 / n as f64
            }
        };
        let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                nodes.push([coord(i), coord(j)]);
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Grid { n, nodes, triangles }
    }

    /// Side of the square a node lies on, as a bitmask (left, right, bottom, top).
    fn sides(&self, node: usize) -> u8 {
        let (i, j) = (node % (self.n + 1), node / (self.n + 1));
        (i == 0) as u8 | ((i == self.n) as u8) << 1 | ((j == 0) as u8) << 2 | ((j == self.n) as u8) << 3
    }
}

fn bisect(obstacle: &Obstacle, a: Point, b: Point, fa: f64) -> (f64, Point) {
    let at = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let f = obstacle.signed_distance(at(mid));
        if (f < 0.0) == (fa < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    (t, at(t))
}

/// Moves background nodes onto the obstacle boundary so that no edge has
/// endpoints strictly on both sides of it.
fn snap_to_obstacle(grid: &mut Grid, obstacle: &Obstacle, phi: &mut [f64]) {
    let min_area = MIN_AREA_FRACTION * signed_area(
        grid.nodes[grid.triangles[0][0]],
        grid.nodes[grid.triangles[0][1]],
        grid.nodes[grid.triangles[0][2]],
    );
    let mut node_tris: Vec<Vec<usize>> = vec![Vec::new(); grid.nodes.len()];
    let mut edges = Vec::new();
    for (e, t) in grid.triangles.iter().enumerate() {
        for k in 0..3 {
            node_tris[t[k]].push(e);
            let (a, b) = (t[k], t[(k + 1) % 3]);
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges.sort_unstable();
    edges.dedup();

    let acceptable = |nodes: &[Point], node: usize, target: Point| {
        node_tris[node].iter().all(|&e| {
            let mut v = grid.triangles[e].map(|i| nodes[i]);
            for (slot, &i) in v.iter_mut().zip(&grid.triangles[e]) {
                if i == node {
                    *slot = target;
                }
            }
            signed_area(v[0], v[1], v[2]) >= min_area
        })
    };

    for _ in 0..SNAP_PASSES {
        let mut changed = false;
        for &(a, b) in &edges {
            if !(phi[a] * phi[b] < 0.0) {
                continue;
            }
            let (t, x) = bisect(obstacle, grid.nodes[a], grid.nodes[b], phi[a]);
            let order = if t <= 0.5 { [a, b] } else { [b, a] };
            for node in order {
                if grid.sides(node) != 0 || !acceptable(&grid.nodes, node, x) {
                    continue;
                }
                grid.nodes[node] = x;
                phi[node] = 0.0;
                changed = true;
                break;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Builds the unperturbed and perforated meshes for a layout.
///
/// A structured grid of right triangles covers the square; nodes close to the
/// obstacle boundary are moved onto it, elements with a vertex strictly inside
/// the obstacle are removed, and the edges between kept and removed elements
/// become the Dirichlet boundary of the perforated mesh.
pub fn generate_layout(spec: &LayoutSpec) -> Result<LayoutMeshes> {
    spec.validate()?;
    let mut grid = Grid::new(spec.half_width, spec.h);
    let mut phi: Vec<f64> = grid
        .nodes
        .iter()
        .map(|&p| spec.obstacle.signed_distance(p))
        .collect();
    if !spec.obstacle.is_empty() {
        snap_to_obstacle(&mut grid, &spec.obstacle, &mut phi);
    }

    let removed: Vec<bool> = grid
        .triangles
        .iter()
        .map(|t| {
            let f = t.map(|i| phi[i]);
            if f.iter().any(|&v| v < 0.0) {
                true
            } else if f.iter().any(|&v| v > 0.0) {
                false
            } else {
                let c = [
                    (grid.nodes[t[0]][0] + grid.nodes[t[1]][0] + grid.nodes[t[2]][0]) / 3.0,
                    (grid.nodes[t[0]][1] + grid.nodes[t[1]][1] + grid.nodes[t[2]][1]) / 3.0,
                ];
                spec.obstacle.signed_distance(c) < 0.0
            }
        })
        .collect();

    let regions: Vec<Region> = grid
        .triangles
        .iter()
        .zip(&removed)
        .map(|(t, &gone)| {
            if gone {
                return Region::Bulk;
            }
            let c = [
                (grid.nodes[t[0]][0] + grid.nodes[t[1]][0] + grid.nodes[t[2]][0]) / 3.0,
                (grid.nodes[t[0]][1] + grid.nodes[t[1]][1] + grid.nodes[t[2]][1]) / 3.0,
            ];
            if spec.cloak.contains(c, spec.center, &spec.obstacle) {
                Region::Control
            } else if spec.observation.contains(c, spec.center, &spec.obstacle) {
                Region::Observation
            } else {
                Region::Bulk
            }
        })
        .collect();

    let all: Vec<usize> = (0..grid.triangles.len()).collect();
    let unperturbed = Mesh {
        nodes: grid.nodes.clone(),
        triangles: grid.triangles.clone(),
        boundary_edges: boundary_of(&grid, &all),
        regions: regions.clone(),
    };
    unperturbed.validate()?;

    if !removed.iter().any(|&r| r) {
        if !spec.obstacle.is_empty() {
            warn!("obstacle is not resolved by the mesh (h = {}); no elements removed", spec.h);
        }
        return Ok(LayoutMeshes { ocp: unperturbed.clone(), unperturbed });
    }

    let kept: Vec<usize> = all.iter().copied().filter(|&e| !removed[e]).collect();
    let mut used = vec![false; grid.nodes.len()];
    for &e in &kept {
        for &i in &grid.triangles[e] {
            used[i] = true;
        }
    }
    let mut new_index = vec![usize::MAX; grid.nodes.len()];
    let mut nodes = Vec::new();
    for (old, _) in used.iter().enumerate().filter(|(_, &u)| u) {
        new_index[old] = nodes.len();
        nodes.push(grid.nodes[old]);
        if phi[old] < 0.0 {
            return Err(CloakError::MeshStructure(format!(
                "control mesh node {old} lies inside the obstacle"
            )));
        }
    }
    let ocp = Mesh {
        nodes,
        triangles: kept.iter().map(|&e| grid.triangles[e].map(|i| new_index[i])).collect(),
        boundary_edges: boundary_of(&grid, &kept)
            .into_iter()
            .map(|be| BoundaryEdge { nodes: be.nodes.map(|i| new_index[i]), tag: be.tag })
            .collect(),
        regions: kept.iter().map(|&e| regions[e]).collect(),
    };
    ocp.validate()?;
    Ok(LayoutMeshes { unperturbed, ocp })
}

/// Boundary edges of the sub-triangulation `elements` of the grid, oriented as
/// in their owning triangle. Edges on the square are Robin, the rest Dirichlet.
fn boundary_of(grid: &Grid, elements: &[usize]) -> Vec<BoundaryEdge> {
    let mut owner: HashMap<(usize, usize), Option<(usize, usize)>> = HashMap::new();
    for &e in elements {
        let t = grid.triangles[e];
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let key = if a < b { (a, b) } else { (b, a) };
            owner
                .entry(key)
                .and_modify(|o| *o = None)
                .or_insert(Some((a, b)));
        }
    }
    let mut edges: Vec<BoundaryEdge> = owner
        .into_values()
        .flatten()
        .map(|(a, b)| {
            let outer = grid.sides(a) & grid.sides(b) != 0;
            BoundaryEdge {
                nodes: [a, b],
                tag: if outer { BoundaryTag::OuterRobin } else { BoundaryTag::ObstacleDirichlet },
            }
        })
        .collect();
    edges.sort_by_key(|e| (e.tag == BoundaryTag::ObstacleDirichlet, e.nodes));
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_size_matches_target() {
        let g = Grid::new(1.0, 0.1);
        assert_eq!(g.n, 20);
        assert_eq!(g.nodes.len(), 21 * 21);
        assert_eq!(g.nodes[20], [1.0, -1.0]);
    }

    #[test]
    fn empty_obstacle_gives_identical_meshes() {
        let spec = LayoutSpec::annulus().with_obstacle(Obstacle::None).with_h(0.1);
        let m = generate_layout(&spec).unwrap();
        assert_eq!(m.unperturbed, m.ocp);
        assert!(m.ocp.boundary_edges.iter().all(|e| e.tag == BoundaryTag::OuterRobin));
    }

    #[test]
    fn obstacle_boundary_nodes_lie_on_the_circle() {
        let spec = LayoutSpec::annulus().with_h(0.05);
        let m = generate_layout(&spec).unwrap();
        for e in m.ocp.boundary_edges.iter().filter(|e| e.tag == BoundaryTag::ObstacleDirichlet) {
            for &i in &e.nodes {
                let p = m.ocp.nodes[i];
                assert!((p[0].hypot(p[1]) - 0.2).abs() < 1e-12);
            }
        }
    }
}
