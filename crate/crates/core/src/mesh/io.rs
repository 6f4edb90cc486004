//! Plain-text mesh format.
//!
//! ```text
//! nodes <N> elements <M> bedges <K>
//! x y                  (N lines)
//! i j k region         (M lines, region: bulk | control | observation)
//! i j tag              (K lines, tag: robin | dirichlet)
//! ```
//!
//! Indices are 0-based, triangles counter-clockwise. Blank lines and lines
//! starting with `#` are ignored. Coordinates are written with the shortest
//! representation that round-trips exactly.

use std::fmt::Write as _;
use std::path::Path;

use super::{BoundaryEdge, BoundaryTag, Mesh, Region};
use crate::error::{CloakError, Result};

fn region_name(r: Region) -> &'static str {
    match r {
        Region::Bulk => "bulk",
        Region::Control => "control",
        Region::Observation => "observation",
    }
}

fn tag_name(t: BoundaryTag) -> &'static str {
    match t {
        BoundaryTag::OuterRobin => "robin",
        BoundaryTag::ObstacleDirichlet => "dirichlet",
    }
}

pub fn write_mesh(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "nodes {} elements {} bedges {}",
        mesh.nodes.len(),
        mesh.triangles.len(),
        mesh.boundary_edges.len()
    );
    for p in &mesh.nodes {
        let _ = writeln!(s, "{} {}", p[0], p[1]);
    }
    for (t, r) in mesh.triangles.iter().zip(&mesh.regions) {
        let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], region_name(*r));
    }
    for e in &mesh.boundary_edges {
        let _ = writeln!(s, "{} {} {}", e.nodes[0], e.nodes[1], tag_name(e.tag));
    }
    s
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_mesh(mesh)).map_err(|e| CloakError::io(path, e))
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CloakError::io(path, e))?;
    parse_mesh(&text, path)
}

/// Parses mesh text; `origin` is only used in error messages.
pub fn parse_mesh(text: &str, origin: &Path) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let err = |line: usize, message: String| CloakError::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let (hline, header) = lines.next().ok_or_else(|| err(1, "empty mesh file".into()))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 6 || h[0] != "nodes" || h[2] != "elements" || h[4] != "bedges" {
        return Err(err(hline, "expected header `nodes <N> elements <M> bedges <K>`".into()));
    }
    let count = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| err(hline, format!("invalid count `{s}`")))
    };
    let (n, m, k) = (count(h[1])?, count(h[3])?, count(h[5])?);

    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| err(text.lines().count() + 1, format!("unexpected end of file, expected {what}")))
    };

    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, l) = next("a node line")?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 2 {
            return Err(err(ln, format!("node line needs 2 fields, found {}", f.len())));
        }
        let mut xy = [0.0; 2];
        for (slot, s) in xy.iter_mut().zip(&f) {
            *slot = s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(ln, format!("invalid coordinate `{s}`")))?;
        }
        nodes.push(xy);
    }

    let index = |ln: usize, s: &str| -> Result<usize> {
        let i = s
            .parse::<usize>()
            .map_err(|_| err(ln, format!("invalid node index `{s}`")))?;
        if i >= n {
            return Err(err(ln, format!("node index {i} out of range (N = {n})")));
        }
        Ok(i)
    };

    let mut triangles = Vec::with_capacity(m);
    let mut regions = Vec::with_capacity(m);
    for _ in 0..m {
        let (ln, l) = next("an element line")?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 4 {
            return Err(err(ln, format!("element line needs 4 fields, found {}", f.len())));
        }
        triangles.push([index(ln, f[0])?, index(ln, f[1])?, index(ln, f[2])?]);
        regions.push(match f[3] {
            "bulk" => Region::Bulk,
            "control" => Region::Control,
            "observation" => Region::Observation,
            other => return Err(err(ln, format!("unknown region `{other}`"))),
        });
    }

    let mut boundary_edges = Vec::with_capacity(k);
    for _ in 0..k {
        let (ln, l) = next("a boundary edge line")?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 {
            return Err(err(ln, format!("boundary edge line needs 3 fields, found {}", f.len())));
        }
        let tag = match f[2] {
            "robin" => BoundaryTag::OuterRobin,
            "dirichlet" => BoundaryTag::ObstacleDirichlet,
            other => return Err(err(ln, format!("unknown boundary tag `{other}`"))),
        };
        boundary_edges.push(BoundaryEdge {
            nodes: [index(ln, f[0])?, index(ln, f[1])?],
            tag,
        });
    }
    if let Some((ln, _)) = lines.next() {
        return Err(err(ln, "trailing content after the declared sections".into()));
    }

    let mesh = Mesh { nodes, triangles, boundary_edges, regions };
    mesh.validate()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: &str = "nodes 4 elements 2 bedges 4
0 0
1 0
1 1
0 1
0 1 2 bulk
0 2 3 observation
0 1 robin
1 2 robin
2 3 robin
3 0 robin
";

    #[test]
    fn hand_written_square() {
        let m = parse_mesh(SQUARE, Path::new("square.mesh")).unwrap();
        assert_eq!(m.node_count(), 4);
        assert_eq!(m.element_count(), 2);
        assert_eq!(write_mesh(&m), SQUARE);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = SQUARE.replace("1 1\n", "1 x\n");
        match parse_mesh(&bad, Path::new("bad")) {
            Err(CloakError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let bad = SQUARE.replace("0 2 3 observation", "0 2 3 cloak");
        match parse_mesh(&bad, Path::new("bad")) {
            Err(CloakError::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_area_triangle_names_the_element() {
        let bad = SQUARE.replace("1 1\n", "2 0\n");
        match parse_mesh(&bad, Path::new("flat")) {
            Err(CloakError::MeshInvariant { element, .. }) => assert_eq!(element, 0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
