//! CSV and legacy VTK export of nodal fields on the perforated mesh.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::ExportFormat;
use crate::error::{CloakError, Result};
use crate::fem::FemOperators;
use crate::mesh::Mesh;
use crate::steady::SteadySolution;
use crate::transient::{IterationRecord, Trajectory};

/// Named fields with one value per mesh node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalFields {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl NodalFields {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i].as_slice())
    }
}

/// Reference, state, adjoint, control and tracking error on the nodes of the
/// perforated mesh. Obstacle-boundary nodes carry `T_o` for the state and 0
/// for the adjoint; the control is zero outside the control region.
pub fn solution_fields(
    ops: &FemOperators,
    obstacle_temperature: f64,
    z: &[f64],
    q: &[f64],
    p: &[f64],
    u: &[f64],
) -> NodalFields {
    let r = &ops.restriction;
    let n = r.n_ocp();
    let zo: Vec<f64> = r.ocp_to_unperturbed().iter().map(|&i| z[i]).collect();
    let free = |w: &[f64], boundary: f64| -> Vec<f64> {
        (0..n).map(|i| r.free_index(i).map_or(boundary, |f| w[f])).collect()
    };
    let qo = free(q, obstacle_temperature);
    let po = free(p, 0.0);
    let mut uo = vec![0.0; n];
    for (k, &node) in ops.control_nodes.iter().enumerate() {
        uo[node] = u[k];
    }
    let e = qo.iter().zip(&zo).map(|(a, b)| a - b).collect();
    NodalFields {
        names: ["z", "q", "p", "u", "q_minus_z"].iter().map(|s| s.to_string()).collect(),
        values: vec![zo, qo, po, uo, e],
    }
}

pub fn steady_fields(ops: &FemOperators, obstacle_temperature: f64, s: &SteadySolution) -> NodalFields {
    solution_fields(ops, obstacle_temperature, &s.z, &s.q, &s.p, &s.u)
}

fn check(mesh: &Mesh, f: &NodalFields) -> Result<()> {
    for v in &f.values {
        if v.len() != mesh.node_count() {
            return Err(CloakError::DimensionMismatch {
                context: "exported field",
                expected: mesh.node_count(),
                actual: v.len(),
            });
        }
    }
    Ok(())
}

fn write(path: &Path, text: String) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CloakError::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| CloakError::io(path, e))
}

/// `node,x,y,<fields...>`, values at 17 significant digits.
pub fn write_csv(path: &Path, mesh: &Mesh, f: &NodalFields) -> Result<()> {
    check(mesh, f)?;
    let mut s = String::from("node,x,y");
    for n in &f.names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for (i, [x, y]) in mesh.nodes.iter().enumerate() {
        let _ = write!(s, "{i},{x:.16e},{y:.16e}");
        for v in &f.values {
            let _ = write!(s, ",{:.16e}", v[i]);
        }
        s.push('\n');
    }
    write(path, s)
}

/// Reads a file written by [`write_csv`]: node coordinates and fields.
pub fn read_csv(path: &Path) -> Result<(Vec<[f64; 2]>, NodalFields)> {
    let text = fs::read_to_string(path).map_err(|e| CloakError::io(path, e))?;
    let bad = |line: usize, m: String| CloakError::Parse { path: path.to_path_buf(), line, message: m };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad(1, "empty file".into()))?.split(',').collect();
    if header.len() < 3 || header[..3] != ["node", "x", "y"] {
        return Err(bad(1, "header must start with node,x,y".into()));
    }
    let names: Vec<String> = header[3..].iter().map(|s| s.to_string()).collect();
    let mut coords = Vec::new();
    let mut values = vec![Vec::new(); names.len()];
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != header.len() {
            return Err(bad(i + 2, format!("expected {} columns, found {}", header.len(), cols.len())));
        }
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad(i + 2, format!("bad number '{t}'")));
        coords.push([num(cols[1])?, num(cols[2])?]);
        for (v, t) in values.iter_mut().zip(&cols[3..]) {
            v.push(num(t)?);
        }
    }
    Ok((coords, NodalFields { names, values }))
}

/// Legacy ASCII VTK unstructured grid with point data.
pub fn write_vtk(path: &Path, mesh: &Mesh, f: &NodalFields, title: &str) -> Result<()> {
    check(mesh, f)?;
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{}", title.replace('\n', " "));
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.node_count());
    for [x, y] in &mesh.nodes {
        let _ = writeln!(s, "{x:.16e} {y:.16e} 0");
    }
    let m = mesh.element_count();
    let _ = writeln!(s, "CELLS {m} {}", 4 * m);
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {m}");
    for _ in 0..m {
        let _ = writeln!(s, "5");
    }
    let _ = writeln!(s, "POINT_DATA {}", mesh.node_count());
    for (name, v) in f.names.iter().zip(&f.values) {
        let _ = writeln!(s, "SCALARS {name} double 1");
        let _ = writeln!(s, "LOOKUP_TABLE default");
        for x in v {
            let _ = writeln!(s, "{x:.16e}");
        }
    }
    write(path, s)
}

/// Writes `<stem>.csv` and/or `<stem>.vtk` in `dir`.
pub fn export_fields(dir: &Path, stem: &str, mesh: &Mesh, f: &NodalFields, format: ExportFormat) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if format.csv() {
        let p = dir.join(format!("{stem}.csv"));
        write_csv(&p, mesh, f)?;
        out.push(p);
    }
    if format.vtk() {
        let p = dir.join(format!("{stem}.vtk"));
        write_vtk(&p, mesh, f, stem)?;
        out.push(p);
    }
    Ok(out)
}

/// One file set per requested time index in `[0, N]` (others are skipped),
/// plus `timeline.csv`.
pub fn export_trajectory(
    dir: &Path,
    mesh: &Mesh,
    ops: &FemOperators,
    obstacle_temperature: f64,
    t: &Trajectory,
    frames: &[usize],
    format: ExportFormat,
) -> Result<Vec<PathBuf>> {
    let mut wanted: Vec<usize> = frames.iter().copied().filter(|&k| k <= t.grid.steps).collect();
    wanted.sort_unstable();
    wanted.dedup();
    let mut out = Vec::new();
    for k in wanted {
        let f = solution_fields(ops, obstacle_temperature, &t.z[k], &t.q[k], &t.p[k], &t.u[k]);
        out.extend(export_fields(dir, &format!("frame_{k:04}"), mesh, &f, format)?);
    }
    let p = dir.join("timeline.csv");
    write_timeline(&p, &t.log)?;
    out.push(p);
    Ok(out)
}

/// Iteration log: `iter,objective,cost,grad_norm,step,backtracks`.
pub fn write_timeline(path: &Path, log: &[IterationRecord]) -> Result<()> {
    let mut s = String::from("iter,objective,cost,grad_norm,step,backtracks\n");
    for r in log {
        let _ = writeln!(
            s,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.iter, r.objective, r.cost, r.grad_norm, r.step, r.backtracks
        );
    }
    write(path, s)
}
