//! Plain-text archive of a reduced model: a manifest plus one file per basis
//! or projected operator, each with a sha256 checksum in the manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::reduced::{PodBasis, ReducedOperators};
use crate::dense::{Basis, DenseMatrix};
use crate::error::{CloakError, Result};

const VERSION: u32 = 1;
const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveManifest {
    pub version: u32,
    pub eps: f64,
    /// `(n_z, n_qp, n_u)`.
    pub dims: (usize, usize, usize),
    /// `(N_z, N_q, N_u)`.
    pub full_dims: (usize, usize, usize),
    pub mesh_hash: String,
    /// Free-form `key = value` metadata (config hash, seed, ...).
    pub metadata: Vec<(String, String)>,
    pub checksums: Vec<(String, String)>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn matrix_text(m: &DenseMatrix) -> String {
    let mut s = format!("{} {}\n", m.rows(), m.cols());
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

fn vector_matrix(v: &[f64]) -> DenseMatrix {
    DenseMatrix::from_row_major(v.len(), 1, v.to_vec())
}

fn basis_matrix(b: &Basis) -> DenseMatrix {
    DenseMatrix::from_fn(b.n_rows(), b.dim(), |i, j| b.columns()[j][i])
}

fn parse_matrix(name: &str, text: &str) -> Result<DenseMatrix> {
    let bad = |m: String| CloakError::Archive(format!("{name}: {m}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(format!("bad header '{header}'"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(bad(format!("bad header '{header}'")));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        for t in line.split_whitespace() {
            data.push(t.parse::<f64>().map_err(|_| bad(format!("line {}: bad number '{t}'", i + 2)))?);
        }
    }
    if data.len() != rows * cols {
        return Err(bad(format!("expected {} values, found {}", rows * cols, data.len())));
    }
    Ok(DenseMatrix::from_row_major(rows, cols, data))
}

fn entries(rom: &ReducedOperators) -> Vec<(&'static str, DenseMatrix)> {
    let b = &rom.basis;
    vec![
        ("basis_z", basis_matrix(&b.z)),
        ("basis_qp", basis_matrix(&b.qp)),
        ("basis_u", basis_matrix(&b.u)),
        ("sigma_z", vector_matrix(&b.sigma_z)),
        ("sigma_qp", vector_matrix(&b.sigma_qp)),
        ("sigma_u", vector_matrix(&b.sigma_u)),
        ("mass_z", rom.mass_z.clone()),
        ("diffusion_z", rom.diffusion_z.clone()),
        ("robin_z", rom.robin_z.clone()),
        ("source_z", vector_matrix(&rom.source_z)),
        ("mass_q", rom.mass_q.clone()),
        ("diffusion_q", rom.diffusion_q.clone()),
        ("robin_q", rom.robin_q.clone()),
        ("source_q", vector_matrix(&rom.source_q)),
        ("lift_diffusion_q", vector_matrix(&rom.lift_diffusion_q)),
        ("lift_robin_q", vector_matrix(&rom.lift_robin_q)),
        ("coupling", rom.coupling.clone()),
        ("obs_qq", rom.obs_qq.clone()),
        ("obs_qz", rom.obs_qz.clone()),
        ("obs_zz", rom.obs_zz.clone()),
        ("control_mass", rom.control_mass.clone()),
        ("control_stiffness", rom.control_stiffness.clone()),
    ]
}

/// Writes the reduced model to `dir` (created if missing).
pub fn save_archive(
    dir: &Path,
    rom: &ReducedOperators,
    full_dims: (usize, usize, usize),
    mesh_hash: &str,
    metadata: &[(String, String)],
) -> Result<ArchiveManifest> {
    fs::create_dir_all(dir).map_err(|e| CloakError::io(dir, e))?;
    let mut checksums = Vec::new();
    for (name, m) in entries(rom) {
        let text = matrix_text(&m);
        let path = dir.join(format!("{name}.txt"));
        fs::write(&path, &text).map_err(|e| CloakError::io(&path, e))?;
        checksums.push((name.to_string(), sha256_hex(text.as_bytes())));
    }
    let manifest = ArchiveManifest {
        version: VERSION,
        eps: rom.basis.eps,
        dims: rom.basis.dims(),
        full_dims,
        mesh_hash: mesh_hash.to_string(),
        metadata: metadata.to_vec(),
        checksums,
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest.to_text()).map_err(|e| CloakError::io(&path, e))?;
    Ok(manifest)
}

impl ArchiveManifest {
    fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "eps_pod = {:e}", self.eps);
        let _ = writeln!(s, "dims = {} {} {}", self.dims.0, self.dims.1, self.dims.2);
        let _ = writeln!(s, "full_dims = {} {} {}", self.full_dims.0, self.full_dims.1, self.full_dims.2);
        let _ = writeln!(s, "mesh_hash = {}", self.mesh_hash);
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "meta.{k} = {v}");
        }
        for (k, v) in &self.checksums {
            let _ = writeln!(s, "sha256.{k} = {v}");
        }
        s
    }

    fn parse(text: &str) -> Result<ArchiveManifest> {
        let bad = |m: String| CloakError::Archive(format!("{MANIFEST}: {m}"));
        let mut m = ArchiveManifest {
            version: 0,
            eps: f64::NAN,
            dims: (0, 0, 0),
            full_dims: (0, 0, 0),
            mesh_hash: String::new(),
            metadata: Vec::new(),
            checksums: Vec::new(),
        };
        let triple = |v: &str| -> Result<(usize, usize, usize)> {
            let n: Vec<usize> = v.split_whitespace().filter_map(|t| t.parse().ok()).collect();
            match n[..] {
                [a, b, c] => Ok((a, b, c)),
                _ => Err(bad(format!("expected three integers, got '{v}'"))),
            }
        };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("malformed line '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "version" => m.version = v.parse().map_err(|_| bad(format!("bad version '{v}'")))?,
                "eps_pod" => m.eps = v.parse().map_err(|_| bad(format!("bad eps_pod '{v}'")))?,
                "dims" => m.dims = triple(v)?,
                "full_dims" => m.full_dims = triple(v)?,
                "mesh_hash" => m.mesh_hash = v.to_string(),
                _ => {
                    if let Some(name) = k.strip_prefix("sha256.") {
                        m.checksums.push((name.to_string(), v.to_string()));
                    } else if let Some(name) = k.strip_prefix("meta.") {
                        m.metadata.push((name.to_string(), v.to_string()));
                    } else {
                        return Err(bad(format!("unknown key '{k}'")));
                    }
                }
            }
        }
        if m.version != VERSION {
            return Err(bad(format!("unsupported archive version {}", m.version)));
        }
        Ok(m)
    }

    pub fn metadata(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn to_basis(m: &DenseMatrix) -> Basis {
    Basis::new(m.rows(), (0..m.cols()).map(|j| (0..m.rows()).map(|i| m.get(i, j)).collect()).collect())
}

fn to_vector(m: &DenseMatrix) -> Vec<f64> {
    m.data().to_vec()
}

/// Reads an archive written by [`save_archive`], verifying every checksum.
/// `expected_mesh_hash`, when given, must match the stored one.
pub fn load_archive(dir: &Path, expected_mesh_hash: Option<&str>) -> Result<(ReducedOperators, ArchiveManifest)> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Err(CloakError::Archive(format!(
            "no reduced-model archive at {} (run the offline phase first)",
            dir.display()
        )));
    }
    let text = fs::read_to_string(&path).map_err(|e| CloakError::io(&path, e))?;
    let manifest = ArchiveManifest::parse(&text)?;
    if let Some(h) = expected_mesh_hash {
        if h != manifest.mesh_hash {
            return Err(CloakError::Archive(format!(
                "archive was built on mesh {} but the current mesh is {h}",
                manifest.mesh_hash
            )));
        }
    }
    let read = |name: &str| -> Result<DenseMatrix> {
        let path = dir.join(format!("{name}.txt"));
        let text = fs::read_to_string(&path).map_err(|e| CloakError::io(&path, e))?;
        let expected = manifest
            .checksums
            .iter()
            .find(|(k, _)| k == name)
            .ok_or_else(|| CloakError::Archive(format!("manifest has no checksum for {name}")))?;
        if sha256_hex(text.as_bytes()) != expected.1 {
            return Err(CloakError::Archive(format!("checksum mismatch for {name}")));
        }
        parse_matrix(name, &text)
    };
    let basis = PodBasis {
        z: to_basis(&read("basis_z")?),
        qp: to_basis(&read("basis_qp")?),
        u: to_basis(&read("basis_u")?),
        sigma_z: to_vector(&read("sigma_z")?),
        sigma_qp: to_vector(&read("sigma_qp")?),
        sigma_u: to_vector(&read("sigma_u")?),
        eps: manifest.eps,
    };
    if basis.dims() != manifest.dims {
        return Err(CloakError::Archive(format!(
            "basis dimensions {:?} disagree with manifest {:?}",
            basis.dims(),
            manifest.dims
        )));
    }
    let rom = ReducedOperators {
        mass_z: read("mass_z")?,
        diffusion_z: read("diffusion_z")?,
        robin_z: read("robin_z")?,
        source_z: to_vector(&read("source_z")?),
        mass_q: read("mass_q")?,
        diffusion_q: read("diffusion_q")?,
        robin_q: read("robin_q")?,
        source_q: to_vector(&read("source_q")?),
        lift_diffusion_q: to_vector(&read("lift_diffusion_q")?),
        lift_robin_q: to_vector(&read("lift_robin_q")?),
        coupling: read("coupling")?,
        obs_qq: read("obs_qq")?,
        obs_qz: read("obs_qz")?,
        obs_zz: read("obs_zz")?,
        control_mass: read("control_mass")?,
        control_stiffness: read("control_stiffness")?,
        basis,
    };
    Ok((rom, manifest))
}
