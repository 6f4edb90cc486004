//! POD-Galerkin reduced-order model of the optimality systems.
//!
//! Bases are built by incremental enrichment over training samples, one
//! snapshot block per sample. The reference, the shared state/adjoint and the
//! control spaces each get their own basis. All projected operators are
//! parameter independent; online solves recombine them affinely.

mod archive;
mod pod;
mod reduced;

use log::info;

use crate::error::{CloakError, Result};
use crate::steady::SteadySolution;
use crate::transient::Trajectory;

pub use archive::{load_archive, save_archive, ArchiveManifest};
pub use pod::{pod_enrich, pod_truncate, retained_modes, PodModes};
pub use reduced::{project, solve_rom_steady, PodBasis, ReducedOperators, RomControl, RomStep};

/// Snapshot columns contributed by one training sample.
#[derive(Debug, Clone, Default)]
pub struct SnapshotBlock {
    pub z: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

impl SnapshotBlock {
    pub fn from_steady(s: &SteadySolution) -> SnapshotBlock {
        SnapshotBlock { z: vec![s.z.clone()], q: vec![s.q.clone()], p: vec![s.p.clone()], u: vec![s.u.clone()] }
    }

    /// Every time level of the trajectory plus its steady solution, which the
    /// reduced transient solve needs for the terminal adjoint.
    pub fn from_trajectory(t: &Trajectory) -> SnapshotBlock {
        let mut b = SnapshotBlock::from_steady(&t.steady);
        b.z.extend(t.z.iter().cloned());
        b.q.extend(t.q.iter().cloned());
        b.p.extend(t.p.iter().cloned());
        b.u.extend(t.u.iter().cloned());
        b
    }

    /// Multiplies the adjoint columns by `s`.
    pub fn scale_adjoint(&mut self, s: f64) {
        for c in &mut self.p {
            c.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Weighting of the adjoint snapshots against the state snapshots in the
/// shared `qp` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdjointScaling {
    Fixed(f64),
    /// Each block's adjoint columns scaled by `‖Q‖_F / ‖P‖_F` of that block.
    Balanced,
}

impl Default for AdjointScaling {
    fn default() -> Self {
        AdjointScaling::Fixed(1.0)
    }
}

impl AdjointScaling {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AdjointScaling::Fixed(s) if !(s > 0.0 && s.is_finite()) => {
                Err(CloakError::InvalidParameter(format!("adjoint scale must be positive, got {s}")))
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for AdjointScaling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AdjointScaling::Fixed(s) => write!(f, "{s:e}"),
            AdjointScaling::Balanced => f.write_str("balanced"),
        }
    }
}

impl std::str::FromStr for AdjointScaling {
    type Err = CloakError;
    fn from_str(s: &str) -> Result<AdjointScaling> {
        let v = match s.trim() {
            "balanced" => AdjointScaling::Balanced,
            t => AdjointScaling::Fixed(t.parse().map_err(|_| {
                CloakError::InvalidParameter(format!("expected a number or 'balanced', got '{t}'"))
            })?),
        };
        v.validate()?;
        Ok(v)
    }
}

/// Sequential basis construction: after each sample, the current modes are
/// concatenated with the new block and re-truncated.
#[derive(Debug, Clone)]
pub struct BasisBuilder {
    eps: f64,
    adjoint_scale: Option<f64>,
    mesh_hash: Option<String>,
    dims: Option<(usize, usize, usize)>,
    z: Option<PodModes>,
    qp: Option<PodModes>,
    u: Option<PodModes>,
    samples: usize,
}

impl BasisBuilder {
    pub fn new(eps: f64) -> Result<BasisBuilder> {
        if !(0.0..1.0).contains(&eps) {
            return Err(CloakError::InvalidParameter(format!("POD tolerance must lie in [0, 1), got {eps}")));
        }
        Ok(BasisBuilder {
            eps,
            adjoint_scale: Some(1.0),
            mesh_hash: None,
            dims: None,
            z: None,
            qp: None,
            u: None,
            samples: 0,
        })
    }

    /// Weight of the adjoint snapshots relative to the state snapshots in the
    /// shared basis (1 uses them unscaled).
    pub fn with_adjoint_scale(self, s: f64) -> Result<BasisBuilder> {
        self.with_adjoint_scaling(AdjointScaling::Fixed(s))
    }

    pub fn with_adjoint_scaling(mut self, scaling: AdjointScaling) -> Result<BasisBuilder> {
        scaling.validate()?;
        self.adjoint_scale = match scaling {
            AdjointScaling::Fixed(s) => Some(s),
            AdjointScaling::Balanced => None,
        };
        Ok(self)
    }

    /// Fixed scale of the adjoint snapshots, `None` for balanced blocks.
    pub fn adjoint_scale(&self) -> Option<f64> {
        self.adjoint_scale
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn add(&mut self, mesh_hash: &str, mut block: SnapshotBlock) -> Result<()> {
        match &self.mesh_hash {
            Some(h) if h != mesh_hash => {
                return Err(CloakError::InconsistentSnapshots(format!(
                    "snapshot mesh hash {mesh_hash} differs from {h}"
                )))
            }
            _ => self.mesh_hash = Some(mesh_hash.to_string()),
        }
        let dims = (
            block.z.first().map_or(0, Vec::len),
            block.q.first().map_or(0, Vec::len),
            block.u.first().map_or(0, Vec::len),
        );
        if block.z.is_empty() || block.q.is_empty() || block.p.is_empty() || block.u.is_empty() {
            return Err(CloakError::InconsistentSnapshots("snapshot block has an empty field".into()));
        }
        if *self.dims.get_or_insert(dims) != dims {
            return Err(CloakError::InconsistentSnapshots(format!(
                "snapshot dimensions {dims:?} differ from {:?}",
                self.dims.unwrap()
            )));
        }
        let frobenius = |cols: &[Vec<f64>]| cols.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        let scale = self.adjoint_scale.unwrap_or_else(|| {
            let p = frobenius(&block.p);
            if p > 0.0 {
                frobenius(&block.q) / p
            } else {
                1.0
            }
        });
        if scale != 1.0 {
            block.scale_adjoint(scale);
        }
        let mut qp = block.q;
        qp.extend(block.p);
        let eps = self.eps;
        let step = |current: &Option<PodModes>, n: usize, cols: &[Vec<f64>]| match current {
            None => pod_truncate(n, cols, eps),
            Some(m) => pod_enrich(m, cols, eps),
        };
        let z = step(&self.z, dims.0, &block.z)?;
        let qp = step(&self.qp, dims.1, &qp)?;
        let u = step(&self.u, dims.2, &block.u)?;
        self.z = Some(z);
        self.qp = Some(qp);
        self.u = Some(u);
        self.samples += 1;
        info!(
            "basis after sample {}: n_z={} n_qp={} n_u={}",
            self.samples,
            self.z.as_ref().unwrap().basis.dim(),
            self.qp.as_ref().unwrap().basis.dim(),
            self.u.as_ref().unwrap().basis.dim()
        );
        Ok(())
    }

    pub fn finish(self) -> Result<PodBasis> {
        let (Some(z), Some(qp), Some(u)) = (self.z, self.qp, self.u) else {
            return Err(CloakError::InvalidParameter("no snapshots were added to the basis".into()));
        };
        Ok(PodBasis {
            z: z.basis,
            qp: qp.basis,
            u: u.basis,
            sigma_z: z.singular_values,
            sigma_qp: qp.singular_values,
            sigma_u: u.singular_values,
            eps: self.eps,
        })
    }
}

/// Builds bases from `(mesh hash, block)` pairs in the given order.
pub fn build_bases<I>(blocks: I, eps: f64) -> Result<PodBasis>
where
    I: IntoIterator<Item = (String, SnapshotBlock)>,
{
    let mut b = BasisBuilder::new(eps)?;
    for (hash, block) in blocks {
        b.add(&hash, block)?;
    }
    b.finish()
}

/// Reduced transient solve: the terminal adjoint comes from the nested reduced
/// steady solve, and every full-order query is replaced by its reduced
/// counterpart. Returns the trajectory in reduced coordinates.
pub fn solve_rom_transient(
    rom: &ReducedOperators,
    params: &crate::params::ScenarioParams,
    weights: &crate::params::ControlWeights,
    grid: &crate::transient::TimeGrid,
    options: &crate::transient::SolverOptions,
) -> Result<Trajectory> {
    crate::transient::solve_transient_ocp(rom, params, weights, grid, options)
}

impl ReducedOperators {
    /// Lifts every time level of a reduced trajectory to full fields.
    pub fn lift_trajectory(&self, t: &Trajectory) -> Trajectory {
        let lift = |b: &crate::dense::Basis, s: &[Vec<f64>]| s.iter().map(|c| b.lift(c)).collect();
        Trajectory {
            grid: t.grid,
            z: lift(&self.basis.z, &t.z),
            q: lift(&self.basis.qp, &t.q),
            p: lift(&self.basis.qp, &t.p),
            u: lift(&self.basis.u, &t.u),
            cost: t.cost,
            log: t.log.clone(),
            converged: t.converged,
            steady: self.lift_steady(&t.steady),
        }
    }
}
