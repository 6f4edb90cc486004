//! Flat `key = value` run configuration with dotted section keys.
//!
//! Unspecified keys take their defaults. `layout.kind` selects the base
//! layout before the remaining geometry keys are applied, so the file order
//! does not matter. The hash is computed from the fully resolved,
//! key-sorted configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CloakError, Result};
use crate::mesh::{load_polygon, Cloak, LayoutSpec, Obstacle, Observation};
use crate::params::{ControlWeights, ParamBox, ScenarioParams};
use crate::rom::AdjointScaling;
use crate::transient::{DirectionRule, SolverOptions, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Vtk,
    Both,
}

impl ExportFormat {
    pub fn parse(s: &str) -> Result<ExportFormat> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "vtk" => Ok(ExportFormat::Vtk),
            "both" => Ok(ExportFormat::Both),
            _ => Err(CloakError::Config(format!("output.format: expected csv, vtk or both, got '{s}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Vtk => "vtk",
            ExportFormat::Both => "both",
        }
    }

    pub fn csv(&self) -> bool {
        matches!(self, ExportFormat::Csv | ExportFormat::Both)
    }

    pub fn vtk(&self) -> bool {
        matches!(self, ExportFormat::Vtk | ExportFormat::Both)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub layout: LayoutSpec,
    /// Polygon file the obstacle was read from, kept for the resolved text.
    pub obstacle_file: Option<PathBuf>,
    pub weights: ControlWeights,
    pub grid: TimeGrid,
    pub params: ScenarioParams,
    pub param_box: ParamBox,
    pub eps_pod: f64,
    pub n_s: usize,
    pub adjoint_scale: AdjointScaling,
    pub seed: u64,
    pub solver: SolverOptions,
    pub output_dir: PathBuf,
    pub format: ExportFormat,
    /// Time indices exported for transient runs.
    pub frames: Vec<usize>,
    /// `steady` or `transient` regime of the offline/online/sweep commands.
    pub transient: bool,
    /// Values of β scanned by the sweep command; empty means a parameter
    /// sweep over LHS samples instead.
    pub sweep_beta: Vec<f64>,
    pub sweep_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            layout: LayoutSpec::annulus(),
            obstacle_file: None,
            weights: ControlWeights::default(),
            grid: TimeGrid::default(),
            params: ScenarioParams::new(3.5, 1e4, 0.0),
            param_box: ParamBox::default(),
            eps_pod: 1e-7,
            n_s: 50,
            adjoint_scale: AdjointScaling::default(),
            seed: 0,
            solver: SolverOptions::default(),
            output_dir: PathBuf::from("out"),
            format: ExportFormat::Csv,
            frames: vec![0, 5, 25, 100],
            transient: false,
            sweep_beta: Vec::new(),
            sweep_samples: 5,
        }
    }
}

fn err(key: &str, msg: impl std::fmt::Display) -> CloakError {
    CloakError::Config(format!("{key}: {msg}"))
}

fn float(key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| err(key, format!("expected a number, got '{v}'")))
}

/// List items separated by whitespace or commas.
fn items(v: &str) -> impl Iterator<Item = &str> {
    v.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty())
}

fn floats<const N: usize>(key: &str, v: &str) -> Result<[f64; N]> {
    let xs: Vec<f64> = items(v).map(|t| float(key, t)).collect::<Result<_>>()?;
    xs.try_into().map_err(|_| err(key, format!("expected {N} numbers, got '{v}'")))
}

fn uint(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| err(key, format!("expected a non-negative integer, got '{v}'")))
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
}

impl RunConfig {
    /// Parses configuration text; relative polygon paths resolve against
    /// `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CloakError::Config(format!("line {}: expected 'key = value', got '{line}'", i + 1)))?;
            let k = k.trim().to_string();
            if entries.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(CloakError::Config(format!("line {}: key '{k}' given twice", i + 1)));
            }
        }
        let mut c = RunConfig::default();
        if let Some(kind) = entries.remove("layout.kind") {
            c.layout = match kind.as_str() {
                "annulus" => LayoutSpec::annulus(),
                "disc_ring" => LayoutSpec::disc_ring(),
                "polygon_offset" => {
                    let poly = Obstacle::polygon(vec![[-0.2, -0.15], [0.2, -0.15], [0.2, 0.15], [-0.2, 0.15]])?;
                    LayoutSpec::polygon_offset(poly, 0.1)
                }
                _ => return Err(err("layout.kind", format!("expected annulus, disc_ring or polygon_offset, got '{kind}'"))),
            };
        }
        // kinds before their parameters
        for kind_key in ["obstacle.kind", "cloak.kind", "observation.kind"] {
            if let Some(v) = entries.remove(kind_key) {
                c.apply_kind(kind_key, &v, &entries, base_dir)?;
            }
        }
        for (k, v) in &entries {
            c.apply(k, v, base_dir)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CloakError::io(path, e))?;
        RunConfig::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn apply_kind(&mut self, key: &str, v: &str, entries: &BTreeMap<String, String>, base: &Path) -> Result<()> {
        let l = &mut self.layout;
        match (key, v) {
            ("obstacle.kind", "none") => l.obstacle = Obstacle::None,
            ("obstacle.kind", "circle") => {
                if !matches!(l.obstacle, Obstacle::Circle { .. }) {
                    l.obstacle = Obstacle::Circle { center: l.center, radius: 0.2 };
                }
            }
            ("obstacle.kind", "polygon") => {
                let file = entries
                    .get("obstacle.file")
                    .ok_or_else(|| err("obstacle.file", "required when obstacle.kind = polygon"))?;
                let path = base.join(file);
                l.obstacle = load_polygon(&path)?;
                self.obstacle_file = Some(path);
            }
            ("cloak.kind", "annulus") => {
                if !matches!(l.cloak, Cloak::Annulus { .. }) {
                    l.cloak = Cloak::Annulus { r_inner: 0.25, r_outer: 0.35 };
                }
            }
            ("cloak.kind", "disc_ring") => {
                if !matches!(l.cloak, Cloak::DiscRing { .. }) {
                    l.cloak = Cloak::DiscRing { count: 8, ring_radius: 0.3, disc_radius: 0.06 };
                }
            }
            ("cloak.kind", "polygon_offset") => {
                if !matches!(l.cloak, Cloak::PolygonOffset { .. }) {
                    l.cloak = Cloak::PolygonOffset { thickness: 0.1 };
                }
            }
            ("observation.kind", "annulus") => {
                if !matches!(l.observation, Observation::Annulus { .. }) {
                    l.observation = Observation::Annulus { r_inner: 0.4, r_outer: 0.6 };
                }
            }
            ("observation.kind", "complement") => l.observation = Observation::ComplementOfCloak,
            _ => return Err(err(key, format!("unknown kind '{v}'"))),
        }
        Ok(())
    }

    fn apply(&mut self, k: &str, v: &str, _base: &Path) -> Result<()> {
        let l = &mut self.layout;
        let wrong = |what: &str| err(k, format!("only valid for {what}"));
        match k {
            "layout.half_width" => l.half_width = float(k, v)?,
            "layout.h" => l.h = float(k, v)?,
            "layout.center" => l.center = floats::<2>(k, v)?,
            "obstacle.file" => {}
            "obstacle.center" => match &mut l.obstacle {
                Obstacle::Circle { center, .. } => *center = floats::<2>(k, v)?,
                _ => return Err(wrong("circular obstacles")),
            },
            "obstacle.radius" => match &mut l.obstacle {
                Obstacle::Circle { radius, .. } => *radius = float(k, v)?,
                _ => return Err(wrong("circular obstacles")),
            },
            "cloak.r_inner" | "cloak.r_outer" => match &mut l.cloak {
                Cloak::Annulus { r_inner, r_outer } => {
                    *(if k == "cloak.r_inner" { r_inner } else { r_outer }) = float(k, v)?
                }
                _ => return Err(wrong("annular cloaks")),
            },
            "cloak.count" | "cloak.ring_radius" | "cloak.disc_radius" => match &mut l.cloak {
                Cloak::DiscRing { count, ring_radius, disc_radius } => match k {
                    "cloak.count" => *count = uint(k, v)?,
                    "cloak.ring_radius" => *ring_radius = float(k, v)?,
                    _ => *disc_radius = float(k, v)?,
                },
                _ => return Err(wrong("disc-ring cloaks")),
            },
            "cloak.thickness" => match &mut l.cloak {
                Cloak::PolygonOffset { thickness } => *thickness = float(k, v)?,
                _ => return Err(wrong("polygon-offset cloaks")),
            },
            "observation.r_inner" | "observation.r_outer" => match &mut l.observation {
                Observation::Annulus { r_inner, r_outer } => {
                    *(if k == "observation.r_inner" { r_inner } else { r_outer }) = float(k, v)?
                }
                _ => return Err(wrong("annular observation regions")),
            },
            "source.center" => l.source.center = floats::<2>(k, v)?,
            "source.radius" => l.source.radius = float(k, v)?,
            "weights.beta" => self.weights.beta = float(k, v)?,
            "weights.beta_g" => self.weights.beta_g = float(k, v)?,
            "time.horizon" => self.grid.horizon = float(k, v)?,
            "time.steps" => self.grid.steps = uint(k, v)?,
            "params" => self.params = ScenarioParams::from_array(floats::<3>(k, v)?),
            "params.diffusivity" => self.params.diffusivity = float(k, v)?,
            "params.intensity" => self.params.intensity = float(k, v)?,
            "params.obstacle_temperature" => self.params.obstacle_temperature = float(k, v)?,
            "box.lower" => self.param_box.lower = floats::<3>(k, v)?,
            "box.upper" => self.param_box.upper = floats::<3>(k, v)?,
            "rom.eps_pod" => self.eps_pod = float(k, v)?,
            "rom.n_s" => self.n_s = uint(k, v)?,
            "rom.adjoint_scale" => self.adjoint_scale = v.parse().map_err(|e: CloakError| err(k, e.to_string()))?,
            "rom.regime" => {
                self.transient = match v {
                    "steady" => false,
                    "transient" => true,
                    _ => return Err(err(k, format!("expected steady or transient, got '{v}'"))),
                }
            }
            "seed" => self.seed = v.parse().map_err(|_| err(k, format!("expected an integer, got '{v}'")))?,
            "solver.tol" => self.solver.tol = float(k, v)?,
            "solver.max_iter" => self.solver.max_iter = uint(k, v)?,
            "solver.direction" => {
                self.solver.direction = match v {
                    "preconditioned" => DirectionRule::Preconditioned,
                    "conjugate" => DirectionRule::ConjugateGradient,
                    _ => return Err(err(k, format!("expected preconditioned or conjugate, got '{v}'"))),
                }
            }
            "armijo.initial_step" => self.solver.armijo.initial_step = float(k, v)?,
            "armijo.contraction" => self.solver.armijo.contraction = float(k, v)?,
            "armijo.sufficient_decrease" => self.solver.armijo.sufficient_decrease = float(k, v)?,
            "armijo.max_backtracks" => self.solver.armijo.max_backtracks = uint(k, v)?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            "output.format" => self.format = ExportFormat::parse(v)?,
            "output.frames" => {
                self.frames = items(v).map(|t| uint(k, t)).collect::<Result<_>>()?;
            }
            "sweep.beta" => {
                self.sweep_beta = items(v).map(|t| float(k, t)).collect::<Result<_>>()?;
            }
            "sweep.samples" => self.sweep_samples = uint(k, v)?,
            _ => return Err(CloakError::Config(format!("unknown key '{k}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.weights.validate()?;
        self.grid.validate()?;
        self.params.validate()?;
        self.param_box.validate()?;
        if !(self.eps_pod >= 0.0 && self.eps_pod < 1.0) {
            return Err(err("rom.eps_pod", format!("must lie in [0, 1), got {}", self.eps_pod)));
        }
        if self.n_s == 0 {
            return Err(err("rom.n_s", "must be at least 1"));
        }
        self.adjoint_scale.validate().map_err(|e| err("rom.adjoint_scale", e.to_string()))?;
        let a = &self.solver.armijo;
        if !(a.contraction > 0.0 && a.contraction < 1.0) {
            return Err(err("armijo.contraction", "must lie in (0, 1)"));
        }
        if !(a.sufficient_decrease > 0.0 && a.sufficient_decrease < 1.0) {
            return Err(err("armijo.sufficient_decrease", "must lie in (0, 1)"));
        }
        if !(a.initial_step > 0.0) {
            return Err(err("armijo.initial_step", "must be positive"));
        }
        if !(self.solver.tol > 0.0) {
            return Err(err("solver.tol", "must be positive"));
        }
        Ok(())
    }

    /// Every resolved setting, one `key = value` line per key, sorted.
    pub fn resolved_text(&self) -> String {
        let mut m: BTreeMap<&str, String> = BTreeMap::new();
        let l = &self.layout;
        m.insert("layout.half_width", format!("{:e}", l.half_width));
        m.insert("layout.h", format!("{:e}", l.h));
        m.insert("layout.center", fmt_list(&l.center));
        match &l.obstacle {
            Obstacle::None => {
                m.insert("obstacle.kind", "none".into());
            }
            Obstacle::Circle { center, radius } => {
                m.insert("obstacle.kind", "circle".into());
                m.insert("obstacle.center", fmt_list(center));
                m.insert("obstacle.radius", format!("{radius:e}"));
            }
            Obstacle::Polygon(v) => {
                m.insert("obstacle.kind", "polygon".into());
                let flat: Vec<f64> = v.iter().flatten().copied().collect();
                m.insert("obstacle.vertices", fmt_list(&flat));
            }
        }
        match &l.cloak {
            Cloak::Annulus { r_inner, r_outer } => {
                m.insert("cloak.kind", "annulus".into());
                m.insert("cloak.r_inner", format!("{r_inner:e}"));
                m.insert("cloak.r_outer", format!("{r_outer:e}"));
            }
            Cloak::DiscRing { count, ring_radius, disc_radius } => {
                m.insert("cloak.kind", "disc_ring".into());
                m.insert("cloak.count", count.to_string());
                m.insert("cloak.ring_radius", format!("{ring_radius:e}"));
                m.insert("cloak.disc_radius", format!("{disc_radius:e}"));
            }
            Cloak::PolygonOffset { thickness } => {
                m.insert("cloak.kind", "polygon_offset".into());
                m.insert("cloak.thickness", format!("{thickness:e}"));
            }
        }
        match &l.observation {
            Observation::Annulus { r_inner, r_outer } => {
                m.insert("observation.kind", "annulus".into());
                m.insert("observation.r_inner", format!("{r_inner:e}"));
                m.insert("observation.r_outer", format!("{r_outer:e}"));
            }
            Observation::ComplementOfCloak => {
                m.insert("observation.kind", "complement".into());
            }
        }
        m.insert("source.center", fmt_list(&l.source.center));
        m.insert("source.radius", format!("{:e}", l.source.radius));
        m.insert("weights.beta", format!("{:e}", self.weights.beta));
        m.insert("weights.beta_g", format!("{:e}", self.weights.beta_g));
        m.insert("time.horizon", format!("{:e}", self.grid.horizon));
        m.insert("time.steps", self.grid.steps.to_string());
        m.insert("params", fmt_list(&self.params.as_array()));
        m.insert("box.lower", fmt_list(&self.param_box.lower));
        m.insert("box.upper", fmt_list(&self.param_box.upper));
        m.insert("rom.eps_pod", format!("{:e}", self.eps_pod));
        m.insert("rom.n_s", self.n_s.to_string());
        m.insert("rom.adjoint_scale", self.adjoint_scale.to_string());
        m.insert("rom.regime", if self.transient { "transient" } else { "steady" }.into());
        m.insert("seed", self.seed.to_string());
        m.insert("solver.tol", format!("{:e}", self.solver.tol));
        m.insert("solver.max_iter", self.solver.max_iter.to_string());
        m.insert(
            "solver.direction",
            match self.solver.direction {
                DirectionRule::Preconditioned => "preconditioned",
                DirectionRule::ConjugateGradient => "conjugate",
            }
            .into(),
        );
        let a = &self.solver.armijo;
        m.insert("armijo.initial_step", format!("{:e}", a.initial_step));
        m.insert("armijo.contraction", format!("{:e}", a.contraction));
        m.insert("armijo.sufficient_decrease", format!("{:e}", a.sufficient_decrease));
        m.insert("armijo.max_backtracks", a.max_backtracks.to_string());
        m.insert("output.format", self.format.name().into());
        m.insert("output.frames", self.frames.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(" "));
        m.insert("sweep.beta", fmt_list(&self.sweep_beta));
        m.insert("sweep.samples", self.sweep_samples.to_string());
        m.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// sha256 of [`RunConfig::resolved_text`]; the output directory does not
    /// take part.
    pub fn hash(&self) -> String {
        Sha256::digest(self.resolved_text().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order_and_comments() {
        let a = RunConfig::parse("weights.beta = 1e-6\nlayout.h = 0.05\n", Path::new(".")).unwrap();
        let b = RunConfig::parse("# c\nlayout.h = 0.05 # x\n\nweights.beta = 1e-6\n", Path::new(".")).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), RunConfig::default().hash());
    }

    #[test]
    fn errors_name_the_key() {
        let e = RunConfig::parse("weights.beta = abc\n", Path::new(".")).unwrap_err().to_string();
        assert!(e.contains("weights.beta"), "{e}");
        let e = RunConfig::parse("nope = 1\n", Path::new(".")).unwrap_err().to_string();
        assert!(e.contains("nope"), "{e}");
        let e = RunConfig::parse("cloak.thickness = 1\n", Path::new(".")).unwrap_err().to_string();
        assert!(e.contains("cloak.thickness"), "{e}");
    }

    #[test]
    fn layout_kind_selects_base() {
        let c = RunConfig::parse("cloak.disc_radius = 0.05\nlayout.kind = disc_ring\n", Path::new(".")).unwrap();
        assert!(matches!(c.layout.cloak, Cloak::DiscRing { disc_radius, .. } if disc_radius == 0.05));
    }

    #[test]
    fn lists_take_commas_or_spaces() {
        let c = RunConfig::parse("params = 2, 6e3, 10\nsweep.beta = 1e-7 1e-6,1e-5\noutput.frames = 0,10\n", Path::new("."))
            .unwrap();
        assert_eq!(c.params.as_array(), [2.0, 6e3, 10.0]);
        assert_eq!(c.sweep_beta, vec![1e-7, 1e-6, 1e-5]);
        assert_eq!(c.frames, vec![0, 10]);
        let back = RunConfig::parse(&c.resolved_text(), Path::new(".")).unwrap();
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn adjoint_scale_accepts_balanced() {
        let c = RunConfig::parse("rom.adjoint_scale = balanced\n", Path::new(".")).unwrap();
        assert_eq!(c.adjoint_scale, AdjointScaling::Balanced);
        assert!(RunConfig::parse("rom.adjoint_scale = -1\n", Path::new(".")).is_err());
        assert_eq!(RunConfig::default().adjoint_scale, AdjointScaling::Fixed(1.0));
    }
}
