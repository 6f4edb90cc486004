//! Latin hypercube sampling of the parameter box and full-order snapshot
//! generation for the offline phase.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CloakError, Result};
use crate::fem::FemOperators;
use crate::params::{ControlWeights, ParamBox, ScenarioParams};
use crate::steady::{solve_steady, SteadySolution};
use crate::transient::{solve_transient_ocp, Series, SolverOptions, TimeGrid, Trajectory, TransientCost};

/// Latin hypercube sample of `n` points: along every dimension each of the
/// `n` equal strata holds exactly one point, placed uniformly at random
/// inside its stratum. Deterministic for a fixed seed.
pub fn lhs_sample(bounds: &ParamBox, n: usize, seed: u64) -> Result<Vec<ScenarioParams>> {
    bounds.validate()?;
    if n == 0 {
        return Err(CloakError::InvalidParameter("LHS needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = vec![[0.0; 3]; n];
    for d in 0..3 {
        let (lo, hi) = (bounds.lower[d], bounds.upper[d]);
        if lo == hi {
            warn!("parameter box has zero width in dimension {d}; samples pinned to {lo}");
        }
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (c, s) in coords.iter_mut().zip(strata) {
            let x: f64 = rng.gen();
            c[d] = (lo + (hi - lo) * (s as f64 + x) / n as f64).min(hi);
        }
    }
    Ok(coords.into_iter().map(ScenarioParams::from_array).collect())
}

/// Stratum index of `x` along dimension `d` when `[lo, hi]` is cut into `n`.
pub fn stratum(bounds: &ParamBox, d: usize, n: usize, x: f64) -> usize {
    let (lo, hi) = (bounds.lower[d], bounds.upper[d]);
    if hi == lo {
        return 0;
    }
    (((x - lo) / (hi - lo) * n as f64).floor() as usize).min(n - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotMode {
    Steady,
    Transient,
}

impl SnapshotMode {
    pub fn name(&self) -> &'static str {
        match self {
            SnapshotMode::Steady => "steady",
            SnapshotMode::Transient => "transient",
        }
    }
}

/// One full-order solve of the training set.
#[derive(Debug, Clone)]
pub struct SnapshotRecord {
    pub index: usize,
    pub params: ScenarioParams,
    pub steady: SteadySolution,
    pub trajectory: Option<Trajectory>,
}

impl SnapshotRecord {
    pub fn block(&self) -> crate::rom::SnapshotBlock {
        match &self.trajectory {
            Some(t) => crate::rom::SnapshotBlock::from_trajectory(t),
            None => crate::rom::SnapshotBlock::from_steady(&self.steady),
        }
    }
}

/// Settings shared by every solve of a snapshot run.
#[derive(Debug, Clone, Copy)]
pub struct SnapshotSettings {
    pub mode: SnapshotMode,
    pub weights: ControlWeights,
    pub grid: TimeGrid,
    pub solver: SolverOptions,
    /// Solve samples concurrently on the rayon pool.
    pub parallel: bool,
}

impl SnapshotSettings {
    pub fn steady(weights: ControlWeights) -> SnapshotSettings {
        SnapshotSettings {
            mode: SnapshotMode::Steady,
            weights,
            grid: TimeGrid::default(),
            solver: SolverOptions::default(),
            parallel: true,
        }
    }

    pub fn transient(weights: ControlWeights, grid: TimeGrid, solver: SolverOptions) -> SnapshotSettings {
        SnapshotSettings { mode: SnapshotMode::Transient, weights, grid, solver, parallel: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub mesh_hash: String,
}

#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub mode: SnapshotMode,
    pub records: Vec<SnapshotRecord>,
    /// `(sample index, parameters, error message)` of failed solves.
    pub failures: Vec<(usize, ScenarioParams, String)>,
    pub provenance: Provenance,
}

fn solve_one(ops: &FemOperators, index: usize, params: ScenarioParams, s: &SnapshotSettings) -> Result<SnapshotRecord> {
    match s.mode {
        SnapshotMode::Steady => {
            let steady = solve_steady(ops, &params, &s.weights)?;
            Ok(SnapshotRecord { index, params, steady, trajectory: None })
        }
        SnapshotMode::Transient => {
            let t = solve_transient_ocp(ops, &params, &s.weights, &s.grid, &s.solver)?;
            if !t.converged {
                warn!("sample {index} did not reach the gradient tolerance");
            }
            Ok(SnapshotRecord { index, params, steady: t.steady.clone(), trajectory: Some(t) })
        }
    }
}

/// Solves every sample and hands the records to `sink` in sample order.
///
/// Samples are solved in chunks of the rayon pool size so that at most one
/// chunk of trajectories is alive at a time. Failed samples are logged and
/// returned; they do not stop the run unless every sample fails.
pub fn stream_snapshots(
    ops: &FemOperators,
    samples: &[ScenarioParams],
    settings: &SnapshotSettings,
    mut sink: impl FnMut(SnapshotRecord) -> Result<()>,
) -> Result<Vec<(usize, ScenarioParams, String)>> {
    let chunk = if settings.parallel { rayon::current_num_threads().max(1) } else { 1 };
    let mut failures = Vec::new();
    let mut successes = 0;
    for (c, block) in samples.chunks(chunk).enumerate() {
        let offset = c * chunk;
        let solve = |(i, p): (usize, &ScenarioParams)| (offset + i, *p, solve_one(ops, offset + i, *p, settings));
        let results: Vec<_> = if settings.parallel {
            block.par_iter().enumerate().map(solve).collect()
        } else {
            block.iter().enumerate().map(solve).collect()
        };
        for (i, p, r) in results {
            match r {
                Ok(rec) => {
                    info!("snapshot {} of {} solved", i + 1, samples.len());
                    successes += 1;
                    sink(rec)?;
                }
                Err(e) => {
                    warn!("snapshot {i} at {:?} failed: {e}", p.as_array());
                    failures.push((i, p, e.to_string()));
                }
            }
        }
    }
    if successes == 0 {
        return Err(CloakError::AllSnapshotsFailed(samples.len()));
    }
    Ok(failures)
}

/// Solves every sample and keeps all records in memory.
pub fn generate_snapshots(
    ops: &FemOperators,
    samples: &[ScenarioParams],
    settings: &SnapshotSettings,
    provenance: Provenance,
) -> Result<SnapshotSet> {
    let mut records = Vec::with_capacity(samples.len());
    let failures = stream_snapshots(ops, samples, settings, |r| {
        records.push(r);
        Ok(())
    })?;
    Ok(SnapshotSet { mode: settings.mode, records, failures, provenance })
}

const FORMAT: &str = "thermocloak-snapshots 1";

fn write_series(out: &mut String, name: &str, s: &[Vec<f64>]) {
    let len = s.first().map_or(0, Vec::len);
    let _ = writeln!(out, "[{name}] {} {len}", s.len());
    for col in s {
        let row: Vec<String> = col.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
}

fn record_text(r: &SnapshotRecord) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {FORMAT}");
    let _ = writeln!(out, "index = {}", r.index);
    let [a, b, c] = r.params.as_array();
    let _ = writeln!(out, "params = {a:e} {b:e} {c:e}");
    let _ = writeln!(out, "steady_cost = {:e} {:e}", r.steady.tracking, r.steady.control);
    write_series(&mut out, "steady_z", std::slice::from_ref(&r.steady.z));
    write_series(&mut out, "steady_q", std::slice::from_ref(&r.steady.q));
    write_series(&mut out, "steady_p", std::slice::from_ref(&r.steady.p));
    write_series(&mut out, "steady_u", std::slice::from_ref(&r.steady.u));
    if let Some(t) = &r.trajectory {
        let _ = writeln!(out, "grid = {:e} {}", t.grid.horizon, t.grid.steps);
        let _ = writeln!(
            out,
            "transient_cost = {:e} {:e} {:e}",
            t.cost.tracking, t.cost.control, t.cost.terminal
        );
        let _ = writeln!(out, "converged = {}", t.converged);
        write_series(&mut out, "z", &t.z);
        write_series(&mut out, "q", &t.q);
        write_series(&mut out, "p", &t.p);
        write_series(&mut out, "u", &t.u);
    }
    out
}

fn parse_record(name: &str, text: &str) -> Result<SnapshotRecord> {
    let bad = |line: usize, m: String| CloakError::Parse { path: name.into(), line, message: m };
    let mut lines = text.lines().enumerate().peekable();
    let mut scalars: Vec<(String, String, usize)> = Vec::new();
    let mut series: Vec<(String, Series)> = Vec::new();
    while let Some((ln, line)) = lines.next() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let (field, dims) = rest.split_once(']').ok_or_else(|| bad(ln + 1, "unterminated block header".into()))?;
            let dims: Vec<usize> = dims.split_whitespace().filter_map(|t| t.parse().ok()).collect();
            let [rows, len] = dims[..] else {
                return Err(bad(ln + 1, format!("block {field} needs row and length counts")));
            };
            let mut s = Vec::with_capacity(rows);
            for _ in 0..rows {
                let (ln, row) = lines.next().ok_or_else(|| bad(ln + 1, format!("block {field} truncated")))?;
                let v: Vec<f64> = if len == 0 {
                    Vec::new()
                } else {
                    row.split(',')
                        .map(|t| t.trim().parse().map_err(|_| bad(ln + 1, format!("bad number '{t}'"))))
                        .collect::<Result<_>>()?
                };
                if v.len() != len {
                    return Err(bad(ln + 1, format!("expected {len} values, found {}", v.len())));
                }
                s.push(v);
            }
            series.push((field.to_string(), s));
        } else {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(ln + 1, format!("malformed line '{line}'")))?;
            scalars.push((k.trim().to_string(), v.trim().to_string(), ln + 1));
        }
    }
    let scalar = |k: &str| scalars.iter().find(|(key, _, _)| key == k);
    let floats = |k: &str| -> Result<Vec<f64>> {
        let (_, v, ln) = scalar(k).ok_or_else(|| bad(0, format!("missing key '{k}'")))?;
        v.split_whitespace().map(|t| t.parse().map_err(|_| bad(*ln, format!("bad number '{t}'")))).collect()
    };
    let mut take = |f: &str| -> Result<Series> {
        let i = series.iter().position(|(n, _)| n == f).ok_or_else(|| bad(0, format!("missing block '{f}'")))?;
        Ok(series.swap_remove(i).1)
    };
    let one = |s: Series| s.into_iter().next().unwrap_or_default();
    let index = floats("index")?[0] as usize;
    let pv = floats("params")?;
    if pv.len() != 3 {
        return Err(bad(0, "params needs three values".into()));
    }
    let sc = floats("steady_cost")?;
    let steady = SteadySolution {
        z: one(take("steady_z")?),
        q: one(take("steady_q")?),
        p: one(take("steady_p")?),
        u: one(take("steady_u")?),
        tracking: sc[0],
        control: sc[1],
    };
    let trajectory = if scalar("grid").is_some() {
        let g = floats("grid")?;
        let c = floats("transient_cost")?;
        let grid = TimeGrid::new(g[0], g[1] as usize)?;
        let converged = scalar("converged").is_some_and(|(_, v, _)| v == "true");
        Some(Trajectory {
            grid,
            z: take("z")?,
            q: take("q")?,
            p: take("p")?,
            u: take("u")?,
            cost: TransientCost { tracking: c[0], control: c[1], terminal: c[2] },
            log: Vec::new(),
            converged,
            steady: steady.clone(),
        })
    } else {
        None
    };
    Ok(SnapshotRecord { index, params: ScenarioParams::from_array([pv[0], pv[1], pv[2]]), steady, trajectory })
}

/// Writes the set as a plain-text manifest plus one file per sample.
pub fn save_snapshot_set(dir: &Path, set: &SnapshotSet) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CloakError::io(dir, e))?;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "# {FORMAT}");
    let _ = writeln!(manifest, "mode = {}", set.mode.name());
    let _ = writeln!(manifest, "seed = {}", set.provenance.seed);
    let _ = writeln!(manifest, "config_hash = {}", set.provenance.config_hash);
    let _ = writeln!(manifest, "mesh_hash = {}", set.provenance.mesh_hash);
    let _ = writeln!(manifest, "n_s = {}", set.records.len() + set.failures.len());
    for r in &set.records {
        let file = format!("sample_{:04}.txt", r.index);
        let path = dir.join(&file);
        fs::write(&path, record_text(r)).map_err(|e| CloakError::io(&path, e))?;
        let _ = writeln!(manifest, "sample = {file}");
    }
    for (i, p, e) in &set.failures {
        let [a, b, c] = p.as_array();
        let _ = writeln!(manifest, "failed = {i} {a:e} {b:e} {c:e} {}", e.replace('\n', " "));
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| CloakError::io(&path, e))
}

pub fn load_snapshot_set(dir: &Path) -> Result<SnapshotSet> {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| CloakError::io(&path, e))?;
    let mut mode = None;
    let mut prov = Provenance { seed: 0, config_hash: String::new(), mesh_hash: String::new() };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: String| CloakError::Parse { path: path.clone(), line: ln + 1, message: m };
        let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("malformed line '{line}'")))?;
        let v = v.trim();
        match k.trim() {
            "mode" => {
                mode = Some(match v {
                    "steady" => SnapshotMode::Steady,
                    "transient" => SnapshotMode::Transient,
                    _ => return Err(bad(format!("unknown mode '{v}'"))),
                })
            }
            "seed" => prov.seed = v.parse().map_err(|_| bad(format!("bad seed '{v}'")))?,
            "config_hash" => prov.config_hash = v.to_string(),
            "mesh_hash" => prov.mesh_hash = v.to_string(),
            "n_s" => {}
            "sample" => {
                let p = dir.join(v);
                let t = fs::read_to_string(&p).map_err(|e| CloakError::io(&p, e))?;
                records.push(parse_record(v, &t)?);
            }
            "failed" => {
                let parts: Vec<&str> = v.splitn(5, ' ').collect();
                let nums: Vec<f64> = parts.iter().take(4).filter_map(|t| t.parse().ok()).collect();
                if nums.len() != 4 {
                    return Err(bad(format!("malformed failure entry '{v}'")));
                }
                failures.push((
                    nums[0] as usize,
                    ScenarioParams::from_array([nums[1], nums[2], nums[3]]),
                    parts.get(4).unwrap_or(&"").to_string(),
                ));
            }
            other => return Err(bad(format!("unknown key '{other}'"))),
        }
    }
    let mode = mode.ok_or_else(|| CloakError::Parse { path: path.clone(), line: 0, message: "missing mode".into() })?;
    Ok(SnapshotSet { mode, records, failures, provenance: prov })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lhs_fills_every_stratum_once() {
        let b = ParamBox::default();
        let s = lhs_sample(&b, 7, 3).unwrap();
        for d in 0..3 {
            let mut seen: Vec<usize> = s.iter().map(|p| stratum(&b, d, 7, p.as_array()[d])).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..7).collect::<Vec<_>>());
        }
        assert!(s.iter().all(|p| b.contains(p)));
    }

    #[test]
    fn degenerate_dimension_is_pinned() {
        let b = ParamBox { lower: [2.0, 5e2, 10.0], upper: [2.0, 1e3, 10.0] };
        let s = lhs_sample(&b, 4, 0).unwrap();
        assert!(s.iter().all(|p| p.diffusivity == 2.0 && p.obstacle_temperature == 10.0));
    }
}
