use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use thermocloak::config::{ExportFormat, RunConfig};
use thermocloak::export::{export_fields, export_trajectory, solution_fields, steady_fields};
use thermocloak::metrics::{steady_field_errors, steady_report, transient_field_errors, transient_report, CloakReport, Timing};
use thermocloak::rom::{
    load_archive, project, save_archive, solve_rom_steady, solve_rom_transient, BasisBuilder, ReducedOperators,
};
use thermocloak::scenarios::{lhs_sample, save_snapshot_set, stream_snapshots, Provenance, SnapshotSet, SnapshotSettings};
use thermocloak::{solve_steady, solve_transient_ocp, ControlWeights, Problem, ScenarioParams};

/// Active thermal cloaking: full-order optimal control and reduced-order models.
#[derive(Parser)]
#[command(name = "thermocloak", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Run configuration (`key = value` lines); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sampling seed, overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Exported time indices, e.g. `0,5,25,100`; overrides `output.frames`.
    #[arg(long, global = true, value_delimiter = ',')]
    frames: Option<Vec<usize>>,
    /// csv, vtk or both; overrides `output.format`.
    #[arg(long, global = true)]
    format: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// One-shot steady optimal control at the configured parameters.
    SolveSteady,
    /// Transient optimal control at the configured parameters.
    SolveTransient,
    /// Snapshots over an LHS training set, POD bases and reduced operators.
    Offline {
        /// Also write the full snapshot set (large for transient runs).
        #[arg(long)]
        keep_snapshots: bool,
    },
    /// Reduced solve at the configured parameters from a stored archive.
    Online {
        /// Skip the full-order reference solve (no errors, no speedup).
        #[arg(long)]
        no_reference: bool,
    },
    /// Batch of reduced solves over `sweep.beta` or LHS samples.
    Sweep {
        #[arg(long)]
        no_reference: bool,
    },
    /// Runs the acceptance checks.
    Verify {
        /// Comma-separated criterion numbers (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u32>>,
    },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(f) = &c.frames {
        cfg.frames = f.clone();
    }
    if let Some(f) = &c.format {
        cfg.format = ExportFormat::parse(f)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Output directory of one command, with the resolved configuration and its
/// hash written next to the results.
fn run_dir(cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    let dir = cfg.output_dir.join(command);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.resolved"), format!("# config_hash = {}\n{}", cfg.hash(), cfg.resolved_text()))?;
    Ok(dir)
}

fn report_header() -> String {
    format!("config_hash,diffusivity,intensity,obstacle_temperature,beta,{}\n", CloakReport::csv_header())
}

fn report_line(cfg: &RunConfig, p: &ScenarioParams, w: &ControlWeights, r: &CloakReport) -> String {
    let [a, b, c] = p.as_array();
    format!("{},{a:e},{b:e},{c:e},{:e},{}\n", cfg.hash(), w.beta, r.csv_row())
}

fn write_report(dir: &Path, lines: &[String]) -> Result<PathBuf> {
    let path = dir.join("report.csv");
    fs::write(&path, format!("{}{}", report_header(), lines.concat()))?;
    Ok(path)
}

fn problem(cfg: &RunConfig) -> Result<Problem> {
    let t = Instant::now();
    let pb = Problem::from_layout(&cfg.layout)?;
    info!(
        "mesh: {} nodes ({} free, {} controls) in {:.2?}",
        pb.ops.n_z(),
        pb.ops.n_q(),
        pb.ops.n_u(),
        t.elapsed()
    );
    Ok(pb)
}

fn solve_steady_cmd(cfg: &RunConfig) -> Result<()> {
    let pb = problem(cfg)?;
    let dir = run_dir(cfg, "solve-steady")?;
    let s = solve_steady(&pb.ops, &cfg.params, &cfg.weights)?;
    let r = steady_report(&pb.ops, &cfg.params, &s)?;
    export_fields(&dir, "fields", &pb.ocp, &steady_fields(&pb.ops, cfg.params.obstacle_temperature, &s), cfg.format)?;
    let path = write_report(&dir, &[report_line(cfg, &cfg.params, &cfg.weights, &r)])?;
    println!("efficiency {:.4}, J = {:.6e}; report {}", r.efficiency, s.cost(), path.display());
    Ok(())
}

fn solve_transient_cmd(cfg: &RunConfig) -> Result<()> {
    let pb = problem(cfg)?;
    let dir = run_dir(cfg, "solve-transient")?;
    let t = solve_transient_ocp(&pb.ops, &cfg.params, &cfg.weights, &cfg.grid, &cfg.solver)?;
    let r = transient_report(&pb.ops, &cfg.params, &t)?;
    export_trajectory(&dir, &pb.ocp, &pb.ops, cfg.params.obstacle_temperature, &t, &cfg.frames, cfg.format)?;
    let path = write_report(&dir, &[report_line(cfg, &cfg.params, &cfg.weights, &r)])?;
    println!(
        "{} iterations (converged: {}), final efficiency {:.4}, J = {:.6e}; report {}",
        t.log.len().saturating_sub(1),
        t.converged,
        r.efficiency,
        t.cost.total(),
        path.display()
    );
    Ok(())
}

fn archive_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("rom")
}

fn regime(cfg: &RunConfig) -> &'static str {
    if cfg.transient {
        "transient"
    } else {
        "steady"
    }
}

fn offline_cmd(cfg: &RunConfig, keep_snapshots: bool) -> Result<()> {
    let pb = problem(cfg)?;
    let samples = lhs_sample(&cfg.param_box, cfg.n_s, cfg.seed)?;
    let settings = if cfg.transient {
        SnapshotSettings::transient(cfg.weights, cfg.grid, cfg.solver)
    } else {
        SnapshotSettings::steady(cfg.weights)
    };
    let hash = pb.mesh_hash();
    let mut builder = BasisBuilder::new(cfg.eps_pod)?.with_adjoint_scaling(cfg.adjoint_scale)?;
    let mut kept = Vec::new();
    let t = Instant::now();
    let failures = stream_snapshots(&pb.ops, &samples, &settings, |r| {
        builder.add(&hash, r.block())?;
        if keep_snapshots {
            kept.push(r);
        }
        Ok(())
    })?;
    let basis = builder.finish()?;
    let rom = project(&pb.ops, &basis)?;
    let elapsed = t.elapsed();
    let meta = vec![
        ("config_hash".to_string(), cfg.hash()),
        ("regime".to_string(), regime(cfg).to_string()),
        ("n_s".to_string(), cfg.n_s.to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("failures".to_string(), failures.len().to_string()),
        ("adjoint_scale".to_string(), cfg.adjoint_scale.to_string()),
        ("offline_seconds".to_string(), format!("{:.3}", elapsed.as_secs_f64())),
    ];
    let dir = archive_dir(cfg);
    let m = save_archive(&dir, &rom, (pb.ops.n_z(), pb.ops.n_q(), pb.ops.n_u()), &hash, &meta)?;
    if keep_snapshots {
        let set = SnapshotSet {
            mode: settings.mode,
            records: kept,
            failures: failures.clone(),
            provenance: Provenance { seed: cfg.seed, config_hash: cfg.hash(), mesh_hash: hash.clone() },
        };
        save_snapshot_set(&cfg.output_dir.join("snapshots"), &set)?;
    }
    println!(
        "{} of {} samples, dims {:?} in {:.1} s; archive {}",
        samples.len() - failures.len(),
        samples.len(),
        m.dims,
        elapsed.as_secs_f64(),
        dir.display()
    );
    Ok(())
}

fn load_rom(cfg: &RunConfig, pb: &Problem) -> Result<ReducedOperators> {
    let (rom, m) = load_archive(&archive_dir(cfg), Some(&pb.mesh_hash()))?;
    if m.metadata("regime") != Some(regime(cfg)) {
        bail!(
            "archive in {} was built for the {} regime but rom.regime = {}",
            archive_dir(cfg).display(),
            m.metadata("regime").unwrap_or("unknown"),
            regime(cfg)
        );
    }
    Ok(rom)
}

/// Reduced solve at one parameter point, optionally compared with the full
/// model. Returns the report and the lifted fields at the final time.
fn online_point(
    cfg: &RunConfig,
    pb: &Problem,
    rom: &ReducedOperators,
    p: &ScenarioParams,
    w: &ControlWeights,
    reference: bool,
    export_to: Option<&Path>,
) -> Result<CloakReport> {
    let ops = &pb.ops;
    if cfg.transient {
        let t = Instant::now();
        let reduced = solve_rom_transient(rom, p, w, &cfg.grid, &cfg.solver)?;
        let reduced_time = t.elapsed();
        let lifted = rom.lift_trajectory(&reduced);
        let mut r = transient_report(ops, p, &lifted)?;
        if reference {
            let t = Instant::now();
            let full = solve_transient_ocp(ops, p, w, &cfg.grid, &cfg.solver)?;
            r.timing = Some(Timing { full: t.elapsed(), reduced: reduced_time });
            r.errors = Some(transient_field_errors(ops, &lifted, &full)?);
        }
        if let Some(dir) = export_to {
            export_trajectory(dir, &pb.ocp, ops, p.obstacle_temperature, &lifted, &cfg.frames, cfg.format)?;
        }
        Ok(r)
    } else {
        let t = Instant::now();
        let reduced = solve_rom_steady(rom, p, w)?;
        let reduced_time = t.elapsed();
        let lifted = rom.lift_steady(&reduced);
        let mut r = steady_report(ops, p, &lifted)?;
        if reference {
            let t = Instant::now();
            let full = solve_steady(ops, p, w)?;
            r.timing = Some(Timing { full: t.elapsed(), reduced: reduced_time });
            r.errors = Some(steady_field_errors(ops, &lifted, &full)?);
        }
        if let Some(dir) = export_to {
            let f = solution_fields(ops, p.obstacle_temperature, &lifted.z, &lifted.q, &lifted.p, &lifted.u);
            export_fields(dir, "fields", &pb.ocp, &f, cfg.format)?;
        }
        Ok(r)
    }
}

fn online_cmd(cfg: &RunConfig, reference: bool) -> Result<()> {
    let pb = problem(cfg)?;
    let rom = load_rom(cfg, &pb)?;
    let dir = run_dir(cfg, "online")?;
    let r = online_point(cfg, &pb, &rom, &cfg.params, &cfg.weights, reference, Some(&dir))?;
    let path = write_report(&dir, &[report_line(cfg, &cfg.params, &cfg.weights, &r)])?;
    print!("efficiency {:.4}", r.efficiency);
    if let (Some(e), Some(t)) = (r.errors, r.timing) {
        print!(", max field error {:.2e}, speedup {:.0}x", e.max(), t.speedup());
    }
    println!("; report {}", path.display());
    Ok(())
}

fn sweep_cmd(cfg: &RunConfig, reference: bool) -> Result<()> {
    let pb = problem(cfg)?;
    let rom = load_rom(cfg, &pb)?;
    let dir = run_dir(cfg, "sweep")?;
    let points: Vec<(ScenarioParams, ControlWeights)> = if cfg.sweep_beta.is_empty() {
        lhs_sample(&cfg.param_box, cfg.sweep_samples, cfg.seed.wrapping_add(1))?
            .into_iter()
            .map(|p| (p, cfg.weights))
            .collect()
    } else {
        cfg.sweep_beta.iter().map(|&b| (cfg.params, ControlWeights { beta: b, ..cfg.weights })).collect()
    };
    let mut lines = Vec::new();
    let mut worst_eta = f64::INFINITY;
    for (i, (p, w)) in points.iter().enumerate() {
        let r = online_point(cfg, &pb, &rom, p, w, reference, None)?;
        info!("point {} of {}: efficiency {:.4}", i + 1, points.len(), r.efficiency);
        worst_eta = worst_eta.min(r.efficiency);
        lines.push(report_line(cfg, p, w, &r));
    }
    let path = write_report(&dir, &lines)?;
    println!("{} points, lowest efficiency {worst_eta:.4}; report {}", points.len(), path.display());
    Ok(())
}

fn verify_cmd(only: Option<Vec<u32>>) -> Result<bool> {
    let ids = only.unwrap_or_else(|| thermocloak_verify::ALL.to_vec());
    let outcomes = thermocloak_verify::run(&ids, |o| println!("{o}"));
    Ok(outcomes.iter().all(|o| o.passed))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = (|| -> Result<bool> {
        if let Command::Verify { only } = cli.command {
            return verify_cmd(only);
        }
        let cfg = load_config(&cli.common)?;
        match cli.command {
            Command::SolveSteady => solve_steady_cmd(&cfg)?,
            Command::SolveTransient => solve_transient_cmd(&cfg)?,
            Command::Offline { keep_snapshots } => offline_cmd(&cfg, keep_snapshots)?,
            Command::Online { no_reference } => online_cmd(&cfg, !no_reference)?,
            Command::Sweep { no_reference } => sweep_cmd(&cfg, !no_reference)?,
            Command::Verify { .. } => unreachable!(),
        }
        Ok(true)
    })();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
