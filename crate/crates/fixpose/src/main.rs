//! `fixpose` command-line tool.
//!
//! Exit codes: 0 on success, 1 on usage, file or numerical errors, 2 when
//! the measurements are inconsistent with the mesh and error bound.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fixpose::config::{bound_table, Config};
use fixpose::formats::{
    load_mesh, read_distribution_jsonl, read_json, read_points_csv, read_pose_log_csv, write_distribution_jsonl,
    write_json, write_obj, write_points_csv, write_superset_jsonl, LengthUnit, PoseJson,
};
use fixpose::pipeline::{run_bound, score, simulate_builtin, BatchRow, PipelineError};
use fixpose::plot::mollweide_svg;
use fixpose::report::RunReport;
use fixpose_core::init_bound::MeasurementSet;
use fixpose_core::mesh::TriangleMesh;
use fixpose_core::sim::{normalize_mesh, run_trial, trial_seed, Primitive, SimulationSpec};
use fixpose_core::tip_calibration::{calibrate, TipCalibration};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "fixpose",
    version,
    about = "Fixture pose calibration with guaranteed error bounds"
)]
struct Cli {
    /// Seed for sampling and simulation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// JSON configuration file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More diagnostics on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the pose superset, bounds and confidence intervals.
    Bound(BoundArgs),
    /// Simulate measurements of a shape, optionally solving them.
    Simulate(SimulateArgs),
    /// Calibrate the probe tip and table from a pose log.
    CalibrateTip(CalibrateArgs),
    /// Plot a pose distribution as a Mollweide SVG.
    Plot(PlotArgs),
}

#[derive(Args, Clone, Default)]
struct SearchFlags {
    /// Measurement error bound b_s in meters.
    #[arg(long = "b-s")]
    b_s: Option<f64>,
    /// Numeric slack b_eps in meters.
    #[arg(long = "b-eps")]
    b_eps: Option<f64>,
    /// Probe ball radius in meters; measurements are ball centers.
    #[arg(long)]
    probe_radius: Option<f64>,
    /// Stop refining before the frontier could exceed this many cells.
    #[arg(long)]
    cell_budget: Option<u64>,
    /// Samples per frontier cell for the pose distribution.
    #[arg(long)]
    samples_per_cell: Option<usize>,
    /// Rotation bound table cache file.
    #[arg(long)]
    table_cache: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    /// Fixture mesh (.obj or .stl).
    #[arg(long)]
    mesh: PathBuf,
    /// Measured points, CSV x,y,z in meters, robot base frame.
    #[arg(long)]
    points: PathBuf,
    /// Length unit of the mesh file.
    #[arg(long, value_enum)]
    unit: Option<LengthUnit>,
    /// Calibration JSON whose sample bound is used as b_s.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Directory for the report and dumps.
    #[arg(long, default_value = "fixpose-out")]
    out_dir: PathBuf,
    /// Skip the superset and distribution dumps.
    #[arg(long)]
    no_dumps: bool,
    #[command(flatten)]
    search: SearchFlags,
}

#[derive(Args)]
struct SimulateArgs {
    /// Builtin shape: cube, cone, cylinder, tetrahedron or bracket.
    #[arg(long, default_value = "bracket")]
    object: String,
    /// Simulate on this mesh instead of a builtin shape.
    #[arg(long, conflicts_with = "object")]
    mesh: Option<PathBuf>,
    /// Length unit of the mesh file.
    #[arg(long, value_enum)]
    unit: Option<LengthUnit>,
    /// Scale a custom mesh to a 0.125 m enclosing sphere.
    #[arg(long)]
    normalize: bool,
    /// Measured points per trial, chosen by farthest point sampling.
    #[arg(long, default_value_t = 10)]
    n_samples: usize,
    /// Uniform surface samples to choose the measured points from.
    #[arg(long, default_value_t = 1000)]
    n_uniform: usize,
    /// Measure exactly on the surface.
    #[arg(long)]
    noiseless: bool,
    /// Run this many trials and write a CSV.
    #[arg(long)]
    batch: Option<usize>,
    /// Cycle through all builtin shapes in batch mode.
    #[arg(long)]
    all_objects: bool,
    /// Solve the simulated measurements and write the report.
    #[arg(long)]
    run: bool,
    /// Directory for the trial, report and dumps.
    #[arg(long, default_value = "fixpose-sim")]
    out_dir: PathBuf,
    #[command(flatten)]
    search: SearchFlags,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Pose log CSV: stage,qw,qx,qy,qz,tx,ty,tz.
    #[arg(long)]
    log: PathBuf,
    /// Sample bound = margin * largest fine-stage residual.
    #[arg(long)]
    margin: Option<f64>,
    /// Smallest sample bound in meters.
    #[arg(long)]
    floor: Option<f64>,
    /// Calibration JSON to write.
    #[arg(long, default_value = "calibration.json")]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Distribution JSON lines written by `bound`.
    #[arg(long)]
    distribution: PathBuf,
    /// SVG file to write.
    #[arg(long, default_value = "rotations.svg")]
    out: PathBuf,
    /// Trial JSON from `simulate`; its ground truth is marked.
    #[arg(long)]
    truth: Option<PathBuf>,
}

/// A simulated trial as written by `simulate`.
#[derive(Debug, Serialize, Deserialize)]
struct TrialFile {
    object: Option<String>,
    spec: SimulationSpec,
    /// Pose of the mesh file's frame in the base frame.
    ground_truth: PoseJson,
    points: Vec<[f64; 3]>,
    surface_points: Vec<[f64; 3]>,
    noise: Vec<[f64; 3]>,
    numeric_slack: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let inconsistent = err
                .downcast_ref::<PipelineError>()
                .is_some_and(PipelineError::is_inconsistent);
            if inconsistent {
                eprintln!(
                    "error: measurements are inconsistent: no fixture pose puts every point within b_s + b_eps of the surface\n  {err:#}"
                );
                ExitCode::from(2)
            } else {
                eprintln!("error: {err:#}");
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    config.distribution.seed = cli.seed;
    match cli.command {
        Command::Bound(args) => cmd_bound(args, config, cli.json),
        Command::Simulate(args) => cmd_simulate(args, config, cli.seed, cli.json),
        Command::CalibrateTip(args) => cmd_calibrate(args, config, cli.json),
        Command::Plot(args) => cmd_plot(args, cli.json),
    }
}

fn apply_flags(config: &mut Config, flags: &SearchFlags) {
    if let Some(v) = flags.b_s {
        config.sample_bound = v;
    }
    if let Some(v) = flags.b_eps {
        config.numeric_slack = v;
    }
    if let Some(v) = flags.probe_radius {
        config.probe_radius = v;
    }
    if let Some(v) = flags.cell_budget {
        config.search.cell_budget = v;
    }
    if let Some(v) = flags.samples_per_cell {
        config.distribution.samples_per_cell = v;
    }
    if let Some(p) = &flags.table_cache {
        config.table_cache = Some(p.clone());
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes the report and optional dumps of a run into `dir`; returns the
/// report path.
fn write_run_outputs(run: &fixpose::pipeline::BoundRun, dir: &Path, dumps: bool) -> Result<PathBuf> {
    create_dir(dir)?;
    let report_path = dir.join("report.json");
    write_json(&run.report, &report_path)?;
    if dumps {
        write_superset_jsonl(&run.superset, &dir.join("superset.jsonl"))?;
        if let Some(dist) = &run.distribution {
            write_distribution_jsonl(dist, &dir.join("distribution.jsonl"))?;
            let samples: Vec<_> = dist.samples.iter().map(|s| (s.pose.rotation, s.probability)).collect();
            std::fs::write(dir.join("rotations.svg"), mollweide_svg(&samples, &[]))
                .with_context(|| format!("writing {}", dir.join("rotations.svg").display()))?;
        }
    }
    Ok(report_path)
}

fn emit_report(report: &RunReport, path: &Path, json: bool, started: Instant) {
    eprintln!("{}", report.summary());
    eprintln!("wall time {:.1} s", started.elapsed().as_secs_f64());
    if json {
        println!("{}", report.to_json());
    } else {
        println!("{}", path.display());
    }
}

fn cmd_bound(args: BoundArgs, mut config: Config, json: bool) -> Result<()> {
    let started = Instant::now();
    apply_flags(&mut config, &args.search);
    if let Some(unit) = args.unit {
        config.unit = unit;
    }
    if let Some(path) = &args.calibration {
        let calibration: TipCalibration = read_json(path)?;
        if args.search.b_s.is_none() {
            config.sample_bound = calibration.sample_bound;
        }
    }
    let mesh = load_mesh(&args.mesh, config.unit.scale())?;
    let points = read_points_csv(&args.points)?;
    let meas = MeasurementSet::new(points, config.sample_bound, config.numeric_slack)?;
    let table = bound_table(config.table_cache.as_deref())?;
    let run = run_bound(&mesh, &meas, &config, &table, true)?;
    let path = write_run_outputs(&run, &args.out_dir, !args.no_dumps)?;
    emit_report(&run.report, &path, json, started);
    Ok(())
}

fn to_arrays<T: Copy + Into<[f64; 3]>>(v: &[T]) -> Vec<[f64; 3]> {
    v.iter().map(|&p| p.into()).collect()
}

fn cmd_simulate(args: SimulateArgs, mut config: Config, seed: u64, json: bool) -> Result<()> {
    let started = Instant::now();
    apply_flags(&mut config, &args.search);
    if let Some(unit) = args.unit {
        config.unit = unit;
    }
    let spec = SimulationSpec {
        n_uniform: args.n_uniform,
        n_samples: args.n_samples,
        sample_bound: config.sample_bound,
        noiseless: args.noiseless,
        seed,
        ..SimulationSpec::default()
    };
    let object = Primitive::from_name(&args.object).with_context(|| format!("unknown object {:?}", args.object))?;

    if let Some(count) = args.batch {
        if args.mesh.is_some() {
            bail!("batch mode runs on builtin shapes only");
        }
        let table = bound_table(config.table_cache.as_deref())?;
        create_dir(&args.out_dir)?;
        let csv_path = args.out_dir.join("batch.csv");
        let mut writer =
            csv::Writer::from_path(&csv_path).with_context(|| format!("writing {}", csv_path.display()))?;
        let mut rows = Vec::new();
        for i in 0..count {
            let kind = if args.all_objects {
                Primitive::ALL[i % Primitive::ALL.len()]
            } else {
                object
            };
            let trial_spec = SimulationSpec {
                seed: trial_seed(seed, i as u64),
                ..spec.clone()
            };
            let mut trial_config = config.clone();
            trial_config.distribution.seed = trial_spec.seed;
            let t0 = Instant::now();
            let sim = simulate_builtin(kind, &trial_spec, &trial_config, &table)?;
            let row = BatchRow::new(i, kind, trial_spec.seed, spec.sample_bound, &sim.outcome);
            eprintln!(
                "trial {i} ({}): bound {:.3} mm / {:.3} deg, {:.1} s",
                kind.name(),
                row.pos_bound * 1e3,
                row.rot_bound.to_degrees(),
                t0.elapsed().as_secs_f64()
            );
            writer.serialize(&row)?;
            writer.flush()?;
            rows.push(row);
        }
        eprintln!("wall time {:.1} s", started.elapsed().as_secs_f64());
        if json {
            println!("{}", serde_json::to_string_pretty(&rows)?);
        } else {
            println!("{}", csv_path.display());
        }
        return Ok(());
    }

    let (mesh, extra_slack, object_name): (TriangleMesh, f64, Option<String>) = match &args.mesh {
        Some(path) => {
            let mesh = load_mesh(path, config.unit.scale())?;
            (if args.normalize { normalize_mesh(&mesh) } else { mesh }, 0.0, None)
        }
        None => {
            let b = fixpose_core::sim::builtin_primitive(object);
            (b.mesh, b.sagitta, Some(object.name().to_string()))
        }
    };
    let spec = SimulationSpec {
        extra_slack: extra_slack + (config.numeric_slack - fixpose_core::init_bound::DEFAULT_NUMERIC_SLACK).max(0.0),
        ..spec
    };
    let trial = run_trial(&mesh, &spec)?;
    create_dir(&args.out_dir)?;
    let file = TrialFile {
        object: object_name,
        spec: spec.clone(),
        ground_truth: PoseJson::from(&trial.ground_truth),
        points: to_arrays(trial.measurements.points()),
        surface_points: to_arrays(&trial.surface_points),
        noise: trial.noise.iter().map(|n| [n.x, n.y, n.z]).collect(),
        numeric_slack: trial.measurements.numeric_slack(),
    };
    let trial_path = args.out_dir.join("trial.json");
    write_json(&file, &trial_path)?;
    write_points_csv(trial.measurements.points(), &args.out_dir.join("points.csv"))?;
    write_obj(&mesh, &args.out_dir.join("mesh.obj"))?;

    if args.run {
        let table = bound_table(config.table_cache.as_deref())?;
        let run = run_bound(&mesh, &trial.measurements, &config, &table, true)?;
        let outcome = score(&run, &trial.ground_truth);
        let path = write_run_outputs(&run, &args.out_dir, true)?;
        write_json(&outcome, &args.out_dir.join("errors.json"))?;
        eprintln!(
            "true error: point estimate {:.3} mm / {:.3} deg, truth in superset: {}",
            outcome.point_pos_err * 1e3,
            outcome.point_rot_err.to_degrees(),
            outcome.truth_in_superset
        );
        emit_report(&run.report, &path, json, started);
    } else if json {
        println!("{}", serde_json::to_string_pretty(&file)?);
    } else {
        println!("{}", trial_path.display());
    }
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs, mut config: Config, json: bool) -> Result<()> {
    if let Some(m) = args.margin {
        config.calibration.margin = m;
    }
    if let Some(f) = args.floor {
        config.calibration.bound_floor = f;
    }
    let log = read_pose_log_csv(&args.log)?;
    let calibration = calibrate(&log, &config.calibration)?;
    write_json(&calibration, &args.out)?;
    let max_residual = calibration.residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    eprintln!(
        "tip [{:.3}, {:.3}, {:.3}] mm, max residual {:.3} mm, b_s {:.3} mm",
        calibration.tip.x * 1e3,
        calibration.tip.y * 1e3,
        calibration.tip.z * 1e3,
        max_residual * 1e3,
        calibration.sample_bound * 1e3
    );
    if json {
        println!("{}", serde_json::to_string_pretty(&calibration)?);
    } else {
        println!("{}", args.out.display());
    }
    Ok(())
}

fn cmd_plot(args: PlotArgs, json: bool) -> Result<()> {
    let samples = read_distribution_jsonl(&args.distribution)?;
    if samples.is_empty() {
        bail!("{}: no samples", args.distribution.display());
    }
    let truths = match &args.truth {
        Some(path) => {
            let trial: TrialFile = read_json(path)?;
            vec![trial.ground_truth.isometry().rotation]
        }
        None => Vec::new(),
    };
    let weighted: Vec<_> = samples.iter().map(|s| (s.pose.rotation, s.probability)).collect();
    std::fs::write(&args.out, mollweide_svg(&weighted, &truths))
        .with_context(|| format!("writing {}", args.out.display()))?;
    if json {
        println!("{}", serde_json::json!({ "plot": args.out }));
    } else {
        println!("{}", args.out.display());
    }
    Ok(())
}
