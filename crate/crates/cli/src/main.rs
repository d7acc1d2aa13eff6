//! Command-line front end: database construction, simulation, single-frame
//! localization, sequential tracking, batch evaluation, and posterior
//! rendering.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use floorloc_core::{
    argmax_pose, export_volume_pgms, likelihood_volume, recall_at, run_eval,
    run_tracking_detailed, simulate_trajectory_with, version_string, EvalConfig, MotionNoise,
    MotionProfile, NoiseModel, OccupancyGrid, Pose, PoseRayDatabase, ProbabilityVolume, RayScan,
    SimConfig, Trajectory,
};

#[derive(Parser)]
#[command(name = "floorloc", version, about = "Floorplan localization engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Forward,
    General,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureName {
    TwoRoom,
    Large,
    Square,
    Corridor,
}

#[derive(Subcommand)]
enum Command {
    /// Precompute the pose-ray database for a floorplan image.
    BuildDb {
        /// Floorplan image (PGM or PNG) with a `<stem>.json` sidecar.
        map: PathBuf,
        /// Rays per circular scan.
        #[arg(long, default_value_t = 120)]
        rays: usize,
        /// Maximum ray range in meters.
        #[arg(long, default_value_t = 15.0)]
        max_range: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Simulate a seeded trajectory with noisy observations.
    Simulate {
        map: PathBuf,
        #[arg(long, value_enum, default_value = "forward")]
        profile: Profile,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Start pose "x,y,phi_deg"; a random free cell when omitted.
        #[arg(long)]
        start: Option<String>,
        #[arg(long, default_value_t = 0.1)]
        range_sigma: f64,
        #[arg(long, default_value_t = 0.05)]
        dropout: f64,
        #[arg(long, default_value_t = 0.02)]
        ego_sigma_xy: f64,
        #[arg(long, default_value_t = 1.0)]
        ego_sigma_phi_deg: f64,
        #[arg(long, default_value_t = 40)]
        n_rays: usize,
        #[arg(long, default_value_t = 108.0)]
        fov_deg: f64,
        #[arg(long, default_value_t = 15.0)]
        max_range: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Localize a single scan against a database.
    Localize {
        db: PathBuf,
        /// JSON file: either a bare scan object or a trajectory record with
        /// "scan" (and optionally "pose" as ground truth).
        scan: PathBuf,
        #[arg(long, default_value_t = 36)]
        orientations: usize,
    },
    /// Track a trajectory with the histogram filter.
    Track {
        db: PathBuf,
        trajectory: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        sigma_xy: f64,
        #[arg(long, default_value_t = 3.0)]
        sigma_phi_deg: f64,
        #[arg(long, default_value_t = 36)]
        orientations: usize,
        /// Directory for per-step posterior composites and the final volume.
        #[arg(long)]
        snapshots: Option<PathBuf>,
    },
    /// Track many trajectories and write an aggregate JSON report.
    Eval {
        db: PathBuf,
        /// Trajectory files (.jsonl) or directories of them.
        #[arg(required = true)]
        trajectories: Vec<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        sigma_xy: f64,
        #[arg(long, default_value_t = 3.0)]
        sigma_phi_deg: f64,
        #[arg(long, default_value_t = 36)]
        orientations: usize,
        /// Success radii in meters, comma separated.
        #[arg(long, default_value = "0.5,1.0")]
        radii: String,
        /// Include wall-clock timing in the report (breaks byte-for-byte
        /// reproducibility across runs).
        #[arg(long)]
        timing: bool,
    },
    /// Render a saved probability volume to PGM images.
    RenderPosterior {
        volume: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write a built-in synthetic floorplan (image + sidecar).
    Fixture {
        #[arg(value_enum)]
        name: FixtureName,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::BuildDb {
            map,
            rays,
            max_range,
            output,
        } => build_db(&map, rays, max_range, &output),
        Command::Simulate {
            map,
            profile,
            steps,
            seed,
            start,
            range_sigma,
            dropout,
            ego_sigma_xy,
            ego_sigma_phi_deg,
            n_rays,
            fov_deg,
            max_range,
            output,
        } => simulate(
            &map,
            profile,
            steps,
            seed,
            start.as_deref(),
            range_sigma,
            dropout,
            ego_sigma_xy,
            ego_sigma_phi_deg,
            n_rays,
            fov_deg,
            max_range,
            &output,
        ),
        Command::Localize {
            db,
            scan,
            orientations,
        } => localize(&db, &scan, orientations),
        Command::Track {
            db,
            trajectory,
            sigma_xy,
            sigma_phi_deg,
            orientations,
            snapshots,
        } => track(
            &db,
            &trajectory,
            sigma_xy,
            sigma_phi_deg,
            orientations,
            snapshots.as_deref(),
        ),
        Command::Eval {
            db,
            trajectories,
            report,
            sigma_xy,
            sigma_phi_deg,
            orientations,
            radii,
            timing,
        } => eval(
            &db,
            &trajectories,
            &report,
            sigma_xy,
            sigma_phi_deg,
            orientations,
            &radii,
            timing,
        ),
        Command::RenderPosterior { volume, output } => render_posterior(&volume, &output),
        Command::Fixture { name, output } => fixture(name, &output),
    }
}

fn build_db(map_path: &Path, rays: usize, max_range: f64, output: &Path) -> Result<()> {
    let map = OccupancyGrid::load(map_path)
        .with_context(|| format!("loading floorplan {}", map_path.display()))?;
    let db = PoseRayDatabase::build(&map, rays, max_range)?;
    db.save(output)?;
    eprintln!(
        "built database: {}×{} cells, {} free, {} rays, max range {} m -> {}",
        db.width(),
        db.height(),
        db.free_cell_count(),
        db.ray_count(),
        db.max_range(),
        output.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    map_path: &Path,
    profile: Profile,
    steps: usize,
    seed: u64,
    start: Option<&str>,
    range_sigma: f64,
    dropout: f64,
    ego_sigma_xy: f64,
    ego_sigma_phi_deg: f64,
    n_rays: usize,
    fov_deg: f64,
    max_range: f64,
    output: &Path,
) -> Result<()> {
    let map = OccupancyGrid::load(map_path)?;
    let start = match start {
        Some(text) => parse_start(text)?,
        None => random_free_pose(&map, seed),
    };
    let noise = NoiseModel {
        range_sigma,
        dropout_prob: dropout,
        ego_sigma: MotionNoise {
            sigma_x: ego_sigma_xy,
            sigma_y: ego_sigma_xy,
            sigma_phi: ego_sigma_phi_deg.to_radians(),
        },
        seed,
    };
    let config = SimConfig {
        n_rays,
        fov: fov_deg.to_radians(),
        max_range,
        ..SimConfig::default()
    };
    let profile = match profile {
        Profile::Forward => MotionProfile::Forward,
        Profile::General => MotionProfile::General,
    };
    let trajectory = simulate_trajectory_with(&map, &start, steps, profile, &noise, &config)?;
    trajectory.save_jsonl(output)?;
    eprintln!(
        "simulated {} steps from ({:.2}, {:.2}, {:.1}°) with seed {} -> {}",
        steps,
        start.x,
        start.y,
        start.phi.to_degrees(),
        seed,
        output.display()
    );
    Ok(())
}

fn parse_start(text: &str) -> Result<Pose> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .context("start pose must be x,y,phi_deg")?;
    if parts.len() != 3 {
        bail!("start pose must have exactly three components, got {}", parts.len());
    }
    Ok(Pose::new(parts[0], parts[1], parts[2].to_radians()))
}

/// Deterministic free-cell start: a seeded pick among free cells.
fn random_free_pose(map: &OccupancyGrid, seed: u64) -> Pose {
    let free: Vec<usize> = (0..map.width() * map.height())
        .filter(|idx| !map.cells()[*idx])
        .collect();
    // splitmix64 step keeps this reproducible without an RNG dependency here.
    let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
    state ^= state >> 30;
    state = state.wrapping_mul(0xbf58476d1ce4e5b9);
    state ^= state >> 27;
    let pick = free[(state as usize) % free.len()];
    let (ix, iy) = (pick % map.width(), pick / map.width());
    let (x, y) = map.cell_center(ix, iy);
    let heading = (state >> 32) as f64 / u32::MAX as f64 * std::f64::consts::TAU;
    Pose::new(x, y, heading)
}

fn localize(db_path: &Path, scan_path: &Path, orientations: usize) -> Result<()> {
    let db = PoseRayDatabase::load(db_path)?;
    let text = fs::read_to_string(scan_path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;

    let (scan, truth): (RayScan, Option<Pose>) = if value.get("scan").is_some() {
        let record: floorloc_core::sim::TrajectoryRecord = serde_json::from_value(value)?;
        let step: floorloc_core::sim::TrajectoryStep = record.into();
        (step.scan, Some(step.pose))
    } else {
        let record: floorloc_core::sim::ScanRecord = serde_json::from_value(value)?;
        (record.into(), None)
    };

    let volume = likelihood_volume(&scan, &db, orientations);
    let (pose, log_lik) = argmax_pose(&volume)?;
    println!(
        "pose: x={:.3} y={:.3} phi_deg={:.1} log_likelihood={:.4}",
        pose.x,
        pose.y,
        pose.phi.to_degrees(),
        log_lik
    );
    if let Some(truth) = truth {
        let recall = recall_at(&[pose], &[truth])?;
        println!(
            "truth: x={:.3} y={:.3} phi_deg={:.1} | position error {:.3} m, heading error {:.1}°",
            truth.x,
            truth.y,
            truth.phi.to_degrees(),
            pose.position_distance(&truth),
            pose.heading_distance(&truth).to_degrees()
        );
        println!(
            "recall entry: @0.1m={} @0.5m={} @1m={} @1m30°={}",
            recall.at_0_1m == 100.0,
            recall.at_0_5m == 100.0,
            recall.at_1m == 100.0,
            recall.at_1m_30deg == 100.0
        );
    }
    Ok(())
}

fn track(
    db_path: &Path,
    trajectory_path: &Path,
    sigma_xy: f64,
    sigma_phi_deg: f64,
    orientations: usize,
    snapshots: Option<&Path>,
) -> Result<()> {
    let db = PoseRayDatabase::load(db_path)?;
    let trajectory = Trajectory::load_jsonl(trajectory_path)?;
    let noise = MotionNoise {
        sigma_x: sigma_xy,
        sigma_y: sigma_xy,
        sigma_phi: sigma_phi_deg.to_radians(),
    };

    if let Some(dir) = snapshots {
        fs::create_dir_all(dir)?;
    }
    let mut final_volume: Option<ProbabilityVolume> = None;
    let (track, timings) = run_tracking_detailed(
        &trajectory,
        &db,
        &noise,
        orientations,
        |step, volume: &ProbabilityVolume| {
            if let Some(dir) = snapshots {
                let wh = volume.width * volume.height;
                let mut composite = vec![f64::NEG_INFINITY; wh];
                for k in 0..volume.orientations {
                    for (c, v) in composite.iter_mut().zip(&volume.p[k * wh..(k + 1) * wh]) {
                        *c = c.max(*v);
                    }
                }
                let _ = export_volume_pgms(
                    volume.width,
                    volume.height,
                    1,
                    &composite,
                    dir,
                    &format!("step_{step:04}"),
                );
                final_volume = Some(volume.clone());
            }
        },
    )?;

    for (step, (readout, frame)) in track.iter().zip(&trajectory.steps).enumerate() {
        println!(
            "step {:4}: x={:.3} y={:.3} phi_deg={:7.1} p={:.4} | error {:.3} m / {:.1}°",
            step,
            readout.pose.x,
            readout.pose.y,
            readout.pose.phi.to_degrees(),
            readout.probability,
            readout.pose.position_distance(&frame.pose),
            readout.pose.heading_distance(&frame.pose).to_degrees()
        );
    }
    eprintln!(
        "timing: transition {:.3} s, matching {:.3} s, update {:.3} s over {} steps ({:.1} ms/step)",
        timings.transition_s,
        timings.matching_s,
        timings.update_s,
        timings.steps,
        1e3 * timings.total_s / timings.steps.max(1) as f64
    );
    if let (Some(dir), Some(volume)) = (snapshots, final_volume) {
        volume.save(&dir.join("final.flpv"))?;
        export_volume_pgms(
            volume.width,
            volume.height,
            volume.orientations,
            &volume.p,
            dir,
            "final",
        )?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval(
    db_path: &Path,
    trajectory_args: &[PathBuf],
    report_path: &Path,
    sigma_xy: f64,
    sigma_phi_deg: f64,
    orientations: usize,
    radii: &str,
    timing: bool,
) -> Result<()> {
    let db = PoseRayDatabase::load(db_path)?;
    let mut files = Vec::new();
    for arg in trajectory_args {
        if arg.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(arg)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().map(|e| e == "jsonl").unwrap_or(false))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(arg.clone());
        }
    }
    if files.is_empty() {
        bail!("no trajectory files found");
    }

    let mut trajectories = Vec::with_capacity(files.len());
    for file in &files {
        let trajectory = Trajectory::load_jsonl(file)
            .with_context(|| format!("loading {}", file.display()))?;
        trajectories.push((file.display().to_string(), trajectory));
    }

    let success_radii_m: Vec<f64> = radii
        .split(',')
        .map(|r| r.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .context("radii must be comma-separated meters")?;
    let reference_radius_m = success_radii_m.iter().cloned().fold(f64::NAN, f64::max);
    let config = EvalConfig {
        orientations,
        sigma_xy,
        sigma_phi_deg,
        success_radii_m,
        reference_radius_m,
        last_k: 10,
    };

    let report = run_eval(&db, &trajectories, &config, timing)?;
    fs::write(report_path, serde_json::to_string_pretty(&report)? + "\n")?;
    eprintln!(
        "evaluated {} runs / {} steps -> {}",
        report.runs,
        report.steps_evaluated,
        report_path.display()
    );
    for (radius, rate) in &report.success_rate_at {
        eprintln!("  success@{radius}: {rate:.1}%");
    }
    eprintln!(
        "  recall@0.1m {:.1}% @0.5m {:.1}% @1m {:.1}% @1m30° {:.1}%",
        report.recall.at_0_1m, report.recall.at_0_5m, report.recall.at_1m, report.recall.at_1m_30deg
    );
    Ok(())
}

fn render_posterior(volume_path: &Path, output: &Path) -> Result<()> {
    let volume = ProbabilityVolume::load(volume_path)?;
    let paths = export_volume_pgms(
        volume.width,
        volume.height,
        volume.orientations,
        &volume.p,
        output,
        "posterior",
    )?;
    eprintln!("wrote {} images to {}", paths.len(), output.display());
    Ok(())
}

fn fixture(name: FixtureName, output: &Path) -> Result<()> {
    let map = match name {
        FixtureName::TwoRoom => floorloc_core::fixtures::two_room_10x8(0.1),
        FixtureName::Large => floorloc_core::fixtures::large_apartment(0.1),
        FixtureName::Square => floorloc_core::fixtures::square_room(40, 40, 0.1),
        FixtureName::Corridor => floorloc_core::fixtures::corridor(120, 14, 0.1),
    };
    map.save_pgm(output)?;
    eprintln!(
        "wrote {}×{} map ({} m/cell) to {} (+ sidecar, engine {})",
        map.width(),
        map.height(),
        map.resolution(),
        output.display(),
        version_string()
    );
    Ok(())
}
