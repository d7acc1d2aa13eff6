//! Trajectory simulation, observation noise, and end-to-end tracking.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::database::PoseRayDatabase;
use crate::filter::{FilterError, MotionNoise, ProbabilityVolume, TransitionKernel};
use crate::grid::OccupancyGrid;
use crate::observation::likelihood_volume;
use crate::pose::{EgoMotion, Pose};
use crate::raycast::{cast_ray, render_fov_scan, RaycastError};
use crate::scan::RayScan;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("start pose ({0}, {1}) is occupied or outside the map")]
    StartOccupied(f64, f64),
    #[error("no collision-free step found after 50 proposals at step {step}")]
    Stuck { step: usize },
    #[error(transparent)]
    Raycast(#[from] RaycastError),
    #[error("filter failed at step {step}: {source}")]
    Filter { step: usize, source: FilterError },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("trajectory parse error at line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

/// Observation and odometry noise for the simulator. Zeros are allowed
/// everywhere (a noiseless run); `seed` makes every draw reproducible.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub range_sigma: f64,
    pub dropout_prob: f64,
    pub ego_sigma: MotionNoise,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless(seed: u64) -> Self {
        Self {
            range_sigma: 0.0,
            dropout_prob: 0.0,
            ego_sigma: MotionNoise {
                sigma_x: 0.0,
                sigma_y: 0.0,
                sigma_phi: 0.0,
            },
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionProfile {
    /// Forward walking with small heading jitter.
    Forward,
    /// Forward walking mixed with in-place turns.
    General,
}

/// Simulator tuning; the defaults mimic a phone-carrying walker.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub step_length: f64,
    pub step_length_sigma: f64,
    pub heading_jitter: f64,
    pub turn_probability: f64,
    pub turn_min: f64,
    pub turn_max: f64,
    pub n_rays: usize,
    pub fov: f64,
    pub max_range: f64,
    pub lookahead_margin: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step_length: 0.2,
            step_length_sigma: 0.02,
            heading_jitter: 5.0f64.to_radians(),
            turn_probability: 0.3,
            turn_min: 10.0f64.to_radians(),
            turn_max: 30.0f64.to_radians(),
            n_rays: 40,
            fov: 108.0f64.to_radians(),
            max_range: 15.0,
            lookahead_margin: 0.2,
        }
    }
}

/// One simulated frame: where the agent truly is, the odometry it reported
/// for getting there, and what it observed.
#[derive(Debug, Clone)]
pub struct TrajectoryStep {
    pub pose: Pose,
    pub ego: EgoMotion,
    pub scan: RayScan,
}

/// A simulated walk: step 0 is the start pose with an identity ego-motion.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub seed: u64,
}

impl Trajectory {
    pub fn truths(&self) -> Vec<Pose> {
        self.steps.iter().map(|s| s.pose).collect()
    }

    /// Writes JSON Lines, one step per line.
    pub fn save_jsonl(&self, path: &Path) -> Result<(), SimError> {
        let mut file = io::BufWriter::new(fs::File::create(path)?);
        for step in &self.steps {
            let record = TrajectoryRecord::from(step);
            serde_json::to_writer(&mut file, &record)
                .map_err(|source| SimError::Parse { line: 0, source })?;
            file.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<Self, SimError> {
        let file = io::BufReader::new(fs::File::open(path)?);
        let mut steps = Vec::new();
        for (i, line) in file.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TrajectoryRecord = serde_json::from_str(&line)
                .map_err(|source| SimError::Parse { line: i + 1, source })?;
            steps.push(record.into());
        }
        Ok(Self { steps, seed: 0 })
    }
}

/// Wire form of a trajectory step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub pose: [f64; 3],
    pub ego: [f64; 3],
    pub scan: ScanRecord,
}

/// Wire form of a ray scan (`step` is the angular step in radians).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRecord {
    pub start_angle: f64,
    pub step: f64,
    pub max_range: f64,
    pub ranges: Vec<f64>,
    pub valid: Vec<bool>,
}

impl From<&TrajectoryStep> for TrajectoryRecord {
    fn from(step: &TrajectoryStep) -> Self {
        Self {
            pose: [step.pose.x, step.pose.y, step.pose.phi],
            ego: [step.ego.tx, step.ego.ty, step.ego.tphi],
            scan: ScanRecord::from(&step.scan),
        }
    }
}

impl From<TrajectoryRecord> for TrajectoryStep {
    fn from(record: TrajectoryRecord) -> Self {
        Self {
            pose: Pose::new(record.pose[0], record.pose[1], record.pose[2]),
            ego: EgoMotion::new(record.ego[0], record.ego[1], record.ego[2]),
            scan: record.scan.into(),
        }
    }
}

impl From<&RayScan> for ScanRecord {
    fn from(scan: &RayScan) -> Self {
        Self {
            start_angle: scan.start_angle,
            step: scan.angular_step,
            max_range: scan.max_range,
            ranges: scan.ranges.clone(),
            valid: scan.valid.clone(),
        }
    }
}

impl From<ScanRecord> for RayScan {
    fn from(record: ScanRecord) -> Self {
        RayScan::new(
            record.start_angle,
            record.step,
            record.max_range,
            record.ranges,
            record.valid,
        )
    }
}

/// Simulates a seeded walk with rendered, noise-perturbed observations.
pub fn simulate_trajectory(
    map: &OccupancyGrid,
    start: &Pose,
    n_steps: usize,
    profile: MotionProfile,
    noise: &NoiseModel,
) -> Result<Trajectory, SimError> {
    simulate_trajectory_with(map, start, n_steps, profile, noise, &SimConfig::default())
}

pub fn simulate_trajectory_with(
    map: &OccupancyGrid,
    start: &Pose,
    n_steps: usize,
    profile: MotionProfile,
    noise: &NoiseModel,
    config: &SimConfig,
) -> Result<Trajectory, SimError> {
    if map
        .cell_of(start.x, start.y)
        .map(|(ix, iy)| map.is_occupied(ix, iy))
        != Some(false)
    {
        return Err(SimError::StartOccupied(start.x, start.y));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut steps = Vec::with_capacity(n_steps + 1);
    let observe = |pose: &Pose, rng: &mut ChaCha8Rng| -> Result<RayScan, SimError> {
        let clean = render_fov_scan(map, pose, config.n_rays, config.fov, config.max_range)?;
        Ok(perturb_scan_with_rng(&clean, noise, rng))
    };

    let scan = observe(start, &mut rng)?;
    steps.push(TrajectoryStep {
        pose: *start,
        ego: EgoMotion::identity(),
        scan,
    });

    let mut pose = *start;
    for step_index in 1..=n_steps {
        let true_ego = propose_motion(map, &pose, profile, config, &mut rng)
            .ok_or(SimError::Stuck { step: step_index })?;
        pose = pose.compose(&true_ego);
        let recorded = perturb_ego(&true_ego, &noise.ego_sigma, &mut rng);
        let scan = observe(&pose, &mut rng)?;
        steps.push(TrajectoryStep {
            pose,
            ego: recorded,
            scan,
        });
    }

    Ok(Trajectory {
        steps,
        seed: noise.seed,
    })
}

/// Picks the next true ego-motion, avoiding walls by raycast lookahead.
/// Forward proposals start with small heading jitter and widen to full turns;
/// `None` after 50 rejected proposals.
fn propose_motion(
    map: &OccupancyGrid,
    pose: &Pose,
    profile: MotionProfile,
    config: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Option<EgoMotion> {
    if profile == MotionProfile::General && rng.gen::<f64>() < config.turn_probability {
        let magnitude = rng.gen_range(config.turn_min..=config.turn_max);
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        return Some(EgoMotion::new(0.0, 0.0, sign * magnitude));
    }

    let jitter_dist = Normal::new(0.0, config.heading_jitter).expect("finite jitter sigma");
    let length_dist = Normal::new(0.0, config.step_length_sigma.max(1e-12)).expect("finite sigma");
    for attempt in 0..50 {
        let jitter = if attempt < 10 {
            jitter_dist.sample(rng)
        } else {
            rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
        };
        let step = (config.step_length + length_dist.sample(rng)).max(0.05);
        let heading = pose.phi + jitter;
        let lookahead = step + config.lookahead_margin;
        let clear = match cast_ray(map, (pose.x, pose.y), heading, lookahead) {
            Ok(None) => true,
            Ok(Some(_)) => false,
            Err(_) => false,
        };
        if clear {
            return Some(EgoMotion::new(step * jitter.cos(), step * jitter.sin(), jitter));
        }
    }
    None
}

fn perturb_ego(ego: &EgoMotion, sigma: &MotionNoise, rng: &mut ChaCha8Rng) -> EgoMotion {
    let mut draw = |sigma: f64| -> f64 {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
        } else {
            0.0
        }
    };
    let dx = draw(sigma.sigma_x);
    let dy = draw(sigma.sigma_y);
    let dphi = draw(sigma.sigma_phi);
    EgoMotion::new(ego.tx + dx, ego.ty + dy, ego.tphi + dphi)
}

/// Adds Gaussian range noise and random dropouts to a scan; deterministic for
/// a given `noise.seed`.
pub fn perturb_scan(scan: &RayScan, noise: &NoiseModel) -> RayScan {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    perturb_scan_with_rng(scan, noise, &mut rng)
}

pub fn perturb_scan_with_rng(scan: &RayScan, noise: &NoiseModel, rng: &mut ChaCha8Rng) -> RayScan {
    if noise.range_sigma == 0.0 && noise.dropout_prob == 0.0 {
        return scan.clone();
    }
    let normal = (noise.range_sigma > 0.0)
        .then(|| Normal::new(0.0, noise.range_sigma).expect("finite sigma"));
    let mut out = scan.clone();
    for i in 0..out.len() {
        if !out.valid[i] {
            continue;
        }
        if let Some(normal) = &normal {
            out.ranges[i] = (out.ranges[i] + normal.sample(rng)).clamp(0.0, out.max_range);
        }
        if noise.dropout_prob > 0.0 && rng.gen::<f64>() < noise.dropout_prob {
            out.valid[i] = false;
            out.ranges[i] = out.max_range;
        }
    }
    out
}

/// Per-step posterior readout of a tracking run.
#[derive(Debug, Clone)]
pub struct TrackStep {
    pub pose: Pose,
    pub probability: f64,
}

/// Wall-clock seconds spent in each filter stage across a tracking run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct StageTimings {
    pub transition_s: f64,
    pub matching_s: f64,
    pub update_s: f64,
    pub total_s: f64,
    pub steps: usize,
}

/// Runs the full filter over a trajectory: uniform init, then per step a
/// transition from the recorded ego-motion, likelihood matching of the scan,
/// and a Bayes update. Step 0 performs the update only.
pub fn run_tracking(
    trajectory: &Trajectory,
    db: &PoseRayDatabase,
    noise: &MotionNoise,
    orientations: usize,
) -> Result<Vec<TrackStep>, SimError> {
    run_tracking_detailed(trajectory, db, noise, orientations, |_, _| {}).map(|(steps, _)| steps)
}

/// [`run_tracking`] with per-step access to the posterior volume and stage
/// timings (posterior shown after each step's update).
pub fn run_tracking_detailed(
    trajectory: &Trajectory,
    db: &PoseRayDatabase,
    noise: &MotionNoise,
    orientations: usize,
    mut on_step: impl FnMut(usize, &ProbabilityVolume),
) -> Result<(Vec<TrackStep>, StageTimings), SimError> {
    let started = Instant::now();
    let mut timings = StageTimings::default();
    let mut volume = ProbabilityVolume::uniform_over_db(db, orientations)
        .map_err(|source| SimError::Filter { step: 0, source })?;
    let mut readouts = Vec::with_capacity(trajectory.steps.len());

    for (step, frame) in trajectory.steps.iter().enumerate() {
        if step > 0 {
            let t0 = Instant::now();
            let kernel =
                TransitionKernel::build(&frame.ego, noise, db.resolution(), orientations);
            volume = volume
                .predict(&kernel)
                .map_err(|source| SimError::Filter { step, source })?;
            timings.transition_s += t0.elapsed().as_secs_f64();
        }

        let t0 = Instant::now();
        let likelihood = likelihood_volume(&frame.scan, db, orientations);
        timings.matching_s += t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        volume = volume
            .update(&likelihood)
            .map_err(|source| SimError::Filter { step, source })?;
        timings.update_s += t0.elapsed().as_secs_f64();

        let readout = volume.readout();
        readouts.push(TrackStep {
            pose: readout.pose,
            probability: readout.probability,
        });
        on_step(step, &volume);
        timings.steps += 1;
    }

    timings.total_s = started.elapsed().as_secs_f64();
    Ok((readouts, timings))
}
