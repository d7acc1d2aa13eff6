//! Localization metrics and the batch evaluation runner.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::database::PoseRayDatabase;
use crate::filter::MotionNoise;
use crate::pose::Pose;
use crate::sim::{run_tracking_detailed, SimError, StageTimings, TrackStep, Trajectory};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("prediction/truth lengths differ ({predictions} vs {truths}) or are empty")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("track of length {len} is shorter than the last-{last_k} window")]
    TooShort { len: usize, last_k: usize },
}

/// Recall percentages at the standard thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub at_0_1m: f64,
    pub at_0_5m: f64,
    pub at_1m: f64,
    pub at_1m_30deg: f64,
}

/// Fraction of predictions within each position threshold (plus the joint
/// 1 m / 30° threshold with circular orientation error), as percentages.
pub fn recall_at(predictions: &[Pose], truths: &[Pose]) -> Result<RecallReport, EvalError> {
    if predictions.len() != truths.len() || predictions.is_empty() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    let n = predictions.len() as f64;
    let mut hits = [0usize; 4];
    for (pred, truth) in predictions.iter().zip(truths) {
        let position = pred.position_distance(truth);
        let heading = pred.heading_distance(truth);
        if position <= 0.1 {
            hits[0] += 1;
        }
        if position <= 0.5 {
            hits[1] += 1;
        }
        if position <= 1.0 {
            hits[2] += 1;
            if heading <= 30.0f64.to_radians() {
                hits[3] += 1;
            }
        }
    }
    Ok(RecallReport {
        at_0_1m: 100.0 * hits[0] as f64 / n,
        at_0_5m: 100.0 * hits[1] as f64 / n,
        at_1m: 100.0 * hits[2] as f64 / n,
        at_1m_30deg: 100.0 * hits[3] as f64 / n,
    })
}

/// Last-window success verdict and RMSEs.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessStats {
    pub success: bool,
    /// RMSE over the last window, reported only on success.
    pub rmse_succeeded: Option<f64>,
    /// RMSE over the last window, reported regardless.
    pub rmse_all: f64,
}

/// A run succeeds at `radius_m` when every one of the last `last_k` position
/// errors stays within the radius; both RMSEs are computed over that window.
pub fn success_and_rmse(
    predictions: &[Pose],
    truths: &[Pose],
    radius_m: f64,
    last_k: usize,
) -> Result<SuccessStats, EvalError> {
    if predictions.len() != truths.len() || predictions.is_empty() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    if predictions.len() < last_k || last_k == 0 {
        return Err(EvalError::TooShort {
            len: predictions.len(),
            last_k,
        });
    }
    let start = predictions.len() - last_k;
    let errors: Vec<f64> = predictions[start..]
        .iter()
        .zip(&truths[start..])
        .map(|(p, t)| p.position_distance(t))
        .collect();
    let success = errors.iter().all(|e| *e <= radius_m);
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / last_k as f64).sqrt();
    Ok(SuccessStats {
        success,
        rmse_succeeded: success.then_some(rmse),
        rmse_all: rmse,
    })
}

/// Evaluation settings; echoed into the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub orientations: usize,
    pub sigma_xy: f64,
    pub sigma_phi_deg: f64,
    pub success_radii_m: Vec<f64>,
    /// Radius whose succeeded runs feed `rmse_succeeded_m`.
    pub reference_radius_m: f64,
    pub last_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            orientations: 36,
            sigma_xy: 0.05,
            sigma_phi_deg: 3.0,
            success_radii_m: vec![0.5, 1.0],
            reference_radius_m: 1.0,
            last_k: 10,
        }
    }
}

impl EvalConfig {
    pub fn motion_noise(&self) -> MotionNoise {
        MotionNoise {
            sigma_x: self.sigma_xy,
            sigma_y: self.sigma_xy,
            sigma_phi: self.sigma_phi_deg.to_radians(),
        }
    }
}

/// Database facts echoed into the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatabaseEcho {
    pub width: usize,
    pub height: usize,
    pub resolution_m: f64,
    pub ray_count: usize,
    pub max_range_m: f64,
}

impl DatabaseEcho {
    pub fn from_db(db: &PoseRayDatabase) -> Self {
        Self {
            width: db.width(),
            height: db.height(),
            resolution_m: db.resolution(),
            ray_count: db.ray_count(),
            max_range_m: db.max_range(),
        }
    }
}

/// Aggregated evaluation results across trajectories.
///
/// Timing is populated only on request: wall-clock numbers vary run to run
/// and would break byte-identical reports.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub recall: RecallReport,
    pub success_rate_at: BTreeMap<String, f64>,
    pub rmse_succeeded_m: Option<f64>,
    pub rmse_all_m: f64,
    pub runs: usize,
    pub steps_evaluated: usize,
    pub trajectories: Vec<String>,
    pub config: EvalConfig,
    pub database: DatabaseEcho,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<StageTimings>,
}

/// Runs tracking over every trajectory (in parallel) and aggregates the §-style
/// metrics. `names` label the trajectories in the report, in input order.
pub fn run_eval(
    db: &PoseRayDatabase,
    trajectories: &[(String, Trajectory)],
    config: &EvalConfig,
    with_timing: bool,
) -> Result<EvalReport, SimError> {
    let noise = config.motion_noise();
    let results: Vec<Result<(Vec<TrackStep>, StageTimings), SimError>> = trajectories
        .par_iter()
        .map(|(_, traj)| {
            run_tracking_detailed(traj, db, &noise, config.orientations, |_, _| {})
        })
        .collect();

    let mut predictions = Vec::new();
    let mut truths = Vec::new();
    let mut per_run = Vec::new();
    let mut timing = StageTimings::default();
    for ((_, traj), result) in trajectories.iter().zip(results) {
        let (track, t) = result?;
        timing.transition_s += t.transition_s;
        timing.matching_s += t.matching_s;
        timing.update_s += t.update_s;
        timing.total_s += t.total_s;
        timing.steps += t.steps;
        let truth = traj.truths();
        predictions.extend(track.iter().map(|s| s.pose));
        truths.extend(truth.iter().copied());
        per_run.push((track.iter().map(|s| s.pose).collect::<Vec<_>>(), truth));
    }

    let recall = recall_at(&predictions, &truths).expect("non-empty evaluation");

    let mut success_rate_at = BTreeMap::new();
    for radius in &config.success_radii_m {
        let mut succeeded = 0usize;
        for (track, truth) in &per_run {
            let stats = success_and_rmse(track, truth, *radius, config.last_k)
                .expect("tracks long enough");
            if stats.success {
                succeeded += 1;
            }
        }
        success_rate_at.insert(
            format!("{radius:.2}m"),
            100.0 * succeeded as f64 / per_run.len() as f64,
        );
    }

    let mut rmse_succeeded = Vec::new();
    let mut rmse_all = Vec::new();
    for (track, truth) in &per_run {
        let stats = success_and_rmse(track, truth, config.reference_radius_m, config.last_k)
            .expect("tracks long enough");
        rmse_all.push(stats.rmse_all);
        if let Some(r) = stats.rmse_succeeded {
            rmse_succeeded.push(r);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    Ok(EvalReport {
        recall,
        success_rate_at,
        rmse_succeeded_m: (!rmse_succeeded.is_empty()).then(|| mean(&rmse_succeeded)),
        rmse_all_m: mean(&rmse_all),
        runs: per_run.len(),
        steps_evaluated: predictions.len(),
        trajectories: trajectories.iter().map(|(name, _)| name.clone()).collect(),
        config: config.clone(),
        database: DatabaseEcho::from_db(db),
        version: version_string(),
        timing: with_timing.then_some(timing),
    })
}

/// `git describe` of the working directory when available, otherwise the
/// crate version. Stable across identical invocations on the same checkout.
pub fn version_string() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|out| out.status.success())
        .and_then(|out| String::from_utf8(out.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| env!("CARGO_PKG_VERSION").to_string())
}
