//! Floorplan localization engine.
//!
//! Estimates and tracks an SE(2) camera pose inside a 2D occupancy floorplan
//! by matching equiangular ray scans against a precomputed pose-ray database
//! and integrating evidence over time with a histogram filter whose motion
//! update is a grouped convolution.
//!
//! The pipeline, bottom to top:
//!
//! - [`grid`] / [`raycast`] / [`scan`] / [`database`]: floorplans, exact DDA
//!   raycasting, ray scans, and the offline circular-scan database.
//! - [`gravity`]: virtual roll-pitch homography and visibility masking.
//! - [`depth`]: plane-sweep floorplan depth with soft-argmin readout and
//!   monocular/multiview fusion.
//! - [`observation`]: equiangular interpolation and the observation
//!   likelihood over the full pose grid.
//! - [`filter`]: the SE(2) histogram filter (grouped-convolution transition,
//!   Bayes update).
//! - [`sim`] / [`eval`]: trajectory simulation, tracking, and metrics.

pub mod camera;
pub mod database;
pub mod depth;
pub mod eval;
pub mod filter;
pub mod fixtures;
pub mod gravity;
pub mod grid;
pub mod observation;
pub mod pgm;
pub mod pose;
pub mod raycast;
pub mod scan;
pub mod sim;

pub use camera::Intrinsics;
pub use database::{DatabaseError, PoseRayDatabase};
pub use depth::{
    depth_loss, fuse_distributions, plane_sweep_cost, smooth_cost, soft_argmin,
    threshold_selection_weight, CostDistribution, DepthDistribution, DepthError, DepthHypotheses,
    FloorplanDepth, SelectionThresholds, SelectionWeight, SmoothRadius, SourceView, ViewSet,
};
pub use eval::{
    recall_at, run_eval, success_and_rmse, version_string, EvalConfig, EvalError, EvalReport,
    RecallReport, SuccessStats,
};
pub use filter::{
    FilterError, MotionNoise, PosteriorReadout, ProbabilityVolume, TransitionKernel,
};
pub use gravity::{GravityAlignment, GravityConfig, HomographyError, VisibilityMask};
pub use grid::{GridError, MapSidecar, OccupancyGrid};
pub use observation::{
    argmax_pose, export_volume_pgms, interpolate_equiangular, likelihood_volume,
    observation_log_likelihood, LikelihoodVolume, ObservationError,
};
pub use pose::{EgoMotion, Pose};
pub use raycast::{cast_ray, render_circular_scan, render_fov_scan, RaycastError};
pub use scan::{slice_fov_scan, RayScan, SliceError};
pub use sim::{
    perturb_scan, run_tracking, run_tracking_detailed, simulate_trajectory,
    simulate_trajectory_with, MotionProfile, NoiseModel, SimConfig, SimError, StageTimings,
    TrackStep, Trajectory, TrajectoryStep,
};
