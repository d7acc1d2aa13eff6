//! Geometric floorplan-depth estimation: column-wise plane sweep over ray
//! scans, cost smoothing, soft-argmin readout, and distribution fusion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::Intrinsics;
use crate::pose::{EgoMotion, Pose};
use crate::scan::RayScan;

#[derive(Debug, Error, PartialEq)]
pub enum DepthError {
    #[error("bad depth hypotheses: {0}")]
    BadHypotheses(String),
    #[error("plane sweep requires at least one source view")]
    NoSourceViews,
    #[error("no hypothesis is observed by two or more views anywhere")]
    DegenerateGeometry,
    #[error("depth distributions use different hypothesis grids")]
    HypothesisMismatch,
    #[error("column counts differ ({left} vs {right})")]
    ColumnMismatch { left: usize, right: usize },
    #[error("selection requires at least one relative pose")]
    EmptyPoseList,
    #[error("no column is valid in both depth vectors")]
    NoValidColumns,
    #[error("fusion weight {0} is outside [0, 1]")]
    BadWeight(f64),
}

/// A strictly increasing vector of candidate depths, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthHypotheses {
    values: Vec<f64>,
}

impl DepthHypotheses {
    pub fn new(values: Vec<f64>) -> Result<Self, DepthError> {
        if values.len() < 2 {
            return Err(DepthError::BadHypotheses(format!(
                "need at least 2 hypotheses, got {}",
                values.len()
            )));
        }
        if !(values[0] > 0.0) {
            return Err(DepthError::BadHypotheses(format!(
                "first hypothesis must be positive, got {}",
                values[0]
            )));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DepthError::BadHypotheses(
                "hypotheses must be strictly increasing".into(),
            ));
        }
        Ok(Self { values })
    }

    /// `count` linearly spaced hypotheses over `[min, max]`.
    pub fn linear(min: f64, max: f64, count: usize) -> Result<Self, DepthError> {
        let step = (max - min) / (count.max(2) - 1) as f64;
        Self::new((0..count).map(|i| min + i as f64 * step).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the hypothesis closest to a depth.
    pub fn nearest_index(&self, depth: f64) -> usize {
        let mut best = 0;
        let mut best_err = f64::INFINITY;
        for (i, v) in self.values.iter().enumerate() {
            let err = (v - depth).abs();
            if err < best_err {
                best_err = err;
                best = i;
            }
        }
        best
    }
}

impl Default for DepthHypotheses {
    fn default() -> Self {
        Self::linear(0.1, 15.0, 64).expect("default hypothesis grid is valid")
    }
}

/// A source view for plane sweeping: its scan plus its pose expressed in the
/// reference body frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceView {
    pub pose: Pose,
    pub scan: RayScan,
}

/// A reference scan and one or more source views with known relative poses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewSet {
    pub intrinsics: Intrinsics,
    pub reference: RayScan,
    pub sources: Vec<SourceView>,
}

/// Per-column cost over the hypothesis grid plus per-entry observability.
#[derive(Debug, Clone)]
pub struct CostDistribution {
    pub hypotheses: DepthHypotheses,
    pub intrinsics: Intrinsics,
    pub column_angles: Vec<f64>,
    /// `columns × D`, column-major blocks (`cost[c*D + k]`).
    pub cost: Vec<f64>,
    /// Fraction of views observing each entry, in `[0, 1]`.
    pub observability: Vec<f64>,
}

impl CostDistribution {
    pub fn columns(&self) -> usize {
        self.column_angles.len()
    }

    pub fn depth_count(&self) -> usize {
        self.hypotheses.len()
    }

    #[inline]
    pub fn entry(&self, column: usize, hypothesis: usize) -> (f64, f64) {
        let idx = column * self.depth_count() + hypothesis;
        (self.cost[idx], self.observability[idx])
    }

    /// Index of the lowest-cost observable hypothesis per column, `None` when
    /// nothing in the column is observable.
    pub fn argmin_per_column(&self) -> Vec<Option<usize>> {
        let d = self.depth_count();
        (0..self.columns())
            .map(|c| {
                let mut best: Option<(usize, f64)> = None;
                for k in 0..d {
                    let (cost, obs) = self.entry(c, k);
                    if obs > 0.0 && best.map_or(true, |(_, b)| cost < b) {
                        best = Some((k, cost));
                    }
                }
                best.map(|(k, _)| k)
            })
            .collect()
    }
}

/// Sweeps the hypothesis grid along every reference column and scores each
/// depth by cross-view geometric consistency.
///
/// For column angle `α` and hypothesis `d`, the probe point is
/// `(d, d·tanα)` in the reference body frame (so `d` is along-axis depth).
/// A view observes the probe when its bearing falls inside the view's
/// coverage with positive forward depth and a valid interpolated return; its
/// residual is the measured range minus the range the probe would produce.
/// The cost is the mean squared residual over observing views (the reference
/// included); observability is the observing fraction, zeroed when fewer
/// than two views observe.
pub fn plane_sweep_cost(
    views: &ViewSet,
    hypotheses: &DepthHypotheses,
    column_angles: &[f64],
) -> Result<CostDistribution, DepthError> {
    if views.sources.is_empty() {
        return Err(DepthError::NoSourceViews);
    }
    let d = hypotheses.len();
    let n_views = 1 + views.sources.len();
    let mut cost = vec![0.0; column_angles.len() * d];
    let mut observability = vec![0.0; column_angles.len() * d];

    // Cache the source-frame transforms.
    let transforms: Vec<(f64, f64, f64, f64)> = views
        .sources
        .iter()
        .map(|s| {
            let (sin_phi, cos_phi) = s.pose.phi.sin_cos();
            (s.pose.x, s.pose.y, sin_phi, cos_phi)
        })
        .collect();

    let mut any_observable = false;
    for (c, &alpha) in column_angles.iter().enumerate() {
        let tan_alpha = alpha.tan();
        let cos_alpha = alpha.cos();
        let ref_range = views.reference.sample(alpha);
        for (k, &depth) in hypotheses.values().iter().enumerate() {
            let px = depth;
            let py = depth * tan_alpha;

            let mut observing = 0usize;
            let mut sq_sum = 0.0;
            if let Some(r) = ref_range {
                let residual = r * cos_alpha - depth;
                sq_sum += residual * residual;
                observing += 1;
            }
            for ((tx, ty, sin_phi, cos_phi), source) in transforms.iter().zip(&views.sources) {
                let dx = px - tx;
                let dy = py - ty;
                // Rotate by −φ into the source body frame.
                let sx = cos_phi * dx + sin_phi * dy;
                let sy = -sin_phi * dx + cos_phi * dy;
                if sx <= 0.0 {
                    continue;
                }
                let bearing = sy.atan2(sx);
                let Some(measured) = source.scan.sample(bearing) else {
                    continue;
                };
                let expected = sx.hypot(sy);
                let residual = measured - expected;
                sq_sum += residual * residual;
                observing += 1;
            }

            let idx = c * d + k;
            if observing >= 2 {
                cost[idx] = sq_sum / observing as f64;
                observability[idx] = observing as f64 / n_views as f64;
                any_observable = true;
            }
        }
    }

    if !any_observable {
        return Err(DepthError::DegenerateGeometry);
    }

    Ok(CostDistribution {
        hypotheses: hypotheses.clone(),
        intrinsics: views.intrinsics,
        column_angles: column_angles.to_vec(),
        cost,
        observability,
    })
}

/// Box radius of the cost-smoothing window along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmoothRadius {
    pub hypotheses: usize,
    pub columns: usize,
}

/// Observability-weighted box filtering over (column, hypothesis) with edge
/// replication. Zero-weight entries are excluded from every window average
/// and keep their original cost; observability passes through unchanged.
pub fn smooth_cost(c: &CostDistribution, radius: SmoothRadius) -> CostDistribution {
    if radius.hypotheses == 0 && radius.columns == 0 {
        return c.clone();
    }
    let columns = c.columns() as isize;
    let d = c.depth_count() as isize;
    let mut smoothed = c.cost.clone();
    for col in 0..columns {
        for k in 0..d {
            let mut weight_sum = 0.0;
            let mut value_sum = 0.0;
            for dc in -(radius.columns as isize)..=radius.columns as isize {
                let nc = (col + dc).clamp(0, columns - 1);
                for dk in -(radius.hypotheses as isize)..=radius.hypotheses as isize {
                    let nk = (k + dk).clamp(0, d - 1);
                    let idx = (nc * d + nk) as usize;
                    let w = c.observability[idx];
                    weight_sum += w;
                    value_sum += w * c.cost[idx];
                }
            }
            if weight_sum > 0.0 {
                smoothed[(col * d + k) as usize] = value_sum / weight_sum;
            }
        }
    }
    CostDistribution {
        hypotheses: c.hypotheses.clone(),
        intrinsics: c.intrinsics,
        column_angles: c.column_angles.clone(),
        cost: smoothed,
        observability: c.observability.clone(),
    }
}

/// Per-column probabilities over the hypothesis grid.
#[derive(Debug, Clone)]
pub struct DepthDistribution {
    pub hypotheses: DepthHypotheses,
    pub intrinsics: Intrinsics,
    /// `columns × D`; each valid column sums to 1.
    pub probs: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthDistribution {
    pub fn columns(&self) -> usize {
        self.valid.len()
    }

    pub fn column(&self, c: usize) -> &[f64] {
        let d = self.hypotheses.len();
        &self.probs[c * d..(c + 1) * d]
    }

    /// Expected depth per column — the distribution's soft-argmin readout.
    pub fn expectation(&self) -> FloorplanDepth {
        let d = self.hypotheses.len();
        let depths = (0..self.columns())
            .map(|c| {
                if !self.valid[c] {
                    return 0.0;
                }
                self.column(c)
                    .iter()
                    .zip(self.hypotheses.values())
                    .map(|(p, v)| p * v)
                    .sum::<f64>()
            })
            .collect();
        let _ = d;
        FloorplanDepth {
            depths,
            intrinsics: self.intrinsics,
            valid: self.valid.clone(),
        }
    }
}

/// Per-column depth along the optical axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorplanDepth {
    pub depths: Vec<f64>,
    pub intrinsics: Intrinsics,
    pub valid: Vec<bool>,
}

impl FloorplanDepth {
    pub fn columns(&self) -> usize {
        self.depths.len()
    }

    /// Mean depth over valid columns (`None` when every column is invalid).
    pub fn mean_depth(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (depth, ok) in self.depths.iter().zip(&self.valid) {
            if *ok {
                sum += depth;
                count += 1;
            }
        }
        (count > 0).then(|| sum / count as f64)
    }
}

/// Softmax of negated costs per column, and the expected depth it induces.
///
/// Unobservable entries are excluded from the softmax; a column with no
/// observable entry comes back invalid.
pub fn soft_argmin(c: &CostDistribution) -> (DepthDistribution, FloorplanDepth) {
    let d = c.depth_count();
    let columns = c.columns();
    let mut probs = vec![0.0; columns * d];
    let mut valid = vec![false; columns];

    for col in 0..columns {
        // Max of −cost over observable entries, for a stable softmax.
        let mut max_neg = f64::NEG_INFINITY;
        for k in 0..d {
            let (cost, obs) = c.entry(col, k);
            if obs > 0.0 && -cost > max_neg {
                max_neg = -cost;
            }
        }
        if max_neg == f64::NEG_INFINITY {
            continue;
        }
        let mut total = 0.0;
        for k in 0..d {
            let (cost, obs) = c.entry(col, k);
            if obs > 0.0 {
                let w = (-cost - max_neg).exp();
                probs[col * d + k] = w;
                total += w;
            }
        }
        for k in 0..d {
            probs[col * d + k] /= total;
        }
        valid[col] = true;
    }

    let dist = DepthDistribution {
        hypotheses: c.hypotheses.clone(),
        intrinsics: c.intrinsics,
        probs,
        valid,
    };
    let depth = dist.expectation();
    (dist, depth)
}

/// Weighted average of two depth distributions over a shared hypothesis grid:
/// `w·mono + (1−w)·mv`. Columns valid in only one input take that input with
/// full weight; columns invalid in both stay invalid.
pub fn fuse_distributions(
    p_mono: &DepthDistribution,
    p_mv: &DepthDistribution,
    w: f64,
) -> Result<DepthDistribution, DepthError> {
    if !(0.0..=1.0).contains(&w) {
        return Err(DepthError::BadWeight(w));
    }
    if p_mono.hypotheses != p_mv.hypotheses {
        return Err(DepthError::HypothesisMismatch);
    }
    if p_mono.columns() != p_mv.columns() {
        return Err(DepthError::ColumnMismatch {
            left: p_mono.columns(),
            right: p_mv.columns(),
        });
    }

    let d = p_mono.hypotheses.len();
    let columns = p_mono.columns();
    let mut probs = vec![0.0; columns * d];
    let mut valid = vec![false; columns];
    for c in 0..columns {
        let out = &mut probs[c * d..(c + 1) * d];
        match (p_mono.valid[c], p_mv.valid[c]) {
            (true, true) => {
                for (o, (a, b)) in out
                    .iter_mut()
                    .zip(p_mono.column(c).iter().zip(p_mv.column(c)))
                {
                    *o = w * a + (1.0 - w) * b;
                }
                valid[c] = true;
            }
            (true, false) => {
                out.copy_from_slice(p_mono.column(c));
                valid[c] = true;
            }
            (false, true) => {
                out.copy_from_slice(p_mv.column(c));
                valid[c] = true;
            }
            (false, false) => {}
        }
    }

    Ok(DepthDistribution {
        hypotheses: p_mono.hypotheses.clone(),
        intrinsics: p_mono.intrinsics,
        probs,
        valid,
    })
}

/// Thresholds for the motion-based selection rule. JSON configs carry the
/// rotation bound in degrees (`max_rotation_deg`).
#[derive(Debug, Clone, Copy)]
pub struct SelectionThresholds {
    pub min_baseline_m: f64,
    pub max_rotation_rad: f64,
}

impl Default for SelectionThresholds {
    fn default() -> Self {
        Self {
            min_baseline_m: 0.05,
            max_rotation_rad: 30.0f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionThresholdsConfig {
    pub min_baseline_m: f64,
    pub max_rotation_deg: f64,
}

impl From<SelectionThresholdsConfig> for SelectionThresholds {
    fn from(cfg: SelectionThresholdsConfig) -> Self {
        Self {
            min_baseline_m: cfg.min_baseline_m,
            max_rotation_rad: cfg.max_rotation_deg.to_radians(),
        }
    }
}

/// Hook for alternative monocular/multiview weighting rules; implementors
/// return the monocular weight `w ∈ [0, 1]` of the fusion.
pub trait SelectionWeight {
    fn weight(
        &self,
        relative_poses: &[EgoMotion],
        mean_mono: f64,
        mean_mv: f64,
    ) -> Result<f64, DepthError>;
}

impl SelectionWeight for SelectionThresholds {
    fn weight(
        &self,
        relative_poses: &[EgoMotion],
        mean_mono: f64,
        mean_mv: f64,
    ) -> Result<f64, DepthError> {
        threshold_selection_weight(relative_poses, mean_mono, mean_mv, self)
    }
}

/// Hard monocular/multiview selection by thresholding the relative motions:
/// monocular (`w = 1`) when the largest baseline is too small or the largest
/// rotation too large for reliable multiview geometry, multiview (`w = 0`)
/// otherwise. The mean depths are unused here but kept in the signature for
/// [`SelectionWeight`] implementations that need them.
pub fn threshold_selection_weight(
    relative_poses: &[EgoMotion],
    _mean_mono: f64,
    _mean_mv: f64,
    cfg: &SelectionThresholds,
) -> Result<f64, DepthError> {
    if relative_poses.is_empty() {
        return Err(DepthError::EmptyPoseList);
    }
    let max_baseline = relative_poses
        .iter()
        .map(|p| p.baseline())
        .fold(f64::NEG_INFINITY, f64::max);
    let max_rotation = relative_poses
        .iter()
        .map(|p| p.tphi.abs())
        .fold(f64::NEG_INFINITY, f64::max);
    if max_baseline < cfg.min_baseline_m || max_rotation > cfg.max_rotation_rad {
        Ok(1.0)
    } else {
        Ok(0.0)
    }
}

/// L1-plus-cosine depth discrepancy over mutually valid columns:
/// `mean|d − d*| + λ·(d·d*)/max(‖d‖‖d*‖, ε)`.
///
/// The cosine term is added with the sign of `lambda`; pass a negative
/// `lambda` to reward alignment instead of penalizing it.
pub fn depth_loss(
    d: &FloorplanDepth,
    d_star: &FloorplanDepth,
    lambda: f64,
    epsilon: f64,
) -> Result<f64, DepthError> {
    assert!(epsilon > 0.0);
    if d.columns() != d_star.columns() {
        return Err(DepthError::ColumnMismatch {
            left: d.columns(),
            right: d_star.columns(),
        });
    }
    let mut l1 = 0.0;
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    let mut count = 0usize;
    for i in 0..d.columns() {
        if !(d.valid[i] && d_star.valid[i]) {
            continue;
        }
        let (a, b) = (d.depths[i], d_star.depths[i]);
        l1 += (a - b).abs();
        dot += a * b;
        norm_a += a * a;
        norm_b += b * b;
        count += 1;
    }
    if count == 0 {
        return Err(DepthError::NoValidColumns);
    }
    let cosine = dot / (norm_a.sqrt() * norm_b.sqrt()).max(epsilon);
    Ok(l1 / count as f64 + lambda * cosine)
}
