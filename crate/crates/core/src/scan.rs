//! Equiangular ray scans: the engine's universal 1D range observation.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::wrap_two_pi;

/// Interpolation weights this close to a stored ray snap to it exactly, so
/// queries at stored angles reproduce stored rays bit-for-bit.
const SNAP_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SliceError {
    #[error("field of view must lie in (0, 2π], got {0}")]
    BadFov(f64),
    #[error("slicing requires a full-circle scan (coverage {coverage} rad)")]
    NotCircular { coverage: f64 },
}

/// A 1D range image: ranges sampled at uniformly spaced angles.
///
/// Angles are relative to the observing pose's heading and increase
/// counterclockwise; ray `i` points at `start_angle + i·angular_step`.
/// Invalid rays carry `range == max_range` and `valid == false`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayScan {
    pub start_angle: f64,
    pub angular_step: f64,
    pub max_range: f64,
    pub ranges: Vec<f64>,
    pub valid: Vec<bool>,
}

impl RayScan {
    pub fn new(
        start_angle: f64,
        angular_step: f64,
        max_range: f64,
        ranges: Vec<f64>,
        valid: Vec<bool>,
    ) -> Self {
        debug_assert!(!ranges.is_empty());
        debug_assert_eq!(ranges.len(), valid.len());
        debug_assert!(angular_step > 0.0);
        Self {
            start_angle,
            angular_step,
            max_range,
            ranges,
            valid,
        }
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Angular span between the first and last ray.
    pub fn fov(&self) -> f64 {
        (self.len() - 1) as f64 * self.angular_step
    }

    /// True when the scan tiles the full circle (`len·step == 2π`).
    pub fn is_circular(&self) -> bool {
        (self.len() as f64 * self.angular_step - TAU).abs() < 1e-9
    }

    pub fn ray_angle(&self, index: usize) -> f64 {
        self.start_angle + index as f64 * self.angular_step
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Linearly interpolated range at an arbitrary angle, or `None` when the
    /// angle is outside coverage or touches an invalid ray.
    ///
    /// Circular scans wrap around; bounded scans clamp only within half a snap
    /// epsilon of their ends.
    pub fn sample(&self, angle: f64) -> Option<f64> {
        let (i0, i1, w) = self.neighbors(angle)?;
        if w == 0.0 {
            return self.valid[i0].then(|| self.ranges[i0]);
        }
        if w == 1.0 {
            return self.valid[i1].then(|| self.ranges[i1]);
        }
        (self.valid[i0] && self.valid[i1])
            .then(|| (1.0 - w) * self.ranges[i0] + w * self.ranges[i1])
    }

    /// Neighbor ray indices and interpolation weight for an angle; weights
    /// within [`SNAP_EPSILON`] of 0 or 1 are snapped exactly.
    pub(crate) fn neighbors(&self, angle: f64) -> Option<(usize, usize, f64)> {
        let n = self.len();
        if self.is_circular() {
            Some(circular_neighbors(n, self.angular_step, angle - self.start_angle))
        } else {
            let u = (angle - self.start_angle) / self.angular_step;
            if u < -SNAP_EPSILON || u > (n - 1) as f64 + SNAP_EPSILON {
                return None;
            }
            let clamped = u.clamp(0.0, (n - 1) as f64);
            let i0 = (clamped.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            Some(snap(i0, i1, clamped - i0 as f64))
        }
    }
}

/// Neighbor indices and snapped interpolation weight for an angle in a
/// circular layout of `n` rays spaced `step` apart, measured from the layout's
/// first ray.
pub(crate) fn circular_neighbors(n: usize, step: f64, rel_angle: f64) -> (usize, usize, f64) {
    let u = wrap_two_pi(rel_angle) / step;
    let mut i0 = u.floor() as usize;
    let mut w = u - i0 as f64;
    if i0 >= n {
        // wrap_two_pi can land exactly on 2π/step after rounding
        i0 = 0;
        w = 0.0;
    }
    let i1 = (i0 + 1) % n;
    snap(i0, i1, w)
}

#[inline]
fn snap(i0: usize, i1: usize, w: f64) -> (usize, usize, f64) {
    if w < SNAP_EPSILON {
        (i0, i1, 0.0)
    } else if w > 1.0 - SNAP_EPSILON {
        (i0, i1, 1.0)
    } else {
        (i0, i1, w)
    }
}

/// Extracts a field-of-view scan from a full-circle scan by circular linear
/// interpolation.
///
/// The output has `n_rays` rays spanning `[heading − fov/2, heading + fov/2]`
/// with `start_angle` expressed relative to `heading`. Interpolating across a
/// valid/invalid boundary yields an invalid ray.
pub fn slice_fov_scan(
    db_scan: &RayScan,
    heading: f64,
    fov: f64,
    n_rays: usize,
) -> Result<RayScan, SliceError> {
    if !(fov > 0.0) || fov > TAU {
        return Err(SliceError::BadFov(fov));
    }
    if !db_scan.is_circular() {
        return Err(SliceError::NotCircular {
            coverage: db_scan.fov(),
        });
    }
    assert!(n_rays >= 1, "slice requires at least one ray");

    let (rel_start, step) = if n_rays == 1 {
        (0.0, fov)
    } else {
        (-fov / 2.0, fov / (n_rays - 1) as f64)
    };

    let mut ranges = Vec::with_capacity(n_rays);
    let mut valid = Vec::with_capacity(n_rays);
    for j in 0..n_rays {
        let angle = heading + rel_start + j as f64 * step;
        let (i0, i1, w) = db_scan
            .neighbors(angle)
            .expect("circular scans cover every angle");
        let (range, ok) = if w == 0.0 {
            (db_scan.ranges[i0], db_scan.valid[i0])
        } else if w == 1.0 {
            (db_scan.ranges[i1], db_scan.valid[i1])
        } else if db_scan.valid[i0] && db_scan.valid[i1] {
            (
                (1.0 - w) * db_scan.ranges[i0] + w * db_scan.ranges[i1],
                true,
            )
        } else {
            (db_scan.max_range, false)
        };
        ranges.push(if ok { range } else { db_scan.max_range });
        valid.push(ok);
    }

    Ok(RayScan::new(
        rel_start,
        step,
        db_scan.max_range,
        ranges,
        valid,
    ))
}
