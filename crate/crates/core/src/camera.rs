//! Pinhole camera intrinsics.

use serde::{Deserialize, Serialize};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Self {
        debug_assert!(fx > 0.0 && fy > 0.0);
        debug_assert!(cx >= 0.0 && cx <= width as f64);
        debug_assert!(cy >= 0.0 && cy <= height as f64);
        Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        }
    }

    /// Horizontal angle of a column's pixel center: `atan((u + 0.5 − cx)/fx)`.
    #[inline]
    pub fn column_angle(&self, u: usize) -> f64 {
        ((u as f64 + 0.5 - self.cx) / self.fx).atan()
    }

    /// Angles of every column's pixel center, in increasing order.
    pub fn column_angles(&self) -> Vec<f64> {
        (0..self.width).map(|u| self.column_angle(u)).collect()
    }

    /// Total horizontal angular coverage, `2·atan((width/2)/fx)`.
    pub fn horizontal_fov(&self) -> f64 {
        2.0 * ((self.width as f64 / 2.0) / self.fx).atan()
    }
}
