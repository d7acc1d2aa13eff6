//! Virtual roll-pitch homography and the visibility mask it induces.

use std::fs;
use std::io;
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::Intrinsics;
use crate::pgm::{self, GrayImage};

#[derive(Debug, Error, PartialEq)]
pub enum HomographyError {
    #[error("warped point lies at infinity (homogeneous depth {0:e})")]
    AtInfinity(f64),
}

/// JSON configuration for a gravity alignment, angles in degrees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GravityConfig {
    pub roll_deg: f64,
    pub pitch_deg: f64,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl GravityConfig {
    pub fn to_alignment(&self) -> GravityAlignment {
        GravityAlignment::new(
            self.roll_deg.to_radians(),
            self.pitch_deg.to_radians(),
            Intrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height),
        )
    }
}

/// Rotation about the camera z (optical) axis by the roll angle.
///
/// Camera coordinates: x right, y down, z forward.
fn rot_z(psi: f64) -> Matrix3<f64> {
    let (s, c) = psi.sin_cos();
    Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation about the camera x axis by the pitch angle, oriented so a
/// positive pitch moves the principal point down the image.
fn rot_x(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, s, 0.0, -s, c)
}

/// A virtual roll-pitch rotation together with the camera it applies to.
///
/// The rotation to the gravity-aligned pose is `R = Rx(pitch)·Rz(roll)`; the
/// induced pixel map is the homography `K·R·K⁻¹`.
#[derive(Debug, Clone)]
pub struct GravityAlignment {
    pub roll_psi: f64,
    pub pitch_theta: f64,
    pub intrinsics: Intrinsics,
    rotation: Matrix3<f64>,
    forward: Matrix3<f64>,
    backward: Matrix3<f64>,
}

impl GravityAlignment {
    pub fn new(roll_psi: f64, pitch_theta: f64, intrinsics: Intrinsics) -> Self {
        let rotation = rot_x(pitch_theta) * rot_z(roll_psi);
        let k = Matrix3::new(
            intrinsics.fx,
            0.0,
            intrinsics.cx,
            0.0,
            intrinsics.fy,
            intrinsics.cy,
            0.0,
            0.0,
            1.0,
        );
        // Analytic inverse of the upper-triangular intrinsic matrix.
        let k_inv = Matrix3::new(
            1.0 / intrinsics.fx,
            0.0,
            -intrinsics.cx / intrinsics.fx,
            0.0,
            1.0 / intrinsics.fy,
            -intrinsics.cy / intrinsics.fy,
            0.0,
            0.0,
            1.0,
        );
        let forward = k * rotation * k_inv;
        let backward = k * rotation.transpose() * k_inv;
        Self {
            roll_psi,
            pitch_theta,
            intrinsics,
            rotation,
            forward,
            backward,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    /// The alignment undoing this one (inverse rotation, same camera).
    pub fn inverse(&self) -> GravityAlignment {
        let mut inv = self.clone();
        inv.roll_psi = -self.roll_psi;
        inv.pitch_theta = -self.pitch_theta;
        inv.rotation = self.rotation.transpose();
        std::mem::swap(&mut inv.forward, &mut inv.backward);
        inv
    }

    /// Maps a pixel of the original image to the gravity-aligned image.
    pub fn warp_pixel(&self, pixel: (f64, f64)) -> Result<(f64, f64), HomographyError> {
        apply_homography(&self.forward, pixel)
    }

    /// Maps an aligned-image pixel back to the original image, together with
    /// its homogeneous depth sign (`false` = behind the camera).
    fn unwarp_pixel(&self, pixel: (f64, f64)) -> Option<(f64, f64)> {
        let p = self.backward * nalgebra::Vector3::new(pixel.0, pixel.1, 1.0);
        if p.z <= 0.0 {
            return None;
        }
        Some((p.x / p.z, p.y / p.z))
    }

    /// Computes which pixels of the gravity-aligned image are observable:
    /// those whose preimage under the inverse homography lies inside the
    /// original image with positive depth. Evaluated at pixel centers.
    pub fn visibility_mask(&self) -> VisibilityMask {
        let width = self.intrinsics.width;
        let height = self.intrinsics.height;
        let w = width as f64;
        let h = height as f64;
        let mut visible = vec![false; width * height];
        for v in 0..height {
            for u in 0..width {
                let center = (u as f64 + 0.5, v as f64 + 0.5);
                if let Some((x, y)) = self.unwarp_pixel(center) {
                    if x >= 0.0 && x < w && y >= 0.0 && y < h {
                        visible[v * width + u] = true;
                    }
                }
            }
        }
        VisibilityMask::from_visible(width, height, visible)
    }
}

fn apply_homography(
    h: &Matrix3<f64>,
    pixel: (f64, f64),
) -> Result<(f64, f64), HomographyError> {
    let p = h * nalgebra::Vector3::new(pixel.0, pixel.1, 1.0);
    if p.z.abs() < 1e-12 {
        return Err(HomographyError::AtInfinity(p.z));
    }
    Ok((p.x / p.z, p.y / p.z))
}

/// Per-pixel observability of the gravity-aligned image.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityMask {
    pub width: usize,
    pub height: usize,
    pub visible: Vec<bool>,
    /// Per column: first and last visible row, when any row is visible.
    pub column_spans: Vec<Option<(usize, usize)>>,
}

impl VisibilityMask {
    fn from_visible(width: usize, height: usize, visible: Vec<bool>) -> Self {
        let mut column_spans = vec![None; width];
        for (u, span) in column_spans.iter_mut().enumerate() {
            let mut first = None;
            let mut last = None;
            for v in 0..height {
                if visible[v * width + u] {
                    first.get_or_insert(v);
                    last = Some(v);
                }
            }
            *span = first.zip(last);
        }
        Self {
            width,
            height,
            visible,
            column_spans,
        }
    }

    #[inline]
    pub fn is_visible(&self, u: usize, v: usize) -> bool {
        self.visible[v * self.width + u]
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|v| **v).count()
    }

    pub fn visible_fraction(&self) -> f64 {
        self.visible_count() as f64 / (self.width * self.height) as f64
    }

    /// Writes the mask as a PGM image (255 = visible).
    pub fn save_pgm(&self, path: &Path) -> io::Result<()> {
        let mut image = GrayImage::new(self.width, self.height);
        for v in 0..self.height {
            for u in 0..self.width {
                image.set(u, v, if self.is_visible(u, v) { 255 } else { 0 });
            }
        }
        let mut file = fs::File::create(path)?;
        pgm::write_pgm(&mut file, &image)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn camera() -> Intrinsics {
        Intrinsics::new(300.0, 320.0, 160.0, 120.0, 320, 240)
    }

    #[test]
    fn zero_angles_is_identity() {
        let align = GravityAlignment::new(0.0, 0.0, camera());
        assert!(align.rotation().is_identity(1e-15));
        for pixel in [(0.0, 0.0), (12.25, 200.5), (319.0, 0.5)] {
            let out = align.warp_pixel(pixel).unwrap();
            assert_abs_diff_eq!(out.0, pixel.0, epsilon = 1e-12);
            assert_abs_diff_eq!(out.1, pixel.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn pitch_moves_principal_point_by_fy_tan() {
        let intr = camera();
        let theta = 0.2f64;
        let align = GravityAlignment::new(0.0, theta, intr);
        let out = align.warp_pixel((intr.cx, intr.cy)).unwrap();
        assert_abs_diff_eq!(out.0, intr.cx, epsilon = 1e-9);
        assert_abs_diff_eq!(out.1, intr.cy + intr.fy * theta.tan(), epsilon = 1e-9);
    }

    #[test]
    fn roll_rotates_normalized_offsets() {
        let intr = camera();
        let psi = 0.3f64;
        let align = GravityAlignment::new(psi, 0.0, intr);

        let pixel = (intr.cx + 40.0, intr.cy - 25.0);
        let out = align.warp_pixel(pixel).unwrap();

        // Matrix-product oracle: numerically invert K with nalgebra and apply
        // K·R·K⁻¹ explicitly.
        let k = Matrix3::new(intr.fx, 0.0, intr.cx, 0.0, intr.fy, intr.cy, 0.0, 0.0, 1.0);
        let h = k * rot_z(psi) * k.try_inverse().unwrap();
        let p = h * nalgebra::Vector3::new(pixel.0, pixel.1, 1.0);
        assert_abs_diff_eq!(out.0, p.x / p.z, epsilon = 1e-9);
        assert_abs_diff_eq!(out.1, p.y / p.z, epsilon = 1e-9);

        // And the closed form: normalized offset rotated by ψ (image y points
        // down) and rescaled by the focal lengths.
        let (nx, ny) = (40.0 / intr.fx, -25.0 / intr.fy);
        let rx = psi.cos() * nx + psi.sin() * ny;
        let ry = -psi.sin() * nx + psi.cos() * ny;
        assert_abs_diff_eq!(out.0, intr.cx + intr.fx * rx, epsilon = 1e-9);
        assert_abs_diff_eq!(out.1, intr.cy + intr.fy * ry, epsilon = 1e-9);
    }

    #[test]
    fn roll_fixes_principal_point_but_pitch_does_not() {
        let intr = camera();
        let roll = GravityAlignment::new(0.4, 0.0, intr);
        let fixed = roll.warp_pixel((intr.cx, intr.cy)).unwrap();
        assert_abs_diff_eq!(fixed.0, intr.cx, epsilon = 1e-12);
        assert_abs_diff_eq!(fixed.1, intr.cy, epsilon = 1e-12);

        let pitch = GravityAlignment::new(0.0, 0.4, intr);
        let moved = pitch.warp_pixel((intr.cx, intr.cy)).unwrap();
        assert!((moved.1 - intr.cy).abs() > 1.0);
    }

    proptest! {
        #[test]
        fn warp_round_trips_through_inverse(
            psi in -0.5f64..0.5,
            theta in -0.5f64..0.5,
            u in 0.0f64..320.0,
            v in 0.0f64..240.0,
        ) {
            let align = GravityAlignment::new(psi, theta, camera());
            let forward = align.warp_pixel((u, v));
            prop_assume!(forward.is_ok());
            let back = align.inverse().warp_pixel(forward.unwrap());
            prop_assume!(back.is_ok());
            let (bu, bv) = back.unwrap();
            prop_assert!((bu - u).abs() < 1e-6, "u {u} came back as {bu}");
            prop_assert!((bv - v).abs() < 1e-6, "v {v} came back as {bv}");
        }

        #[test]
        fn rotation_stays_orthonormal(psi in -1.5f64..1.5, theta in -1.5f64..1.5) {
            let align = GravityAlignment::new(psi, theta, camera());
            let r = align.rotation();
            let gram = r.transpose() * r;
            prop_assert!(gram.is_identity(1e-9));
            prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mask_all_visible_at_zero_and_deterministic() {
        let align = GravityAlignment::new(0.0, 0.0, camera());
        let mask = align.visibility_mask();
        assert_eq!(mask.visible_count(), 320 * 240);
        assert_eq!(mask.column_spans[0], Some((0, 239)));
        assert_eq!(mask, align.visibility_mask());
    }

    #[test]
    fn visible_fraction_non_increasing_in_pitch() {
        let fractions: Vec<f64> = [0.0f64, 10.0, 20.0, 30.0]
            .iter()
            .map(|deg| {
                GravityAlignment::new(0.0, deg.to_radians(), camera())
                    .visibility_mask()
                    .visible_fraction()
            })
            .collect();
        for pair in fractions.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-12,
                "fractions must not increase: {fractions:?}"
            );
        }
        assert!(fractions[3] < fractions[0]);
    }

    #[test]
    fn negated_roll_mirrors_mask_horizontally() {
        // Use a symmetric camera so pixel centers mirror onto pixel centers.
        let intr = Intrinsics::new(280.0, 280.0, 160.0, 120.0, 320, 240);
        let theta = 0.25f64;
        let pos = GravityAlignment::new(0.35, theta, intr).visibility_mask();
        let neg = GravityAlignment::new(-0.35, theta, intr).visibility_mask();
        for v in 0..240 {
            for u in 0..320 {
                assert_eq!(
                    pos.is_visible(u, v),
                    neg.is_visible(319 - u, v),
                    "mirror mismatch at ({u}, {v})"
                );
            }
        }
    }

    #[test]
    fn mask_pgm_and_json_config_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let config = GravityConfig {
            roll_deg: 5.0,
            pitch_deg: -10.0,
            fx: 80.0,
            fy: 80.0,
            cx: 32.0,
            cy: 24.0,
            width: 64,
            height: 48,
        };
        let json = serde_json::to_string(&config).unwrap();
        let parsed: GravityConfig = serde_json::from_str(&json).unwrap();
        let mask = parsed.to_alignment().visibility_mask();

        let path = dir.path().join("mask.pgm");
        mask.save_pgm(&path).unwrap();
        let image = pgm::read_pgm(&mut fs::File::open(&path).unwrap()).unwrap();
        assert_eq!(image.width, 64);
        assert_eq!(image.height, 48);
        assert_eq!(
            image.pixels.iter().filter(|p| **p == 255).count(),
            mask.visible_count()
        );
    }
}
