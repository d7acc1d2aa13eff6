//! SE(2) poses and frame-to-frame ego-motion.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

/// Wraps an angle into `[0, 2π)`.
#[inline]
pub fn wrap_two_pi(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(TAU);
    if wrapped >= TAU {
        0.0
    } else {
        wrapped
    }
}

/// Wraps an angle into `(−π, π]`.
#[inline]
pub fn wrap_pi(angle: f64) -> f64 {
    let wrapped = wrap_two_pi(angle);
    if wrapped > PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

/// Circular distance between two angles, in `[0, π]`.
#[inline]
pub fn angle_distance(a: f64, b: f64) -> f64 {
    wrap_pi(a - b).abs()
}

/// An SE(2) camera pose: planar position in meters plus heading in radians.
///
/// The heading is always stored wrapped to `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, phi: f64) -> Self {
        Self {
            x,
            y,
            phi: wrap_two_pi(phi),
        }
    }

    pub fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            phi: 0.0,
        }
    }

    /// Applies an ego-motion expressed in this pose's body frame.
    ///
    /// The body x axis points along the heading, y to its left; the result is
    /// `[x + cosφ·tx − sinφ·ty, y + sinφ·tx + cosφ·ty, wrap(φ + tφ)]`.
    pub fn compose(&self, motion: &EgoMotion) -> Pose {
        let (sin_phi, cos_phi) = self.phi.sin_cos();
        Pose::new(
            self.x + cos_phi * motion.tx - sin_phi * motion.ty,
            self.y + sin_phi * motion.tx + cos_phi * motion.ty,
            self.phi + motion.tphi,
        )
    }

    /// Position of `self` translated into `other`'s body frame, i.e. the
    /// ego-motion `m` with `other.compose(m) == self` (up to wrapping).
    pub fn relative_to(&self, other: &Pose) -> EgoMotion {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let (sin_phi, cos_phi) = other.phi.sin_cos();
        EgoMotion::new(
            cos_phi * dx + sin_phi * dy,
            -sin_phi * dx + cos_phi * dy,
            self.phi - other.phi,
        )
    }

    /// Euclidean distance between the positions of two poses.
    pub fn position_distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Circular heading distance to another pose, in `[0, π]`.
    pub fn heading_distance(&self, other: &Pose) -> f64 {
        angle_distance(self.phi, other.phi)
    }
}

/// Frame-to-frame relative motion in the previous frame's body coordinates.
///
/// `tphi` is always stored wrapped to `(−π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoMotion {
    pub tx: f64,
    pub ty: f64,
    pub tphi: f64,
}

impl EgoMotion {
    pub fn new(tx: f64, ty: f64, tphi: f64) -> Self {
        Self {
            tx,
            ty,
            tphi: wrap_pi(tphi),
        }
    }

    pub fn identity() -> Self {
        Self {
            tx: 0.0,
            ty: 0.0,
            tphi: 0.0,
        }
    }

    /// Translational magnitude of the motion (the stereo baseline it provides).
    pub fn baseline(&self) -> f64 {
        self.tx.hypot(self.ty)
    }

    /// The motion that exactly undoes this one.
    pub fn inverse(&self) -> EgoMotion {
        let (sin_t, cos_t) = self.tphi.sin_cos();
        EgoMotion::new(
            -(cos_t * self.tx + sin_t * self.ty),
            -(-sin_t * self.tx + cos_t * self.ty),
            -self.tphi,
        )
    }

    /// Composition of two body-frame motions applied in sequence.
    pub fn then(&self, next: &EgoMotion) -> EgoMotion {
        let (sin_t, cos_t) = self.tphi.sin_cos();
        EgoMotion::new(
            self.tx + cos_t * next.tx - sin_t * next.ty,
            self.ty + sin_t * next.tx + cos_t * next.ty,
            self.tphi + next.tphi,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn compose_identity() {
        let s = Pose::new(0.0, 0.0, 0.0);
        let out = s.compose(&EgoMotion::identity());
        assert_eq!((out.x, out.y, out.phi), (0.0, 0.0, 0.0));
    }

    /// Oracle: apply the 2×2 rotation matrix of the heading to the body-frame
    /// translation, independent of the compose implementation.
    fn compose_oracle(s: &Pose, t: &EgoMotion) -> (f64, f64, f64) {
        let r = [[s.phi.cos(), -s.phi.sin()], [s.phi.sin(), s.phi.cos()]];
        (
            s.x + r[0][0] * t.tx + r[0][1] * t.ty,
            s.y + r[1][0] * t.tx + r[1][1] * t.ty,
            wrap_two_pi(s.phi + t.tphi),
        )
    }

    #[test]
    fn compose_rotates_translation_into_world() {
        let s = Pose::new(1.0, 2.0, FRAC_PI_2);
        let t = EgoMotion::new(0.5, 0.0, 0.0);
        let out = s.compose(&t);
        assert_abs_diff_eq!(out.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.y, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.phi, FRAC_PI_2, epsilon = 1e-12);

        let oracle = compose_oracle(&s, &t);
        assert_abs_diff_eq!(out.x, oracle.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.y, oracle.1, epsilon = 1e-12);
    }

    #[test]
    fn compose_wraps_heading() {
        let s = Pose::new(0.0, 0.0, PI);
        let t = EgoMotion::new(1.0, 0.0, PI);
        let out = s.compose(&t);
        assert_abs_diff_eq!(out.x, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.y, 0.0, epsilon = 1e-12);
        assert_eq!(out.phi, 0.0);

        let oracle = compose_oracle(&s, &t);
        assert_abs_diff_eq!(out.x, oracle.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.y, oracle.1, epsilon = 1e-12);
        assert_abs_diff_eq!(out.phi, oracle.2, epsilon = 1e-12);
    }

    #[test]
    fn wrap_conventions() {
        assert_eq!(wrap_two_pi(TAU), 0.0);
        assert_abs_diff_eq!(wrap_two_pi(-0.1), TAU - 0.1, epsilon = 1e-15);
        assert_eq!(wrap_pi(PI), PI);
        assert_abs_diff_eq!(wrap_pi(PI + 0.1), -PI + 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(angle_distance(0.1, TAU - 0.1), 0.2, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn compose_is_associative(
            x in -10.0f64..10.0, y in -10.0f64..10.0, phi in -10.0f64..10.0,
            ax in -2.0f64..2.0, ay in -2.0f64..2.0, aphi in -4.0f64..4.0,
            bx in -2.0f64..2.0, by in -2.0f64..2.0, bphi in -4.0f64..4.0,
        ) {
            let s = Pose::new(x, y, phi);
            let a = EgoMotion::new(ax, ay, aphi);
            let b = EgoMotion::new(bx, by, bphi);
            let lhs = s.compose(&a).compose(&b);
            let rhs = s.compose(&a.then(&b));
            prop_assert!((lhs.x - rhs.x).abs() < 1e-9);
            prop_assert!((lhs.y - rhs.y).abs() < 1e-9);
            prop_assert!(angle_distance(lhs.phi, rhs.phi) < 1e-9);
        }

        #[test]
        fn compose_inverse_returns_to_start(
            x in -10.0f64..10.0, y in -10.0f64..10.0, phi in -10.0f64..10.0,
            tx in -2.0f64..2.0, ty in -2.0f64..2.0, tphi in -4.0f64..4.0,
        ) {
            let s = Pose::new(x, y, phi);
            let t = EgoMotion::new(tx, ty, tphi);
            let back = s.compose(&t).compose(&t.inverse());
            prop_assert!((back.x - s.x).abs() < 1e-9);
            prop_assert!((back.y - s.y).abs() < 1e-9);
            prop_assert!(angle_distance(back.phi, s.phi) < 1e-9);
        }

        #[test]
        fn relative_to_inverts_compose(
            x in -10.0f64..10.0, y in -10.0f64..10.0, phi in -10.0f64..10.0,
            tx in -2.0f64..2.0, ty in -2.0f64..2.0, tphi in -4.0f64..4.0,
        ) {
            let s = Pose::new(x, y, phi);
            let t = EgoMotion::new(tx, ty, tphi);
            let recovered = s.compose(&t).relative_to(&s);
            prop_assert!((recovered.tx - t.tx).abs() < 1e-9);
            prop_assert!((recovered.ty - t.ty).abs() < 1e-9);
            prop_assert!(angle_distance(recovered.tphi, t.tphi) < 1e-9);
        }
    }

    #[test]
    fn relative_example() {
        let a = Pose::new(1.0, 1.0, FRAC_PI_2);
        let b = a.compose(&EgoMotion::new(0.3, -0.1, 0.2));
        let rel = b.relative_to(&a);
        assert_relative_eq!(rel.tx, 0.3, epsilon = 1e-12);
        assert_relative_eq!(rel.ty, -0.1, epsilon = 1e-12);
        assert_relative_eq!(rel.tphi, 0.2, epsilon = 1e-12);
    }
}
