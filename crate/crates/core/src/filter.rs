//! SE(2) histogram filter: probability volume over (x, y, φ), transition
//! kernels from ego-motion, grouped-convolution prediction, and the Bayes
//! measurement update.

use std::f64::consts::TAU;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::database::PoseRayDatabase;
use crate::grid::OccupancyGrid;
use crate::observation::LikelihoodVolume;
use crate::pose::{wrap_pi, EgoMotion, Pose};

const FLPV_MAGIC: &[u8; 4] = b"FLPV";
const FLPV_VERSION: u16 = 1;

/// Standard deviations below this are clamped so near-deterministic motions
/// produce delta-like kernels instead of dividing by zero.
const SIGMA_FLOOR: f64 = 1e-9;

/// Normalized kernel entries below this are dropped from the convolutions;
/// the discarded mass is orders of magnitude below every test tolerance.
const TAP_CUTOFF: f64 = 1e-18;

/// Kernel support never exceeds this many cells from the center.
pub const DEFAULT_MAX_HALF_WIDTH: usize = 25;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("no free cell to place probability mass on")]
    NoFreeCells,
    #[error("volume shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("posterior mass vanished (observation contradicts the prior/map)")]
    ZeroPosterior,
    #[error("prediction pushed all probability mass off the free space")]
    MassDepleted,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes (expected FLPV)")]
    BadMagic,
    #[error("unsupported volume version {0}")]
    BadVersion(u16),
    #[error("volume payload truncated")]
    Truncated,
}

/// Diagonal Gaussian transition noise (meters, meters, radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionNoise {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_phi: f64,
}

impl Default for MotionNoise {
    fn default() -> Self {
        Self {
            sigma_x: 0.05,
            sigma_y: 0.05,
            sigma_phi: 3.0f64.to_radians(),
        }
    }
}

/// Discretized motion model for one ego-motion: a 2D translational filter per
/// orientation bin plus one circular rotational filter.
///
/// Filter entries live at destination offsets: `T_φ(dx, dy)` is the
/// probability that a pose at orientation `φ` moves by `(dx, dy)` cells, and
/// `r(j)` that it advances `j` orientation bins. Every filter is normalized
/// to sum 1.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    orientations: usize,
    resolution: f64,
    half_width: usize,
    /// One dense `(2h+1)²` filter per orientation, indexed
    /// `(dy + h)·(2h+1) + (dx + h)`.
    translational: Vec<Vec<f64>>,
    /// Circular filter over bin offsets `0..O`.
    rotational: Vec<f64>,
    /// Normalized per-axis factors when the translational Gaussians are
    /// isotropic, enabling separable convolution.
    separable: Option<Vec<(Vec<f64>, Vec<f64>)>>,
    motion: EgoMotion,
    noise: MotionNoise,
}

impl TransitionKernel {
    /// Builds the kernel with the default support cap.
    pub fn build(
        motion: &EgoMotion,
        noise: &MotionNoise,
        resolution: f64,
        orientations: usize,
    ) -> Self {
        Self::build_with_max_half_width(motion, noise, resolution, orientations, DEFAULT_MAX_HALF_WIDTH)
    }

    /// Builds the kernel on a square support of half-width
    /// `ceil((‖t‖ + 3·max(σx, σy))/resolution)`, clamped to `max_half_width`.
    pub fn build_with_max_half_width(
        motion: &EgoMotion,
        noise: &MotionNoise,
        resolution: f64,
        orientations: usize,
        max_half_width: usize,
    ) -> Self {
        assert!(resolution > 0.0);
        assert!(orientations >= 1);
        let sigma_x = noise.sigma_x.max(SIGMA_FLOOR);
        let sigma_y = noise.sigma_y.max(SIGMA_FLOOR);
        let sigma_phi = noise.sigma_phi.max(SIGMA_FLOOR);

        let reach = motion.baseline() + 3.0 * sigma_x.max(sigma_y);
        let half_width = ((reach / resolution).ceil() as usize).clamp(1, max_half_width);
        let side = 2 * half_width + 1;

        let isotropic = (sigma_x - sigma_y).abs() < 1e-12;
        let mut translational = Vec::with_capacity(orientations);
        let mut separable = isotropic.then(|| Vec::with_capacity(orientations));

        for k in 0..orientations {
            let phi = k as f64 * TAU / orientations as f64;
            let (sin_phi, cos_phi) = phi.sin_cos();
            if isotropic {
                // ‖R⁻¹s − t‖ = ‖s − R·t‖: the filter is an outer product of
                // axis factors centered on the world-frame displacement.
                let cx = cos_phi * motion.tx - sin_phi * motion.ty;
                let cy = sin_phi * motion.tx + cos_phi * motion.ty;
                let fx = gaussian_axis(half_width, resolution, cx, sigma_x);
                let fy = gaussian_axis(half_width, resolution, cy, sigma_y);
                let mut dense = vec![0.0; side * side];
                for (dy, wy) in fy.iter().enumerate() {
                    for (dx, wx) in fx.iter().enumerate() {
                        dense[dy * side + dx] = wy * wx;
                    }
                }
                separable.as_mut().unwrap().push((fx, fy));
                translational.push(dense);
            } else {
                let mut dense = vec![0.0; side * side];
                let mut exponents = vec![0.0; side * side];
                for dy in 0..side {
                    let sy = (dy as f64 - half_width as f64) * resolution;
                    for dx in 0..side {
                        let sx = (dx as f64 - half_width as f64) * resolution;
                        // Translation residual in the source body frame.
                        let bx = cos_phi * sx + sin_phi * sy;
                        let by = -sin_phi * sx + cos_phi * sy;
                        let ex = (bx - motion.tx) / sigma_x;
                        let ey = (by - motion.ty) / sigma_y;
                        let e = 0.5 * (ex * ex + ey * ey);
                        exponents[dy * side + dx] = e;
                        dense[dy * side + dx] = (-e).exp();
                    }
                }
                normalize_or_delta(&mut dense, &exponents);
                translational.push(dense);
            }
        }

        let mut rotational = vec![0.0; orientations];
        let mut rot_exponents = vec![0.0; orientations];
        for (j, (entry, exponent)) in rotational.iter_mut().zip(&mut rot_exponents).enumerate() {
            let offset = wrap_pi(j as f64 * TAU / orientations as f64 - motion.tphi);
            let e = 0.5 * (offset / sigma_phi) * (offset / sigma_phi);
            *exponent = e;
            *entry = (-e).exp();
        }
        normalize_or_delta(&mut rotational, &rot_exponents);

        Self {
            orientations,
            resolution,
            half_width,
            translational,
            rotational,
            separable,
            motion: *motion,
            noise: *noise,
        }
    }

    pub fn orientations(&self) -> usize {
        self.orientations
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn motion(&self) -> &EgoMotion {
        &self.motion
    }

    pub fn noise(&self) -> &MotionNoise {
        &self.noise
    }

    /// Translational filter entry for orientation bin `k` at destination cell
    /// offset `(dx, dy)`.
    pub fn translational(&self, k: usize, dx: isize, dy: isize) -> f64 {
        let h = self.half_width as isize;
        if dx.abs() > h || dy.abs() > h {
            return 0.0;
        }
        let side = 2 * self.half_width + 1;
        self.translational[k][((dy + h) as usize) * side + (dx + h) as usize]
    }

    /// Rotational filter entry at bin offset `j`.
    pub fn rotational(&self, j: usize) -> f64 {
        self.rotational[j]
    }
}

/// Normalized 1D Gaussian samples at cell offsets, with the same
/// delta-fallback as the dense path.
fn gaussian_axis(half_width: usize, resolution: f64, center: f64, sigma: f64) -> Vec<f64> {
    let side = 2 * half_width + 1;
    let mut weights = vec![0.0; side];
    let mut exponents = vec![0.0; side];
    for d in 0..side {
        let s = (d as f64 - half_width as f64) * resolution;
        let e = 0.5 * ((s - center) / sigma) * ((s - center) / sigma);
        exponents[d] = e;
        weights[d] = (-e).exp();
    }
    normalize_or_delta(&mut weights, &exponents);
    weights
}

/// Normalizes weights to sum 1. When every weight underflowed to zero the
/// smallest-exponent entry becomes a delta so the filter still moves mass.
fn normalize_or_delta(weights: &mut [f64], exponents: &[f64]) {
    let sum: f64 = weights.iter().sum();
    if sum > 0.0 {
        for w in weights.iter_mut() {
            *w /= sum;
            if *w < TAP_CUTOFF {
                *w = 0.0;
            }
        }
        // Renormalize the survivors of the cutoff.
        let sum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= sum;
        }
    } else {
        let best = exponents
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("filters are non-empty");
        weights[best] = 1.0;
    }
}

/// Posterior over the SE(2) pose grid.
#[derive(Debug, Clone)]
pub struct ProbabilityVolume {
    pub width: usize,
    pub height: usize,
    pub orientations: usize,
    pub resolution: f64,
    pub origin: (f64, f64),
    /// Orientation-major: `p[k·W·H + iy·W + ix]`.
    pub p: Vec<f64>,
    pub free_mask: Vec<bool>,
}

/// Argmax readout of a probability volume.
#[derive(Debug, Clone)]
pub struct PosteriorReadout {
    pub pose: Pose,
    pub probability: f64,
    /// Per-cell probability summed over orientation (`W·H`).
    pub position_marginal: Vec<f64>,
}

impl ProbabilityVolume {
    /// Uniform mass over every (free cell, orientation) pair.
    pub fn uniform(
        width: usize,
        height: usize,
        orientations: usize,
        resolution: f64,
        origin: (f64, f64),
        free_mask: Vec<bool>,
    ) -> Result<Self, FilterError> {
        assert_eq!(free_mask.len(), width * height);
        let free = free_mask.iter().filter(|f| **f).count();
        if free == 0 {
            return Err(FilterError::NoFreeCells);
        }
        let mass = 1.0 / (free * orientations) as f64;
        let mut p = vec![0.0; width * height * orientations];
        for k in 0..orientations {
            let base = k * width * height;
            for (cell, is_free) in free_mask.iter().enumerate() {
                if *is_free {
                    p[base + cell] = mass;
                }
            }
        }
        Ok(Self {
            width,
            height,
            orientations,
            resolution,
            origin,
            p,
            free_mask,
        })
    }

    pub fn uniform_over_grid(map: &OccupancyGrid, orientations: usize) -> Result<Self, FilterError> {
        Self::uniform(
            map.width(),
            map.height(),
            orientations,
            map.resolution(),
            map.origin(),
            map.free_mask(),
        )
    }

    pub fn uniform_over_db(db: &PoseRayDatabase, orientations: usize) -> Result<Self, FilterError> {
        Self::uniform(
            db.width(),
            db.height(),
            orientations,
            db.resolution(),
            db.origin(),
            db.free_mask().to_vec(),
        )
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, k: usize) -> usize {
        k * self.width * self.height + iy * self.width + ix
    }

    pub fn total_mass(&self) -> f64 {
        kahan_sum(&self.p)
    }

    /// Motion update: convolves each orientation slice with its translational
    /// filter (zero padding in x/y, so mass leaving the map is lost), then
    /// convolves circularly along the orientation axis, masks occupied cells
    /// and renormalizes.
    pub fn predict(&self, kernel: &TransitionKernel) -> Result<Self, FilterError> {
        Ok(self.predict_with_retained_mass(kernel)?.0)
    }

    /// [`predict`](Self::predict), also reporting the probability mass that
    /// survived the boundary and wall masking before renormalization.
    pub fn predict_with_retained_mass(
        &self,
        kernel: &TransitionKernel,
    ) -> Result<(Self, f64), FilterError> {
        if kernel.orientations() != self.orientations {
            return Err(FilterError::ShapeMismatch(format!(
                "kernel has {} orientation groups, volume {}",
                kernel.orientations(),
                self.orientations
            )));
        }
        let wh = self.width * self.height;

        // Grouped translational pass: one independent 2D convolution per
        // orientation slice.
        let mut translated = vec![0.0; wh * self.orientations];
        translated
            .par_chunks_mut(wh)
            .enumerate()
            .for_each(|(k, out)| {
                let input = &self.p[k * wh..(k + 1) * wh];
                match &kernel.separable {
                    Some(factors) => {
                        let (fx, fy) = &factors[k];
                        convolve_separable(
                            input,
                            out,
                            self.width,
                            self.height,
                            kernel.half_width,
                            fx,
                            fy,
                        );
                    }
                    None => convolve_dense(
                        input,
                        out,
                        self.width,
                        self.height,
                        kernel.half_width,
                        &kernel.translational[k],
                    ),
                }
            });

        // Circular rotational pass along the orientation axis.
        let mut rotated = vec![0.0; wh * self.orientations];
        rotated
            .par_chunks_mut(wh)
            .enumerate()
            .for_each(|(k_dst, out)| {
                for (j, weight) in kernel.rotational.iter().enumerate() {
                    if *weight == 0.0 {
                        continue;
                    }
                    let k_src = (k_dst + self.orientations - j) % self.orientations;
                    let src = &translated[k_src * wh..(k_src + 1) * wh];
                    for (o, s) in out.iter_mut().zip(src) {
                        *o += weight * s;
                    }
                }
            });

        // Walls absorb nothing: zero them out, then renormalize.
        for k in 0..self.orientations {
            let slice = &mut rotated[k * wh..(k + 1) * wh];
            for (value, free) in slice.iter_mut().zip(&self.free_mask) {
                if !*free {
                    *value = 0.0;
                }
            }
        }

        let retained = kahan_sum(&rotated);
        if !(retained > 0.0) {
            return Err(FilterError::MassDepleted);
        }
        let inv = 1.0 / retained;
        for value in rotated.iter_mut() {
            *value *= inv;
        }

        Ok((
            Self {
                p: rotated,
                free_mask: self.free_mask.clone(),
                ..*self
            },
            retained,
        ))
    }

    /// Measurement update: `p ∝ p·exp(log_lik − max finite log_lik)`,
    /// renormalized. `−∞` log-likelihoods zero their cells.
    pub fn update(&self, likelihood: &LikelihoodVolume) -> Result<Self, FilterError> {
        if likelihood.width != self.width
            || likelihood.height != self.height
            || likelihood.orientations != self.orientations
        {
            return Err(FilterError::ShapeMismatch(format!(
                "likelihood {}×{}×{} vs volume {}×{}×{}",
                likelihood.width,
                likelihood.height,
                likelihood.orientations,
                self.width,
                self.height,
                self.orientations
            )));
        }
        let max_log = likelihood
            .log_lik
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if max_log == f64::NEG_INFINITY {
            return Err(FilterError::ZeroPosterior);
        }

        let mut posterior = vec![0.0; self.p.len()];
        posterior
            .par_chunks_mut(self.width * self.height)
            .zip(self.p.par_chunks(self.width * self.height))
            .zip(likelihood.log_lik.par_chunks(self.width * self.height))
            .for_each(|((out, prior), log_lik)| {
                for ((o, p), ll) in out.iter_mut().zip(prior).zip(log_lik) {
                    if ll.is_finite() && *p > 0.0 {
                        *o = p * (ll - max_log).exp();
                    }
                }
            });

        let total = kahan_sum(&posterior);
        if !(total > 0.0) {
            return Err(FilterError::ZeroPosterior);
        }
        let inv = 1.0 / total;
        for value in posterior.iter_mut() {
            *value *= inv;
        }

        Ok(Self {
            p: posterior,
            free_mask: self.free_mask.clone(),
            ..*self
        })
    }

    /// Best pose (ties → lowest storage index), its probability, and the
    /// per-cell orientation marginal.
    pub fn readout(&self) -> PosteriorReadout {
        let wh = self.width * self.height;
        let mut best_idx = 0usize;
        let mut best = f64::NEG_INFINITY;
        for (idx, value) in self.p.iter().enumerate() {
            if *value > best {
                best = *value;
                best_idx = idx;
            }
        }
        let k = best_idx / wh;
        let cell = best_idx % wh;
        let (ix, iy) = (cell % self.width, cell / self.width);

        let mut marginal = vec![0.0; wh];
        for k in 0..self.orientations {
            let slice = &self.p[k * wh..(k + 1) * wh];
            for (m, v) in marginal.iter_mut().zip(slice) {
                *m += v;
            }
        }

        PosteriorReadout {
            pose: Pose::new(
                self.origin.0 + (ix as f64 + 0.5) * self.resolution,
                self.origin.1 + (iy as f64 + 0.5) * self.resolution,
                k as f64 * TAU / self.orientations as f64,
            ),
            probability: best,
            position_marginal: marginal,
        }
    }

    /// Serializes to the FLPV binary format (little-endian): magic, version
    /// u16, orientations u32, width u32, height u32, resolution f32,
    /// free-mask bitset, then f32 probabilities for all cells in
    /// orientation-major order.
    pub fn write_to<W: Write>(&self, writer: &mut W) -> Result<(), FilterError> {
        writer.write_all(FLPV_MAGIC)?;
        writer.write_all(&FLPV_VERSION.to_le_bytes())?;
        writer.write_all(&(self.orientations as u32).to_le_bytes())?;
        writer.write_all(&(self.width as u32).to_le_bytes())?;
        writer.write_all(&(self.height as u32).to_le_bytes())?;
        writer.write_all(&(self.resolution as f32).to_le_bytes())?;
        writer.write_all(&pack_bitset(&self.free_mask))?;
        let mut buf = Vec::with_capacity(self.p.len() * 4);
        for value in &self.p {
            buf.extend_from_slice(&(*value as f32).to_le_bytes());
        }
        writer.write_all(&buf)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), FilterError> {
        let mut file = io::BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut file)
    }

    pub fn read_from<R: Read>(reader: &mut R) -> Result<Self, FilterError> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        let mut cursor = 0usize;
        let magic = take(&bytes, &mut cursor, 4)?;
        if magic != FLPV_MAGIC {
            return Err(FilterError::BadMagic);
        }
        let version = u16::from_le_bytes(take(&bytes, &mut cursor, 2)?.try_into().unwrap());
        if version != FLPV_VERSION {
            return Err(FilterError::BadVersion(version));
        }
        let orientations =
            u32::from_le_bytes(take(&bytes, &mut cursor, 4)?.try_into().unwrap()) as usize;
        let width = u32::from_le_bytes(take(&bytes, &mut cursor, 4)?.try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(take(&bytes, &mut cursor, 4)?.try_into().unwrap()) as usize;
        let resolution =
            f32::from_le_bytes(take(&bytes, &mut cursor, 4)?.try_into().unwrap()) as f64;
        let mask_bytes = take(&bytes, &mut cursor, (width * height + 7) / 8)?;
        let free_mask = unpack_bitset(mask_bytes, width * height);
        let payload = take(&bytes, &mut cursor, width * height * orientations * 4)?;
        let p = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(Self {
            width,
            height,
            orientations,
            resolution,
            origin: (0.0, 0.0),
            p,
            free_mask,
        })
    }

    pub fn load(path: &Path) -> Result<Self, FilterError> {
        let mut file = io::BufReader::new(fs::File::open(path)?);
        Self::read_from(&mut file)
    }
}

/// `out[y][x] = Σ T(dx, dy)·in[y−dy][x−dx]` with zero padding, accumulated
/// tap-by-tap over shifted rows so the inner loop vectorizes.
fn convolve_dense(
    input: &[f64],
    out: &mut [f64],
    width: usize,
    height: usize,
    half_width: usize,
    taps: &[f64],
) {
    let h = half_width as isize;
    let side = 2 * half_width + 1;
    for dy in -h..=h {
        for dx in -h..=h {
            let w = taps[((dy + h) as usize) * side + (dx + h) as usize];
            if w == 0.0 {
                continue;
            }
            accumulate_shifted(input, out, width, height, dx, dy, w);
        }
    }
}

/// Separable variant: horizontal pass with `fx`, then vertical with `fy`.
fn convolve_separable(
    input: &[f64],
    out: &mut [f64],
    width: usize,
    height: usize,
    half_width: usize,
    fx: &[f64],
    fy: &[f64],
) {
    let h = half_width as isize;
    let mut horizontal = vec![0.0; input.len()];
    for dx in -h..=h {
        let w = fx[(dx + h) as usize];
        if w == 0.0 {
            continue;
        }
        accumulate_shifted(input, &mut horizontal, width, height, dx, 0, w);
    }
    for dy in -h..=h {
        let w = fy[(dy + h) as usize];
        if w == 0.0 {
            continue;
        }
        accumulate_shifted(&horizontal, out, width, height, 0, dy, w);
    }
}

/// `out[y][x] += w·in[y−dy][x−dx]` over the in-bounds overlap.
#[inline]
fn accumulate_shifted(
    input: &[f64],
    out: &mut [f64],
    width: usize,
    height: usize,
    dx: isize,
    dy: isize,
    w: f64,
) {
    let y0 = dy.max(0);
    let y1 = height as isize + dy.min(0);
    let x0 = dx.max(0);
    let x1 = width as isize + dx.min(0);
    if x0 >= x1 || y0 >= y1 {
        return;
    }
    let (y0, y1, x0, x1) = (y0 as usize, y1 as usize, x0 as usize, x1 as usize);
    for y in y0..y1 {
        let src_row = ((y as isize - dy) as usize) * width;
        let dst_row = y * width;
        let src = &input[src_row + (x0 as isize - dx) as usize..];
        let dst = &mut out[dst_row + x0..dst_row + x1];
        for (o, s) in dst.iter_mut().zip(src) {
            *o += w * s;
        }
    }
}

/// Compensated summation; posterior renormalization runs every step, so the
/// accumulator must not drift over thousands of steps.
pub(crate) fn kahan_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

fn take<'a>(bytes: &'a [u8], cursor: &mut usize, n: usize) -> Result<&'a [u8], FilterError> {
    if *cursor + n > bytes.len() {
        return Err(FilterError::Truncated);
    }
    let out = &bytes[*cursor..*cursor + n];
    *cursor += n;
    Ok(out)
}

fn pack_bitset(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; (bits.len() + 7) / 8];
    for (i, bit) in bits.iter().enumerate() {
        if *bit {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn unpack_bitset(bytes: &[u8], len: usize) -> Vec<bool> {
    (0..len).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect()
}
