//! From floorplan depth to ray observations, and their likelihood over the
//! full pose grid.

use std::f64::consts::TAU;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::database::PoseRayDatabase;
use crate::depth::FloorplanDepth;
use crate::pgm::{self, GrayImage};
use crate::pose::Pose;
use crate::scan::{circular_neighbors, RayScan, SliceError};

#[derive(Debug, Error, PartialEq)]
pub enum ObservationError {
    #[error("requested fov {fov} rad exceeds the camera's coverage {coverage} rad")]
    FovExceedsCamera { fov: f64, coverage: f64 },
    #[error("ray scans have different layouts: {0}")]
    LayoutMismatch(String),
    #[error("likelihood volume has no finite entry")]
    EmptyVolume,
    #[error(transparent)]
    Slice(#[from] SliceError),
}

/// Interpolates an equiangular ray scan from per-column floorplan depth.
///
/// Column `u` sits at angle `atan((u + 0.5 − cx)/fx)` with range
/// `depth/cos(angle)`; the output rays span `[−fov/2, +fov/2]` around the
/// optical axis, linearly interpolated over the column graph. A query between
/// a valid and an invalid column is invalid; queries past the outermost
/// column centers (but within the camera fov) clamp to the edge column.
pub fn interpolate_equiangular(
    fd: &FloorplanDepth,
    n_rays: usize,
    fov: f64,
    max_range: f64,
) -> Result<RayScan, ObservationError> {
    let coverage = fd.intrinsics.horizontal_fov();
    if fov > coverage + 1e-12 {
        return Err(ObservationError::FovExceedsCamera { fov, coverage });
    }
    assert!(n_rays >= 1 && fov > 0.0);
    assert_eq!(
        fd.columns(),
        fd.intrinsics.width,
        "floorplan depth must cover every camera column"
    );

    let angles = fd.intrinsics.column_angles();
    let ranges_per_column: Vec<f64> = fd
        .depths
        .iter()
        .zip(&angles)
        .map(|(d, a)| d / a.cos())
        .collect();

    let (rel_start, step) = if n_rays == 1 {
        (0.0, fov)
    } else {
        (-fov / 2.0, fov / (n_rays - 1) as f64)
    };

    let mut ranges = Vec::with_capacity(n_rays);
    let mut valid = Vec::with_capacity(n_rays);
    for j in 0..n_rays {
        let q = rel_start + j as f64 * step;
        let (range, ok) = sample_columns(&angles, &ranges_per_column, &fd.valid, q);
        ranges.push(if ok { range.clamp(0.0, max_range) } else { max_range });
        valid.push(ok);
    }
    Ok(RayScan::new(rel_start, step, max_range, ranges, valid))
}

/// Linear interpolation over the (strictly increasing) column-angle graph,
/// clamping beyond the end columns and snapping onto exact column angles.
fn sample_columns(angles: &[f64], ranges: &[f64], valid: &[bool], q: f64) -> (f64, bool) {
    let n = angles.len();
    if q <= angles[0] {
        return (ranges[0], valid[0]);
    }
    if q >= angles[n - 1] {
        return (ranges[n - 1], valid[n - 1]);
    }
    let hi = angles.partition_point(|a| *a < q).min(n - 1);
    let lo = hi - 1;
    let t = (q - angles[lo]) / (angles[hi] - angles[lo]);
    if t < 1e-9 {
        (ranges[lo], valid[lo])
    } else if t > 1.0 - 1e-9 {
        (ranges[hi], valid[hi])
    } else if valid[lo] && valid[hi] {
        ((1.0 - t) * ranges[lo] + t * ranges[hi], true)
    } else {
        (0.0, false)
    }
}

/// Negated, validity-rescaled L1 distance between two equal-layout scans:
/// `−Σ|r̂_i − r_i|·(total/valid)` over rays valid in both. Returns `−∞` when
/// no ray is valid in both scans.
pub fn observation_log_likelihood(
    r_hat: &RayScan,
    r_pose: &RayScan,
) -> Result<f64, ObservationError> {
    check_layouts(r_hat, r_pose)?;
    let mut sum = 0.0;
    let mut valid = 0usize;
    for i in 0..r_hat.len() {
        if r_hat.valid[i] && r_pose.valid[i] {
            sum += (r_hat.ranges[i] - r_pose.ranges[i]).abs();
            valid += 1;
        }
    }
    if valid == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(-sum * (r_hat.len() as f64 / valid as f64))
}

fn check_layouts(a: &RayScan, b: &RayScan) -> Result<(), ObservationError> {
    if a.len() != b.len() {
        return Err(ObservationError::LayoutMismatch(format!(
            "ray counts {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if (a.start_angle - b.start_angle).abs() > 1e-9 || (a.angular_step - b.angular_step).abs() > 1e-9
    {
        return Err(ObservationError::LayoutMismatch(format!(
            "angular layouts ({}, {}) vs ({}, {})",
            a.start_angle, a.angular_step, b.start_angle, b.angular_step
        )));
    }
    Ok(())
}

/// Log observation likelihood at every `(cell, orientation)` pose of the
/// grid. Occupied cells carry `−∞`.
#[derive(Debug, Clone)]
pub struct LikelihoodVolume {
    pub width: usize,
    pub height: usize,
    pub orientations: usize,
    pub resolution: f64,
    pub origin: (f64, f64),
    /// Orientation-major: `log_lik[k·W·H + iy·W + ix]`.
    pub log_lik: Vec<f64>,
    pub free_mask: Vec<bool>,
}

impl LikelihoodVolume {
    #[inline]
    pub fn index(&self, ix: usize, iy: usize, k: usize) -> usize {
        k * self.width * self.height + iy * self.width + ix
    }

    pub fn orientation_angle(&self, k: usize) -> f64 {
        k as f64 * TAU / self.orientations as f64
    }

    /// World pose at a volume slot (cell center, bin center).
    pub fn pose_at(&self, ix: usize, iy: usize, k: usize) -> Pose {
        Pose::new(
            self.origin.0 + (ix as f64 + 0.5) * self.resolution,
            self.origin.1 + (iy as f64 + 0.5) * self.resolution,
            self.orientation_angle(k),
        )
    }
}

/// Evaluates the observation likelihood of `r_hat` at every free cell and
/// orientation bin by slicing the stored circular scans.
///
/// Equivalent to `slice_fov_scan` + `observation_log_likelihood` per pose,
/// but interpolation taps are precomputed per (bin, ray) and cells run in
/// parallel.
pub fn likelihood_volume(
    r_hat: &RayScan,
    db: &PoseRayDatabase,
    orientations: usize,
) -> LikelihoodVolume {
    assert!(orientations >= 1);
    let width = db.width();
    let height = db.height();
    let wh = width * height;
    let n_rays = r_hat.len();
    let db_n = db.ray_count();
    let db_step = db.angular_step();

    // Interpolation taps depend on (bin, ray) only, never on the cell.
    // Snapped queries are rewritten as (i, i, 0) so one lerp covers all
    // cases: NaN-encoded invalid rays poison exactly the rays they touch.
    struct Tap {
        i0: u32,
        i1: u32,
        w: f64,
        observed: f64,
    }
    let taps: Vec<Tap> = (0..orientations)
        .flat_map(|k| {
            let heading = k as f64 * TAU / orientations as f64;
            (0..n_rays).map(move |j| (heading, j))
        })
        .map(|(heading, j)| {
            let angle = heading + r_hat.start_angle + j as f64 * r_hat.angular_step;
            let (i0, i1, w) = circular_neighbors(db_n, db_step, angle);
            let (i0, i1, w) = if w == 0.0 {
                (i0, i0, 0.0)
            } else if w == 1.0 {
                (i1, i1, 0.0)
            } else {
                (i0, i1, w)
            };
            Tap {
                i0: i0 as u32,
                i1: i1 as u32,
                w,
                observed: if r_hat.valid[j] {
                    r_hat.ranges[j]
                } else {
                    f64::NAN
                },
            }
        })
        .collect();

    let total = n_rays as f64;
    // Cell-major pass (each cell's stored rays stay in cache across all
    // orientation bins), then transpose to the orientation-major layout.
    let mut cell_major = vec![f64::NEG_INFINITY; wh * orientations];
    cell_major
        .par_chunks_mut(orientations)
        .enumerate()
        .for_each(|(cell, out)| {
            let Some(rays) = db.nan_rays_at_index(cell) else {
                return;
            };
            for (k, slot) in out.iter_mut().enumerate() {
                let mut sum = 0.0;
                let mut n_valid = 0u32;
                for tap in &taps[k * n_rays..(k + 1) * n_rays] {
                    let r = (1.0 - tap.w) * rays[tap.i0 as usize]
                        + tap.w * rays[tap.i1 as usize];
                    let d = (tap.observed - r).abs();
                    if d == d {
                        sum += d;
                        n_valid += 1;
                    }
                }
                if n_valid > 0 {
                    *slot = -sum * (total / n_valid as f64);
                }
            }
        });

    let mut log_lik = vec![f64::NEG_INFINITY; wh * orientations];
    log_lik
        .par_chunks_mut(wh)
        .enumerate()
        .for_each(|(k, slice)| {
            for (cell, out) in slice.iter_mut().enumerate() {
                *out = cell_major[cell * orientations + k];
            }
        });

    LikelihoodVolume {
        width,
        height,
        orientations,
        resolution: db.resolution(),
        origin: db.origin(),
        log_lik,
        free_mask: db.free_mask().to_vec(),
    }
}

/// Pose of the maximal finite likelihood entry, ties broken by the lowest
/// storage index (orientation-major, then row-major).
pub fn argmax_pose(volume: &LikelihoodVolume) -> Result<(Pose, f64), ObservationError> {
    let wh = volume.width * volume.height;
    let mut best: Option<(usize, f64)> = None;
    for (idx, value) in volume.log_lik.iter().enumerate() {
        if value.is_finite() && best.map_or(true, |(_, b)| *value > b) {
            best = Some((idx, *value));
        }
    }
    let (idx, value) = best.ok_or(ObservationError::EmptyVolume)?;
    let k = idx / wh;
    let cell = idx % wh;
    let (ix, iy) = (cell % volume.width, cell / volume.width);
    Ok((volume.pose_at(ix, iy, k), value))
}

/// Writes one PGM per orientation bin plus an orientation-max composite,
/// linearly mapping `[min finite, max]` to `[0, 255]` (non-finite → 0).
/// Returns the written paths, composite last.
pub fn export_volume_pgms(
    width: usize,
    height: usize,
    orientations: usize,
    data: &[f64],
    dir: &Path,
    prefix: &str,
) -> io::Result<Vec<PathBuf>> {
    assert_eq!(data.len(), width * height * orientations);
    fs::create_dir_all(dir)?;
    let wh = width * height;

    let finite = data.iter().copied().filter(|v| v.is_finite());
    let max = finite.clone().fold(f64::NEG_INFINITY, f64::max);
    let min = finite.fold(f64::INFINITY, f64::min);
    let scale = |v: f64| -> u8 {
        if !v.is_finite() {
            return 0;
        }
        if max <= min {
            return 255;
        }
        (255.0 * (v - min) / (max - min)).round().clamp(0.0, 255.0) as u8
    };

    let mut paths = Vec::with_capacity(orientations + 1);
    let mut composite = vec![f64::NEG_INFINITY; wh];
    for k in 0..orientations {
        let slice = &data[k * wh..(k + 1) * wh];
        for (c, v) in composite.iter_mut().zip(slice) {
            *c = c.max(*v);
        }
        let path = dir.join(format!("{prefix}_bin_{k:02}.pgm"));
        write_cell_image(&path, width, height, slice, &scale)?;
        paths.push(path);
    }
    let path = dir.join(format!("{prefix}_composite.pgm"));
    write_cell_image(&path, width, height, &composite, &scale)?;
    paths.push(path);
    Ok(paths)
}

fn write_cell_image(
    path: &Path,
    width: usize,
    height: usize,
    cells: &[f64],
    scale: &dyn Fn(f64) -> u8,
) -> io::Result<()> {
    let mut image = GrayImage::new(width, height);
    for iy in 0..height {
        let image_row = height - 1 - iy;
        for ix in 0..width {
            image.set(ix, image_row, scale(cells[iy * width + ix]));
        }
    }
    let mut file = fs::File::create(path)?;
    pgm::write_pgm(&mut file, &image)
}
