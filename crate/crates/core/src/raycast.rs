//! Exact grid-traversal raycasting over occupancy grids.

use std::f64::consts::TAU;

use thiserror::Error;

use crate::grid::OccupancyGrid;
use crate::pose::Pose;
use crate::scan::RayScan;

#[derive(Debug, Error, PartialEq)]
pub enum RaycastError {
    #[error("ray origin ({0}, {1}) lies inside an occupied cell")]
    OriginOccupied(f64, f64),
    #[error("ray origin ({0}, {1}) lies outside the map")]
    OriginOutOfMap(f64, f64),
}

/// Casts a ray through the grid and returns the Euclidean distance to the
/// first boundary of an occupied cell, or `None` when the ray leaves the map
/// or exceeds `max_range` first.
///
/// Traversal is exact (Amanatides–Woo DDA); a crossing that lands on a cell
/// corner steps in x first.
pub fn cast_ray(
    map: &OccupancyGrid,
    origin: (f64, f64),
    angle: f64,
    max_range: f64,
) -> Result<Option<f64>, RaycastError> {
    let (ox, oy) = origin;
    let (ix0, iy0) = map
        .cell_of(ox, oy)
        .ok_or(RaycastError::OriginOutOfMap(ox, oy))?;
    if map.is_occupied(ix0, iy0) {
        return Err(RaycastError::OriginOccupied(ox, oy));
    }

    let res = map.resolution();
    let map_origin = map.origin();
    // Work in cell units; parameter t converts to meters via the resolution.
    let px = (ox - map_origin.0) / res;
    let py = (oy - map_origin.1) / res;
    let dx = angle.cos();
    let dy = angle.sin();
    let max_t = max_range / res;

    let mut ix = ix0 as i64;
    let mut iy = iy0 as i64;

    let (step_x, mut t_max_x, t_delta_x) = axis_setup(px, ix, dx);
    let (step_y, mut t_max_y, t_delta_y) = axis_setup(py, iy, dy);

    let width = map.width() as i64;
    let height = map.height() as i64;

    loop {
        // Corner ties advance x first.
        let t = if t_max_x <= t_max_y {
            let t = t_max_x;
            ix += step_x;
            t_max_x += t_delta_x;
            t
        } else {
            let t = t_max_y;
            iy += step_y;
            t_max_y += t_delta_y;
            t
        };
        if t > max_t {
            return Ok(None);
        }
        if ix < 0 || iy < 0 || ix >= width || iy >= height {
            return Ok(None);
        }
        if map.is_occupied(ix as usize, iy as usize) {
            return Ok(Some(t * res));
        }
    }
}

/// Per-axis DDA state: step direction, distance to the first boundary
/// crossing, and distance between crossings (all in ray-parameter units).
fn axis_setup(pos: f64, cell: i64, dir: f64) -> (i64, f64, f64) {
    if dir > 0.0 {
        (1, ((cell + 1) as f64 - pos) / dir, 1.0 / dir)
    } else if dir < 0.0 {
        (-1, (pos - cell as f64) / -dir, -1.0 / dir)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

/// Renders a full-circle equiangular scan from a point, with rays at world
/// angles `k·2π/ray_count`.
pub fn render_circular_scan(
    map: &OccupancyGrid,
    position: (f64, f64),
    ray_count: usize,
    max_range: f64,
) -> Result<RayScan, RaycastError> {
    assert!(ray_count >= 1);
    let step = TAU / ray_count as f64;
    let mut ranges = Vec::with_capacity(ray_count);
    let mut valid = Vec::with_capacity(ray_count);
    for k in 0..ray_count {
        match cast_ray(map, position, k as f64 * step, max_range)? {
            Some(range) => {
                ranges.push(range);
                valid.push(true);
            }
            None => {
                ranges.push(max_range);
                valid.push(false);
            }
        }
    }
    Ok(RayScan::new(0.0, step, max_range, ranges, valid))
}

/// Renders a field-of-view scan at a pose, with `n_rays` rays spanning
/// `[−fov/2, +fov/2]` around the heading.
pub fn render_fov_scan(
    map: &OccupancyGrid,
    pose: &Pose,
    n_rays: usize,
    fov: f64,
    max_range: f64,
) -> Result<RayScan, RaycastError> {
    assert!(n_rays >= 1);
    debug_assert!(fov > 0.0 && fov <= TAU);
    let (rel_start, step) = if n_rays == 1 {
        (0.0, fov)
    } else {
        (-fov / 2.0, fov / (n_rays - 1) as f64)
    };
    let mut ranges = Vec::with_capacity(n_rays);
    let mut valid = Vec::with_capacity(n_rays);
    for j in 0..n_rays {
        let angle = pose.phi + rel_start + j as f64 * step;
        match cast_ray(map, (pose.x, pose.y), angle, max_range)? {
            Some(range) => {
                ranges.push(range);
                valid.push(true);
            }
            None => {
                ranges.push(max_range);
                valid.push(false);
            }
        }
    }
    Ok(RayScan::new(rel_start, step, max_range, ranges, valid))
}
