//! Synthetic floorplans for tests, benchmarks, and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::OccupancyGrid;

/// A rectangular room: one-cell outer walls, free interior.
pub fn square_room(width: usize, height: usize, resolution: f64) -> OccupancyGrid {
    let mut map = OccupancyGrid::free(width, height, resolution);
    map.fill_rect(0, 0, width - 1, 0, true);
    map.fill_rect(0, height - 1, width - 1, height - 1, true);
    map.fill_rect(0, 0, 0, height - 1, true);
    map.fill_rect(width - 1, 0, width - 1, height - 1, true);
    map
}

/// A 10 m × 8 m two-room apartment at the given resolution: a central
/// dividing wall with a door gap, plus a few furniture blocks that break the
/// left/right symmetry.
pub fn two_room_10x8(resolution: f64) -> OccupancyGrid {
    let width = (10.0 / resolution).round() as usize;
    let height = (8.0 / resolution).round() as usize;
    let mut map = square_room(width, height, resolution);

    let to_cells = |meters: f64| (meters / resolution).round() as usize;

    // Dividing wall at x = 5 m with a 1 m doorway centered at y = 4 m.
    let wall_x = to_cells(5.0);
    map.fill_rect(wall_x, 0, wall_x, height - 1, true);
    map.fill_rect(wall_x, to_cells(3.5), wall_x, to_cells(4.5), false);

    // Furniture: a table in the west room, an L-shaped counter in the east.
    map.fill_rect(to_cells(1.5), to_cells(1.5), to_cells(2.5), to_cells(2.2), true);
    map.fill_rect(to_cells(6.5), to_cells(5.5), to_cells(8.5), to_cells(6.0), true);
    map.fill_rect(to_cells(8.0), to_cells(3.0), to_cells(8.5), to_cells(5.5), true);
    map.fill_rect(to_cells(1.0), to_cells(6.0), to_cells(1.4), to_cells(7.0), true);

    map
}

/// A long corridor that is (discretely) translation-symmetric along x except
/// at the far ends, for ambiguity experiments.
pub fn corridor(length_cells: usize, width_cells: usize, resolution: f64) -> OccupancyGrid {
    square_room(length_cells, width_cells, resolution)
}

/// An 18.4 m × 15.5 m multi-room floorplan at the given resolution, sized for
/// throughput measurements.
pub fn large_apartment(resolution: f64) -> OccupancyGrid {
    let width = (18.4 / resolution).round() as usize;
    let height = (15.5 / resolution).round() as usize;
    let mut map = square_room(width, height, resolution);
    let to_cells = |meters: f64| (meters / resolution).round() as usize;

    // Two vertical and one horizontal interior wall with doorways.
    let x1 = to_cells(6.0);
    map.fill_rect(x1, 0, x1, height - 1, true);
    map.fill_rect(x1, to_cells(3.0), x1, to_cells(4.2), false);
    map.fill_rect(x1, to_cells(11.0), x1, to_cells(12.2), false);

    let x2 = to_cells(12.5);
    map.fill_rect(x2, 0, x2, height - 1, true);
    map.fill_rect(x2, to_cells(7.0), x2, to_cells(8.2), false);

    let y1 = to_cells(8.0);
    map.fill_rect(0, y1, to_cells(6.0), y1, true);
    map.fill_rect(to_cells(2.0), y1, to_cells(3.2), y1, false);

    // Scattered fixtures.
    map.fill_rect(to_cells(8.5), to_cells(2.0), to_cells(10.0), to_cells(3.0), true);
    map.fill_rect(to_cells(14.5), to_cells(12.0), to_cells(16.5), to_cells(13.0), true);
    map.fill_rect(to_cells(1.0), to_cells(12.5), to_cells(2.0), to_cells(14.0), true);

    map
}

/// A walled map with randomly scattered rectangular obstacles. Obstacles stay
/// clear of the border so free space stays connected in practice.
pub fn random_clutter(
    width: usize,
    height: usize,
    resolution: f64,
    blocks: usize,
    seed: u64,
) -> OccupancyGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = square_room(width, height, resolution);
    for _ in 0..blocks {
        let bw = rng.gen_range(1..=width / 6);
        let bh = rng.gen_range(1..=height / 6);
        let x0 = rng.gen_range(2..width - 2 - bw);
        let y0 = rng.gen_range(2..height - 2 - bh);
        map.fill_rect(x0, y0, x0 + bw - 1, y0 + bh - 1, true);
    }
    map
}
