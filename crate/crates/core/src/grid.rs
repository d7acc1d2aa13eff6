//! Occupancy-grid floorplans and their on-disk forms.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pgm::{self, GrayImage};

/// Pixels darker than this are occupied in loaded floorplan images.
pub const OCCUPIED_PIXEL_THRESHOLD: u8 = 128;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid dimensions must be at least 1×1 (got {width}×{height})")]
    EmptyGrid { width: usize, height: usize },
    #[error("grid resolution must be positive (got {0})")]
    BadResolution(f64),
    #[error("cell data length {got} does not match {width}×{height}")]
    CellCountMismatch {
        got: usize,
        width: usize,
        height: usize,
    },
    #[error("missing sidecar metadata file {0}")]
    MissingSidecar(PathBuf),
    #[error("unsupported floorplan image format: {0}")]
    UnsupportedFormat(String),
    #[error("image decode error: {0}")]
    Image(#[from] image::ImageError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("sidecar parse error: {0}")]
    Sidecar(#[from] serde_json::Error),
}

/// Sidecar metadata stored next to a floorplan image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapSidecar {
    pub resolution_m: f64,
    pub origin_m: [f64; 2],
}

/// A 2D floorplan as boolean occupancy cells with metric resolution.
///
/// Cells are stored row-major with `(0, 0)` at the world-frame lower-left
/// corner; cell `(ix, iy)` covers `[origin + (ix, iy)·res, origin + (ix+1,
/// iy+1)·res)`. `true` means occupied.
#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: (f64, f64),
    cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        origin: (f64, f64),
        cells: Vec<bool>,
    ) -> Result<Self, GridError> {
        if width == 0 || height == 0 {
            return Err(GridError::EmptyGrid { width, height });
        }
        if !(resolution > 0.0) {
            return Err(GridError::BadResolution(resolution));
        }
        if cells.len() != width * height {
            return Err(GridError::CellCountMismatch {
                got: cells.len(),
                width,
                height,
            });
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            cells,
        })
    }

    /// An all-free grid, convenient as a fixture starting point.
    pub fn free(width: usize, height: usize, resolution: f64) -> Self {
        Self::new(width, height, resolution, (0.0, 0.0), vec![false; width * height])
            .expect("free grid dimensions are valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.width + ix
    }

    #[inline]
    pub fn is_occupied(&self, ix: usize, iy: usize) -> bool {
        self.cells[self.index(ix, iy)]
    }

    pub fn set_occupied(&mut self, ix: usize, iy: usize, occupied: bool) {
        let idx = self.index(ix, iy);
        self.cells[idx] = occupied;
    }

    /// Marks the axis-aligned cell rectangle `[x0, x1]×[y0, y1]` (inclusive)
    /// as occupied. Out-of-range indices are clamped.
    pub fn fill_rect(&mut self, x0: usize, y0: usize, x1: usize, y1: usize, occupied: bool) {
        let x1 = x1.min(self.width - 1);
        let y1 = y1.min(self.height - 1);
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                self.set_occupied(ix, iy, occupied);
            }
        }
    }

    /// Cell containing a world point, or `None` when the point is out of map.
    #[inline]
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = (x - self.origin.0) / self.resolution;
        let fy = (y - self.origin.1) / self.resolution;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let ix = fx as usize;
        let iy = fy as usize;
        if ix >= self.width || iy >= self.height {
            return None;
        }
        Some((ix, iy))
    }

    /// World coordinates of a cell center.
    #[inline]
    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.origin.0 + (ix as f64 + 0.5) * self.resolution,
            self.origin.1 + (iy as f64 + 0.5) * self.resolution,
        )
    }

    /// Per-cell free mask (`true` where the cell is traversable).
    pub fn free_mask(&self) -> Vec<bool> {
        self.cells.iter().map(|occupied| !occupied).collect()
    }

    pub fn free_cell_count(&self) -> usize {
        self.cells.iter().filter(|occupied| !**occupied).count()
    }

    /// New grid with x and y swapped (cell `(ix, iy)` becomes `(iy, ix)`).
    pub fn transposed(&self) -> OccupancyGrid {
        let mut cells = vec![false; self.cells.len()];
        for iy in 0..self.height {
            for ix in 0..self.width {
                cells[ix * self.height + iy] = self.cells[self.index(ix, iy)];
            }
        }
        OccupancyGrid {
            width: self.height,
            height: self.width,
            resolution: self.resolution,
            origin: (self.origin.1, self.origin.0),
            cells,
        }
    }

    /// Loads a floorplan from a binary PGM or 8-bit grayscale PNG plus its
    /// `<stem>.json` sidecar. Pixel values < 128 are occupied; image row 0 is
    /// the top of the map, flipped here into y-up world rows.
    pub fn load(image_path: &Path) -> Result<Self, GridError> {
        let sidecar_path = image_path.with_extension("json");
        if !sidecar_path.exists() {
            return Err(GridError::MissingSidecar(sidecar_path));
        }
        let sidecar: MapSidecar = serde_json::from_str(&fs::read_to_string(&sidecar_path)?)?;

        let extension = image_path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        let gray = match extension.as_str() {
            "pgm" => pgm::read_pgm(&mut fs::File::open(image_path)?)?,
            "png" => {
                let img = image::open(image_path)?.into_luma8();
                GrayImage {
                    width: img.width() as usize,
                    height: img.height() as usize,
                    pixels: img.into_raw(),
                }
            }
            other => return Err(GridError::UnsupportedFormat(other.to_string())),
        };

        Self::from_gray(&gray, sidecar.resolution_m, (sidecar.origin_m[0], sidecar.origin_m[1]))
    }

    /// Converts a top-row-first grayscale image into a y-up occupancy grid.
    pub fn from_gray(
        gray: &GrayImage,
        resolution: f64,
        origin: (f64, f64),
    ) -> Result<Self, GridError> {
        let mut cells = vec![false; gray.width * gray.height];
        for iy in 0..gray.height {
            let image_row = gray.height - 1 - iy;
            for ix in 0..gray.width {
                cells[iy * gray.width + ix] =
                    gray.get(ix, image_row) < OCCUPIED_PIXEL_THRESHOLD;
            }
        }
        Self::new(gray.width, gray.height, resolution, origin, cells)
    }

    /// Renders the grid back to a top-row-first grayscale image
    /// (occupied = 0, free = 255).
    pub fn to_gray(&self) -> GrayImage {
        let mut gray = GrayImage::new(self.width, self.height);
        for iy in 0..self.height {
            let image_row = self.height - 1 - iy;
            for ix in 0..self.width {
                gray.set(ix, image_row, if self.is_occupied(ix, iy) { 0 } else { 255 });
            }
        }
        gray
    }

    /// Writes the floorplan as PGM plus sidecar JSON next to it.
    pub fn save_pgm(&self, image_path: &Path) -> Result<(), GridError> {
        let mut file = fs::File::create(image_path)?;
        pgm::write_pgm(&mut file, &self.to_gray())?;
        let sidecar = MapSidecar {
            resolution_m: self.resolution,
            origin_m: [self.origin.0, self.origin.1],
        };
        fs::write(
            image_path.with_extension("json"),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
        Ok(())
    }
}
