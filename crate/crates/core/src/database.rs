//! Precomputed pose-ray database: a full-circle scan at every free cell.

use std::f64::consts::TAU;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::OccupancyGrid;
use crate::raycast::{render_circular_scan, RaycastError};
use crate::scan::RayScan;

const FLRD_MAGIC: &[u8; 4] = b"FLRD";
const FLRD_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum DatabaseError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes (expected FLRD)")]
    BadMagic,
    #[error("unsupported database version {0}")]
    BadVersion(u16),
    #[error("database payload truncated")]
    Truncated,
    #[error(transparent)]
    Raycast(#[from] RaycastError),
}

/// Circular ray scans precomputed at every free cell center of a floorplan.
///
/// This is the offline half of the matcher: at query time a field of view is
/// sliced out of the stored circle instead of raycasting anew.
#[derive(Debug, Clone)]
pub struct PoseRayDatabase {
    width: usize,
    height: usize,
    resolution: f64,
    /// World coordinates of the grid corner. Not persisted in FLRD files;
    /// loaded databases are in map-local coordinates.
    origin: (f64, f64),
    ray_count: usize,
    max_range: f64,
    free_mask: Vec<bool>,
    /// Index into the packed scan arrays for each free cell, by cell index.
    scan_slot: Vec<u32>,
    free_cells: usize,
    /// Packed ranges: `free_cells × ray_count`, row-major over free cells in
    /// cell order.
    ranges: Vec<f64>,
    valid: Vec<bool>,
    /// Matching cache: `ranges` with invalid rays replaced by NaN, so lerp
    /// arithmetic propagates invalidity without touching `valid`.
    nan_ranges: Vec<f64>,
}

fn merge_validity(ranges: &[f64], valid: &[bool]) -> Vec<f64> {
    ranges
        .iter()
        .zip(valid)
        .map(|(r, ok)| if *ok { *r } else { f64::NAN })
        .collect()
}

impl PoseRayDatabase {
    /// Builds the database by rendering a circular scan at every free cell
    /// center. Cells are rendered in parallel; the output is independent of
    /// construction order.
    pub fn build(
        map: &OccupancyGrid,
        ray_count: usize,
        max_range: f64,
    ) -> Result<Self, DatabaseError> {
        assert!(ray_count >= 1);
        let width = map.width();
        let height = map.height();
        let free_mask = map.free_mask();

        let per_cell: Vec<Option<RayScan>> = (0..width * height)
            .into_par_iter()
            .map(|idx| {
                if !free_mask[idx] {
                    return Ok(None);
                }
                let (ix, iy) = (idx % width, idx / width);
                let center = map.cell_center(ix, iy);
                render_circular_scan(map, center, ray_count, max_range).map(Some)
            })
            .collect::<Result<_, RaycastError>>()?;

        let mut scan_slot = vec![u32::MAX; width * height];
        let mut ranges = Vec::new();
        let mut valid = Vec::new();
        let mut free_cells = 0usize;
        for (idx, scan) in per_cell.into_iter().enumerate() {
            if let Some(scan) = scan {
                scan_slot[idx] = free_cells as u32;
                free_cells += 1;
                ranges.extend_from_slice(&scan.ranges);
                valid.extend_from_slice(&scan.valid);
            }
        }

        let nan_ranges = merge_validity(&ranges, &valid);
        Ok(Self {
            width,
            height,
            resolution: map.resolution(),
            origin: map.origin(),
            ray_count,
            max_range,
            free_mask,
            scan_slot,
            free_cells,
            ranges,
            valid,
            nan_ranges,
        })
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

    pub fn ray_count(&self) -> usize {
        self.ray_count
    }

    pub fn max_range(&self) -> f64 {
        self.max_range
    }

    pub fn free_mask(&self) -> &[bool] {
        &self.free_mask
    }

    pub fn free_cell_count(&self) -> usize {
        self.free_cells
    }

    pub fn angular_step(&self) -> f64 {
        TAU / self.ray_count as f64
    }

    /// World coordinates of a cell center.
    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.origin.0 + (ix as f64 + 0.5) * self.resolution,
            self.origin.1 + (iy as f64 + 0.5) * self.resolution,
        )
    }

    /// Raw stored rays for a free cell: `(ranges, valid)` slices of length
    /// `ray_count`. `None` on occupied cells.
    #[inline]
    pub fn rays_at(&self, ix: usize, iy: usize) -> Option<(&[f64], &[bool])> {
        self.rays_at_index(iy * self.width + ix)
    }

    /// Same as [`rays_at`](Self::rays_at) by flat cell index `iy·width + ix`.
    #[inline]
    pub fn rays_at_index(&self, cell: usize) -> Option<(&[f64], &[bool])> {
        let slot = self.scan_slot[cell];
        if slot == u32::MAX {
            return None;
        }
        let start = slot as usize * self.ray_count;
        Some((
            &self.ranges[start..start + self.ray_count],
            &self.valid[start..start + self.ray_count],
        ))
    }

    /// Stored rays with invalid entries encoded as NaN, for branch-free
    /// interpolation in the matcher.
    #[inline]
    pub(crate) fn nan_rays_at_index(&self, cell: usize) -> Option<&[f64]> {
        let slot = self.scan_slot[cell];
        if slot == u32::MAX {
            return None;
        }
        let start = slot as usize * self.ray_count;
        Some(&self.nan_ranges[start..start + self.ray_count])
    }

    /// Materializes the stored circular scan at a free cell.
    pub fn circular_scan(&self, ix: usize, iy: usize) -> Option<RayScan> {
        self.rays_at(ix, iy).map(|(ranges, valid)| {
            RayScan::new(
                0.0,
                self.angular_step(),
                self.max_range,
                ranges.to_vec(),
                valid.to_vec(),
            )
        })
    }

    /// Serializes to the FLRD binary format (little-endian): magic, version
    /// u16, ray_count u32, max_range f32, width u32, height u32, resolution
    /// f32, free-mask bitset (LSB-first), then f32 ranges per free cell in
    /// row-major cell order. Invalid rays are stored at max_range.
    pub fn write_to<W: Write>(&self, writer: &mut W) -> Result<(), DatabaseError> {
        writer.write_all(FLRD_MAGIC)?;
        writer.write_all(&FLRD_VERSION.to_le_bytes())?;
        writer.write_all(&(self.ray_count as u32).to_le_bytes())?;
        writer.write_all(&(self.max_range as f32).to_le_bytes())?;
        writer.write_all(&(self.width as u32).to_le_bytes())?;
        writer.write_all(&(self.height as u32).to_le_bytes())?;
        writer.write_all(&(self.resolution as f32).to_le_bytes())?;
        writer.write_all(&pack_bitset(&self.free_mask))?;
        let mut buf = Vec::with_capacity(self.ranges.len() * 4);
        for (range, ok) in self.ranges.iter().zip(&self.valid) {
            let stored = if *ok { *range } else { self.max_range };
            buf.extend_from_slice(&(stored as f32).to_le_bytes());
        }
        writer.write_all(&buf)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), DatabaseError> {
        let mut file = io::BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut file)
    }

    /// Reads an FLRD database. Rays stored at or beyond max_range come back
    /// invalid; the origin is map-local `(0, 0)`.
    pub fn read_from<R: Read>(reader: &mut R) -> Result<Self, DatabaseError> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        let mut cursor = 0usize;

        let magic = take(&bytes, &mut cursor, 4)?;
        if magic != FLRD_MAGIC {
            return Err(DatabaseError::BadMagic);
        }
        let version = u16::from_le_bytes(take(&bytes, &mut cursor, 2)?.try_into().unwrap());
        if version != FLRD_VERSION {
            return Err(DatabaseError::BadVersion(version));
        }
        let ray_count =
            u32::from_le_bytes(take(&bytes, &mut cursor, 4)?.try_into().unwrap()) as usize;
        let max_range =
            f32::from_le_bytes(take(&bytes, &mut cursor, 4)?.try_into().unwrap()) as f64;
        let width = u32::from_le_bytes(take(&bytes, &mut cursor, 4)?.try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(take(&bytes, &mut cursor, 4)?.try_into().unwrap()) as usize;
        let resolution =
            f32::from_le_bytes(take(&bytes, &mut cursor, 4)?.try_into().unwrap()) as f64;

        let mask_bytes = take(&bytes, &mut cursor, (width * height + 7) / 8)?;
        let free_mask = unpack_bitset(mask_bytes, width * height);

        let mut scan_slot = vec![u32::MAX; width * height];
        let mut free_cells = 0usize;
        for (idx, free) in free_mask.iter().enumerate() {
            if *free {
                scan_slot[idx] = free_cells as u32;
                free_cells += 1;
            }
        }

        let payload = take(&bytes, &mut cursor, free_cells * ray_count * 4)?;
        let mut ranges = Vec::with_capacity(free_cells * ray_count);
        let mut valid = Vec::with_capacity(free_cells * ray_count);
        for chunk in payload.chunks_exact(4) {
            let r = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
            let ok = r < max_range;
            ranges.push(if ok { r } else { max_range });
            valid.push(ok);
        }

        let nan_ranges = merge_validity(&ranges, &valid);
        Ok(Self {
            width,
            height,
            resolution,
            origin: (0.0, 0.0),
            ray_count,
            max_range,
            free_mask,
            scan_slot,
            free_cells,
            ranges,
            valid,
            nan_ranges,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DatabaseError> {
        let mut file = io::BufReader::new(fs::File::open(path)?);
        Self::read_from(&mut file)
    }
}

fn take<'a>(bytes: &'a [u8], cursor: &mut usize, n: usize) -> Result<&'a [u8], DatabaseError> {
    if *cursor + n > bytes.len() {
        return Err(DatabaseError::Truncated);
    }
    let out = &bytes[*cursor..*cursor + n];
    *cursor += n;
    Ok(out)
}

/// Packs booleans LSB-first: bit `i` of byte `j` is element `8j + i`.
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
