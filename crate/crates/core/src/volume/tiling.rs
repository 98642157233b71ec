//! Tile planning and reassembly for piecewise full-volume inference.
//!
//! Tiles are placed on a regular grid and clamped inward at the far
//! boundary, so the last tile per axis overlaps its neighbor instead of
//! running out of bounds. Every voxel is covered by at least one tile.

use super::{ChannelTag, Volume, VolumeError};

/// How overlapping voxels are combined during reassembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlendMode {
    /// Later tiles win.
    Overwrite,
    /// Arithmetic mean of all contributing tiles.
    Average,
}

/// A tiling plan over a volume.
#[derive(Debug, Clone)]
pub struct TileLayout {
    pub volume_dims: [usize; 3],
    pub tile_dims: [usize; 3],
    pub origins: Vec<[usize; 3]>,
    pub blend: BlendMode,
}

impl TileLayout {
    pub fn tile_count(&self) -> usize {
        self.origins.len()
    }
}

/// Per-axis clamped origins: `0, t, 2t, ...` with the final origin pulled
/// back to `n - t`. Sorted and duplicate-free.
fn axis_origins(n: usize, t: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut o = 0usize;
    loop {
        out.push(o);
        if o + t >= n {
            break;
        }
        o = (o + t).min(n - t);
    }
    out
}

/// Plan a clamped-grid tiling of `volume_dims` with `tile_dims`.
pub fn plan_tiles(
    volume_dims: [usize; 3],
    tile_dims: [usize; 3],
) -> Result<TileLayout, VolumeError> {
    for a in 0..3 {
        if tile_dims[a] == 0 || tile_dims[a] > volume_dims[a] {
            return Err(VolumeError::TileTooLarge { tile: tile_dims, volume: volume_dims });
        }
    }
    let per_axis: Vec<Vec<usize>> =
        (0..3).map(|a| axis_origins(volume_dims[a], tile_dims[a])).collect();
    let mut origins = Vec::with_capacity(per_axis[0].len() * per_axis[1].len() * per_axis[2].len());
    for &oz in &per_axis[2] {
        for &oy in &per_axis[1] {
            for &ox in &per_axis[0] {
                origins.push([ox, oy, oz]);
            }
        }
    }
    Ok(TileLayout { volume_dims, tile_dims, origins, blend: BlendMode::Average })
}

/// Reassemble tiles into a full volume according to the layout.
pub fn reassemble(layout: &TileLayout, tiles: &[Volume]) -> Result<Volume, VolumeError> {
    if tiles.len() != layout.origins.len() {
        return Err(VolumeError::LayoutMismatch(format!(
            "expected {} tiles, got {}",
            layout.origins.len(),
            tiles.len()
        )));
    }
    for t in tiles {
        if t.dims() != layout.tile_dims {
            return Err(VolumeError::LayoutMismatch(format!(
                "tile dims {:?} do not match layout tile dims {:?}",
                t.dims(),
                layout.tile_dims
            )));
        }
    }
    let [nx, ny, nz] = layout.volume_dims;
    let [tx, ty, tz] = layout.tile_dims;
    let spacing = tiles.first().map(|t| t.spacing()).unwrap_or([1.0; 3]);
    let tag = tiles.first().map(|t| t.tag()).unwrap_or(ChannelTag::Other);
    let n = nx * ny * nz;
    match layout.blend {
        BlendMode::Overwrite => {
            let mut out = vec![0f32; n];
            for (origin, tile) in layout.origins.iter().zip(tiles) {
                for k in 0..tz {
                    for j in 0..ty {
                        let dst = origin[0] + nx * (origin[1] + j + ny * (origin[2] + k));
                        let src = tx * (j + ty * k);
                        out[dst..dst + tx].copy_from_slice(&tile.data()[src..src + tx]);
                    }
                }
            }
            Volume::new(layout.volume_dims, spacing, out, tag)
        }
        BlendMode::Average => {
            let mut sum = vec![0f64; n];
            let mut count = vec![0u32; n];
            for (origin, tile) in layout.origins.iter().zip(tiles) {
                for k in 0..tz {
                    for j in 0..ty {
                        let dst = origin[0] + nx * (origin[1] + j + ny * (origin[2] + k));
                        let src = tx * (j + ty * k);
                        for i in 0..tx {
                            sum[dst + i] += tile.data()[src + i] as f64;
                            count[dst + i] += 1;
                        }
                    }
                }
            }
            let out: Vec<f32> = sum
                .iter()
                .zip(&count)
                .map(|(&s, &c)| if c <= 1 { s as f32 } else { (s / c as f64) as f32 })
                .collect();
            Volume::new(layout.volume_dims, spacing, out, tag)
        }
    }
}
