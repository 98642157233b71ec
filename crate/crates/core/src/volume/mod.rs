//! Volumetric intensity containers and their operations.
//!
//! A [`Volume`] is a dense 3D scalar grid with voxel spacing, stored
//! x-fastest (`index = i + nx*(j + ny*k)`). A [`DixonStudy`] bundles the
//! four co-registered Dixon channels (in-phase, opposed-phase, fat,
//! water) for one subject.

mod dvol;
mod tiling;

pub use dvol::{read_volume, write_volume};
pub use tiling::{plan_tiles, reassemble, BlendMode, TileLayout};

use thiserror::Error;

/// Errors raised by volume construction, I/O and geometry operations.
#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("data length {got} does not match dims {dims:?} ({expected} voxels)")]
    DataLength { dims: [usize; 3], expected: usize, got: usize },
    #[error("voxel spacing must be strictly positive, got {0:?}")]
    BadSpacing([f32; 3]),
    #[error("non-finite intensity at voxel index {0}")]
    NonFinite(usize),
    #[error("crop origin {origin:?} size {size:?} exceeds volume dims {dims:?}")]
    CropOutOfBounds { origin: [usize; 3], size: [usize; 3], dims: [usize; 3] },
    #[error("tile dims {tile:?} exceed volume dims {volume:?}")]
    TileTooLarge { tile: [usize; 3], volume: [usize; 3] },
    #[error("tile set does not match layout: {0}")]
    LayoutMismatch(String),
    #[error("study channels must share dims and spacing")]
    StudyMismatch,
    #[error("degenerate normalization scale {0} (pooled 99th percentile not positive)")]
    DegenerateScale(f32),
    #[error("malformed DVOL header: {0}")]
    Format(String),
    #[error("truncated DVOL payload: expected {expected} voxels, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Role of a volume within a Dixon acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ChannelTag {
    /// In-phase echo magnitude.
    Ip,
    /// Opposed-phase echo magnitude.
    Op,
    /// Fat channel.
    Fat,
    /// Water channel.
    Water,
    /// Anything else (masks, predictions before tagging, ...).
    Other,
}

/// Origin of a study's fat/water channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Provenance {
    /// Rendered anatomy, the simulator's ground truth.
    SimulatedTruth,
    /// Emulated scanner separation, possibly with induced swaps.
    SimulatedScanner,
    /// Model output.
    Predicted,
}

/// Dense 3D scalar grid, x-fastest layout.
///
/// Invariants: `data.len() == nx*ny*nz`, spacing strictly positive, all
/// intensities finite. Volumes are immutable after construction and safe
/// to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f32; 3],
    data: Vec<f32>,
    tag: ChannelTag,
}

impl Volume {
    /// Build a volume, validating the container invariants.
    pub fn new(
        dims: [usize; 3],
        spacing: [f32; 3],
        data: Vec<f32>,
        tag: ChannelTag,
    ) -> Result<Self, VolumeError> {
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(VolumeError::DataLength { dims, expected, got: data.len() });
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(VolumeError::BadSpacing(spacing));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFinite(idx));
        }
        Ok(Self { dims, spacing, data, tag })
    }

    /// Constant-valued volume.
    pub fn filled(
        dims: [usize; 3],
        spacing: [f32; 3],
        value: f32,
        tag: ChannelTag,
    ) -> Result<Self, VolumeError> {
        Self::new(dims, spacing, vec![value; dims[0] * dims[1] * dims[2]], tag)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn tag(&self) -> ChannelTag {
        self.tag
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Flat index of voxel `(i, j, k)`.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.index(i, j, k)]
    }

    /// Same volume under a different channel tag.
    pub fn retagged(mut self, tag: ChannelTag) -> Self {
        self.tag = tag;
        self
    }

    /// Apply a voxelwise map, preserving geometry. The result is
    /// re-validated so non-finite outputs are rejected.
    pub fn map(&self, tag: ChannelTag, f: impl Fn(f32) -> f32) -> Result<Self, VolumeError> {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Self::new(self.dims, self.spacing, data, tag)
    }

    /// Extract the sub-volume `[origin, origin+size)`.
    pub fn crop(&self, origin: [usize; 3], size: [usize; 3]) -> Result<Self, VolumeError> {
        for a in 0..3 {
            if origin[a] + size[a] > self.dims[a] {
                return Err(VolumeError::CropOutOfBounds { origin, size, dims: self.dims });
            }
        }
        let mut data = Vec::with_capacity(size[0] * size[1] * size[2]);
        for k in 0..size[2] {
            for j in 0..size[1] {
                let src = self.index(origin[0], origin[1] + j, origin[2] + k);
                data.extend_from_slice(&self.data[src..src + size[0]]);
            }
        }
        Ok(Self { dims: size, spacing: self.spacing, data, tag: self.tag })
    }
}

/// Four co-registered Dixon channels for one subject.
#[derive(Debug, Clone)]
pub struct DixonStudy {
    pub ip: Volume,
    pub op: Volume,
    pub fat: Volume,
    pub water: Volume,
    pub provenance: Provenance,
    pub subject_id: String,
}

impl DixonStudy {
    /// Bundle four channels, enforcing shared geometry and channel tags.
    pub fn new(
        ip: Volume,
        op: Volume,
        fat: Volume,
        water: Volume,
        provenance: Provenance,
        subject_id: impl Into<String>,
    ) -> Result<Self, VolumeError> {
        let dims = ip.dims();
        let spacing = ip.spacing();
        for v in [&op, &fat, &water] {
            if v.dims() != dims || v.spacing() != spacing {
                return Err(VolumeError::StudyMismatch);
            }
        }
        let ip = ip.retagged(ChannelTag::Ip);
        let op = op.retagged(ChannelTag::Op);
        let fat = fat.retagged(ChannelTag::Fat);
        let water = water.retagged(ChannelTag::Water);
        Ok(Self { ip, op, fat, water, provenance, subject_id: subject_id.into() })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.ip.dims()
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.ip.spacing()
    }

    pub fn channels(&self) -> [&Volume; 4] {
        [&self.ip, &self.op, &self.fat, &self.water]
    }
}

/// Joint 99th-percentile normalization of all four channels.
///
/// The scale is the nearest-rank 99th percentile of the pooled intensities
/// of all channels (0-based index `ceil(0.99*n) - 1` of the pooled sorted
/// array). Every channel is divided by it and clamped to `[0, 1]`. Returns
/// the scale so predictions can be mapped back to raw intensities.
pub fn normalize_study(study: &DixonStudy) -> Result<(DixonStudy, f32), VolumeError> {
    let mut pooled: Vec<f32> = Vec::with_capacity(4 * study.ip.numel());
    for ch in study.channels() {
        pooled.extend_from_slice(ch.data());
    }
    let scale = percentile_99_nearest_rank(&mut pooled);
    if !(scale > 0.0) {
        return Err(VolumeError::DegenerateScale(scale));
    }
    let norm = |v: &Volume| v.map(v.tag(), |x| (x / scale).clamp(0.0, 1.0));
    let out = DixonStudy {
        ip: norm(&study.ip)?,
        op: norm(&study.op)?,
        fat: norm(&study.fat)?,
        water: norm(&study.water)?,
        provenance: study.provenance,
        subject_id: study.subject_id.clone(),
    };
    Ok((out, scale))
}

/// Nearest-rank 99th percentile; consumes the scratch buffer.
fn percentile_99_nearest_rank(pooled: &mut [f32]) -> f32 {
    assert!(!pooled.is_empty());
    let n = pooled.len();
    let rank = (0.99 * n as f64).ceil() as usize;
    let idx = rank.max(1) - 1;
    let (_, value, _) = pooled.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    *value
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol(dims: [usize; 3], data: Vec<f32>) -> Volume {
        Volume::new(dims, [1.0, 1.0, 1.0], data, ChannelTag::Other).unwrap()
    }

    #[test]
    fn rejects_length_mismatch() {
        let err = Volume::new([2, 2, 2], [1.0; 3], vec![0.0; 7], ChannelTag::Other);
        assert!(matches!(err, Err(VolumeError::DataLength { .. })));
    }

    #[test]
    fn rejects_bad_spacing_and_nan() {
        assert!(matches!(
            Volume::new([1, 1, 1], [0.0, 1.0, 1.0], vec![0.0], ChannelTag::Other),
            Err(VolumeError::BadSpacing(_))
        ));
        assert!(matches!(
            Volume::new([1, 1, 1], [1.0; 3], vec![f32::NAN], ChannelTag::Other),
            Err(VolumeError::NonFinite(0))
        ));
    }

    #[test]
    fn crop_identity() {
        let v = vol([3, 4, 5], (0..60).map(|i| i as f32).collect());
        let c = v.crop([0, 0, 0], [3, 4, 5]).unwrap();
        assert_eq!(c, v);
    }

    #[test]
    fn crop_extracts_expected_voxels() {
        let v = vol([4, 4, 4], (0..64).map(|i| i as f32).collect());
        let c = v.crop([1, 2, 3], [2, 1, 1]).unwrap();
        assert_eq!(c.dims(), [2, 1, 1]);
        assert_eq!(c.data(), &[v.at(1, 2, 3), v.at(2, 2, 3)]);
    }

    #[test]
    fn crop_out_of_bounds() {
        let v = vol([4, 4, 4], vec![0.0; 64]);
        assert!(matches!(
            v.crop([3, 0, 0], [2, 1, 1]),
            Err(VolumeError::CropOutOfBounds { .. })
        ));
    }

    #[test]
    fn paper_scale_crop_dims() {
        // A 128^3 crop out of the assembled (224, 174, 370) geometry.
        let v = Volume::filled([224, 174, 370], [2.23, 2.23, 3.0], 0.0, ChannelTag::Ip).unwrap();
        let c = v.crop([0, 0, 0], [128, 128, 128]).unwrap();
        assert_eq!(c.dims(), [128, 128, 128]);
        assert!(matches!(
            v.crop([200, 0, 0], [128, 128, 128]),
            Err(VolumeError::CropOutOfBounds { .. })
        ));
    }

    fn study_from(values: [Vec<f32>; 4], dims: [usize; 3]) -> DixonStudy {
        let [ip, op, f, w] = values;
        DixonStudy::new(
            vol(dims, ip),
            vol(dims, op),
            vol(dims, f),
            vol(dims, w),
            Provenance::SimulatedTruth,
            "t",
        )
        .unwrap()
    }

    #[test]
    fn normalize_uses_pooled_nearest_rank_percentile() {
        // 25 voxels per channel, 100 pooled values 1..=100: the nearest-rank
        // 99th percentile is the 99th smallest, i.e. 99.
        let dims = [5, 5, 1];
        let mut vals = (1..=100).map(|i| i as f32).collect::<Vec<_>>();
        // Shuffle deterministically to show order independence.
        vals.swap(0, 99);
        vals.swap(10, 57);
        let chans: Vec<Vec<f32>> = vals.chunks(25).map(|c| c.to_vec()).collect();
        let s = study_from(
            [chans[0].clone(), chans[1].clone(), chans[2].clone(), chans[3].clone()],
            dims,
        );
        let (norm, scale) = normalize_study(&s).unwrap();
        assert_eq!(scale, 99.0);
        for ch in norm.channels() {
            for &v in ch.data() {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn normalize_constant_one_is_identity() {
        let dims = [4, 4, 4];
        let one = vec![1.0f32; 64];
        let s = study_from([one.clone(), one.clone(), one.clone(), one], dims);
        let (norm, scale) = normalize_study(&s).unwrap();
        assert_eq!(scale, 1.0);
        assert!(norm.channels().iter().all(|c| c.data().iter().all(|&v| v == 1.0)));
    }

    #[test]
    fn normalize_clamps_spikes() {
        // One voxel at 10x the 99th percentile must clamp to 1.
        let dims = [5, 5, 1];
        let mut ip = vec![1.0f32; 25];
        ip[7] = 10.0;
        let one = vec![1.0f32; 25];
        let s = study_from([ip, one.clone(), one.clone(), one], dims);
        let (norm, scale) = normalize_study(&s).unwrap();
        assert_eq!(scale, 1.0);
        assert_eq!(norm.ip.data()[7], 1.0);
    }

    #[test]
    fn normalize_rejects_all_zero() {
        let dims = [3, 3, 3];
        let z = vec![0.0f32; 27];
        let s = study_from([z.clone(), z.clone(), z.clone(), z], dims);
        assert!(matches!(normalize_study(&s), Err(VolumeError::DegenerateScale(_))));
    }

    #[test]
    fn study_rejects_mismatched_dims() {
        let a = vol([2, 2, 2], vec![0.0; 8]);
        let b = vol([2, 2, 1], vec![0.0; 4]);
        assert!(matches!(
            DixonStudy::new(
                a.clone(),
                b,
                a.clone(),
                a.clone(),
                Provenance::SimulatedTruth,
                "x"
            ),
            Err(VolumeError::StudyMismatch)
        ));
    }
}
