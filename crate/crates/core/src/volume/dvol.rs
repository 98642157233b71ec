//! DVOL binary volume format.
//!
//! Layout, all fields little-endian:
//!
//! ```text
//! magic   4 bytes  "DVOL"
//! version u32      1
//! dims    3 x u32  nx, ny, nz
//! spacing 3 x f32  mm
//! dtype   u32      0 = f32
//! payload nx*ny*nz x f32, x-fastest (index = i + nx*(j + ny*k))
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{ChannelTag, Volume, VolumeError};

const MAGIC: &[u8; 4] = b"DVOL";
const VERSION: u32 = 1;
const DTYPE_F32: u32 = 0;

/// Serialized header size in bytes.
pub const HEADER_LEN: usize = 4 + 4 + 12 + 12 + 4;

/// Write a volume to `path` in DVOL format.
pub fn write_volume(v: &Volume, path: &Path) -> Result<(), VolumeError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    for d in v.dims() {
        w.write_u32::<LittleEndian>(d as u32)?;
    }
    for s in v.spacing() {
        w.write_f32::<LittleEndian>(s)?;
    }
    w.write_u32::<LittleEndian>(DTYPE_F32)?;
    for &x in v.data() {
        w.write_f32::<LittleEndian>(x)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a DVOL volume. The file does not carry a channel tag, so the
/// result is tagged [`ChannelTag::Other`]; callers re-tag by role.
pub fn read_volume(path: &Path) -> Result<Volume, VolumeError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| VolumeError::Format("file shorter than magic".into()))?;
    if &magic != MAGIC {
        return Err(VolumeError::Format(format!("bad magic {magic:?}")));
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|_| VolumeError::Format("missing version".into()))?;
    if version != VERSION {
        return Err(VolumeError::Format(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = r
            .read_u32::<LittleEndian>()
            .map_err(|_| VolumeError::Format("missing dims".into()))? as usize;
    }
    let mut spacing = [0f32; 3];
    for s in &mut spacing {
        *s = r
            .read_f32::<LittleEndian>()
            .map_err(|_| VolumeError::Format("missing spacing".into()))?;
    }
    let dtype = r
        .read_u32::<LittleEndian>()
        .map_err(|_| VolumeError::Format("missing dtype".into()))?;
    if dtype != DTYPE_F32 {
        return Err(VolumeError::Format(format!("unsupported dtype code {dtype}")));
    }
    let expected = dims[0] * dims[1] * dims[2];
    let mut data = vec![0f32; expected];
    for (i, slot) in data.iter_mut().enumerate() {
        *slot = r
            .read_f32::<LittleEndian>()
            .map_err(|_| VolumeError::Truncated { expected, got: i })?;
    }
    Volume::new(dims, spacing, data, ChannelTag::Other)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    #[test]
    fn roundtrip_zeros() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("z.dvol");
        let v = Volume::filled([4, 4, 4], [1.0, 2.0, 3.0], 0.0, ChannelTag::Other).unwrap();
        write_volume(&v, &path).unwrap();
        let back = read_volume(&path).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn payload_byte_count() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("small.dvol");
        let v = Volume::filled([2, 2, 2], [1.0; 3], 0.5, ChannelTag::Other).unwrap();
        write_volume(&v, &path).unwrap();
        let len = std::fs::metadata(&path).unwrap().len() as usize;
        // 8 values x 4 bytes of payload after the fixed header.
        assert_eq!(len - HEADER_LEN, 8 * 4);
    }

    #[test]
    fn header_dims_drive_shape() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("big.dvol");
        // Paper-scale header with a synthetic payload of the right length.
        let dims = [224usize, 174, 370];
        let v = Volume::filled(dims, [2.23, 2.23, 3.0], 0.0, ChannelTag::Other).unwrap();
        write_volume(&v, &path).unwrap();
        let back = read_volume(&path).unwrap();
        assert_eq!(back.dims(), dims);
    }

    #[test]
    fn truncated_payload_errors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trunc.dvol");
        let v = Volume::filled([3, 3, 3], [1.0; 3], 1.0, ChannelTag::Other).unwrap();
        write_volume(&v, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(
            read_volume(&path),
            Err(VolumeError::Truncated { expected: 27, got: 26 })
        ));
    }

    #[test]
    fn bad_magic_errors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.dvol");
        std::fs::write(&path, b"NOPE\0\0\0\0").unwrap();
        assert!(matches!(read_volume(&path), Err(VolumeError::Format(_))));
    }

    #[test]
    fn write_to_unwritable_path_errors() {
        let v = Volume::filled([1, 1, 1], [1.0; 3], 0.0, ChannelTag::Other).unwrap();
        let err = write_volume(&v, Path::new("/nonexistent-dir/v.dvol"));
        assert!(matches!(err, Err(VolumeError::Io(_))));
    }

    proptest! {
        #[test]
        fn roundtrip_is_bitwise_identity(
            nx in 1usize..6, ny in 1usize..6, nz in 1usize..6,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = nx * ny * nz;
            let data: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0e6f32..1.0e6)).collect();
            let spacing = [
                rng.random_range(0.1f32..5.0),
                rng.random_range(0.1f32..5.0),
                rng.random_range(0.1f32..5.0),
            ];
            let v = Volume::new([nx, ny, nz], spacing, data, ChannelTag::Other).unwrap();
            let dir = tempdir().unwrap();
            let path = dir.path().join("prop.dvol");
            write_volume(&v, &path).unwrap();
            let back = read_volume(&path).unwrap();
            prop_assert_eq!(back.dims(), v.dims());
            prop_assert_eq!(back.spacing(), v.spacing());
            prop_assert!(back
                .data()
                .iter()
                .zip(v.data())
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
