//! Flat little-endian binary formats.
//!
//! | magic  | header                                  | payload                          |
//! |--------|-----------------------------------------|----------------------------------|
//! | `SIVC` | `u32` x3 dims, `f64` x3 voxel size (mm) | `f64` counts, x fastest          |
//! | `SIVA` | `u32` x3 dims                           | `i32` labels, x fastest          |
//! | `SIVM` | `u32` rows, `u32` cols                  | `f64` entries, row-major         |

use std::fs;
use std::path::Path;

use sivc_core::volume::{AtlasVolume, Dims, LabeledVolume};
use sivc_core::DMatrix;

use crate::error::{Error, Result, ResultExt};

pub const VOLUME_MAGIC: &[u8; 4] = b"SIVC";
pub const ATLAS_MAGIC: &[u8; 4] = b"SIVA";
pub const MATRIX_MAGIC: &[u8; 4] = b"SIVM";

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], magic: &'static [u8; 4]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != magic {
            return Err(Error::BadMagic {
                expected: std::str::from_utf8(magic).expect("ascii magic"),
                found: bytes[..bytes.len().min(4)].to_vec(),
            });
        }
        Ok(Self { bytes, pos: 4 })
    }

    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::MalformedHeader(format!("file ends before {what}")))?;
        self.pos = end;
        Ok(chunk.try_into().expect("length checked"))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.take::<4>(what).map(u32::from_le_bytes)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.take::<8>(what).map(f64::from_le_bytes)
    }

    fn dims(&mut self) -> Result<Dims> {
        Ok([
            self.u32("dims")? as usize,
            self.u32("dims")? as usize,
            self.u32("dims")? as usize,
        ])
    }

    /// Exactly `count` fixed-width values must remain.
    fn payload<const N: usize>(&self, count: usize) -> Result<impl Iterator<Item = [u8; N]> + '_> {
        let rest = &self.bytes[self.pos..];
        let found = rest.len() / N;
        if found < count {
            return Err(Error::TruncatedRaster {
                expected: count,
                found,
            });
        }
        if rest.len() != count * N {
            return Err(Error::MalformedHeader(format!(
                "{} trailing bytes after {count} values",
                rest.len() - count * N
            )));
        }
        Ok(rest
            .chunks_exact(N)
            .map(|c| c.try_into().expect("exact chunk")))
    }
}

fn checked_len(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::MalformedHeader(format!("dims {dims:?} overflow")))
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v =
        u32::try_from(v).map_err(|_| Error::MalformedHeader(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn decode_volume(bytes: &[u8], subject_id: &str, cohort_id: &str) -> Result<LabeledVolume> {
    let mut r = Reader::new(bytes, VOLUME_MAGIC)?;
    let dims = r.dims()?;
    let voxel_size = [
        r.f64("voxel size")?,
        r.f64("voxel size")?,
        r.f64("voxel size")?,
    ];
    let counts = r
        .payload::<8>(checked_len(&dims)?)?
        .map(f64::from_le_bytes)
        .collect();
    Ok(LabeledVolume::new(
        dims, voxel_size, counts, subject_id, cohort_id,
    )?)
}

pub fn encode_volume(v: &LabeledVolume) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(40 + 8 * v.counts().len());
    buf.extend_from_slice(VOLUME_MAGIC);
    for d in v.dims() {
        put_u32(&mut buf, d)?;
    }
    for s in v.voxel_size() {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    for c in v.counts() {
        buf.extend_from_slice(&c.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_atlas(bytes: &[u8]) -> Result<AtlasVolume> {
    let mut r = Reader::new(bytes, ATLAS_MAGIC)?;
    let dims = r.dims()?;
    let labels = r
        .payload::<4>(checked_len(&dims)?)?
        .map(i32::from_le_bytes)
        .enumerate()
        .map(|(index, value)| {
            u32::try_from(value).map_err(|_| Error::InvalidLabel { index, value })
        })
        .collect::<Result<Vec<u32>>>()?;
    Ok(AtlasVolume::new(dims, labels)?)
}

pub fn encode_atlas(a: &AtlasVolume) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(16 + 4 * a.labels().len());
    buf.extend_from_slice(ATLAS_MAGIC);
    for d in a.dims() {
        put_u32(&mut buf, d)?;
    }
    for &l in a.labels() {
        let v = i32::try_from(l)
            .map_err(|_| Error::MalformedHeader(format!("label {l} exceeds i32")))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DMatrix<f64>> {
    let mut r = Reader::new(bytes, MATRIX_MAGIC)?;
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    let vals: Vec<f64> = r
        .payload::<8>(checked_len(&[rows, cols])?)?
        .map(f64::from_le_bytes)
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &vals))
}

pub fn encode_matrix(m: &DMatrix<f64>) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(12 + 8 * m.len());
    buf.extend_from_slice(MATRIX_MAGIC);
    put_u32(&mut buf, m.nrows())?;
    put_u32(&mut buf, m.ncols())?;
    for row in m.row_iter() {
        for v in row.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

/// Read a count volume; ids are not stored in the file.
pub fn load_volume(path: &Path, subject_id: &str, cohort_id: &str) -> Result<LabeledVolume> {
    let bytes = fs::read(path).at(path)?;
    decode_volume(&bytes, subject_id, cohort_id).at(path)
}

pub fn save_volume(path: &Path, v: &LabeledVolume) -> Result<()> {
    fs::write(path, encode_volume(v)?).at(path)
}

pub fn load_atlas(path: &Path) -> Result<AtlasVolume> {
    let bytes = fs::read(path).at(path)?;
    decode_atlas(&bytes).at(path)
}

pub fn save_atlas(path: &Path, a: &AtlasVolume) -> Result<()> {
    fs::write(path, encode_atlas(a)?).at(path)
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).at(path)?;
    decode_matrix(&bytes).at(path)
}

pub fn save_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, encode_matrix(m)?).at(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn volume(dims: Dims, counts: Vec<f64>) -> LabeledVolume {
        LabeledVolume::new(dims, [2.0, 2.0, 2.5], counts, "s", "c").unwrap()
    }

    #[test]
    fn volume_round_trip() {
        let v = volume([2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]);
        let back = decode_volume(&encode_volume(&v).unwrap(), "s", "c").unwrap();
        assert_eq!(back, v);
        assert_eq!(back.dims(), [2, 2, 1]);
    }

    #[test]
    fn nan_count_is_rejected() {
        let mut bytes = encode_volume(&volume([2, 1, 1], vec![1.0, 2.0])).unwrap();
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        let err = decode_volume(&bytes, "s", "c").unwrap_err();
        assert!(
            matches!(
                err,
                Error::Core(sivc_core::Error::InvalidCounts { index: 1, .. })
            ),
            "{err}"
        );
    }

    #[test]
    fn short_raster_is_truncated() {
        let mut bytes = encode_volume(&volume([2, 2, 1], vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        bytes[12..16].copy_from_slice(&2u32.to_le_bytes());
        let err = decode_volume(&bytes, "s", "c").unwrap_err();
        assert!(
            matches!(
                err,
                Error::TruncatedRaster {
                    expected: 8,
                    found: 4
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            decode_volume(b"NOPE", "s", "c"),
            Err(Error::BadMagic { .. })
        ));
        assert!(matches!(
            decode_volume(b"SIVC\x01\x00", "s", "c"),
            Err(Error::MalformedHeader(_))
        ));
        let mut bytes = encode_volume(&volume([1, 1, 1], vec![1.0])).unwrap();
        bytes.push(0);
        assert!(matches!(
            decode_volume(&bytes, "s", "c"),
            Err(Error::MalformedHeader(_))
        ));
    }

    #[test]
    fn atlas_round_trip_and_negative_labels() {
        let a = AtlasVolume::new([3, 1, 1], vec![0, 7, 2]).unwrap();
        assert_eq!(decode_atlas(&encode_atlas(&a).unwrap()).unwrap(), a);
        let mut bytes = encode_atlas(&a).unwrap();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&(-3i32).to_le_bytes());
        assert!(matches!(
            decode_atlas(&bytes),
            Err(Error::InvalidLabel {
                index: 2,
                value: -3
            })
        ));
    }

    #[test]
    fn matrix_round_trip_is_row_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, -0.5]);
        let bytes = encode_matrix(&m).unwrap();
        assert_eq!(&bytes[12..20], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[20..28], &2.0f64.to_le_bytes());
        assert_eq!(decode_matrix(&bytes).unwrap(), m);
    }
}
