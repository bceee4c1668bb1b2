//! `FDSF` dataset files.
//!
//! ```text
//! magic     b"FDSF"
//! version   u16
//! n         u32   samples
//! d         u32   features per sample
//! N         u32   class count
//! features  n × d f32, row-major
//! labels    n × u16
//! ```
//!
//! Little-endian throughout, no padding or compression. Any tool that can
//! write this layout (e.g. a numpy script packing pre-extracted audio
//! features) produces files [`LabeledDataset::load`] accepts.

use std::path::Path;

use super::LabeledDataset;
use crate::codec::ByteReader;
use crate::error::{ensure, Error, Result};
use crate::tensor_nn::Tensor2;

pub const FDSF_MAGIC: &[u8; 4] = b"FDSF";
pub const FDSF_VERSION: u16 = 1;
const HEADER_BYTES: usize = 4 + 2 + 4 + 4 + 4;

impl LabeledDataset {
    pub fn to_fdsf_bytes(&self) -> Result<Vec<u8>> {
        let n = u32::try_from(self.len()).map_err(|_| Error::contract("more than u32::MAX samples"))?;
        let d = u32::try_from(self.dims()).map_err(|_| Error::contract("more than u32::MAX features"))?;
        ensure!(self.class_count <= u16::MAX as u32 + 1, "labels do not fit in u16");
        let mut out = Vec::with_capacity(HEADER_BYTES + self.features.data().len() * 4 + self.len() * 2);
        out.extend_from_slice(FDSF_MAGIC);
        out.extend_from_slice(&FDSF_VERSION.to_le_bytes());
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&d.to_le_bytes());
        out.extend_from_slice(&self.class_count.to_le_bytes());
        for v in self.features.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &y in &self.labels {
            out.extend_from_slice(&(y as u16).to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_fdsf_bytes(bytes: &[u8], name: impl Into<String>) -> Result<Self> {
        let mut r = ByteReader::new("FDSF", bytes);
        let magic = r.array::<4>("magic")?;
        if &magic != FDSF_MAGIC {
            return Err(r.error(0, format!("bad magic {magic:?}, expected {FDSF_MAGIC:?}")));
        }
        let version = r.u16("version")?;
        if version != FDSF_VERSION {
            return Err(r.error(4, format!("unsupported version {version}, expected {FDSF_VERSION}")));
        }
        let n = r.u32("sample count")? as u64;
        let d = r.u32("feature count")? as u64;
        let class_at = r.offset();
        let classes = r.u32("class count")?;
        if classes > u16::MAX as u32 + 1 {
            return Err(r.error(class_at, format!("class count {classes} exceeds the u16 label range")));
        }
        let cells = n
            .checked_mul(d)
            .ok_or_else(|| r.error(6, format!("dimension overflow: {n} x {d}")))?;
        let feature_bytes = r.sized(cells, 4, "feature block")?;
        let raw = r.take(feature_bytes, "feature block")?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let label_start = r.offset();
        let raw = r.take(r.sized(n, 2, "label block")?, "label block")?;
        let mut labels = Vec::with_capacity(n as usize);
        for (i, c) in raw.chunks_exact(2).enumerate() {
            let y = u16::from_le_bytes([c[0], c[1]]) as u32;
            if y >= classes {
                return Err(r.error(
                    label_start + 2 * i,
                    format!("label {y} of sample {i} is not below class count {classes}"),
                ));
            }
            labels.push(y);
        }
        r.finish()?;
        let features = Tensor2::from_vec(n as usize, d as usize, data)?;
        LabeledDataset::new(name, features, labels, classes)
    }

    /// Writes the dataset as an `FDSF` file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_fdsf_bytes()?).map_err(|e| Error::io(path, e))
    }

    /// Reads an `FDSF` file; the dataset is named after the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_fdsf_bytes(&bytes, name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two samples, two features, three classes, written byte by byte.
    fn hand_assembled() -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(b"FDSF");
        b.extend_from_slice(&[1, 0]); // version
        b.extend_from_slice(&[2, 0, 0, 0]); // n
        b.extend_from_slice(&[2, 0, 0, 0]); // d
        b.extend_from_slice(&[3, 0, 0, 0]); // N
        b.extend_from_slice(&[0x00, 0x00, 0x80, 0x3f]); // 1.0
        b.extend_from_slice(&[0x00, 0x00, 0x00, 0xc0]); // -2.0
        b.extend_from_slice(&[0x00, 0x00, 0x00, 0x3f]); // 0.5
        b.extend_from_slice(&[0x00, 0x00, 0x40, 0x40]); // 3.0
        b.extend_from_slice(&[2, 0, 0, 0]); // labels 2, 0
        b
    }

    #[test]
    fn hand_assembled_file_decodes() {
        let d = LabeledDataset::from_fdsf_bytes(&hand_assembled(), "tiny").unwrap();
        assert_eq!(d.features().data(), &[1.0, -2.0, 0.5, 3.0]);
        assert_eq!(d.labels(), &[2, 0]);
        assert_eq!(d.class_count(), 3);
        assert_eq!(d.to_fdsf_bytes().unwrap(), hand_assembled());
    }

    #[test]
    fn truncated_file_names_missing_bytes() {
        let bytes = hand_assembled();
        let err = LabeledDataset::from_fdsf_bytes(&bytes[..bytes.len() - 3], "t").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("3 missing"), "{msg}");
        assert!(matches!(err, Error::Decode { offset: 34, .. }), "{msg}");
    }

    #[test]
    fn rejects_bad_headers_and_labels() {
        let mut bad = hand_assembled();
        bad[1] = b'X';
        assert!(matches!(LabeledDataset::from_fdsf_bytes(&bad, "t"), Err(Error::Decode { offset: 0, .. })));

        let mut bad = hand_assembled();
        bad[34] = 3; // label 3 with N = 3
        assert!(matches!(LabeledDataset::from_fdsf_bytes(&bad, "t"), Err(Error::Decode { offset: 34, .. })));

        let mut huge = hand_assembled();
        huge[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[10..14].copy_from_slice(&u32::MAX.to_le_bytes());
        let err = LabeledDataset::from_fdsf_bytes(&huge, "t").unwrap_err();
        assert!(err.to_string().contains("truncated") || err.to_string().contains("overflow"), "{err}");

        let mut extra = hand_assembled();
        extra.push(0);
        assert!(LabeledDataset::from_fdsf_bytes(&extra, "t").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.fdsf");
        let d = LabeledDataset::from_fdsf_bytes(&hand_assembled(), "tiny").unwrap();
        d.save(&path).unwrap();
        let back = LabeledDataset::load(&path).unwrap();
        assert_eq!(back, d);
        assert_eq!(std::fs::read(&path).unwrap(), hand_assembled());
    }
}
