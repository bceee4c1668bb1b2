//! `FICL` snapshot format for a [`ReplayMemory`].
//!
//! All integers are little-endian and fixed width.
//!
//! ```text
//! magic        b"FICL"
//! version      u16
//! class_count  u32
//! per class (ascending class id):
//!   class_id   u32
//!   method     u8     0 = herding, 1 = fast
//!   bits       u8     8 | 16 | 32
//!   count      u32    exemplars in the set
//!   dims       u32    elements per exemplar
//!   params     count × (scale f32, zero_point u8)     8-bit sets only
//!   payload    count × dims × bits/8 bytes
//!   distances  count × f32
//!   indices    count × u32                           source row per exemplar
//! budget_fraction  f64
//! total_budget     u64
//! ```
//!
//! Everything up to and including `payload` is what
//! [`storage_bytes`](crate::quantization::storage_bytes) accounts for; the
//! distances and indices are an 8-byte-per-exemplar selection record.

use std::path::Path;

use super::{BudgetPolicy, ExemplarSet, ReplayMemory};
use crate::codec::ByteReader;
use crate::error::{Error, Result};
use crate::quantization::{Bits, Payload, QuantParams, QuantizedVector};
use crate::selection::SelectionMethod;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"FICL";
pub const SNAPSHOT_VERSION: u16 = 1;

/// Bytes of framing outside the per-class sections (magic, version, class
/// count, budget trailer).
pub const SNAPSHOT_FRAMING_BYTES: u64 = 4 + 2 + 4 + 8 + 8;

/// Bytes per exemplar of the selection record (distance + source index).
pub const SELECTION_RECORD_BYTES: u64 = 8;

fn method_tag(m: SelectionMethod) -> u8 {
    match m {
        SelectionMethod::Herding => 0,
        SelectionMethod::Fast => 1,
    }
}

impl ReplayMemory {
    /// Serializes to the `FICL` format.
    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sets.len() as u32).to_le_bytes());
        for set in self.sets.values() {
            out.extend_from_slice(&set.class_id.to_le_bytes());
            out.push(method_tag(set.method));
            out.push(set.bits.bits());
            out.extend_from_slice(&(set.len() as u32).to_le_bytes());
            out.extend_from_slice(&(set.dims as u32).to_le_bytes());
            if set.bits == Bits::B8 {
                for e in &set.exemplars {
                    out.extend_from_slice(&e.params().scale().to_le_bytes());
                    out.push(e.params().zero_point() as u8);
                }
            }
            for e in &set.exemplars {
                e.payload().write_le(&mut out);
            }
            for d in &set.distances {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for i in &set.source_indices {
                out.extend_from_slice(&i.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.budget.fraction.to_le_bytes());
        out.extend_from_slice(&(self.budget.total_budget as u64).to_le_bytes());
        out
    }

    /// Parses the `FICL` format; errors carry the byte offset of the problem.
    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new("FICL", bytes);
        let magic = r.array::<4>("magic")?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(r.error(0, format!("bad magic {magic:?}, expected {SNAPSHOT_MAGIC:?}")));
        }
        let version = r.u16("version")?;
        if version != SNAPSHOT_VERSION {
            return Err(r.error(4, format!("unsupported version {version}, expected {SNAPSHOT_VERSION}")));
        }
        let class_count = r.u32("class count")?;
        let mut sets = Vec::new();
        for _ in 0..class_count {
            let start = r.offset();
            let class_id = r.u32("class id")?;
            let tag_at = r.offset();
            let method = match r.u8("method tag")? {
                0 => SelectionMethod::Herding,
                1 => SelectionMethod::Fast,
                t => return Err(r.error(tag_at, format!("unknown method tag {t}"))),
            };
            let bits_at = r.offset();
            let bits = Bits::try_from(r.u8("bit width")?).map_err(|e| r.error(bits_at, e.to_string()))?;
            let count = r.u32("exemplar count")? as u64;
            let dims = r.u32("dims")? as u64;

            let mut params = Vec::new();
            if bits == Bits::B8 {
                let need = r.sized(count, 5, "params")?;
                if r.remaining() < need {
                    r.take(need, "quantization params")?;
                }
                for _ in 0..count {
                    let at = r.offset();
                    let scale = r.f32("scale")?;
                    let zp = r.u8("zero point")? as i32;
                    params.push(QuantParams::affine_u8(scale, zp).map_err(|e| r.error(at, e.to_string()))?);
                }
            } else {
                params.resize(count as usize, QuantParams::identity(bits));
            }

            let row_bytes = r.sized(dims, bits.bytes_per_element() as u64, "exemplar")?;
            r.sized(count, row_bytes as u64, "payload")?;
            let mut exemplars = Vec::with_capacity(count as usize);
            for p in params {
                let raw = r.take(row_bytes, "payload")?;
                let payload = Payload::read_le(bits, dims as usize, raw).expect("length checked");
                exemplars.push(QuantizedVector::new(payload, p)?);
            }
            let mut distances = Vec::with_capacity(count as usize);
            for _ in 0..count {
                distances.push(r.f32("distance")?);
            }
            let mut indices = Vec::with_capacity(count as usize);
            for _ in 0..count {
                indices.push(r.u32("source index")?);
            }
            let set = ExemplarSet::from_parts(class_id, method, bits, dims as usize, exemplars, distances, indices)
                .map_err(|e| r.error(start, e.to_string()))?;
            sets.push((start, set));
        }
        let fraction = r.f64("budget fraction")?;
        let total = r.u64("total budget")?;
        r.finish()?;

        let mut memory = ReplayMemory::new(BudgetPolicy::with_total(fraction, total as usize));
        for (start, set) in sets {
            memory.insert(set).map_err(|e| r.error(start, e.to_string()))?;
        }
        Ok(memory)
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_snapshot_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_snapshot_bytes(&bytes)
    }

    /// Exact snapshot size: framing + replay storage + selection records.
    pub fn snapshot_len(&self) -> u64 {
        SNAPSHOT_FRAMING_BYTES
            + self.storage().total()
            + SELECTION_RECORD_BYTES * self.total_exemplars() as u64
    }
}
