//! Affine quantization of stored exemplars and byte-exact storage accounting.
//!
//! 8-bit codes use `r = S·(q − Z)` with a per-vector scale `S` and zero-point
//! `Z`, fitted over the vector's range widened to include zero so that `0.0`
//! is exactly representable. 16-bit storage is plain IEEE binary16
//! (round-to-nearest-even); 32-bit storage is a bit copy.

use half::f16;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Storage precision of an exemplar payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Bits {
    B8,
    B16,
    B32,
}

impl Bits {
    pub const ALL: [Bits; 3] = [Bits::B32, Bits::B16, Bits::B8];

    pub fn bits(self) -> u8 {
        match self {
            Bits::B8 => 8,
            Bits::B16 => 16,
            Bits::B32 => 32,
        }
    }

    pub fn bytes_per_element(self) -> usize {
        self.bits() as usize / 8
    }
}

impl TryFrom<u8> for Bits {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            8 => Ok(Bits::B8),
            16 => Ok(Bits::B16),
            32 => Ok(Bits::B32),
            other => Err(Error::contract(format!("unsupported bit width {other} (expected 8, 16 or 32)"))),
        }
    }
}

impl From<Bits> for u8 {
    fn from(b: Bits) -> u8 {
        b.bits()
    }
}

impl std::fmt::Display for Bits {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.bits())
    }
}

/// Scale and zero-point of one quantized vector. Always valid once built:
/// `scale > 0`, and for 8 bits `zero_point ∈ [0, 255]`. 16- and 32-bit
/// vectors carry the identity `(1, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    scale: f32,
    zero_point: i32,
    bits: Bits,
}

impl QuantParams {
    pub fn identity(bits: Bits) -> Self {
        Self {
            scale: 1.0,
            zero_point: 0,
            bits,
        }
    }

    pub fn affine_u8(scale: f32, zero_point: i32) -> Result<Self> {
        ensure!(scale.is_finite() && scale > 0.0, "scale must be finite and positive, got {scale}");
        ensure!((0..=255).contains(&zero_point), "zero point {zero_point} outside [0, 255]");
        Ok(Self {
            scale,
            zero_point,
            bits: Bits::B8,
        })
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn zero_point(&self) -> i32 {
        self.zero_point
    }

    pub fn bits(&self) -> Bits {
        self.bits
    }
}

/// Code storage for one vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F16(Vec<f16>),
    U8(Vec<u8>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F16(v) => v.len(),
            Payload::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn byte_len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len() * 4,
            Payload::F16(v) => v.len() * 2,
            Payload::U8(v) => v.len(),
        }
    }

    /// Appends the little-endian payload bytes to `out`.
    pub fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::F16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::U8(v) => out.extend_from_slice(v),
        }
    }

    /// Decodes `len` codes of width `bits` from little-endian bytes.
    pub fn read_le(bits: Bits, len: usize, bytes: &[u8]) -> Option<Payload> {
        if bytes.len() != len * bits.bytes_per_element() {
            return None;
        }
        Some(match bits {
            Bits::B32 => Payload::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Bits::B16 => Payload::F16(
                bytes
                    .chunks_exact(2)
                    .map(|c| f16::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Bits::B8 => Payload::U8(bytes.to_vec()),
        })
    }
}

/// A vector stored at reduced precision together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedVector {
    payload: Payload,
    params: QuantParams,
}

impl QuantizedVector {
    /// Pairs a payload with parameters; the payload type must match `params.bits()`.
    pub fn new(payload: Payload, params: QuantParams) -> Result<Self> {
        let ok = matches!(
            (&payload, params.bits()),
            (Payload::F32(_), Bits::B32) | (Payload::F16(_), Bits::B16) | (Payload::U8(_), Bits::B8)
        );
        ensure!(ok, "payload type does not match {}-bit params", params.bits());
        Ok(Self { payload, params })
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn params(&self) -> &QuantParams {
        &self.params
    }

    pub fn bits(&self) -> Bits {
        self.params.bits
    }

    pub fn len(&self) -> usize {
        self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payload.is_empty()
    }
}

/// Fits quantization parameters for `values` at the given width.
///
/// For 8 bits the range `[min(min, 0), max(max, 0)]` is mapped onto
/// `[0, 255]`: `S = (hi − lo)/255`, `Z = round(−lo/S)`. A constant vector
/// with `|c| ≤ 255` instead gets `S = 1`, `Z = clamp(round(−c), 0, 255)`,
/// which round-trips it within 0.5.
pub fn fit_quant_params(values: &[f32], bits: Bits) -> Result<QuantParams> {
    ensure!(!values.is_empty(), "cannot fit quantization params to an empty vector");
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::contract(format!("non-finite value {} at position {i}", values[i])));
    }
    if bits != Bits::B8 {
        return Ok(QuantParams::identity(bits));
    }
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v as f64), hi.max(v as f64))
        });
    if min == max && min.abs() <= 255.0 {
        let z = (-min).round().clamp(0.0, 255.0) as i32;
        return QuantParams::affine_u8(1.0, z);
    }
    let lo = min.min(0.0);
    let hi = max.max(0.0);
    let span = hi - lo;
    let scale = (span / 255.0) as f32;
    let z = (-lo * 255.0 / span).round().clamp(0.0, 255.0) as i32;
    QuantParams::affine_u8(scale, z)
}

/// Encodes `values` with `params`. Out-of-range 8-bit codes saturate.
pub fn quantize(values: &[f32], params: &QuantParams) -> QuantizedVector {
    let payload = match params.bits {
        Bits::B32 => Payload::F32(values.to_vec()),
        Bits::B16 => Payload::F16(values.iter().map(|&v| f16::from_f32(v)).collect()),
        Bits::B8 => {
            let s = params.scale as f64;
            let z = params.zero_point as f64;
            Payload::U8(
                values
                    .iter()
                    .map(|&r| ((r as f64 / s).round() + z).clamp(0.0, 255.0) as u8)
                    .collect(),
            )
        }
    };
    QuantizedVector {
        payload,
        params: *params,
    }
}

/// Fits parameters and encodes in one step.
pub fn quantize_fitted(values: &[f32], bits: Bits) -> Result<QuantizedVector> {
    let params = fit_quant_params(values, bits)?;
    Ok(quantize(values, &params))
}

/// Decodes back to `f32`.
pub fn dequantize(qv: &QuantizedVector) -> Vec<f32> {
    match &qv.payload {
        Payload::F32(v) => v.clone(),
        Payload::F16(v) => v.iter().map(|h| h.to_f32()).collect(),
        Payload::U8(v) => {
            let s = qv.params.scale as f64;
            let z = qv.params.zero_point;
            v.iter()
                .map(|&q| (s * (q as i32 - z) as f64) as f32)
                .collect()
        }
    }
}

/// Fixed per-set header in the snapshot: class id (u32), method tag (u8),
/// bit width (u8), exemplar count (u32), element count per exemplar (u32).
pub const SET_HEADER_BYTES: u64 = 14;

/// Scale (f32) and zero-point (u8) stored alongside every 8-bit exemplar.
/// 16- and 32-bit exemplars store no parameters.
pub const INT8_PARAM_BYTES: u64 = 5;

/// Bytes needed to hold one class's exemplar set for replay.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageBytes {
    /// `count × dims × bits / 8`
    pub payload: u64,
    /// per-exemplar quantization parameters
    pub params: u64,
    /// fixed per-set header
    pub header: u64,
}

impl StorageBytes {
    pub fn total(&self) -> u64 {
        self.payload + self.params + self.header
    }

    pub fn metadata(&self) -> u64 {
        self.params + self.header
    }
}

impl std::ops::Add for StorageBytes {
    type Output = StorageBytes;

    fn add(self, o: StorageBytes) -> StorageBytes {
        StorageBytes {
            payload: self.payload + o.payload,
            params: self.params + o.params,
            header: self.header + o.header,
        }
    }
}

impl std::iter::Sum for StorageBytes {
    fn sum<I: Iterator<Item = StorageBytes>>(iter: I) -> Self {
        iter.fold(StorageBytes::default(), |a, b| a + b)
    }
}

/// Storage for one set of `count` exemplars of `dims` elements each.
pub fn storage_bytes(count: u64, dims: u64, bits: Bits) -> StorageBytes {
    StorageBytes {
        payload: count * dims * bits.bits() as u64 / 8,
        params: if bits == Bits::B8 { count * INT8_PARAM_BYTES } else { 0 },
        header: SET_HEADER_BYTES,
    }
}
