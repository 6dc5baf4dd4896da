//! Base-layer feature vectors and their uniform scalar quantizer.
//!
//! Components are clamped to `[-1, 1]` and mapped onto `2^bits` midtread
//! levels with step `Δ = 2 / (2^bits - 1)`, so both endpoints are exactly
//! representable. Arithmetic runs in `f64`; values are stored as `f64` so the
//! dequantized vector carries no extra rounding beyond the quantizer itself.

use std::io::{Read, Write};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_FEATURE_DIM: usize = 128;
pub const DEFAULT_BITS: u8 = 8;
pub const MIN_BITS: u8 = 2;
pub const MAX_BITS: u8 = 16;

const FVEC_MAGIC: &[u8; 4] = b"FVEC";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Rejects non-finite components.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("feature component {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|&v| v as f32).collect()
    }

    /// Reads an FVEC file: `"FVEC" | dim u32 LE | dim × f32 LE`.
    pub fn read_fvec<R: Read>(mut reader: R) -> Result<Self> {
        let mut buf = Vec::new();
        reader.read_to_end(&mut buf)?;
        Self::from_fvec_bytes(&buf)
    }

    pub fn from_fvec_bytes(buf: &[u8]) -> Result<Self> {
        if buf.len() < 8 || &buf[..4] != FVEC_MAGIC {
            return Err(invalid("not an FVEC file"));
        }
        let dim = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
        let body = &buf[8..];
        if body.len() != dim * 4 {
            return Err(invalid(format!("FVEC declares {dim} values but carries {} bytes", body.len())));
        }
        let values: Vec<f32> =
            body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Self::from_f32(&values)
    }

    pub fn to_fvec_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.len());
        out.extend_from_slice(FVEC_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for v in self.to_f32() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn write_fvec<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(&self.to_fvec_bytes())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedFeature {
    symbols: Vec<u32>,
    bits: u8,
}

impl QuantizedFeature {
    pub fn new(symbols: Vec<u32>, bits: u8) -> Result<Self> {
        check_bits(bits)?;
        let levels = levels(bits);
        if let Some(s) = symbols.iter().find(|&&s| u64::from(s) > levels) {
            return Err(Error::CorruptPayload(format!("symbol {s} out of range for {bits}-bit quantizer")));
        }
        Ok(Self { symbols, bits })
    }

    pub fn symbols(&self) -> &[u32] {
        &self.symbols
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn alphabet_size(&self) -> usize {
        1usize << self.bits
    }
}

pub fn check_bits(bits: u8) -> Result<()> {
    if (MIN_BITS..=MAX_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(invalid(format!("quantizer bits must be in [{MIN_BITS}, {MAX_BITS}], got {bits}")))
    }
}

/// Highest symbol value, `2^bits - 1`.
fn levels(bits: u8) -> u64 {
    (1u64 << bits) - 1
}

/// Quantizer step `Δ = 2 / (2^bits - 1)`.
pub fn step(bits: u8) -> f64 {
    2.0 / levels(bits) as f64
}

pub fn quantize_feature(v: &FeatureVector, bits: u8) -> Result<QuantizedFeature> {
    check_bits(bits)?;
    let top = levels(bits) as f64;
    let symbols = v
        .values()
        .iter()
        .map(|&x| {
            if !x.is_finite() {
                return Err(invalid("non-finite feature component"));
            }
            // (x + 1) / Δ, written so that the midpoint 0 lands exactly on .5
            let scaled = (x.clamp(-1.0, 1.0) + 1.0) * top / 2.0;
            // f64::round rounds half away from zero
            Ok(scaled.round().clamp(0.0, top) as u32)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantizedFeature { symbols, bits })
}

pub fn dequantize_feature(q: &QuantizedFeature) -> Result<FeatureVector> {
    check_bits(q.bits)?;
    let top = levels(q.bits);
    let values = q
        .symbols
        .iter()
        .map(|&s| {
            if u64::from(s) > top {
                return Err(Error::CorruptPayload(format!(
                    "symbol {s} out of range for {}-bit quantizer",
                    q.bits
                )));
            }
            Ok(f64::from(s) * 2.0 / top as f64 - 1.0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureVector(values))
}
