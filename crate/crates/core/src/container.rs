//! The `.sftc` layered stream and its three decode modes.
//!
//! ```text
//! offset size field
//!  0     4    magic "SFTC"
//!  4     1    version (1)
//!  5     1    flags (bit 0: has_enhancement; other bits must be 0)
//!  6     2    width            u16
//!  8     2    height           u16
//! 10     1    channels         u8 (1 or 3)
//! 11     2    feat_dim         u16
//! 13     1    quant_bits       u8 (2..=16)
//! 14     4    base_len         u32
//! 18     base_len             base payload (range-coded feature symbols)
//! -- present iff has_enhancement --
//!  +0    1    codec_id         u8 (0 internal DCT, 1 external)
//!  +1    4    quality          f32 (internal quantizer step; 0 for external)
//!  +5    4    x_min            f32
//!  +9    4    x_max            f32
//! +13    ..   enhancement payload, running to the end of the stream
//! ```
//!
//! All integers are little-endian. The enhancement payload length is the
//! remainder of the stream (`total - 18 - base_len - 13`).

use crate::enhancement::{
    combine, compute_residual, decode_residual_external, decode_residual_internal, denormalize_residual,
    encode_residual_external, encode_residual_internal, normalize_residual, ExternalCodec, NormalizedTexture,
};
use crate::entropy::{entropy_decode, entropy_encode};
use crate::error::{invalid, Error, Result};
use crate::feature::{check_bits, dequantize_feature, quantize_feature, FeatureVector, QuantizedFeature};
use crate::image::Image;
use crate::recon::ReconModel;

pub const MAGIC: &[u8; 4] = b"SFTC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 18;
pub const ENHANCEMENT_HEADER_LEN: usize = 13;
pub const FLAG_HAS_ENHANCEMENT: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub version: u8,
    pub flags: u8,
    pub width: u16,
    pub height: u16,
    pub channels: u8,
    pub feat_dim: u16,
    pub quant_bits: u8,
    pub base_len: u32,
}

impl StreamHeader {
    pub fn has_enhancement(&self) -> bool {
        self.flags & FLAG_HAS_ENHANCEMENT != 0
    }

    fn validate(&self) -> Result<()> {
        if self.feat_dim == 0 {
            return Err(Error::CorruptHeader("feat_dim is zero".into()));
        }
        check_bits(self.quant_bits).map_err(|e| Error::CorruptHeader(e.to_string()))?;
        if self.width == 0 || self.height == 0 {
            return Err(Error::CorruptHeader("image dimensions are zero".into()));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::CorruptHeader(format!("{} channels", self.channels)));
        }
        Ok(())
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.push(self.version);
        out.push(self.flags);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.push(self.channels);
        out.extend_from_slice(&self.feat_dim.to_le_bytes());
        out.push(self.quant_bits);
        out.extend_from_slice(&self.base_len.to_le_bytes());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum EnhancementCodec {
    Internal = 0,
    External = 1,
}

impl EnhancementCodec {
    fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Self::Internal),
            1 => Ok(Self::External),
            other => Err(Error::UnsupportedVersion(format!("enhancement codec_id {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancementBlock {
    pub codec: EnhancementCodec,
    pub quality: f32,
    pub x_min: f32,
    pub x_max: f32,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalableStream {
    pub header: StreamHeader,
    pub base_payload: Vec<u8>,
    pub enhancement: Option<EnhancementBlock>,
}

impl ScalableStream {
    pub fn total_len(&self) -> usize {
        HEADER_LEN
            + self.base_payload.len()
            + self.enhancement.as_ref().map_or(0, |e| ENHANCEMENT_HEADER_LEN + e.payload.len())
    }

    /// `(height, width, channels)` declared by the header.
    pub fn image_shape(&self) -> (usize, usize, usize) {
        (usize::from(self.header.height), usize::from(self.header.width), usize::from(self.header.channels))
    }

    /// Entropy-decodes and dequantizes the base layer.
    pub fn feature(&self) -> Result<FeatureVector> {
        let h = &self.header;
        let symbols = entropy_decode(&self.base_payload, usize::from(h.feat_dim), 1 << h.quant_bits)?;
        dequantize_feature(&QuantizedFeature::new(symbols, h.quant_bits)?)
    }
}

pub fn write_stream(s: &ScalableStream) -> Result<Vec<u8>> {
    let h = &s.header;
    if h.version != VERSION {
        return Err(invalid(format!("cannot write stream version {}", h.version)));
    }
    if h.flags & !FLAG_HAS_ENHANCEMENT != 0 {
        return Err(invalid("reserved flag bits set"));
    }
    h.validate().map_err(|e| invalid(e.to_string()))?;
    if h.base_len as usize != s.base_payload.len() {
        return Err(invalid("base_len does not match the base payload"));
    }
    if h.has_enhancement() != s.enhancement.is_some() {
        return Err(invalid("has_enhancement flag disagrees with the enhancement block"));
    }
    let mut out = Vec::with_capacity(s.total_len());
    h.write(&mut out);
    out.extend_from_slice(&s.base_payload);
    if let Some(e) = &s.enhancement {
        if !e.x_min.is_finite() || !e.x_max.is_finite() || e.x_min > e.x_max {
            return Err(invalid("enhancement bounds are not a finite interval"));
        }
        out.push(e.codec as u8);
        out.extend_from_slice(&e.quality.to_le_bytes());
        out.extend_from_slice(&e.x_min.to_le_bytes());
        out.extend_from_slice(&e.x_max.to_le_bytes());
        out.extend_from_slice(&e.payload);
    }
    Ok(out)
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn le_f32(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

pub fn read_stream(bytes: &[u8]) -> Result<ScalableStream> {
    let magic_len = bytes.len().min(4);
    if bytes[..magic_len] != MAGIC[..magic_len] {
        return Err(Error::NotAStream);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedStream);
    }
    let header = StreamHeader {
        version: bytes[4],
        flags: bytes[5],
        width: le_u16(bytes, 6),
        height: le_u16(bytes, 8),
        channels: bytes[10],
        feat_dim: le_u16(bytes, 11),
        quant_bits: bytes[13],
        base_len: le_u32(bytes, 14),
    };
    if header.version != VERSION {
        return Err(Error::UnsupportedVersion(format!("stream version {}", header.version)));
    }
    if header.flags & !FLAG_HAS_ENHANCEMENT != 0 {
        return Err(Error::UnsupportedVersion(format!("flags {:#04x}", header.flags)));
    }
    header.validate()?;

    let base_end = HEADER_LEN.checked_add(header.base_len as usize).ok_or(Error::TruncatedStream)?;
    let base_payload = bytes.get(HEADER_LEN..base_end).ok_or(Error::TruncatedStream)?.to_vec();
    let rest = &bytes[base_end..];

    let enhancement = if header.has_enhancement() {
        if rest.len() < ENHANCEMENT_HEADER_LEN {
            return Err(Error::TruncatedStream);
        }
        let codec = EnhancementCodec::from_id(rest[0])?;
        let block = EnhancementBlock {
            codec,
            quality: le_f32(rest, 1),
            x_min: le_f32(rest, 5),
            x_max: le_f32(rest, 9),
            payload: rest[ENHANCEMENT_HEADER_LEN..].to_vec(),
        };
        if !block.x_min.is_finite() || !block.x_max.is_finite() || block.x_min > block.x_max {
            return Err(Error::CorruptHeader(format!(
                "residual bounds [{}, {}] are not a finite interval",
                block.x_min, block.x_max
            )));
        }
        Some(block)
    } else {
        if !rest.is_empty() {
            return Err(Error::CorruptHeader(format!(
                "{} bytes after the base payload of a base-only stream",
                rest.len()
            )));
        }
        None
    };
    Ok(ScalableStream { header, base_payload, enhancement })
}

/// Drops the enhancement layer, leaving a valid base-only stream.
pub fn extract_base(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut s = read_stream(bytes)?;
    s.header.flags &= !FLAG_HAS_ENHANCEMENT;
    s.enhancement = None;
    write_stream(&s)
}

pub fn decode_base_only(bytes: &[u8]) -> Result<FeatureVector> {
    read_stream(bytes)?.feature()
}

fn check_model(stream: &ScalableStream, model: &ReconModel) -> Result<()> {
    if model.input_dim() != usize::from(stream.header.feat_dim) {
        return Err(invalid(format!(
            "model takes {}-d features, stream carries {}",
            model.input_dim(),
            stream.header.feat_dim
        )));
    }
    if model.output_shape() != stream.image_shape() {
        return Err(invalid(format!(
            "model produces {:?} images, stream declares {:?}",
            model.output_shape(),
            stream.image_shape()
        )));
    }
    Ok(())
}

fn coarse_from(stream: &ScalableStream, model: &ReconModel) -> Result<Image> {
    check_model(stream, model)?;
    model.forward(&stream.feature()?)
}

pub fn decode_coarse(bytes: &[u8], model: &ReconModel) -> Result<Image> {
    coarse_from(&read_stream(bytes)?, model)
}

/// Coarse reconstruction plus the decoded residual. Streams whose
/// enhancement was produced by an external codec need its decoder template.
pub fn decode_full(bytes: &[u8], model: &ReconModel, external: Option<&ExternalCodec>) -> Result<Image> {
    let stream = read_stream(bytes)?;
    let enh = stream
        .enhancement
        .as_ref()
        .ok_or_else(|| Error::ModeUnavailable("stream has no enhancement layer".into()))?;
    let coarse = coarse_from(&stream, model)?;
    let (h, w, c) = stream.image_shape();
    let texture = match enh.codec {
        EnhancementCodec::Internal => {
            decode_residual_internal(&enh.payload, h, w, c, f64::from(enh.quality))?
        }
        EnhancementCodec::External => {
            let codec = external.ok_or_else(|| {
                Error::ModeUnavailable("external enhancement needs a decoder command".into())
            })?;
            decode_residual_external(&enh.payload, h, w, c, codec)?
        }
    };
    let texture = if enh.x_min == enh.x_max { NormalizedTexture::degenerate(w, h, c)? } else { texture };
    let residual = denormalize_residual(&texture, f64::from(enh.x_min), f64::from(enh.x_max))?;
    combine(&coarse, &residual)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Enhancement {
    None,
    Internal { quality_step: f32 },
    External(ExternalCodec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeConfig {
    pub bits: u8,
    pub enhancement: Enhancement,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self { bits: crate::feature::DEFAULT_BITS, enhancement: Enhancement::Internal { quality_step: 0.02 } }
    }
}

fn f32_floor(v: f64) -> f32 {
    let f = v as f32;
    if f64::from(f) > v {
        f.next_down()
    } else {
        f
    }
}

fn f32_ceil(v: f64) -> f32 {
    let f = v as f32;
    if f64::from(f) < v {
        f.next_up()
    } else {
        f
    }
}

/// Builds a stream from an image and its feature. The residual is taken
/// against the reconstruction of the *dequantized* feature, which is what
/// the decoder will see; a model is required whenever an enhancement layer
/// is requested.
pub fn encode(
    image: &Image,
    feature: &FeatureVector,
    model: Option<&ReconModel>,
    config: &EncodeConfig,
) -> Result<ScalableStream> {
    let to_u16 = |v: usize, what: &str| {
        u16::try_from(v).map_err(|_| invalid(format!("{what} {v} does not fit the header")))
    };
    let feat_dim = to_u16(feature.len(), "feature dimension")?;
    if feat_dim == 0 {
        return Err(invalid("feature vector is empty"));
    }
    let quantized = quantize_feature(feature, config.bits)?;
    let base_payload = entropy_encode(quantized.symbols(), quantized.alphabet_size())?;

    let enhancement = match &config.enhancement {
        Enhancement::None => None,
        mode => {
            let model =
                model.ok_or_else(|| invalid("an enhancement layer needs the reconstruction model"))?;
            if model.input_dim() != feature.len() || model.output_shape() != image.shape() {
                return Err(invalid(format!(
                    "model maps {}-d features to {:?}, input is {}-d and {:?}",
                    model.input_dim(),
                    model.output_shape(),
                    feature.len(),
                    image.shape()
                )));
            }
            let coarse = model.forward(&dequantize_feature(&quantized)?)?;
            let residual = compute_residual(image, &coarse)?;
            let (x_min, x_max) = (f32_floor(residual.x_min()), f32_ceil(residual.x_max()));
            let residual = residual.with_bounds(f64::from(x_min), f64::from(x_max))?;
            let texture = normalize_residual(&residual);
            let (codec, quality, payload) = match mode {
                Enhancement::Internal { quality_step } => (
                    EnhancementCodec::Internal,
                    *quality_step,
                    encode_residual_internal(&texture, f64::from(*quality_step))?,
                ),
                Enhancement::External(ext) => {
                    (EnhancementCodec::External, 0.0, encode_residual_external(&texture, ext)?)
                }
                Enhancement::None => unreachable!(),
            };
            Some(EnhancementBlock { codec, quality, x_min, x_max, payload })
        }
    };

    let header = StreamHeader {
        version: VERSION,
        flags: if enhancement.is_some() { FLAG_HAS_ENHANCEMENT } else { 0 },
        width: to_u16(image.width(), "width")?,
        height: to_u16(image.height(), "height")?,
        channels: image.channels() as u8,
        feat_dim,
        quant_bits: config.bits,
        base_len: u32::try_from(base_payload.len()).map_err(|_| invalid("base payload too large"))?,
    };
    Ok(ScalableStream { header, base_payload, enhancement })
}
