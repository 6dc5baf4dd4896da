//! Rate sweeps over quantizer bits × residual quality step.

use crate::container::{decode_coarse, decode_full, encode, write_stream, EncodeConfig, Enhancement};
use crate::error::Result;
use crate::feature::FeatureVector;
use crate::image::Image;
use crate::metrics::{
    bits_per_pixel, distortion, embedding_distance, verification_accuracy, MetricsRow, Mode,
};
use crate::par::prelude::*;
use crate::recon::ReconModel;

#[derive(Debug, Clone)]
pub struct SweepItem {
    pub id: String,
    pub image: Image,
    pub feature: FeatureVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub bits: Vec<u8>,
    pub quality_steps: Vec<f32>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { bits: vec![8], quality_steps: vec![0.1, 0.05, 0.02] }
    }
}

fn row(
    item: &SweepItem,
    mode: Mode,
    stream_len: usize,
    decoded: Option<&Image>,
    embed_l2: f64,
) -> Result<MetricsRow> {
    let img = &item.image;
    let d = decoded.map(|x| distortion(&item.image, x)).transpose()?;
    Ok(MetricsRow {
        image_id: item.id.clone(),
        mode,
        total_bits: 8 * stream_len as u64,
        bpp: bits_per_pixel(stream_len, img.width(), img.height())?,
        psnr_db: d.map(|d| d.psnr_db),
        mse: d.map(|d| d.mse),
        mae: d.map(|d| d.mae),
        embed_l2: Some(embed_l2),
    })
}

/// Rows for one image: per bit depth a `base` and a `coarse` row (both
/// costed at the base-only stream), then one `full` row per quality step.
/// Rates are the on-disk stream sizes; the model is shared side information
/// and not counted.
pub fn sweep_item(item: &SweepItem, model: &ReconModel, config: &SweepConfig) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for &bits in &config.bits {
        let base_cfg = EncodeConfig { bits, enhancement: Enhancement::None };
        let base = write_stream(&encode(&item.image, &item.feature, Some(model), &base_cfg)?)?;
        let decoded_feature = crate::container::decode_base_only(&base)?;
        let l2 = embedding_distance(&item.feature, &decoded_feature)?;
        rows.push(row(item, Mode::Base, base.len(), None, l2)?);
        let coarse = decode_coarse(&base, model)?;
        rows.push(row(item, Mode::Coarse, base.len(), Some(&coarse), l2)?);

        for &quality_step in &config.quality_steps {
            let cfg = EncodeConfig { bits, enhancement: Enhancement::Internal { quality_step } };
            let full = write_stream(&encode(&item.image, &item.feature, Some(model), &cfg)?)?;
            let recon = decode_full(&full, model, None)?;
            rows.push(row(item, Mode::Full, full.len(), Some(&recon), l2)?);
        }
    }
    Ok(rows)
}

/// Images are processed in parallel; rows come back in input order.
pub fn sweep(items: &[SweepItem], model: &ReconModel, config: &SweepConfig) -> Result<Vec<MetricsRow>> {
    let per_item: Vec<Result<Vec<MetricsRow>>> =
        items.par_iter().map(|item| sweep_item(item, model, config)).collect();
    let mut rows = Vec::new();
    for r in per_item {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Verification accuracy after passing every feature through the base-layer
/// quantizer at `bits` (or unquantized when `None`). Returns
/// `(threshold, accuracy)`.
pub fn rate_accuracy(pairs: &[(FeatureVector, FeatureVector, bool)], bits: Option<u8>) -> Result<(f64, f64)> {
    let through = |v: &FeatureVector| -> Result<FeatureVector> {
        match bits {
            Some(b) => crate::feature::dequantize_feature(&crate::feature::quantize_feature(v, b)?),
            None => Ok(v.clone()),
        }
    };
    let distances = pairs
        .par_iter()
        .map(|(a, b, same)| Ok((embedding_distance(&through(a)?, &through(b)?)?, *same)))
        .collect::<Result<Vec<_>>>()?;
    verification_accuracy(&distances)
}
