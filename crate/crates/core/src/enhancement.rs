//! Enhancement layer: residual formation, min-max normalization and the two
//! residual coders (internal 8×8 DCT, external command hook).
//!
//! Residual and texture samples are kept in `f64`. The difference of two
//! `f32` pixels is exact in `f64`, so `combine(x_fea, x - x_fea)` gives back
//! `x` bit for bit.

use std::path::Path;
use std::process::Command;

use crate::dct::{fdct8x8, idct8x8, BLOCK, BLOCK_AREA, ZIGZAG};
use crate::entropy::{entropy_decode, entropy_encode};
use crate::error::{invalid, Error, Result};
use crate::image::{check_shape, Image};
use crate::par::prelude::*;

/// Largest quantized DCT magnitude; symbols are offset by this much.
pub const COEF_LIMIT: i32 = 1023;
pub const COEF_ALPHABET: usize = 2 * COEF_LIMIT as usize + 1;

/// `x - x_fea` with its extrema.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPlane {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f64>,
    x_min: f64,
    x_max: f64,
}

impl ResidualPlane {
    /// Builds a plane whose bounds are the observed extrema.
    pub fn new(width: usize, height: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(width, height, channels)?;
        if values.len() != width * height * channels {
            return Err(invalid("residual sample count does not match its shape"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("residual contains non-finite samples"));
        }
        let (x_min, x_max) =
            values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Ok(Self { width, height, channels, values, x_min, x_max })
    }

    /// Replaces the bounds with a wider pair, e.g. one that is exactly
    /// representable in the stream header.
    pub fn with_bounds(mut self, x_min: f64, x_max: f64) -> Result<Self> {
        if !(x_min <= self.x_min && x_max >= self.x_max) {
            return Err(invalid(format!(
                "bounds [{x_min}, {x_max}] do not cover [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        self.x_min = x_min;
        self.x_max = x_max;
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// `(height, width, channels)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }
}

/// Residual scaled into `[0, 1]`; a constant residual yields the all-zero
/// texture with `degenerate` set.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTexture {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f64>,
    degenerate: bool,
}

impl NormalizedTexture {
    pub fn new(width: usize, height: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(width, height, channels)?;
        if values.len() != width * height * channels {
            return Err(invalid("texture sample count does not match its shape"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("texture samples must lie in [0, 1]"));
        }
        Ok(Self { width, height, channels, values, degenerate: false })
    }

    pub fn degenerate(width: usize, height: usize, channels: usize) -> Result<Self> {
        let mut t = Self::new(width, height, channels, vec![0.0; width * height * channels])?;
        t.degenerate = true;
        Ok(t)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// 8-bit hand-off image (rounding half away from zero).
    pub fn to_image(&self) -> Image {
        let data = self.values.iter().map(|&v| v as f32).collect();
        Image::new(self.width, self.height, self.channels, data).expect("texture is a valid image")
    }

    fn from_image(img: &Image) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            channels: img.channels(),
            values: img.data().iter().map(|&v| f64::from(v)).collect(),
            degenerate: false,
        }
    }
}

pub fn compute_residual(x: &Image, x_fea: &Image) -> Result<ResidualPlane> {
    x.same_shape(x_fea)?;
    let values = x.data().iter().zip(x_fea.data()).map(|(&a, &b)| f64::from(a) - f64::from(b)).collect();
    ResidualPlane::new(x.width(), x.height(), x.channels(), values)
}

/// `(r - x_min) / (x_max - x_min)`, or the degenerate texture when the
/// bounds coincide.
pub fn normalize_residual(r: &ResidualPlane) -> NormalizedTexture {
    let (w, h, c) = (r.width, r.height, r.channels);
    if r.x_max == r.x_min {
        return NormalizedTexture::degenerate(w, h, c).expect("residual shape is valid");
    }
    let span = r.x_max - r.x_min;
    let values = r.values.iter().map(|&v| ((v - r.x_min) / span).clamp(0.0, 1.0)).collect();
    NormalizedTexture { width: w, height: h, channels: c, values, degenerate: false }
}

pub fn denormalize_residual(t: &NormalizedTexture, x_min: f64, x_max: f64) -> Result<ResidualPlane> {
    if !x_min.is_finite() || !x_max.is_finite() || x_min > x_max {
        return Err(Error::CorruptHeader(format!("residual bounds [{x_min}, {x_max}] are not an interval")));
    }
    // exact at both endpoints
    let values: Vec<f64> =
        t.values.iter().map(|&v| ((1.0 - v) * x_min + v * x_max).clamp(x_min, x_max)).collect();
    ResidualPlane::new(t.width, t.height, t.channels, values)?.with_bounds(x_min, x_max)
}

/// `clamp(x_fea + r, 0, 1)`
pub fn combine(x_fea: &Image, r: &ResidualPlane) -> Result<Image> {
    if x_fea.shape() != r.shape() {
        return Err(invalid(format!("shape mismatch: {:?} vs {:?}", x_fea.shape(), r.shape())));
    }
    let data = x_fea
        .data()
        .iter()
        .zip(&r.values)
        .map(|(&f, &d)| (f64::from(f) + d).clamp(0.0, 1.0) as f32)
        .collect();
    Image::new(x_fea.width(), x_fea.height(), x_fea.channels(), data)
}

fn check_step(step: f64) -> Result<()> {
    if !(step.is_finite() && step > 0.0) {
        return Err(invalid(format!("quality step must be positive, got {step}")));
    }
    Ok(())
}

struct BlockGrid {
    width: usize,
    height: usize,
    channels: usize,
    cols: usize,
    rows: usize,
}

impl BlockGrid {
    fn new(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, cols: width.div_ceil(BLOCK), rows: height.div_ceil(BLOCK) }
    }

    fn block_count(&self) -> usize {
        self.channels * self.rows * self.cols
    }

    /// `(channel, block_row, block_col)` of the n-th block in coding order.
    fn locate(&self, n: usize) -> (usize, usize, usize) {
        let per_channel = self.rows * self.cols;
        (n / per_channel, (n % per_channel) / self.cols, n % self.cols)
    }
}

/// Quantize half away from zero and clamp to the coefficient range.
fn quantize_coef(coef: f64, step: f64) -> i32 {
    ((coef / step).round() as i32).clamp(-COEF_LIMIT, COEF_LIMIT)
}

fn dc_to_symbol(dc: i32, prev: i32) -> u32 {
    (dc - prev + COEF_LIMIT).rem_euclid(COEF_ALPHABET as i32) as u32
}

fn dc_from_symbol(sym: u32, prev: i32) -> i32 {
    (prev + sym as i32).rem_euclid(COEF_ALPHABET as i32) - COEF_LIMIT
}

/// Per channel: shift by -0.5, pad to 8×8 blocks by edge replication,
/// orthonormal DCT, flat quantization, zigzag scan, range code.
///
/// Each block's DC is sent as the difference from the previous block's DC,
/// wrapped into the coefficient alphabet.
pub fn encode_residual_internal(t: &NormalizedTexture, quality_step: f64) -> Result<Vec<u8>> {
    check_step(quality_step)?;
    let grid = BlockGrid::new(t.width, t.height, t.channels);
    let blocks: Vec<[i32; BLOCK_AREA]> = (0..grid.block_count())
        .into_par_iter()
        .map(|n| {
            let (ch, br, bc) = grid.locate(n);
            let mut block = [0.0; BLOCK_AREA];
            for dy in 0..BLOCK {
                let y = (br * BLOCK + dy).min(grid.height - 1);
                for dx in 0..BLOCK {
                    let x = (bc * BLOCK + dx).min(grid.width - 1);
                    block[dy * BLOCK + dx] = t.values[(y * grid.width + x) * grid.channels + ch] - 0.5;
                }
            }
            let coefs = fdct8x8(&block);
            let mut levels = [0i32; BLOCK_AREA];
            for (level, &raster) in levels.iter_mut().zip(ZIGZAG.iter()) {
                *level = quantize_coef(coefs[raster], quality_step);
            }
            levels
        })
        .collect();
    let mut prev_dc = 0;
    let mut symbols = Vec::with_capacity(blocks.len() * BLOCK_AREA);
    for levels in &blocks {
        symbols.push(dc_to_symbol(levels[0], prev_dc));
        prev_dc = levels[0];
        symbols.extend(levels[1..].iter().map(|&l| (l + COEF_LIMIT) as u32));
    }
    entropy_encode(&symbols, COEF_ALPHABET)
}

pub fn decode_residual_internal(
    payload: &[u8],
    height: usize,
    width: usize,
    channels: usize,
    quality_step: f64,
) -> Result<NormalizedTexture> {
    check_step(quality_step)?;
    check_shape(width, height, channels)?;
    let grid = BlockGrid::new(width, height, channels);
    let mut levels: Vec<i32> = entropy_decode(payload, grid.block_count() * BLOCK_AREA, COEF_ALPHABET)?
        .into_iter()
        .map(|sym| sym as i32 - COEF_LIMIT)
        .collect();
    let mut prev_dc = 0;
    for chunk in levels.chunks_mut(BLOCK_AREA) {
        chunk[0] = dc_from_symbol((chunk[0] + COEF_LIMIT) as u32, prev_dc);
        prev_dc = chunk[0];
    }
    let blocks: Vec<[f64; BLOCK_AREA]> = levels
        .par_chunks(BLOCK_AREA)
        .map(|chunk| {
            let mut coefs = [0.0; BLOCK_AREA];
            for (&level, &raster) in chunk.iter().zip(ZIGZAG.iter()) {
                coefs[raster] = f64::from(level) * quality_step;
            }
            idct8x8(&coefs)
        })
        .collect();

    let mut values = vec![0.0; width * height * channels];
    for (n, block) in blocks.iter().enumerate() {
        let (ch, br, bc) = grid.locate(n);
        for dy in 0..BLOCK {
            let y = br * BLOCK + dy;
            if y >= height {
                break;
            }
            for dx in 0..BLOCK {
                let x = bc * BLOCK + dx;
                if x >= width {
                    break;
                }
                values[(y * width + x) * channels + ch] = (block[dy * BLOCK + dx] + 0.5).clamp(0.0, 1.0);
            }
        }
    }
    NormalizedTexture::new(width, height, channels, values)
}

/// Shell command template for an external residual codec.
///
/// `{IN}` and `{OUT}` are replaced by (quoted) temporary file paths and the
/// result is run through `sh -c`. On the encoder side `{IN}` is an 8-bit
/// binary PGM/PPM of the texture and `{OUT}` must receive the payload; on the
/// decoder side `{IN}` holds the payload and `{OUT}` must receive an image
/// in any format the `image` crate can read (PNM, PNG, BMP).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalCodec {
    template: String,
}

impl ExternalCodec {
    pub fn new(template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        if !template.contains("{IN}") || !template.contains("{OUT}") {
            return Err(invalid("external codec template needs {IN} and {OUT} placeholders"));
        }
        Ok(Self { template })
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    /// Substitutes the paths and runs the command; fails unless it exits
    /// successfully and leaves `output` behind. Also usable for other
    /// file-to-file hooks such as a feature extractor.
    pub fn run(&self, input: &Path, output: &Path) -> Result<()> {
        let cmd = self.template.replace("{IN}", &shell_quote(input)).replace("{OUT}", &shell_quote(output));
        let result = Command::new("sh").arg("-c").arg(&cmd).output().map_err(|e| Error::ExternalCodec {
            message: format!("could not spawn `{cmd}`"),
            diagnostics: e.to_string(),
        })?;
        if !result.status.success() {
            return Err(Error::ExternalCodec {
                message: format!("`{cmd}` exited with {}", result.status),
                diagnostics: String::from_utf8_lossy(&result.stderr).into_owned(),
            });
        }
        if !output.exists() {
            return Err(Error::ExternalCodec {
                message: format!("`{cmd}` did not produce its output file"),
                diagnostics: String::from_utf8_lossy(&result.stderr).into_owned(),
            });
        }
        Ok(())
    }
}

fn shell_quote(p: &Path) -> String {
    format!("'{}'", p.to_string_lossy().replace('\'', r"'\''"))
}

fn pnm_name(channels: usize) -> &'static str {
    if channels == 1 {
        "texture.pgm"
    } else {
        "texture.ppm"
    }
}

pub fn encode_residual_external(t: &NormalizedTexture, codec: &ExternalCodec) -> Result<Vec<u8>> {
    let dir = tempfile::tempdir()?;
    let input = dir.path().join(pnm_name(t.channels));
    let output = dir.path().join("payload.bin");
    t.to_image().save_pnm(&input)?;
    codec.run(&input, &output)?;
    Ok(std::fs::read(&output)?)
}

pub fn decode_residual_external(
    payload: &[u8],
    height: usize,
    width: usize,
    channels: usize,
    codec: &ExternalCodec,
) -> Result<NormalizedTexture> {
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("payload.bin");
    let output = dir.path().join(pnm_name(channels));
    std::fs::write(&input, payload)?;
    codec.run(&input, &output)?;
    let img = Image::load(&output)?;
    if (img.height(), img.width()) != (height, width) {
        return Err(Error::CorruptPayload(format!(
            "external decoder produced {}x{}, expected {width}x{height}",
            img.width(),
            img.height()
        )));
    }
    let img = match (img.channels(), channels) {
        (a, b) if a == b => img,
        (3, 1) => {
            let luma: Vec<f32> = img.data().chunks_exact(3).map(|p| (p[0] + p[1] + p[2]) / 3.0).collect();
            Image::new(width, height, 1, luma)?
        }
        _ => {
            let rgb: Vec<f32> = img.data().iter().flat_map(|&v| [v, v, v]).collect();
            Image::new(width, height, 3, rgb)?
        }
    };
    Ok(NormalizedTexture::from_image(&img))
}
