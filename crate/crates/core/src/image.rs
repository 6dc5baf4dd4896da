//! Interleaved (H, W, C) float images in the canonical `[0, 1]` domain.

use std::path::Path;

pub use ::image::ImageFormat;

use ::image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use ::image::{DynamicImage, ExtendedColorType, GrayImage, ImageEncoder, RgbImage};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    /// Builds an image from row-major interleaved samples. Values are clamped
    /// into `[0, 1]`; non-finite samples are rejected.
    pub fn new(width: usize, height: usize, channels: usize, mut data: Vec<f32>) -> Result<Self> {
        check_shape(width, height, channels)?;
        if data.len() != width * height * channels {
            return Err(invalid(format!(
                "{width}x{height}x{channels} image needs {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("image contains non-finite samples"));
        }
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn from_u8(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, channels, bytes.iter().map(|&b| f32::from(b) / 255.0).collect())
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

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Quantizes to 8 bits, rounding half away from zero.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_u8_sample(v)).collect()
    }

    /// The image as it survives an 8-bit round trip.
    pub fn quantized_8bit(&self) -> Self {
        let data = self.data.iter().map(|&v| f32::from(to_u8_sample(v)) / 255.0).collect();
        Self { data, ..*self }
    }

    pub fn from_dynamic(img: DynamicImage) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img.color().channel_count() {
            1 | 2 => Self::from_u8(w, h, 1, img.to_luma8().as_raw()),
            _ => Self::from_u8(w, h, 3, img.to_rgb8().as_raw()),
        }
    }

    /// Loads any 8-bit image the `image` crate can read (alpha is dropped).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = ::image::ImageReader::open(path)?.with_guessed_format()?.decode()?;
        Self::from_dynamic(img)
    }

    pub fn load_from_memory(bytes: &[u8]) -> Result<Self> {
        Self::from_dynamic(::image::load_from_memory(bytes)?)
    }

    fn to_dynamic(&self) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        let raw = self.to_u8();
        if self.channels == 1 {
            DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, raw).expect("sized buffer"))
        } else {
            DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, raw).expect("sized buffer"))
        }
    }

    /// Saves with the format implied by the file extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_dynamic().save(path)?;
        Ok(())
    }

    pub fn save_with_format(&self, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
        self.to_dynamic().save_with_format(path, format)?;
        Ok(())
    }

    /// Binary PGM (one channel) or PPM (three channels).
    pub fn save_pnm(&self, path: impl AsRef<Path>) -> Result<()> {
        let subtype = if self.channels == 1 {
            PnmSubtype::Graymap(SampleEncoding::Binary)
        } else {
            PnmSubtype::Pixmap(SampleEncoding::Binary)
        };
        let color = if self.channels == 1 { ExtendedColorType::L8 } else { ExtendedColorType::Rgb8 };
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        PnmEncoder::new(file).with_subtype(subtype).write_image(
            &self.to_u8(),
            self.width as u32,
            self.height as u32,
            color,
        )?;
        Ok(())
    }

    pub(crate) fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(invalid(format!("shape mismatch: {:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(())
    }
}

pub(crate) fn check_shape(width: usize, height: usize, channels: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(invalid("image dimensions must be at least 1x1"));
    }
    if channels != 1 && channels != 3 {
        return Err(invalid(format!("images have 1 or 3 channels, got {channels}")));
    }
    Ok(())
}

pub(crate) fn to_u8_sample(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
