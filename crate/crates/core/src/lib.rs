//! Scalable face-image codec.
//!
//! A stream carries two layers:
//!
//! * a **base layer**: a 128-d face embedding, uniformly quantized and
//!   range coded ([`feature`], [`entropy`]). It is enough for
//!   verification and, through a stored deconvolutional network
//!   ([`recon`]), for a coarse reconstruction of the face;
//! * an optional **enhancement layer**: the min-max normalized residual
//!   between the input image and that coarse reconstruction, coded with an
//!   internal 8×8 DCT coder or handed off to an external codec
//!   ([`enhancement`]).
//!
//! [`container`] defines the `.sftc` byte layout and the three decode modes;
//! [`metrics`] and [`eval`] hold the rate-distortion / rate-accuracy harness.

pub mod container;
pub mod dct;
pub mod enhancement;
pub mod entropy;
pub mod error;
pub mod eval;
pub mod feature;
pub mod image;
pub mod metrics;
pub mod par;
pub mod recon;

pub use crate::container::{
    decode_base_only, decode_coarse, decode_full, encode, extract_base, read_stream, write_stream,
    EncodeConfig, Enhancement, EnhancementBlock, EnhancementCodec, ScalableStream, StreamHeader,
};
pub use crate::enhancement::{ExternalCodec, NormalizedTexture, ResidualPlane};
pub use crate::error::{Error, Result};
pub use crate::feature::{FeatureVector, QuantizedFeature};
pub use crate::image::Image;
pub use crate::recon::{LayerSpec, ReconModel};
