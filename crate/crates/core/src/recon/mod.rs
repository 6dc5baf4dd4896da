//! Feature-to-image reconstruction network (inference only).
//!
//! Blocks of transposed convolution, batch norm and ReLU upsample the
//! embedding into an image; the last activation is Tanh. The architecture is
//! whatever the NNWF file declares.

mod model;
pub mod ops;

pub use model::{load_model, write_layers, LayerKind, LayerSpec, ReconModel};
pub use ops::{fold_batchnorm, transposed_conv, Shape, Tensor, TransposedConv};

use crate::error::Result;
use crate::feature::FeatureVector;
use crate::image::Image;

pub fn forward(model: &ReconModel, v: &FeatureVector) -> Result<Image> {
    model.forward(v)
}
