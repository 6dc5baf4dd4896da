//! Straight-line layer lists and the NNWF weight file.
//!
//! ```text
//! "NNWF" | version u8 = 1 | layer_count u16
//! per layer: kind u8 | header | f32 blobs
//!   0 FULLY_CONNECTED  in u32, out u32                  | weights[out][in], bias[out]
//!   1 RESHAPE          h u16, w u16, c u16              |
//!   2 TRANSPOSED_CONV  kernel_h, kernel_w, in_ch, out_ch,
//!                      stride, pad, output_pad (u16)    | weights[in][out][kh][kw], bias[out]
//!   3 BATCH_NORM       channels u16, epsilon f32        | gamma, beta, mean, var [channels]
//!   4 RELU             -
//!   5 TANH             -
//! ```
//!
//! Everything is little-endian. The model input is a feature vector of
//! length `input_dim`, seen by the first layer as a `(1, 1, input_dim)`
//! tensor.

use super::ops::{self, Shape, Tensor, TransposedConv};
use crate::error::{invalid, Error, Result};
use crate::feature::FeatureVector;
use crate::image::{check_shape, Image};

const MAGIC: &[u8; 4] = b"NNWF";
const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum LayerKind {
    FullyConnected = 0,
    Reshape = 1,
    TransposedConv = 2,
    BatchNorm = 3,
    Relu = 4,
    Tanh = 5,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    FullyConnected {
        inputs: usize,
        outputs: usize,
        /// `[outputs][inputs]`
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
    Reshape(Shape),
    TransposedConv(TransposedConv),
    BatchNorm {
        gamma: Vec<f32>,
        beta: Vec<f32>,
        mean: Vec<f32>,
        var: Vec<f32>,
        epsilon: f32,
    },
    Relu,
    Tanh,
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            Self::FullyConnected { .. } => LayerKind::FullyConnected,
            Self::Reshape(_) => LayerKind::Reshape,
            Self::TransposedConv(_) => LayerKind::TransposedConv,
            Self::BatchNorm { .. } => LayerKind::BatchNorm,
            Self::Relu => LayerKind::Relu,
            Self::Tanh => LayerKind::Tanh,
        }
    }

    fn blobs(&self) -> Vec<&[f32]> {
        match self {
            Self::FullyConnected { weights, bias, .. } => vec![weights, bias],
            Self::TransposedConv(t) => vec![&t.weights, &t.bias],
            Self::BatchNorm { gamma, beta, mean, var, .. } => vec![gamma, beta, mean, var],
            _ => vec![],
        }
    }

    /// Length of the flat input this layer accepts when it comes first.
    fn leading_input_dim(&self) -> Option<usize> {
        match self {
            Self::FullyConnected { inputs, .. } => Some(*inputs),
            Self::Reshape(s) => Some(s.len()),
            Self::TransposedConv(t) => Some(t.in_ch),
            Self::BatchNorm { gamma, .. } => Some(gamma.len()),
            Self::Relu | Self::Tanh => None,
        }
    }
}

/// Execution step after load-time folding.
#[derive(Debug, Clone)]
enum Stage {
    Layer(usize),
    ScaleShift { scale: Vec<f32>, shift: Vec<f32> },
}

/// Validated, immutable reconstruction network.
#[derive(Debug, Clone)]
pub struct ReconModel {
    layers: Vec<LayerSpec>,
    stages: Vec<Stage>,
    /// `shapes[0]` is the input shape; `shapes[i + 1]` is layer `i`'s output.
    shapes: Vec<Shape>,
}

impl ReconModel {
    /// Checks the shape chain, blob sizes and values, folds batch norms.
    pub fn from_layers(layers: Vec<LayerSpec>) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::MalformedModel("model has no layers".into()))?;
        let input_dim = first
            .leading_input_dim()
            .ok_or_else(|| Error::MalformedModel("first layer must fix the input dimension".into()))?;
        if input_dim == 0 {
            return Err(Error::MalformedModel("input dimension is zero".into()));
        }
        let mut shape = Shape::new(1, 1, input_dim);
        let mut shapes = vec![shape];
        let mut stages = Vec::with_capacity(layers.len());

        for (idx, layer) in layers.iter().enumerate() {
            if layer.blobs().iter().any(|b| b.iter().any(|v| !v.is_finite())) {
                return Err(Error::MalformedModel(format!("layer {idx} has non-finite weights")));
            }
            let mismatch =
                |what: String| Error::MalformedModel(format!("layer {idx} ({:?}): {what}", layer.kind()));
            let mut stage = Stage::Layer(idx);
            shape = match layer {
                LayerSpec::FullyConnected { inputs, outputs, weights, bias } => {
                    if shape.len() != *inputs {
                        return Err(mismatch(format!("expects {inputs} inputs, got {}", shape.len())));
                    }
                    if weights.len() != inputs * outputs || bias.len() != *outputs || *outputs == 0 {
                        return Err(mismatch("blob sizes do not match header".into()));
                    }
                    Shape::new(1, 1, *outputs)
                }
                LayerSpec::Reshape(target) => {
                    if target.len() != shape.len() || target.is_empty() {
                        return Err(mismatch(format!("cannot reshape {shape:?} to {target:?}")));
                    }
                    *target
                }
                LayerSpec::TransposedConv(t) => {
                    if t.weights.len() != t.weight_len() || t.bias.len() != t.out_ch {
                        return Err(mismatch("blob sizes do not match header".into()));
                    }
                    t.output_shape(shape)?
                }
                LayerSpec::BatchNorm { gamma, beta, mean, var, epsilon } => {
                    if gamma.len() != shape.c {
                        return Err(mismatch(format!(
                            "{} channels declared, input has {}",
                            gamma.len(),
                            shape.c
                        )));
                    }
                    if !epsilon.is_finite() {
                        return Err(mismatch("epsilon is not finite".into()));
                    }
                    let (scale, shift) = ops::fold_batchnorm(gamma, beta, mean, var, *epsilon)?;
                    stage = Stage::ScaleShift { scale, shift };
                    shape
                }
                LayerSpec::Relu | LayerSpec::Tanh => shape,
            };
            shapes.push(shape);
            stages.push(stage);
        }

        if layers.last().map(LayerSpec::kind) != Some(LayerKind::Tanh) {
            return Err(Error::MalformedModel("final layer must be TANH".into()));
        }
        check_shape(shape.w, shape.h, shape.c)
            .map_err(|e| Error::MalformedModel(format!("output shape {shape:?}: {e}")))?;

        Ok(Self { layers, stages, shapes })
    }

    pub fn input_dim(&self) -> usize {
        self.shapes[0].c
    }

    /// `(height, width, channels)` of the produced image.
    pub fn output_shape(&self) -> (usize, usize, usize) {
        let s = self.shapes[self.shapes.len() - 1];
        (s.h, s.w, s.c)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Statically chained tensor shapes, input first.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    /// Runs the network and maps the Tanh output `t` to pixels `(t + 1) / 2`.
    pub fn forward(&self, v: &FeatureVector) -> Result<Image> {
        if v.len() != self.input_dim() {
            return Err(invalid(format!("model expects a {}-d feature, got {}", self.input_dim(), v.len())));
        }
        let mut t = Tensor::new(self.shapes[0], v.to_f32())?;
        for (i, stage) in self.stages.iter().enumerate() {
            t = match stage {
                Stage::ScaleShift { scale, shift } => {
                    ops::scale_shift(&mut t, scale, shift);
                    t
                }
                Stage::Layer(idx) => match &self.layers[*idx] {
                    LayerSpec::FullyConnected { outputs, weights, bias, .. } => {
                        ops::fully_connected(&t, *outputs, weights, bias)?
                    }
                    LayerSpec::Reshape(target) => Tensor::new(*target, t.data)?,
                    LayerSpec::TransposedConv(layer) => ops::transposed_conv(&t, layer)?,
                    LayerSpec::Relu => {
                        ops::relu(&mut t);
                        t
                    }
                    LayerSpec::Tanh => {
                        ops::tanh(&mut t);
                        t
                    }
                    LayerSpec::BatchNorm { .. } => unreachable!("batch norm is folded at load"),
                },
            };
            debug_assert_eq!(t.shape, self.shapes[i + 1]);
        }
        let (h, w, c) = self.output_shape();
        Image::new(w, h, c, t.data.into_iter().map(|x| (x + 1.0) * 0.5).collect())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::NotAModel);
        }
        r.pos = 4;
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::MalformedModel(format!("unknown NNWF version {version}")));
        }
        let count = r.u16()? as usize;
        let mut layers = Vec::with_capacity(count);
        for idx in 0..count {
            let kind = r.u8()?;
            let layer = match kind {
                0 => {
                    let inputs = r.u32()? as usize;
                    let outputs = r.u32()? as usize;
                    LayerSpec::FullyConnected {
                        inputs,
                        outputs,
                        weights: r.blob(inputs * outputs)?,
                        bias: r.blob(outputs)?,
                    }
                }
                1 => {
                    let h = r.u16()? as usize;
                    let w = r.u16()? as usize;
                    let c = r.u16()? as usize;
                    LayerSpec::Reshape(Shape::new(h, w, c))
                }
                2 => {
                    let mut f = [0usize; 7];
                    for v in f.iter_mut() {
                        *v = r.u16()? as usize;
                    }
                    let [kernel_h, kernel_w, in_ch, out_ch, stride, pad, output_pad] = f;
                    let n = in_ch * out_ch * kernel_h * kernel_w;
                    LayerSpec::TransposedConv(TransposedConv {
                        kernel_h,
                        kernel_w,
                        in_ch,
                        out_ch,
                        stride,
                        pad,
                        output_pad,
                        weights: r.blob(n)?,
                        bias: r.blob(out_ch)?,
                    })
                }
                3 => {
                    let channels = r.u16()? as usize;
                    let epsilon = r.f32()?;
                    LayerSpec::BatchNorm {
                        gamma: r.blob(channels)?,
                        beta: r.blob(channels)?,
                        mean: r.blob(channels)?,
                        var: r.blob(channels)?,
                        epsilon,
                    }
                }
                4 => LayerSpec::Relu,
                5 => LayerSpec::Tanh,
                other => return Err(Error::MalformedModel(format!("layer {idx}: unknown kind {other}"))),
            };
            layers.push(layer);
        }
        if r.pos != bytes.len() {
            return Err(Error::MalformedModel(format!(
                "{} trailing bytes after last layer",
                bytes.len() - r.pos
            )));
        }
        Self::from_layers(layers)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        write_layers(&self.layers)
    }
}

/// Serializes a layer list without validating it (fixtures for error tests
/// need to write broken models).
pub fn write_layers(layers: &[LayerSpec]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(layers.len() as u16).to_le_bytes());
    for layer in layers {
        out.push(layer.kind() as u8);
        match layer {
            LayerSpec::FullyConnected { inputs, outputs, .. } => {
                out.extend_from_slice(&(*inputs as u32).to_le_bytes());
                out.extend_from_slice(&(*outputs as u32).to_le_bytes());
            }
            LayerSpec::Reshape(s) => {
                for v in [s.h, s.w, s.c] {
                    out.extend_from_slice(&(v as u16).to_le_bytes());
                }
            }
            LayerSpec::TransposedConv(t) => {
                for v in [t.kernel_h, t.kernel_w, t.in_ch, t.out_ch, t.stride, t.pad, t.output_pad] {
                    out.extend_from_slice(&(v as u16).to_le_bytes());
                }
            }
            LayerSpec::BatchNorm { gamma, epsilon, .. } => {
                out.extend_from_slice(&(gamma.len() as u16).to_le_bytes());
                out.extend_from_slice(&epsilon.to_le_bytes());
            }
            LayerSpec::Relu | LayerSpec::Tanh => {}
        }
        for blob in layer.blobs() {
            for v in blob {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn load_model(bytes: &[u8]) -> Result<ReconModel> {
    ReconModel::from_bytes(bytes)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::TruncatedFile)?;
        let s = self.buf.get(self.pos..end).ok_or(Error::TruncatedFile)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn blob(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or(Error::TruncatedFile)?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> Vec<LayerSpec> {
        vec![
            LayerSpec::FullyConnected {
                inputs: 128,
                outputs: 48,
                weights: (0..128 * 48).map(|i| ((i % 7) as f32 - 3.0) * 0.01).collect(),
                bias: vec![0.0; 48],
            },
            LayerSpec::Reshape(Shape::new(4, 4, 3)),
            LayerSpec::Tanh,
        ]
    }

    #[test]
    fn minimal_file_loads() {
        let bytes = write_layers(&minimal());
        let m = load_model(&bytes).unwrap();
        assert_eq!(m.layers().len(), 3);
        assert_eq!(m.input_dim(), 128);
        assert_eq!(m.output_shape(), (4, 4, 3));
        assert_eq!(m.to_bytes(), bytes);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = write_layers(&minimal());
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(load_model(&bytes), Err(Error::NotAModel)));
        assert!(matches!(load_model(b"NN"), Err(Error::NotAModel)));
    }

    #[test]
    fn short_blob() {
        let bytes = write_layers(&minimal());
        assert!(matches!(load_model(&bytes[..bytes.len() - 4]), Err(Error::TruncatedFile)));
    }

    #[test]
    fn shape_chain_mismatch() {
        let mut layers = minimal();
        layers[1] = LayerSpec::Reshape(Shape::new(4, 4, 2));
        assert!(matches!(load_model(&write_layers(&layers)), Err(Error::MalformedModel(_))));
    }

    #[test]
    fn must_end_in_tanh_with_image_channels() {
        let mut layers = minimal();
        layers[2] = LayerSpec::Relu;
        assert!(matches!(ReconModel::from_layers(layers), Err(Error::MalformedModel(_))));

        let mut layers = minimal();
        layers[1] = LayerSpec::Reshape(Shape::new(4, 6, 2));
        assert!(matches!(ReconModel::from_layers(layers), Err(Error::MalformedModel(_))));
    }

    #[test]
    fn invalid_batchnorm_rejected_at_load() {
        let mut layers = minimal();
        layers.insert(
            2,
            LayerSpec::BatchNorm {
                gamma: vec![1.0; 3],
                beta: vec![0.0; 3],
                mean: vec![0.0; 3],
                var: vec![1.0, -1.0, 1.0],
                epsilon: 0.5,
            },
        );
        assert!(matches!(load_model(&write_layers(&layers)), Err(Error::MalformedModel(_))));
    }

    #[test]
    fn non_finite_weight_rejected() {
        let mut layers = minimal();
        if let LayerSpec::FullyConnected { bias, .. } = &mut layers[0] {
            bias[3] = f32::NAN;
        }
        assert!(matches!(ReconModel::from_layers(layers), Err(Error::MalformedModel(_))));
    }

    #[test]
    fn trailing_bytes_and_unknown_kind() {
        let mut bytes = write_layers(&minimal());
        bytes.push(0);
        assert!(matches!(load_model(&bytes), Err(Error::MalformedModel(_))));
        let mut bytes = write_layers(&[LayerSpec::Tanh]);
        bytes[7] = 42;
        assert!(matches!(load_model(&bytes), Err(Error::MalformedModel(_))));
    }

    #[test]
    fn zero_network_gives_mid_grey() {
        let mut layers = minimal();
        if let LayerSpec::FullyConnected { weights, .. } = &mut layers[0] {
            weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let m = ReconModel::from_layers(layers).unwrap();
        let v = FeatureVector::new((0..128).map(|i| i as f64 / 128.0).collect()).unwrap();
        let img = m.forward(&v).unwrap();
        assert_eq!(img.shape(), (4, 4, 3));
        assert!(img.data().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn two_layer_hand_computed() {
        // FC 2 -> 1, then TANH: pixel = (tanh(w·v + b) + 1) / 2
        let layers = vec![
            LayerSpec::FullyConnected { inputs: 2, outputs: 1, weights: vec![0.5, -0.25], bias: vec![0.1] },
            LayerSpec::Tanh,
        ];
        let m = ReconModel::from_layers(layers).unwrap();
        let img = m.forward(&FeatureVector::new(vec![1.0, 2.0]).unwrap()).unwrap();
        // 0.5 - 0.5 + 0.1 = 0.1; tanh(0.1) = 0.0996679946...
        let want = (0.099_667_99_f32 + 1.0) / 2.0;
        assert!((img.data()[0] - want).abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch_is_invalid_input() {
        let m = ReconModel::from_layers(minimal()).unwrap();
        let v = FeatureVector::new(vec![0.0; 127]).unwrap();
        assert!(matches!(m.forward(&v), Err(Error::InvalidInput(_))));
    }
}
