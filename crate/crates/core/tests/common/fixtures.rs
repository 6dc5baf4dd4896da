//! Deterministic fixtures: a small reconstruction network, synthetic faces
//! and unit-norm features. `examples/make_fixtures.rs` writes them to
//! `tests/assets`; `tests/fixtures.rs` checks the checked-in copies still
//! match this generator.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sftc::recon::{write_layers, LayerSpec, Shape, TransposedConv};
use sftc::{FeatureVector, Image};

pub const SIDE: usize = 32;
pub const CHANNELS: usize = 3;
pub const FEATURE_DIM: usize = 128;
pub const IMAGE_COUNT: usize = 10;

const MODEL_SEED: u64 = 0x5f7c_0001;
const FACE_SEED: u64 = 0x5f7c_1000;
const FEATURE_SEED: u64 = 0x5f7c_2000;

pub fn assets_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("assets")
}

pub fn item_name(index: usize) -> String {
    format!("face_{index:02}")
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-scale..=scale)).collect()
}

fn batch_norm(rng: &mut ChaCha8Rng, channels: usize) -> LayerSpec {
    LayerSpec::BatchNorm {
        gamma: (0..channels).map(|_| rng.gen_range(0.8..1.2)).collect(),
        beta: uniform(rng, channels, 0.1),
        mean: uniform(rng, channels, 0.05),
        var: (0..channels).map(|_| rng.gen_range(0.5..1.5)).collect(),
        epsilon: 1e-5,
    }
}

fn upsample(rng: &mut ChaCha8Rng, in_ch: usize, out_ch: usize) -> LayerSpec {
    // k4 s2 p1 doubles the spatial size
    let fan_in = in_ch * 4;
    let scale = (3.0 / fan_in as f32).sqrt();
    LayerSpec::TransposedConv(TransposedConv {
        kernel_h: 4,
        kernel_w: 4,
        in_ch,
        out_ch,
        stride: 2,
        pad: 1,
        output_pad: 0,
        weights: uniform(rng, in_ch * out_ch * 16, scale),
        bias: uniform(rng, out_ch, 0.05),
    })
}

/// FC 128 → 4×4×32, then three k4/s2 upsampling blocks to 32×32×3 and Tanh.
pub fn model_layers() -> Vec<LayerSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(MODEL_SEED);
    let seed_shape = Shape::new(4, 4, 32);
    let mut layers = vec![
        LayerSpec::FullyConnected {
            inputs: FEATURE_DIM,
            outputs: seed_shape.len(),
            weights: uniform(&mut rng, FEATURE_DIM * seed_shape.len(), 3.0f32.sqrt()),
            bias: uniform(&mut rng, seed_shape.len(), 0.1),
        },
        LayerSpec::Reshape(seed_shape),
        batch_norm(&mut rng, 32),
        LayerSpec::Relu,
    ];
    for (i, o) in [(32, 16), (16, 8)] {
        layers.push(upsample(&mut rng, i, o));
        layers.push(batch_norm(&mut rng, o));
        layers.push(LayerSpec::Relu);
    }
    layers.push(upsample(&mut rng, 8, CHANNELS));
    layers.push(LayerSpec::Tanh);
    layers
}

pub fn model_bytes() -> Vec<u8> {
    write_layers(&model_layers())
}

fn ellipse(x: f32, y: f32, cx: f32, cy: f32, rx: f32, ry: f32) -> bool {
    let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
    dx * dx + dy * dy <= 1.0
}

/// Cartoon face: background gradient, hair, skin oval, eyes, nose, mouth,
/// plus mild sensor noise. Already on the 8-bit grid.
pub fn face(index: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(FACE_SEED + index as u64);
    let bg_top: [f32; 3] = [rng.gen_range(0.2..0.9), rng.gen_range(0.2..0.9), rng.gen_range(0.2..0.9)];
    let bg_bottom: [f32; 3] = [rng.gen_range(0.1..0.7), rng.gen_range(0.1..0.7), rng.gen_range(0.1..0.7)];
    let tone = rng.gen_range(0.35f32..0.95);
    let skin = [tone, tone * rng.gen_range(0.7..0.85), tone * rng.gen_range(0.55..0.7)];
    let hair_level = rng.gen_range(0.05f32..0.5);
    let hair = [hair_level, hair_level * 0.8, hair_level * 0.6];
    let cx = 16.0 + rng.gen_range(-1.5f32..1.5);
    let cy = 17.0 + rng.gen_range(-1.0f32..1.0);
    let (rx, ry) = (rng.gen_range(9.0f32..11.0), rng.gen_range(11.0f32..13.0));
    let eye_dx = rng.gen_range(3.5f32..5.0);
    let eye_y = cy - rng.gen_range(2.0f32..3.5);
    let mouth_y = cy + rng.gen_range(5.0f32..7.0);
    let mouth_w = rng.gen_range(3.0f32..5.0);

    let mut data = Vec::with_capacity(SIDE * SIDE * CHANNELS);
    for y in 0..SIDE {
        for x in 0..SIDE {
            let (fx, fy) = (x as f32 + 0.5, y as f32 + 0.5);
            let t = fy / SIDE as f32;
            let mut px: [f32; 3] = std::array::from_fn(|c| bg_top[c] * (1.0 - t) + bg_bottom[c] * t);
            if ellipse(fx, fy, cx, cy - 3.0, rx + 1.5, ry) && fy < cy {
                px = hair;
            }
            if ellipse(fx, fy, cx, cy + 1.0, rx, ry - 1.0) {
                // soft shading towards the cheeks
                let shade = 1.0 - 0.15 * ((fx - cx) / rx).powi(2);
                px = skin.map(|s| s * shade);
                if ellipse(fx, fy, cx - eye_dx, eye_y, 1.8, 1.1)
                    || ellipse(fx, fy, cx + eye_dx, eye_y, 1.8, 1.1)
                {
                    px = [0.08, 0.06, 0.05];
                }
                if ellipse(fx, fy, cx, cy + 1.5, 1.0, 2.5) {
                    px = px.map(|v| v * 0.85);
                }
                if ellipse(fx, fy, cx, mouth_y, mouth_w, 0.9) {
                    px = [0.55, 0.15, 0.15];
                }
            }
            for v in px {
                let noisy = v + rng.gen_range(-0.02f32..0.02);
                data.push((noisy.clamp(0.0, 1.0) * 255.0).round() / 255.0);
            }
        }
    }
    Image::new(SIDE, SIDE, CHANNELS, data).expect("fixture face is well formed")
}

/// Uniform direction on the unit sphere (Gaussian components, normalized).
pub fn feature(index: usize) -> FeatureVector {
    let mut rng = ChaCha8Rng::seed_from_u64(FEATURE_SEED + index as u64);
    let g: Vec<f64> = (0..FEATURE_DIM)
        .map(|_| {
            // Box-Muller
            let (u1, u2): (f64, f64) = (rng.gen_range(f64::EPSILON..1.0), rng.gen());
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    // round through f32 so the FVEC file holds exactly this vector
    let unit: Vec<f32> = g.iter().map(|v| (v / norm) as f32).collect();
    FeatureVector::from_f32(&unit).expect("finite feature")
}

pub fn load_model() -> sftc::ReconModel {
    let bytes = std::fs::read(assets_dir().join("model.nnwf")).expect("fixture model is checked in");
    sftc::recon::load_model(&bytes).expect("fixture model loads")
}

pub fn load_image(index: usize) -> Image {
    Image::load(assets_dir().join(format!("{}.png", item_name(index)))).expect("fixture image")
}

pub fn load_feature(index: usize) -> FeatureVector {
    let bytes =
        std::fs::read(assets_dir().join(format!("{}.fvec", item_name(index)))).expect("fixture feature");
    FeatureVector::from_fvec_bytes(&bytes).expect("fixture feature parses")
}

/// Pairs of fixture features for verification checks: `(a, b, same)`.
/// "Same" pairs are a feature and a small perturbation of it.
pub fn pairs_csv() -> String {
    let mut out = String::from("path_a,path_b,same\n");
    for i in 0..IMAGE_COUNT {
        out.push_str(&format!("{0}.fvec,{0}_alt.fvec,1\n", item_name(i)));
        out.push_str(&format!("{}.fvec,{}.fvec,0\n", item_name(i), item_name((i + 1) % IMAGE_COUNT)));
    }
    out
}

/// A nearby feature standing in for another photo of the same person.
pub fn alternate_feature(index: usize) -> FeatureVector {
    let base = feature(index);
    let mut rng = ChaCha8Rng::seed_from_u64(FEATURE_SEED + 0x100 + index as u64);
    let moved: Vec<f64> = base.values().iter().map(|v| v + rng.gen_range(-0.03..0.03)).collect();
    let norm = moved.iter().map(|v| v * v).sum::<f64>().sqrt();
    let unit: Vec<f32> = moved.iter().map(|v| (v / norm) as f32).collect();
    FeatureVector::from_f32(&unit).expect("finite feature")
}
