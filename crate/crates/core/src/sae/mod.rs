//! Selectional auto-encoders.
//!
//! A model maps a `w×w` gray window to a `w×w` map of foreground confidences
//! in `(0, 1)`. Pages are cut into disjoint windows, each window is parsed on
//! its own, and the confidences are thresholded and stitched back.

mod checkpoint;
mod topology;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
    HEADER_LEN,
};
pub use topology::{Kind, TopologySpec};

use crate::error::{Error, Result};
use crate::imagery::{split_into_windows, stitch_windows, BinaryMask, GrayImage, Raster};
use crate::tensor::{Graph, Padding, Real, Tensor, Var};

/// Window-sized map of sigmoid activations.
pub type ActivationMap = Raster<f32>;

pub const DEFAULT_TAU: f32 = 0.5;

/// Windows per forward pass during inference.
const INFERENCE_BATCH: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor<f32>,
}

/// A topology together with its learned parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: TopologySpec,
    params: Vec<Param>,
}

impl Model {
    /// Fresh model: weights drawn uniformly in `±sqrt(6 / fan_in)` from a
    /// ChaCha stream seeded with `seed`, biases zero.
    pub fn build(spec: TopologySpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = spec
            .parameter_layout()
            .into_iter()
            .map(|(name, shape)| {
                let tensor = if shape.len() == 1 {
                    Tensor::zeros(shape)
                } else {
                    let limit = (6.0 / fan_in(&name, &shape, &spec) as f64).sqrt() as f32;
                    Tensor::from_fn(shape, |_| rng.gen_range(-limit..=limit))
                };
                Param { name, tensor }
            })
            .collect();
        Ok(Model { spec, params })
    }

    /// Model with every parameter zero; emits 0.5 everywhere.
    pub fn zeros(spec: TopologySpec) -> Result<Self> {
        spec.validate()?;
        let params = spec
            .parameter_layout()
            .into_iter()
            .map(|(name, shape)| Param {
                name,
                tensor: Tensor::zeros(shape),
            })
            .collect();
        Ok(Model { spec, params })
    }

    pub(crate) fn from_parts(spec: TopologySpec, tensors: Vec<Tensor<f32>>) -> Result<Self> {
        let layout = spec.parameter_layout();
        if layout.len() != tensors.len() {
            return Err(Error::shape("parameter count does not match topology"));
        }
        let params = layout
            .into_iter()
            .zip(tensors)
            .map(|((name, shape), tensor)| {
                if tensor.shape() != shape.as_slice() {
                    return Err(Error::shape(format!(
                        "{name}: expected shape {shape:?}, got {:?}",
                        tensor.shape()
                    )));
                }
                Ok(Param { name, tensor })
            })
            .collect::<Result<_>>()?;
        Ok(Model { spec, params })
    }

    pub fn spec(&self) -> &TopologySpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn window_side(&self) -> usize {
        self.spec.window_side
    }

    /// Records the parameters on `g`, as trainable leaves or as constants.
    pub fn bind<T: Real>(&self, g: &mut Graph<T>, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                let t = p.tensor.cast::<T>();
                if trainable {
                    g.param(t)
                } else {
                    g.input(t)
                }
            })
            .collect()
    }

    /// Records the network on `g` for input `x` `[batch, 1, w, w]` and returns
    /// the sigmoid output of the same shape.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, params: &[Var], x: Var) -> Result<Var> {
        let (_, channels, rows, cols) = g.value(x).dims4()?;
        let side = self.spec.window_side;
        if channels != 1 || rows != side || cols != side {
            return Err(Error::DimensionMismatch {
                expected: (side, side),
                found: (cols, rows),
            });
        }
        if params.len() != self.params.len() {
            return Err(Error::shape("parameter binding does not match model"));
        }
        let d = self.spec.depth;
        let enc = |i: usize| (params[2 * i], params[2 * i + 1]);
        let dec = |i: usize| (params[2 * d + 2 * i], params[2 * d + 2 * i + 1]);
        let (out_w, out_b) = (params[4 * d], params[4 * d + 1]);

        let mut h = x;
        match self.spec.kind {
            Kind::Cae => {
                for i in 0..d {
                    let (w, b) = enc(i);
                    let c = g.conv2d(h, w, b, 1, Padding::Same)?;
                    let r = g.relu(c);
                    h = g.maxpool2(r)?.0;
                }
                for i in 0..d {
                    let (w, b) = dec(i);
                    let c = g.conv2d(h, w, b, 1, Padding::Same)?;
                    let r = g.relu(c);
                    h = g.upsample2(r)?;
                }
            }
            Kind::Swwae => {
                let mut switches = Vec::with_capacity(d);
                for i in 0..d {
                    let (w, b) = enc(i);
                    let c = g.conv2d(h, w, b, 1, Padding::Same)?;
                    let r = g.relu(c);
                    let (p, sw) = g.maxpool2(r)?;
                    switches.push(sw);
                    h = p;
                }
                for i in 0..d {
                    let sw = &switches[d - 1 - i];
                    let u = g.unpool2(h, sw)?;
                    let (w, b) = dec(i);
                    let c = g.deconv2d(u, w, b, 1)?;
                    h = g.relu(c);
                }
            }
            Kind::RedNet => {
                let mut skips = Vec::with_capacity(d);
                for i in 0..d {
                    let (w, b) = enc(i);
                    let c = g.conv2d(h, w, b, 2, Padding::Same)?;
                    h = g.relu(c);
                    skips.push(h);
                }
                for i in 0..d {
                    let (w, b) = dec(i);
                    let mut c = g.deconv2d(h, w, b, 2)?;
                    // Mirror of encoder stage d-1-i is the output of stage d-2-i.
                    if i + 1 < d {
                        c = g.add(c, skips[d - 2 - i])?;
                    }
                    h = g.relu(c);
                }
            }
        }
        let logits = g.conv2d(h, out_w, out_b, 1, Padding::Same)?;
        Ok(g.sigmoid(logits))
    }

    /// Activations for a batch of windows, each `w·w` values in `[0, 1]`.
    pub fn forward_batch(&self, windows: &[&[f32]]) -> Result<Vec<f32>> {
        let side = self.spec.window_side;
        let plane = side * side;
        let mut data = Vec::with_capacity(windows.len() * plane);
        for w in windows {
            if w.len() != plane {
                return Err(Error::shape(format!("window has {} pixels, expected {plane}", w.len())));
            }
            data.extend_from_slice(w);
        }
        let mut g = Graph::<f32>::new();
        let params = self.bind(&mut g, false);
        let x = g.input(Tensor::new([windows.len(), 1, side, side], data)?);
        let y = self.forward(&mut g, &params, x)?;
        Ok(g.value(y).values().to_vec())
    }

    /// Selectional map of one window.
    pub fn forward_window(&self, window: &GrayImage) -> Result<ActivationMap> {
        let side = self.spec.window_side;
        if window.dims() != (side, side) {
            return Err(Error::DimensionMismatch {
                expected: (side, side),
                found: window.dims(),
            });
        }
        let out = self.forward_batch(&[window.as_slice()])?;
        Raster::from_vec(side, side, out)
    }

    /// Activations of every window of `img` (see [`split_into_windows`]).
    pub fn window_activations(&self, windows: &[GrayImage]) -> Result<Vec<ActivationMap>> {
        let side = self.spec.window_side;
        let chunks: Vec<Vec<ActivationMap>> = windows
            .par_chunks(INFERENCE_BATCH)
            .map(|chunk| {
                let slices: Vec<&[f32]> = chunk.iter().map(|w| w.as_slice()).collect();
                let out = self.forward_batch(&slices)?;
                out.chunks_exact(side * side)
                    .map(|a| Raster::from_vec(side, side, a.to_vec()))
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }

    /// Page-sized activation map.
    pub fn activation_map(&self, img: &GrayImage) -> Result<Raster<f32>> {
        let (grid, windows) = split_into_windows(img, self.spec.window_side)?;
        let acts = self.window_activations(&windows)?;
        stitch_windows(&grid, &acts, img.width(), img.height())
    }
}

fn fan_in(name: &str, shape: &[usize], spec: &TopologySpec) -> usize {
    let taps = shape[2] * shape[3];
    // Decoder transposed convolutions read k²/stride² taps per output pixel.
    if name.starts_with("dec") && spec.kind.deconv_decoder() {
        let stride = if spec.kind == Kind::RedNet { 2 } else { 1 };
        (shape[0] * taps / (stride * stride)).max(1)
    } else {
        shape[1] * taps
    }
}

fn check_tau(tau: f32) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("threshold {tau} outside [0, 1]")));
    }
    Ok(())
}

/// Foreground where the activation strictly exceeds `tau`.
pub fn binarize_activations(a: &Raster<f32>, tau: f32) -> Result<BinaryMask> {
    check_tau(tau)?;
    Ok(a.map(|&v| v > tau))
}

/// Split, parse each window, threshold, stitch.
pub fn binarize_document(model: &Model, img: &GrayImage, tau: f32) -> Result<BinaryMask> {
    check_tau(tau)?;
    binarize_activations(&model.activation_map(img)?, tau)
}
