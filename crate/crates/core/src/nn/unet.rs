//! U-Net assembly: configuration, parameter storage, forward and exact
//! reverse-mode backward.
//!
//! The network is a fixed tape of primitive ops derived from the config:
//! per contracting level two conv+ReLU+dropout blocks then max pooling;
//! a two-block bottleneck; per expanding level nearest-neighbor
//! upsampling, concatenation with the matching contracting output
//! (contracting channels first), and two conv blocks; finally a 1×1
//! convolution with linear activation. Feature counts double per level.

use super::layers::*;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use ndarray::{Array1, Array3, Array4};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub levels: usize,
    pub base_features: usize,
    pub dropout_rate: f64,
    pub image_size: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            in_channels: 24,
            out_channels: 4,
            levels: 3,
            base_features: 16,
            dropout_rate: 0.1,
            image_size: 64,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.base_features == 0 {
            return Err(Error::validation("channel counts must be positive"));
        }
        if self.levels == 0 {
            return Err(Error::validation("need at least one level"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::validation("dropout rate must be in [0, 1)"));
        }
        if self.image_size % (1 << self.levels) != 0 {
            return Err(Error::validation(format!(
                "image size {} not divisible by 2^{}",
                self.image_size, self.levels
            )));
        }
        Ok(())
    }

    /// (in, out) channels of every convolution in tape order.
    fn conv_channels(&self) -> Vec<(usize, usize)> {
        let base = self.base_features;
        let mut convs = Vec::new();
        for l in 0..self.levels {
            let feat = base << l;
            let inp = if l == 0 { self.in_channels } else { base << (l - 1) };
            convs.push((inp, feat));
            convs.push((feat, feat));
        }
        let bn = base << self.levels;
        convs.push(((base << (self.levels - 1)), bn));
        convs.push((bn, bn));
        for l in (0..self.levels).rev() {
            let feat = base << l;
            let up = base << (l + 1);
            convs.push((feat + up, feat));
            convs.push((feat, feat));
        }
        convs.push((base, self.out_channels));
        convs
    }

    /// Total learnable parameter count.
    pub fn parameter_count(&self) -> usize {
        let channels = self.conv_channels();
        let last = channels.len() - 1;
        channels
            .iter()
            .enumerate()
            .map(|(i, &(cin, cout))| {
                let k = if i == last { 1 } else { 3 };
                cout * (cin * k * k + 1)
            })
            .sum()
    }
}

/// One convolution's parameters (also reused for gradient and moment
/// arrays, which share the same shapes).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParam {
    pub kernels: Array4<f64>,
    pub bias: Array1<f64>,
}

impl ConvParam {
    pub fn zeros_like(other: &ConvParam) -> ConvParam {
        ConvParam {
            kernels: Array4::zeros(other.kernels.dim()),
            bias: Array1::zeros(other.bias.len()),
        }
    }
}

/// Per-parameter first/second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<ConvParam>,
    pub second_moment: Vec<ConvParam>,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UNetModel {
    pub config: UNetConfig,
    pub convs: Vec<ConvParam>,
    pub optimizer: OptimizerState,
}

/// Primitive ops in execution order.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Conv(usize),
    Act,
    SaveSkip(usize),
    Pool,
    Upsample,
    ConcatSkip(usize),
}

fn build_tape(levels: usize) -> Vec<Op> {
    let mut ops = Vec::new();
    let mut conv = 0;
    for l in 0..levels {
        ops.push(Op::Conv(conv));
        ops.push(Op::Act);
        ops.push(Op::Conv(conv + 1));
        ops.push(Op::Act);
        ops.push(Op::SaveSkip(l));
        ops.push(Op::Pool);
        conv += 2;
    }
    ops.push(Op::Conv(conv));
    ops.push(Op::Act);
    ops.push(Op::Conv(conv + 1));
    ops.push(Op::Act);
    conv += 2;
    for l in (0..levels).rev() {
        ops.push(Op::Upsample);
        ops.push(Op::ConcatSkip(l));
        ops.push(Op::Conv(conv));
        ops.push(Op::Act);
        ops.push(Op::Conv(conv + 1));
        ops.push(Op::Act);
        conv += 2;
    }
    ops.push(Op::Conv(conv));
    ops
}

/// Initialize a U-Net from the seeded stream: kernel weights are normal
/// with std sqrt(2 / fan_in), biases zero.
pub fn build_unet(config: &UNetConfig, seed: u64) -> Result<UNetModel> {
    config.validate()?;
    let channels = config.conv_channels();
    let last = channels.len() - 1;
    let mut rng = SeededRng::new(seed);
    let mut convs = Vec::with_capacity(channels.len());
    for (i, &(cin, cout)) in channels.iter().enumerate() {
        let k = if i == last { 1 } else { 3 };
        let std = (2.0 / (cin * k * k) as f64).sqrt();
        let mut kernels = Array4::zeros((cout, cin, k, k));
        for v in kernels.iter_mut() {
            *v = std * rng.normal();
        }
        convs.push(ConvParam {
            kernels,
            bias: Array1::zeros(cout),
        });
    }
    let first_moment = convs.iter().map(ConvParam::zeros_like).collect();
    let second_moment = convs.iter().map(ConvParam::zeros_like).collect();
    Ok(UNetModel {
        config: *config,
        convs,
        optimizer: OptimizerState {
            first_moment,
            second_moment,
            step: 0,
        },
    })
}

enum OpCache {
    Conv { input: Array3<f64> },
    Act { gmul: Array3<f64> },
    Pool { idx: Array3<u8> },
    Upsample,
    Concat { contracting_channels: usize },
    SaveSkip,
}

/// Cached intermediates of one forward pass, consumed by [`backward`].
pub struct ForwardCache {
    caches: Vec<OpCache>,
    levels: usize,
}

fn check_input(model: &UNetModel, input: &Array3<f64>) -> Result<()> {
    let (c, h, w) = input.dim();
    if c != model.config.in_channels {
        return Err(Error::shape(format!(
            "input has {c} channels, model expects {}",
            model.config.in_channels
        )));
    }
    if h != model.config.image_size || w != model.config.image_size {
        return Err(Error::shape(format!(
            "input {h}×{w} does not match configured image size {}",
            model.config.image_size
        )));
    }
    Ok(())
}

/// Inference-mode forward pass (dropout off, no caches); a pure function
/// of (model, input).
pub fn infer(model: &UNetModel, input: &Array3<f64>) -> Result<Array3<f64>> {
    check_input(model, input)?;
    let mut rng = SeededRng::new(0);
    let mut skips: Vec<Option<Array3<f64>>> = vec![None; model.config.levels];
    let mut x = input.clone();
    for op in build_tape(model.config.levels) {
        x = match op {
            Op::Conv(i) => conv2d_forward(&x, &model.convs[i].kernels, &model.convs[i].bias)?,
            Op::Act => relu_dropout_forward(&x, 0.0, false, &mut rng)?.0,
            Op::SaveSkip(l) => {
                skips[l] = Some(x.clone());
                x
            }
            Op::Pool => maxpool2_forward(&x)?.0,
            Op::Upsample => upsample2_forward(&x),
            Op::ConcatSkip(l) => {
                let skip = skips[l].take().expect("skip saved earlier on the tape");
                skip_concat(&skip, &x)?
            }
        };
    }
    Ok(x)
}

/// Forward pass with cached intermediates for backward. Dropout draws come
/// from `seed`; with `train_mode` off the pass is deterministic and the
/// dropout layers are the identity.
pub fn forward_cached(
    model: &UNetModel,
    input: &Array3<f64>,
    train_mode: bool,
    seed: u64,
) -> Result<(Array3<f64>, ForwardCache)> {
    check_input(model, input)?;
    let rate = model.config.dropout_rate;
    let mut rng = SeededRng::new(seed);
    let mut skips: Vec<Option<Array3<f64>>> = vec![None; model.config.levels];
    let mut caches = Vec::new();
    let mut x = input.clone();
    for op in build_tape(model.config.levels) {
        x = match op {
            Op::Conv(i) => {
                let y = conv2d_forward(&x, &model.convs[i].kernels, &model.convs[i].bias)?;
                caches.push(OpCache::Conv { input: x });
                y
            }
            Op::Act => {
                let (y, gmul) = relu_dropout_forward(&x, rate, train_mode, &mut rng)?;
                caches.push(OpCache::Act { gmul });
                y
            }
            Op::SaveSkip(l) => {
                skips[l] = Some(x.clone());
                caches.push(OpCache::SaveSkip);
                x
            }
            Op::Pool => {
                let (y, idx) = maxpool2_forward(&x)?;
                caches.push(OpCache::Pool { idx });
                y
            }
            Op::Upsample => {
                caches.push(OpCache::Upsample);
                upsample2_forward(&x)
            }
            Op::ConcatSkip(l) => {
                let skip = skips[l].take().expect("skip saved earlier on the tape");
                let y = skip_concat(&skip, &x)?;
                caches.push(OpCache::Concat {
                    contracting_channels: skip.dim().0,
                });
                y
            }
        };
    }
    Ok((
        x,
        ForwardCache {
            caches,
            levels: model.config.levels,
        },
    ))
}

/// Exact gradients of the forward map w.r.t. every parameter, plus the
/// input gradient.
pub fn backward(
    model: &UNetModel,
    cache: &ForwardCache,
    loss_grad: &Array3<f64>,
) -> Result<(Vec<ConvParam>, Array3<f64>)> {
    let tape = build_tape(model.config.levels);
    if cache.caches.len() != tape.len() || cache.levels != model.config.levels {
        return Err(Error::validation(
            "forward cache does not match the model topology",
        ));
    }
    let mut grads: Vec<ConvParam> = model.convs.iter().map(ConvParam::zeros_like).collect();
    let mut skip_grads: Vec<Option<Array3<f64>>> = vec![None; model.config.levels];
    let mut g = loss_grad.clone();
    for (op, op_cache) in tape.iter().zip(cache.caches.iter()).rev() {
        g = match (op, op_cache) {
            (Op::Conv(i), OpCache::Conv { input }) => {
                let (gin, gk, gb) = conv2d_backward(input, &model.convs[*i].kernels, &g)?;
                grads[*i].kernels = gk;
                grads[*i].bias = gb;
                gin
            }
            (Op::Act, OpCache::Act { gmul }) => relu_dropout_backward(gmul, &g),
            (Op::SaveSkip(l), OpCache::SaveSkip) => {
                let skip = skip_grads[*l]
                    .take()
                    .ok_or_else(|| Error::validation("missing skip gradient in backward"))?;
                g + skip
            }
            (Op::Pool, OpCache::Pool { idx }) => maxpool2_backward(idx, &g),
            (Op::Upsample, OpCache::Upsample) => upsample2_backward(&g),
            (Op::ConcatSkip(l), OpCache::Concat { contracting_channels }) => {
                let (g_skip, g_main) = skip_split(&g, *contracting_channels);
                skip_grads[*l] = Some(g_skip);
                g_main
            }
            _ => return Err(Error::validation("forward cache entry out of order")),
        };
    }
    Ok((grads, g))
}
