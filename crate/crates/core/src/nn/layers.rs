//! Differentiable layer primitives on C×H×W tensors.
//!
//! Forward maps and their exact reverse-mode gradients, written against
//! f64 throughout so finite-difference checks are meaningful. Convolution
//! is cross-correlation with zero padding ("same" size), lowered to a
//! GEMM through im2col.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use ndarray::{Array1, Array2, Array3, Array4, Axis};

/// Per-(dy, dx) valid output-column range and source offset for 3×3
/// padding-1 lowering: output x maps to source x + dx − 1.
fn tap_range(d: usize, len: usize) -> (usize, usize) {
    let lo = 1usize.saturating_sub(d);
    let hi = (len + 1 - d).min(len);
    (lo, hi)
}

/// im2col for 3×3 kernels with zero padding 1: output is (C·9, H·W).
/// Row copies are contiguous, so this runs at memcpy speed.
fn im2col3(x: &Array3<f64>) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let mut cols = Array2::zeros((c * 9, h * w));
    let xs = x.as_slice().expect("standard layout");
    let cs = cols.as_slice_mut().expect("standard layout");
    for ci in 0..c {
        for dy in 0..3usize {
            let (y_lo, y_hi) = tap_range(dy, h);
            for dx in 0..3usize {
                let (x_lo, x_hi) = tap_range(dx, w);
                if x_lo >= x_hi {
                    continue;
                }
                let row = ci * 9 + dy * 3 + dx;
                for y in y_lo..y_hi {
                    let sy = y + dy - 1;
                    let src = ci * h * w + sy * w + (x_lo + dx - 1);
                    let dst = row * h * w + y * w + x_lo;
                    let n = x_hi - x_lo;
                    cs[dst..dst + n].copy_from_slice(&xs[src..src + n]);
                }
            }
        }
    }
    cols
}

/// Transpose of im2col3: accumulate column gradients back onto the image.
fn col2im3(cols: &Array2<f64>, c: usize, h: usize, w: usize) -> Array3<f64> {
    let mut out = Array3::zeros((c, h, w));
    let os = out.as_slice_mut().expect("standard layout");
    let cs = cols.as_slice().expect("standard layout");
    for ci in 0..c {
        for dy in 0..3usize {
            let (y_lo, y_hi) = tap_range(dy, h);
            for dx in 0..3usize {
                let (x_lo, x_hi) = tap_range(dx, w);
                if x_lo >= x_hi {
                    continue;
                }
                let row = ci * 9 + dy * 3 + dx;
                for y in y_lo..y_hi {
                    let sy = y + dy - 1;
                    let dst = ci * h * w + sy * w + (x_lo + dx - 1);
                    let src = row * h * w + y * w + x_lo;
                    let n = x_hi - x_lo;
                    for i in 0..n {
                        os[dst + i] += cs[src + i];
                    }
                }
            }
        }
    }
    out
}

fn check_conv_shapes(x: &Array3<f64>, kernels: &Array4<f64>, bias: &Array1<f64>) -> Result<usize> {
    let (c_in, _, _) = x.dim();
    let (c_out, kc, kh, kw) = kernels.dim();
    if kc != c_in {
        return Err(Error::shape(format!(
            "conv kernels expect {kc} input channels, input has {c_in}"
        )));
    }
    if kh != kw || !(kh == 1 || kh == 3) {
        return Err(Error::shape(format!("conv kernel must be 1×1 or 3×3, got {kh}×{kw}")));
    }
    if bias.len() != c_out {
        return Err(Error::shape(format!(
            "bias has {} entries for {c_out} output channels",
            bias.len()
        )));
    }
    Ok(kh)
}

/// Same-size 2D cross-correlation (kernel 3×3 pad 1, or 1×1).
pub fn conv2d_forward(
    x: &Array3<f64>,
    kernels: &Array4<f64>,
    bias: &Array1<f64>,
) -> Result<Array3<f64>> {
    let k = check_conv_shapes(x, kernels, bias)?;
    let (c_in, h, w) = x.dim();
    let c_out = kernels.dim().0;
    let k2 = kernels
        .view()
        .into_shape_with_order((c_out, c_in * k * k))
        .expect("kernels are standard layout");
    let x2;
    let cols = if k == 3 {
        x2 = im2col3(x);
        x2.view()
    } else {
        x2 = x
            .view()
            .into_shape_with_order((c_in, h * w))
            .expect("input is standard layout")
            .to_owned();
        x2.view()
    };
    let mut y2 = k2.dot(&cols);
    for (mut row, &b) in y2.rows_mut().into_iter().zip(bias.iter()) {
        row += b;
    }
    Ok(y2
        .into_shape_with_order((c_out, h, w))
        .expect("dims agree"))
}

/// Gradients of [`conv2d_forward`] w.r.t. input, kernels and bias.
pub fn conv2d_backward(
    x: &Array3<f64>,
    kernels: &Array4<f64>,
    grad_out: &Array3<f64>,
) -> Result<(Array3<f64>, Array4<f64>, Array1<f64>)> {
    let (c_in, h, w) = x.dim();
    let (c_out, _, kh, _) = kernels.dim();
    if grad_out.dim() != (c_out, h, w) {
        return Err(Error::shape("grad_out shape mismatch in conv backward"));
    }
    let k = kh;
    let g2 = grad_out
        .view()
        .into_shape_with_order((c_out, h * w))
        .expect("standard layout");
    let grad_bias = g2.sum_axis(Axis(1));
    let k2 = kernels
        .view()
        .into_shape_with_order((c_out, c_in * k * k))
        .expect("standard layout");

    let (grad_kernels, grad_input) = if k == 3 {
        let cols = im2col3(x);
        let gk2 = g2.dot(&cols.t());
        let gcols = k2.t().dot(&g2);
        (
            gk2.into_shape_with_order((c_out, c_in, 3, 3)).expect("dims"),
            col2im3(&gcols, c_in, h, w),
        )
    } else {
        let x2 = x
            .view()
            .into_shape_with_order((c_in, h * w))
            .expect("standard layout");
        let gk2 = g2.dot(&x2.t());
        let gin2 = k2.t().dot(&g2);
        (
            gk2.into_shape_with_order((c_out, c_in, 1, 1)).expect("dims"),
            gin2.into_shape_with_order((c_in, h, w)).expect("dims"),
        )
    };
    Ok((grad_input, grad_kernels, grad_bias))
}

/// 2×2 non-overlapping max pooling. Returns the pooled map and per-output
/// argmax codes (row-major window position 0..4, ties to the first).
pub fn maxpool2_forward(x: &Array3<f64>) -> Result<(Array3<f64>, Array3<u8>)> {
    let (c, h, w) = x.dim();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("maxpool needs even dims, got {h}×{w}")));
    }
    let mut out = Array3::zeros((c, h / 2, w / 2));
    let mut idx = Array3::zeros((c, h / 2, w / 2));
    for ci in 0..c {
        for y in 0..h / 2 {
            for x_out in 0..w / 2 {
                let mut best = x[[ci, 2 * y, 2 * x_out]];
                let mut code = 0u8;
                for (k, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                    let v = x[[ci, 2 * y + dy, 2 * x_out + dx]];
                    if v > best {
                        best = v;
                        code = k as u8;
                    }
                }
                out[[ci, y, x_out]] = best;
                idx[[ci, y, x_out]] = code;
            }
        }
    }
    Ok((out, idx))
}

/// Route pooled gradients back to the argmax positions.
pub fn maxpool2_backward(idx: &Array3<u8>, grad_out: &Array3<f64>) -> Array3<f64> {
    let (c, hh, hw) = grad_out.dim();
    let mut grad = Array3::zeros((c, hh * 2, hw * 2));
    for ci in 0..c {
        for y in 0..hh {
            for x_out in 0..hw {
                let code = idx[[ci, y, x_out]] as usize;
                let (dy, dx) = (code / 2, code % 2);
                grad[[ci, 2 * y + dy, 2 * x_out + dx]] += grad_out[[ci, y, x_out]];
            }
        }
    }
    grad
}

/// Nearest-neighbor 2× upsampling.
pub fn upsample2_forward(x: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = x.dim();
    let mut out = Array3::zeros((c, 2 * h, 2 * w));
    for ci in 0..c {
        for y in 0..h {
            for x_in in 0..w {
                let v = x[[ci, y, x_in]];
                out[[ci, 2 * y, 2 * x_in]] = v;
                out[[ci, 2 * y, 2 * x_in + 1]] = v;
                out[[ci, 2 * y + 1, 2 * x_in]] = v;
                out[[ci, 2 * y + 1, 2 * x_in + 1]] = v;
            }
        }
    }
    out
}

/// Each input pixel collects the gradient of its replicated 2×2 block.
pub fn upsample2_backward(grad_out: &Array3<f64>) -> Array3<f64> {
    let (c, h2, w2) = grad_out.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut grad = Array3::zeros((c, h, w));
    for ci in 0..c {
        for y in 0..h {
            for x_in in 0..w {
                grad[[ci, y, x_in]] = grad_out[[ci, 2 * y, 2 * x_in]]
                    + grad_out[[ci, 2 * y, 2 * x_in + 1]]
                    + grad_out[[ci, 2 * y + 1, 2 * x_in]]
                    + grad_out[[ci, 2 * y + 1, 2 * x_in + 1]];
            }
        }
    }
    grad
}

/// Fused ReLU + inverted dropout. In training mode each activation is
/// zeroed independently with probability `rate` and survivors scale by
/// 1/(1−rate); in inference mode dropout is the identity. Returns the
/// output and the gradient multiplier map for backward.
pub fn relu_dropout_forward(
    x: &Array3<f64>,
    rate: f64,
    train_mode: bool,
    rng: &mut SeededRng,
) -> Result<(Array3<f64>, Array3<f64>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::validation(format!("dropout rate {rate} outside [0, 1)")));
    }
    let mut y = x.clone();
    let mut gmul = Array3::zeros(x.dim());
    let dropping = train_mode && rate > 0.0;
    let keep_scale = if dropping { 1.0 / (1.0 - rate) } else { 1.0 };
    for (v, g) in y.iter_mut().zip(gmul.iter_mut()) {
        // one draw per element keeps the stream layout data-independent
        let keep = if dropping { rng.uniform() >= rate } else { true };
        let m = if *v > 0.0 && keep { keep_scale } else { 0.0 };
        *v = if *v > 0.0 { *v * m } else { 0.0 };
        *g = m;
    }
    Ok((y, gmul))
}

pub fn relu_dropout_backward(gmul: &Array3<f64>, grad_out: &Array3<f64>) -> Array3<f64> {
    gmul * grad_out
}

/// Channel concatenation, contracting features first.
pub fn skip_concat(contracting: &Array3<f64>, expanding: &Array3<f64>) -> Result<Array3<f64>> {
    let (c1, h1, w1) = contracting.dim();
    let (c2, h2, w2) = expanding.dim();
    if (h1, w1) != (h2, w2) {
        return Err(Error::shape(format!(
            "skip concat spatial mismatch: {h1}×{w1} vs {h2}×{w2}"
        )));
    }
    let mut out = Array3::zeros((c1 + c2, h1, w1));
    out.slice_mut(ndarray::s![..c1, .., ..]).assign(contracting);
    out.slice_mut(ndarray::s![c1.., .., ..]).assign(expanding);
    Ok(out)
}

/// Backward of [`skip_concat`]: split the gradient at channel `c1`.
pub fn skip_split(grad_out: &Array3<f64>, c1: usize) -> (Array3<f64>, Array3<f64>) {
    (
        grad_out.slice(ndarray::s![..c1, .., ..]).to_owned(),
        grad_out.slice(ndarray::s![c1.., .., ..]).to_owned(),
    )
}

/// Mean-squared error over all elements, with its input gradient.
pub fn mse_loss(prediction: &Array3<f64>, target: &Array3<f64>) -> Result<(f64, Array3<f64>)> {
    if prediction.dim() != target.dim() {
        return Err(Error::shape("mse operands differ in shape"));
    }
    let count = prediction.len() as f64;
    let diff = prediction - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
    let grad = diff.mapv(|d| 2.0 * d / count);
    Ok((loss, grad))
}
