use super::{Gradients, LayerSpec, NetworkParams, NnError, Tensor};

/// Activations recorded by [`forward`]: the input followed by every layer output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Tensor>,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor {
        self.activations.last().unwrap()
    }

    /// Input, then the output of each layer in order.
    pub fn activations(&self) -> &[Tensor] {
        &self.activations
    }
}

pub fn forward(params: &NetworkParams, input: &Tensor, side: Option<&[f64]>) -> Result<(Tensor, ForwardCache), NnError> {
    let spec = params.spec();
    if input.shape() != spec.input.as_slice() {
        return Err(NnError::Shape(format!("input shape {:?}, network expects {:?}", input.shape(), spec.input)));
    }
    match (spec.side_dim(), side) {
        (Some(d), Some(s)) if d == s.len() => {}
        (None, None) => {}
        (d, s) => {
            return Err(NnError::Shape(format!("side input of length {:?}, network expects {d:?}", s.map(<[f64]>::len))))
        }
    }

    let mut activations = Vec::with_capacity(spec.layers.len() + 1);
    activations.push(input.clone());
    let mut p = 0;
    for layer in &spec.layers {
        let x = activations.last().unwrap();
        let y = match *layer {
            LayerSpec::Conv { out_channels, kernel_h, kernel_w, stride } => {
                let y = conv_forward(x, &params.tensors[p], &params.tensors[p + 1], out_channels, kernel_h, kernel_w, stride);
                p += 2;
                y
            }
            LayerSpec::Dense { out_dim } => {
                let y = dense_forward(x, &params.tensors[p], &params.tensors[p + 1], out_dim);
                p += 2;
                y
            }
            LayerSpec::Relu => {
                let data = x.data().iter().map(|v| v.max(0.0)).collect();
                Tensor { shape: x.shape().to_vec(), data }
            }
            LayerSpec::Softmax => Tensor::from_vec(softmax(x.data())),
            LayerSpec::Flatten => Tensor::from_vec(x.data().to_vec()),
            LayerSpec::ConcatSide { .. } => {
                let mut data = x.data().to_vec();
                data.extend_from_slice(side.expect("side input checked above"));
                Tensor::from_vec(data)
            }
        };
        activations.push(y);
    }
    let out = activations.last().unwrap().clone();
    Ok((out, ForwardCache { activations }))
}

/// Numerically stable softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Dot product with independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Patch matrix: row `y * wo + x` holds the receptive field of output cell
/// `(y, x)` in weight order (channel, kernel row, kernel column).
fn im2col(x: &Tensor, kh: usize, kw: usize, stride: usize, ho: usize, wo: usize) -> Vec<f64> {
    let (ic, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let xd = x.data();
    let k = ic * kh * kw;
    let mut cols = vec![0.0; ho * wo * k];
    for y in 0..ho {
        for xo in 0..wo {
            let row = &mut cols[(y * wo + xo) * k..][..k];
            for c in 0..ic {
                for ky in 0..kh {
                    let src = &xd[(c * h + y * stride + ky) * wd + xo * stride..][..kw];
                    row[(c * kh + ky) * kw..][..kw].copy_from_slice(src);
                }
            }
        }
    }
    cols
}

fn conv_forward(x: &Tensor, w: &Tensor, b: &Tensor, oc: usize, kh: usize, kw: usize, stride: usize) -> Tensor {
    let (h, wd) = (x.shape()[1], x.shape()[2]);
    let (ho, wo) = ((h - kh) / stride + 1, (wd - kw) / stride + 1);
    let k = x.shape()[0] * kh * kw;
    let cols = im2col(x, kh, kw, stride, ho, wo);
    let wdat = w.data();
    let mut out = vec![0.0; oc * ho * wo];
    for o in 0..oc {
        let wrow = &wdat[o * k..][..k];
        let bias = b.data()[o];
        for (p, patch) in cols.chunks_exact(k).enumerate() {
            out[o * ho * wo + p] = bias + dot(wrow, patch);
        }
    }
    Tensor { shape: vec![oc, ho, wo], data: out }
}

fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor, out_dim: usize) -> Tensor {
    let n_in = x.len();
    let xd = x.data();
    let data = (0..out_dim)
        .map(|i| b.data()[i] + dot(&w.data()[i * n_in..(i + 1) * n_in], xd))
        .collect();
    Tensor::from_vec(data)
}

/// Gradients of a scalar loss given `d loss / d output`.
///
/// Returns fresh parameter gradients and the gradient with respect to the
/// network input.
pub fn backward(
    params: &NetworkParams,
    cache: &ForwardCache,
    output_grad: &[f64],
) -> Result<(Gradients, Tensor), NnError> {
    let mut grads = params.zeros_like();
    let input_grad = backward_accumulate(params, cache, output_grad, &mut grads, true)?;
    Ok((grads, input_grad.expect("input gradient requested")))
}

/// Adds this sample's parameter gradients into `grads`. The input gradient is
/// only computed when `want_input_grad` is set.
pub fn backward_accumulate(
    params: &NetworkParams,
    cache: &ForwardCache,
    output_grad: &[f64],
    grads: &mut Gradients,
    want_input_grad: bool,
) -> Result<Option<Tensor>, NnError> {
    let spec = params.spec();
    if output_grad.len() != cache.output().len() {
        return Err(NnError::Shape(format!(
            "output gradient of length {}, output has {}",
            output_grad.len(),
            cache.output().len()
        )));
    }
    let mut g = output_grad.to_vec();
    let mut p = params.tensors.len();
    for (i, layer) in spec.layers.iter().enumerate().rev() {
        let x = &cache.activations[i];
        let y = &cache.activations[i + 1];
        let need_dx = want_input_grad || i > 0;
        g = match *layer {
            LayerSpec::Conv { kernel_h, kernel_w, stride, .. } => {
                p -= 2;
                let (gw, gb) = grads.tensors.split_at_mut(p + 1);
                conv_backward(x, &params.tensors[p], y.shape(), &g, &mut gw[p], &mut gb[0], kernel_h, kernel_w, stride, need_dx)
            }
            LayerSpec::Dense { .. } => {
                p -= 2;
                let (gw, gb) = grads.tensors.split_at_mut(p + 1);
                dense_backward(x, &params.tensors[p], &g, &mut gw[p], &mut gb[0], need_dx)
            }
            LayerSpec::Relu => g.iter().zip(y.data()).map(|(gi, yi)| if *yi > 0.0 { *gi } else { 0.0 }).collect(),
            LayerSpec::Softmax => {
                let dot: f64 = g.iter().zip(y.data()).map(|(a, b)| a * b).sum();
                y.data().iter().zip(&g).map(|(yi, gi)| yi * (gi - dot)).collect()
            }
            LayerSpec::Flatten => g,
            LayerSpec::ConcatSide { .. } => {
                g.truncate(x.len());
                g
            }
        };
    }
    Ok(want_input_grad.then(|| Tensor { shape: cache.activations[0].shape().to_vec(), data: g }))
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &Tensor,
    w: &Tensor,
    out_shape: &[usize],
    g: &[f64],
    gw: &mut Tensor,
    gb: &mut Tensor,
    kh: usize,
    kw: usize,
    stride: usize,
    need_dx: bool,
) -> Vec<f64> {
    let (ic, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oc, ho, wo) = (out_shape[0], out_shape[1], out_shape[2]);
    let k = ic * kh * kw;
    let cols = im2col(x, kh, kw, stride, ho, wo);
    let wdat = w.data();
    let gwd = gw.data_mut();
    let gbd = gb.data_mut();
    let mut dcols = if need_dx { vec![0.0; cols.len()] } else { Vec::new() };
    for o in 0..oc {
        let wrow = &wdat[o * k..][..k];
        for p in 0..ho * wo {
            let gv = g[o * ho * wo + p];
            if gv == 0.0 {
                continue;
            }
            gbd[o] += gv;
            axpy(gv, &cols[p * k..][..k], &mut gwd[o * k..][..k]);
            if need_dx {
                axpy(gv, wrow, &mut dcols[p * k..][..k]);
            }
        }
    }
    if !need_dx {
        return Vec::new();
    }
    let mut dx = vec![0.0; x.len()];
    for y in 0..ho {
        for xo in 0..wo {
            let row = &dcols[(y * wo + xo) * k..][..k];
            for c in 0..ic {
                for ky in 0..kh {
                    let dst = &mut dx[(c * h + y * stride + ky) * wd + xo * stride..][..kw];
                    dst.iter_mut().zip(&row[(c * kh + ky) * kw..][..kw]).for_each(|(d, v)| *d += v);
                }
            }
        }
    }
    dx
}

fn dense_backward(x: &Tensor, w: &Tensor, g: &[f64], gw: &mut Tensor, gb: &mut Tensor, need_dx: bool) -> Vec<f64> {
    let n_in = x.len();
    let xd = x.data();
    let gwd = gw.data_mut();
    let mut dx = if need_dx { vec![0.0; n_in] } else { Vec::new() };
    for (i, &gi) in g.iter().enumerate() {
        if gi == 0.0 {
            continue;
        }
        gb.data_mut()[i] += gi;
        let row = &mut gwd[i * n_in..(i + 1) * n_in];
        axpy(gi, xd, row);
        if need_dx {
            axpy(gi, &w.data()[i * n_in..(i + 1) * n_in], &mut dx);
        }
    }
    dx
}
