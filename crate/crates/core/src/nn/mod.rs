//! Minimal convolutional / dense network core with analytic gradients.
//!
//! Tensors are row-major `f64`. Image inputs use `[channels, height, width]`
//! layout; convolutions are unpadded ("valid"). A network is a [`NetworkSpec`]
//! (input shape plus a layer chain) and a matching [`NetworkParams`].

mod adam;
mod checkpoint;
mod layers;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_params, read_params, save_params, write_params, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::{backward, backward_accumulate, forward, softmax, ForwardCache};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("checkpoint spec fingerprint {found:#018x} does not match expected {expected:#018x}")]
    Fingerprint { expected: u64, found: u64 },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NnError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NnError::Shape(format!("shape {shape:?} needs {expected} values, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self { shape, data: vec![0.0; len] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel_h: usize, kernel_w: usize, stride: usize },
    Dense { out_dim: usize },
    Relu,
    Softmax,
    Flatten,
    /// Appends a side-input vector of `extra_dim` values to a flat activation.
    ConcatSide { extra_dim: usize },
}

impl LayerSpec {
    pub fn conv(out_channels: usize, kernel: usize, stride: usize) -> Self {
        LayerSpec::Conv { out_channels, kernel_h: kernel, kernel_w: kernel, stride }
    }

    pub fn dense(out_dim: usize) -> Self {
        LayerSpec::Dense { out_dim }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense { .. })
    }

    fn describe(&self) -> String {
        match self {
            LayerSpec::Conv { out_channels, kernel_h, kernel_w, stride } => {
                format!("conv({out_channels},{kernel_h},{kernel_w},{stride})")
            }
            LayerSpec::Dense { out_dim } => format!("dense({out_dim})"),
            LayerSpec::Relu => "relu".into(),
            LayerSpec::Softmax => "softmax".into(),
            LayerSpec::Flatten => "flatten".into(),
            LayerSpec::ConcatSide { extra_dim } => format!("concat({extra_dim})"),
        }
    }
}

/// Input shape plus layer chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self, NnError> {
        let spec = Self { input, layers };
        spec.shapes()?;
        Ok(spec)
    }

    /// Activation shapes: entry 0 is the input, entry `i + 1` the output of layer `i`.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        let mut shapes = vec![self.input.clone()];
        let mut side_seen = false;
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = shapes.last().unwrap();
            let next = match *layer {
                LayerSpec::Conv { out_channels, kernel_h, kernel_w, stride } => {
                    let [_, h, w] = cur[..] else {
                        return Err(NnError::Shape(format!("layer {i}: conv needs [c,h,w] input, got {cur:?}")));
                    };
                    if stride == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 {
                        return Err(NnError::Shape(format!("layer {i}: degenerate conv")));
                    }
                    if kernel_h > h || kernel_w > w {
                        return Err(NnError::Shape(format!(
                            "layer {i}: {kernel_h}x{kernel_w} kernel does not fit {h}x{w} input"
                        )));
                    }
                    vec![out_channels, (h - kernel_h) / stride + 1, (w - kernel_w) / stride + 1]
                }
                LayerSpec::Dense { out_dim } => {
                    if cur.len() != 1 || out_dim == 0 {
                        return Err(NnError::Shape(format!("layer {i}: dense needs flat input, got {cur:?}")));
                    }
                    vec![out_dim]
                }
                LayerSpec::Relu => cur.clone(),
                LayerSpec::Softmax => {
                    if cur.len() != 1 {
                        return Err(NnError::Shape(format!("layer {i}: softmax needs flat input")));
                    }
                    cur.clone()
                }
                LayerSpec::Flatten => vec![cur.iter().product()],
                LayerSpec::ConcatSide { extra_dim } => {
                    if cur.len() != 1 {
                        return Err(NnError::Shape(format!("layer {i}: concat needs flat input")));
                    }
                    if side_seen {
                        return Err(NnError::Shape("only one side input is supported".into()));
                    }
                    side_seen = true;
                    vec![cur[0] + extra_dim]
                }
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.shapes().expect("validated spec").pop().unwrap()
    }

    pub fn side_dim(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            LayerSpec::ConcatSide { extra_dim } => Some(*extra_dim),
            _ => None,
        })
    }

    /// Weight and bias shapes for every parameterized layer, in order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let shapes = self.shapes().expect("validated spec");
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv { out_channels, kernel_h, kernel_w, .. } => {
                    out.push(vec![out_channels, shapes[i][0], kernel_h, kernel_w]);
                    out.push(vec![out_channels]);
                }
                LayerSpec::Dense { out_dim } => {
                    out.push(vec![out_dim, shapes[i][0]]);
                    out.push(vec![out_dim]);
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    /// Stable 64-bit hash of the input shape and layer chain.
    pub fn fingerprint(&self) -> u64 {
        let mut text = format!("input{:?}", self.input);
        for l in &self.layers {
            text.push(';');
            text.push_str(&l.describe());
        }
        let digest = Sha256::digest(text.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

/// Weights and biases for a [`NetworkSpec`]: `[w0, b0, w1, b1, ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    spec: NetworkSpec,
    tensors: Vec<Tensor>,
}

impl NetworkParams {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let tensors = spec.param_shapes().into_iter().map(Tensor::zeros).collect();
        Self { spec: spec.clone(), tensors }
    }

    /// He-uniform weights (limit `sqrt(6 / fan_in)`), zero biases.
    pub fn he_uniform<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let mut params = Self::zeros(spec);
        for pair in params.tensors.chunks_mut(2) {
            let w = &mut pair[0];
            let fan_in: usize = w.shape()[1..].iter().product();
            let limit = (6.0 / fan_in as f64).sqrt();
            for x in w.data_mut() {
                *x = rng.gen_range(-limit..limit);
            }
        }
        params
    }

    pub fn from_tensors(spec: &NetworkSpec, tensors: Vec<Tensor>) -> Result<Self, NnError> {
        let shapes = spec.param_shapes();
        if shapes.len() != tensors.len() {
            return Err(NnError::Shape(format!("expected {} tensors, got {}", shapes.len(), tensors.len())));
        }
        for (i, (s, t)) in shapes.iter().zip(&tensors).enumerate() {
            if s[..] != *t.shape() {
                return Err(NnError::Shape(format!("tensor {i}: expected {s:?}, got {:?}", t.shape())));
            }
        }
        Ok(Self { spec: spec.clone(), tensors })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// A zero-filled gradient buffer with this network's layout.
    pub fn zeros_like(&self) -> Gradients {
        Gradients { tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Output for one input, discarding the activation record.
    pub fn predict(&self, input: &Tensor, side: Option<&[f64]>) -> Result<Tensor, NnError> {
        forward(self, input, side).map(|(out, _)| out)
    }
}

/// Parameter gradients with the same layout as [`NetworkParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
        }
    }

    pub fn clear(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.fill(0.0));
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors.iter().flat_map(|t| t.data()).fold(0.0, |m, x| m.max(x.abs()))
    }
}
