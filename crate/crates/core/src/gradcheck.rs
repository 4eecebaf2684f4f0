//! Central finite-difference checks of the analytic network gradients.
//!
//! The scalar probed is `L = sum_k w_k y_k` for random weights `w`, so every
//! output contributes. Probes whose two perturbed forwards flip a ReLU (the
//! derivative is undefined there) are skipped and counted.

use rand::Rng;
use serde::Serialize;

use crate::coma::{critic_spec, policy_spec};
use crate::dqn::{q_network_spec, QArch};
use crate::encoding::OpponentChannels;
use crate::env::EnvConfig;
use crate::nn::{backward, forward, LayerSpec, NetworkParams, NetworkSpec, NnError, Tensor};
use crate::rng::stream;

pub const FD_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor so that near-zero gradients are compared absolutely.
pub const DENOM_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOM_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub label: String,
    pub configs: usize,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
}

impl CheckOutcome {
    fn new(label: &str) -> Self {
        Self { label: label.into(), configs: 0, checked: 0, skipped: 0, max_rel_error: 0.0 }
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_error < TOLERANCE
    }

    fn absorb(&mut self, probe: ProbeStats) {
        self.configs += 1;
        self.checked += probe.checked;
        self.skipped += probe.skipped;
        self.max_rel_error = self.max_rel_error.max(probe.max_rel_error);
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ProbeStats {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
}

fn weighted(params: &NetworkParams, input: &Tensor, side: Option<&[f64]>, w: &[f64]) -> Result<(f64, Vec<bool>), NnError> {
    let (out, cache) = forward(params, input, side)?;
    let mut mask = Vec::new();
    for (layer, act) in params.spec().layers.iter().zip(&cache.activations()[1..]) {
        if *layer == LayerSpec::Relu {
            mask.extend(act.data().iter().map(|v| *v > 0.0));
        }
    }
    Ok((out.data().iter().zip(w).map(|(a, b)| a * b).sum(), mask))
}

/// Compares analytic and central-difference gradients of `sum w_k y_k`.
///
/// With `per_tensor = Some(k)` only `k` random entries of each parameter tensor
/// (and of the input) are probed; otherwise every entry is.
pub fn check_network<R: Rng + ?Sized>(
    params: &NetworkParams,
    input: &Tensor,
    side: Option<&[f64]>,
    per_tensor: Option<usize>,
    rng: &mut R,
) -> Result<ProbeStats, NnError> {
    let out_len = params.spec().output_shape().iter().product();
    let w: Vec<f64> = (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (_, cache) = forward(params, input, side)?;
    let (grads, input_grad) = backward(params, &cache, &w)?;
    let (_, base_mask) = weighted(params, input, side, &w)?;

    let mut stats = ProbeStats::default();
    let mut probe = |analytic: f64, plus: (f64, Vec<bool>), minus: (f64, Vec<bool>)| {
        if plus.1 != base_mask || minus.1 != base_mask {
            stats.skipped += 1;
            return;
        }
        let numeric = (plus.0 - minus.0) / (2.0 * FD_STEP);
        stats.checked += 1;
        stats.max_rel_error = stats.max_rel_error.max(relative_error(analytic, numeric));
    };
    let pick = |len: usize, rng: &mut R| -> Vec<usize> {
        match per_tensor {
            Some(k) if k < len => (0..k).map(|_| rng.gen_range(0..len)).collect(),
            _ => (0..len).collect(),
        }
    };

    let mut perturbed = params.clone();
    for ti in 0..params.tensors().len() {
        for i in pick(params.tensors()[ti].len(), rng) {
            let orig = params.tensors()[ti].data()[i];
            perturbed.tensors_mut()[ti].data_mut()[i] = orig + FD_STEP;
            let plus = weighted(&perturbed, input, side, &w)?;
            perturbed.tensors_mut()[ti].data_mut()[i] = orig - FD_STEP;
            let minus = weighted(&perturbed, input, side, &w)?;
            perturbed.tensors_mut()[ti].data_mut()[i] = orig;
            probe(grads.tensors[ti].data()[i], plus, minus);
        }
    }
    let mut x = input.clone();
    for i in pick(input.len(), rng) {
        let orig = input.data()[i];
        x.data_mut()[i] = orig + FD_STEP;
        let plus = weighted(params, &x, side, &w)?;
        x.data_mut()[i] = orig - FD_STEP;
        let minus = weighted(params, &x, side, &w)?;
        x.data_mut()[i] = orig;
        probe(input_grad.data()[i], plus, minus);
    }
    Ok(stats)
}

fn uniform_tensor<R: Rng + ?Sized>(shape: Vec<usize>, rng: &mut R) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn binary_tensor<R: Rng + ?Sized>(shape: Vec<usize>, rng: &mut R) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| if rng.gen_bool(0.1) { 1.0 } else { 0.0 }).collect()).unwrap()
}

/// Layer kinds probed by [`layer_suite`].
pub const LAYER_KINDS: [&str; 6] = ["conv", "dense", "relu", "softmax", "flatten", "concat_side"];

fn random_layer_spec<R: Rng + ?Sized>(kind: &str, rng: &mut R) -> NetworkSpec {
    let c = rng.gen_range(1..=3);
    let h = rng.gen_range(4..=7);
    let w = rng.gen_range(4..=8);
    let k = rng.gen_range(1..=3);
    let stride = rng.gen_range(1..=2);
    let oc = rng.gen_range(1..=4);
    let d = rng.gen_range(1..=6);
    let conv = LayerSpec::Conv { out_channels: oc, kernel_h: k, kernel_w: rng.gen_range(1..=3), stride };
    let layers = match kind {
        "conv" => vec![conv],
        "dense" => vec![LayerSpec::Flatten, LayerSpec::dense(d)],
        "relu" => vec![conv, LayerSpec::Relu, LayerSpec::Flatten, LayerSpec::dense(d)],
        "softmax" => vec![LayerSpec::Flatten, LayerSpec::dense(d + 1), LayerSpec::Softmax],
        "flatten" => vec![conv, LayerSpec::Flatten, LayerSpec::dense(d)],
        "concat_side" => vec![
            conv,
            LayerSpec::Flatten,
            LayerSpec::ConcatSide { extra_dim: rng.gen_range(1..=5) },
            LayerSpec::dense(d),
        ],
        other => panic!("unknown layer kind {other}"),
    };
    NetworkSpec::new(vec![c, h, w], layers).expect("random spec composes")
}

/// `configs` random small networks per layer kind, every entry probed.
pub fn layer_suite(configs: usize, seed: u64) -> Result<Vec<CheckOutcome>, NnError> {
    let mut rng = stream(seed, "gradcheck/layers");
    let mut out = Vec::new();
    for kind in LAYER_KINDS {
        let mut outcome = CheckOutcome::new(kind);
        for _ in 0..configs {
            let spec = random_layer_spec(kind, &mut rng);
            let params = NetworkParams::he_uniform(&spec, &mut rng);
            let params = jitter_biases(params, &mut rng);
            let input = uniform_tensor(spec.input.clone(), &mut rng);
            let side: Option<Vec<f64>> = spec.side_dim().map(|d| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
            outcome.absorb(check_network(&params, &input, side.as_deref(), None, &mut rng)?);
        }
        out.push(outcome);
    }
    Ok(out)
}

fn jitter_biases<R: Rng + ?Sized>(mut params: NetworkParams, rng: &mut R) -> NetworkParams {
    for pair in params.tensors_mut().chunks_mut(2) {
        for b in pair[1].data_mut() {
            *b = rng.gen_range(-0.1..0.1);
        }
    }
    params
}

/// The DQN, policy and critic networks at full size, sampling entries.
pub fn network_suite(configs: usize, per_tensor: usize, seed: u64) -> Result<Vec<CheckOutcome>, NnError> {
    let mut rng = stream(seed, "gradcheck/networks");
    let pitch = EnvConfig::default().pitch().expect("default pitch");
    let small = EnvConfig::new(6, 9, 2).pitch().expect("small pitch");
    let n = pitch.players();
    let specs = vec![
        ("dqn", q_network_spec(QArch::Paper, [4, pitch.height(), pitch.width()], n + 8)?),
        ("dqn_compact", q_network_spec(QArch::Compact, [4, small.height(), small.width()], small.players() + 8)?),
        ("policy", policy_spec(&pitch)?),
        ("critic", critic_spec(&pitch, OpponentChannels::Union)?),
    ];
    let mut out = Vec::new();
    for (label, spec) in specs {
        let mut outcome = CheckOutcome::new(label);
        for _ in 0..configs {
            let params = jitter_biases(NetworkParams::he_uniform(&spec, &mut rng), &mut rng);
            let input = binary_tensor(spec.input.clone(), &mut rng);
            let side: Option<Vec<f64>> =
                spec.side_dim().map(|d| (0..d).map(|_| if rng.gen_bool(0.2) { 1.0 } else { 0.0 }).collect());
            outcome.absorb(check_network(&params, &input, side.as_deref(), Some(per_tensor), &mut rng)?);
        }
        out.push(outcome);
    }
    Ok(out)
}

/// Layer kinds and full networks, 20 configurations each.
pub fn run_suite(seed: u64) -> Result<Vec<CheckOutcome>, NnError> {
    let mut out = layer_suite(20, seed)?;
    out.extend(network_suite(20, 8, seed)?);
    Ok(out)
}
