//! Small feed-forward networks evaluated directly on flat parameter slices.
//!
//! Layout of a flat parameter vector: for each layer, the weight matrix in
//! row-major `[out][in]` order followed by the bias vector. Actor vectors
//! append one log-std entry per action dimension after the last layer.
//!
//! Gradients are hand-written reverse mode over the cached forward
//! activations; see [`MlpTrace`] and [`mlp_backward`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Largest action magnitude handed out by the policy head. Keeps `atanh` of
/// a stored action finite.
pub const ACTION_LIMIT: f64 = 1.0 - 1e-12;
/// Guard inside the tanh change-of-variables term `log(1 - a² + ε)`.
pub const TANH_EPS: f64 = 1e-6;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
}

impl MlpSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidDimension(
                "an MLP needs at least an input and an output layer".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidDimension(format!(
                "layer sizes must be positive: {layer_sizes:?}"
            )));
        }
        Ok(MlpSpec {
            layer_sizes,
            hidden_activation,
            output_activation,
        })
    }

    /// tanh hidden layers between `input` and `output`.
    pub fn tanh_mlp(
        input: usize,
        hidden: &[usize],
        output: usize,
        output_activation: Activation,
    ) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        MlpSpec::new(sizes, Activation::Tanh, output_activation)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Σ (in + 1)·out over layers.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|p| (p[0] + 1) * p[1])
            .sum()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// (fan_in, fan_out, offset of the weight block) per layer.
    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.layer_sizes.windows(2).map(move |p| {
            let start = offset;
            offset += (p[0] + 1) * p[1];
            (p[0], p[1], start)
        })
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::shape("mlp parameters", self.param_count(), params.len()));
        }
        Ok(())
    }
}

/// Post-activation outputs of every layer, input first.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    activations: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

pub fn mlp_forward(spec: &MlpSpec, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
    let mut trace = mlp_forward_trace(spec, params, input)?;
    Ok(trace.activations.pop().unwrap())
}

pub fn mlp_forward_trace(spec: &MlpSpec, params: &[f64], input: &[f64]) -> Result<MlpTrace> {
    spec.check_params(params)?;
    if input.len() != spec.input_dim() {
        return Err(Error::shape("mlp input", spec.input_dim(), input.len()));
    }
    let mut activations = Vec::with_capacity(spec.num_layers() + 1);
    activations.push(input.to_vec());
    for (layer, (fan_in, fan_out, offset)) in spec.layers().enumerate() {
        let act = spec.activation(layer);
        let weights = &params[offset..offset + fan_in * fan_out];
        let biases = &params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
        let x = activations.last().unwrap();
        let mut y = Vec::with_capacity(fan_out);
        for (row, b) in weights.chunks_exact(fan_in).zip(biases) {
            let pre: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b;
            y.push(act.apply(pre));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("mlp forward, layer {layer}")));
        }
        activations.push(y);
    }
    Ok(MlpTrace { activations })
}

/// Accumulates ∂L/∂params into `grad_params` given ∂L/∂output, and returns
/// ∂L/∂input.
pub fn mlp_backward(
    spec: &MlpSpec,
    params: &[f64],
    trace: &MlpTrace,
    grad_output: &[f64],
    grad_params: &mut [f64],
) -> Result<Vec<f64>> {
    spec.check_params(params)?;
    if grad_params.len() != params.len() {
        return Err(Error::shape("mlp gradient buffer", params.len(), grad_params.len()));
    }
    if grad_output.len() != spec.output_dim() {
        return Err(Error::shape("mlp output gradient", spec.output_dim(), grad_output.len()));
    }
    let layers: Vec<_> = spec.layers().collect();
    let mut delta = grad_output.to_vec();
    for (layer, &(fan_in, fan_out, offset)) in layers.iter().enumerate().rev() {
        let act = spec.activation(layer);
        let y = &trace.activations[layer + 1];
        let x = &trace.activations[layer];
        for (d, yo) in delta.iter_mut().zip(y) {
            *d *= act.derivative_from_output(*yo);
        }
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("mlp backward, layer {layer}")));
        }
        let weights = &params[offset..offset + fan_in * fan_out];
        let (gw, gb) = grad_params[offset..offset + (fan_in + 1) * fan_out].split_at_mut(fan_in * fan_out);
        let mut delta_in = vec![0.0; fan_in];
        for o in 0..fan_out {
            let d = delta[o];
            gb[o] += d;
            let row = &weights[o * fan_in..(o + 1) * fan_in];
            let grow = &mut gw[o * fan_in..(o + 1) * fan_in];
            for i in 0..fan_in {
                grow[i] += d * x[i];
                delta_in[i] += row[i] * d;
            }
        }
        delta = delta_in;
    }
    Ok(delta)
}

/// Batch loss and its gradient. `loss_fn(row, output)` returns that row's
/// loss contribution and ∂loss/∂output; rows are reduced left to right.
pub fn grad_wrt_params<F>(
    spec: &MlpSpec,
    params: &[f64],
    inputs: &[Vec<f64>],
    mut loss_fn: F,
) -> Result<(f64, Vec<f64>)>
where
    F: FnMut(usize, &[f64]) -> (f64, Vec<f64>),
{
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (row, input) in inputs.iter().enumerate() {
        let trace = mlp_forward_trace(spec, params, input)?;
        let (l, g) = loss_fn(row, trace.output());
        loss += l;
        mlp_backward(spec, params, &trace, &g, &mut grad)?;
    }
    Ok((loss, grad))
}

/// Fan-in scaled uniform weights, zero biases. The last layer's weights are
/// additionally multiplied by `output_scale`.
pub fn init_mlp_params(spec: &MlpSpec, rng: &mut Rng, output_scale: f64) -> Vec<f64> {
    let mut params = vec![0.0; spec.param_count()];
    let n_layers = spec.num_layers();
    for (layer, (fan_in, fan_out, offset)) in spec.layers().enumerate() {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let scale = if layer + 1 == n_layers { output_scale } else { 1.0 };
        for w in &mut params[offset..offset + fan_in * fan_out] {
            *w = scale * rng.uniform_range(-bound, bound);
        }
    }
    params
}

/// Diagonal tanh-Gaussian actor: an MLP producing the pre-squash location,
/// followed by state-independent log-std entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub mlp: MlpSpec,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl PolicySpec {
    pub fn new(obs_dim: usize, hidden: &[usize], act_dim: usize) -> Result<Self> {
        Ok(PolicySpec {
            mlp: MlpSpec::tanh_mlp(obs_dim, hidden, act_dim, Activation::Identity)?,
            log_std_min: LOG_STD_MIN,
            log_std_max: LOG_STD_MAX,
        })
    }

    pub fn act_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn param_count(&self) -> usize {
        self.mlp.param_count() + self.act_dim()
    }

    fn split<'a>(&self, params: &'a [f64]) -> Result<(&'a [f64], &'a [f64])> {
        if params.len() != self.param_count() {
            return Err(Error::shape("policy parameters", self.param_count(), params.len()));
        }
        Ok(params.split_at(self.mlp.param_count()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianAction {
    /// Pre-squash location of the Normal.
    pub loc: Vec<f64>,
    /// `tanh(loc)`, kept strictly inside (−1, 1).
    pub mean: Vec<f64>,
    /// Clamped to `[log_std_min, log_std_max]`.
    pub log_std: Vec<f64>,
    /// Whether each raw log-std parameter sat inside the clamp range.
    log_std_active: Vec<bool>,
}

impl GaussianAction {
    pub fn act_dim(&self) -> usize {
        self.loc.len()
    }
}

fn squash(x: f64) -> f64 {
    x.tanh().clamp(-ACTION_LIMIT, ACTION_LIMIT)
}

fn make_dist(spec: &PolicySpec, loc: Vec<f64>, raw_log_std: &[f64]) -> GaussianAction {
    let mean = loc.iter().map(|&u| squash(u)).collect();
    let log_std = raw_log_std
        .iter()
        .map(|&s| s.clamp(spec.log_std_min, spec.log_std_max))
        .collect();
    let log_std_active = raw_log_std
        .iter()
        .map(|&s| s > spec.log_std_min && s < spec.log_std_max)
        .collect();
    GaussianAction {
        loc,
        mean,
        log_std,
        log_std_active,
    }
}

pub fn policy_forward(spec: &PolicySpec, params: &[f64], obs: &[f64]) -> Result<GaussianAction> {
    let (net, log_std) = spec.split(params)?;
    let loc = mlp_forward(&spec.mlp, net, obs)?;
    if log_std.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("policy log-std"));
    }
    Ok(make_dist(spec, loc, log_std))
}

pub fn policy_forward_trace(
    spec: &PolicySpec,
    params: &[f64],
    obs: &[f64],
) -> Result<(GaussianAction, MlpTrace)> {
    let (net, log_std) = spec.split(params)?;
    let trace = mlp_forward_trace(&spec.mlp, net, obs)?;
    if log_std.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("policy log-std"));
    }
    Ok((make_dist(spec, trace.output().to_vec(), log_std), trace))
}

/// Accumulates the parameter gradient given ∂L/∂loc and ∂L/∂log_std (the
/// latter is masked by the clamp subgradient).
pub fn policy_backward(
    spec: &PolicySpec,
    params: &[f64],
    dist: &GaussianAction,
    trace: &MlpTrace,
    grad_loc: &[f64],
    grad_log_std: &[f64],
    grad_params: &mut [f64],
) -> Result<()> {
    let (net, _) = spec.split(params)?;
    if grad_params.len() != params.len() {
        return Err(Error::shape("policy gradient buffer", params.len(), grad_params.len()));
    }
    let (g_net, g_log_std) = grad_params.split_at_mut(net.len());
    mlp_backward(&spec.mlp, net, trace, grad_loc, g_net)?;
    for ((g, d), active) in g_log_std.iter_mut().zip(grad_log_std).zip(&dist.log_std_active) {
        if *active {
            *g += d;
        }
    }
    Ok(())
}

/// Draws `action = tanh(z)`, `z ~ Normal(loc, exp(log_std))`, and returns it
/// with its tanh-Normal log-density.
pub fn sample_and_logprob(rng: &mut Rng, dist: &GaussianAction) -> (Vec<f64>, f64) {
    let action: Vec<f64> = dist
        .loc
        .iter()
        .zip(&dist.log_std)
        .map(|(&u, &s)| squash(u + s.exp() * rng.normal()))
        .collect();
    let logprob = log_prob(dist, &action);
    (action, logprob)
}

/// tanh-Normal log-density of an action in (−1, 1).
pub fn log_prob(dist: &GaussianAction, action: &[f64]) -> f64 {
    log_prob_with_grad(dist, action).0
}

/// Log-density together with its partials w.r.t. `loc` and `log_std`.
pub fn log_prob_with_grad(dist: &GaussianAction, action: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let d = dist.act_dim();
    let mut logp = 0.0;
    let mut g_loc = Vec::with_capacity(d);
    let mut g_log_std = Vec::with_capacity(d);
    for j in 0..d {
        let a = action[j].clamp(-ACTION_LIMIT, ACTION_LIMIT);
        let z = a.atanh();
        let inv_std = (-dist.log_std[j]).exp();
        let t = (z - dist.loc[j]) * inv_std;
        logp += -0.5 * t * t - dist.log_std[j] - HALF_LN_2PI - (1.0 - a * a + TANH_EPS).ln();
        g_loc.push(t * inv_std);
        g_log_std.push(t * t - 1.0);
    }
    (logp, g_loc, g_log_std)
}

/// Entropy of the pre-squash Gaussian (the tanh-Normal has no closed form).
pub fn gaussian_entropy(dist: &GaussianAction) -> f64 {
    dist.log_std.iter().map(|s| s + 0.5 + HALF_LN_2PI).sum()
}

pub fn critic_forward(spec: &MlpSpec, params: &[f64], obs: &[f64]) -> Result<Vec<f64>> {
    if spec.output_activation() != Activation::Identity {
        return Err(Error::Config("critic output activation must be identity".into()));
    }
    mlp_forward(spec, params, obs)
}
