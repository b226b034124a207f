//! Affine hypernetwork `H(w) = M·f(w) + b` mapping a trade-off vector to the
//! full flat parameter vector of an actor or a critic.
//!
//! `f` is a small tanh MLP from the simplex to `R^F`. Hypernetwork parameters
//! live in one flat buffer laid out as `[feature MLP | M (row-major |Θ|×F) | b]`,
//! so an optimizer can treat them as a single vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, Activation, MlpSpec, PolicySpec};
use crate::rng::Rng;
use crate::simplex::TradeoffVector;

/// Scale of the mixing matrix at initialization (ε_M).
pub const INIT_MATRIX_SCALE: f64 = 0.01;

/// The network a hypernetwork generates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetSpec {
    Actor(PolicySpec),
    Critic(MlpSpec),
}

impl TargetSpec {
    pub fn param_count(&self) -> usize {
        match self {
            TargetSpec::Actor(p) => p.param_count(),
            TargetSpec::Critic(c) => c.param_count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypernetSpec {
    objectives: usize,
    feature_dim: usize,
    feature: MlpSpec,
    target: TargetSpec,
}

impl HypernetSpec {
    pub fn new(
        objectives: usize,
        feature_dim: usize,
        feature_hidden: &[usize],
        target: TargetSpec,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::InvalidDimension("feature dimension must be >= 1".into()));
        }
        if objectives == 0 {
            return Err(Error::InvalidDimension("objective count must be >= 1".into()));
        }
        let feature =
            MlpSpec::tanh_mlp(objectives, feature_hidden, feature_dim, Activation::Identity)?;
        Ok(HypernetSpec {
            objectives,
            feature_dim,
            feature,
            target,
        })
    }

    pub fn objectives(&self) -> usize {
        self.objectives
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn feature_spec(&self) -> &MlpSpec {
        &self.feature
    }

    pub fn target(&self) -> &TargetSpec {
        &self.target
    }

    /// |Θ|, the length of a generated parameter vector.
    pub fn target_len(&self) -> usize {
        self.target.param_count()
    }

    pub fn param_count(&self) -> usize {
        self.feature.param_count() + self.target_len() * (self.feature_dim + 1)
    }

    fn offsets(&self) -> (usize, usize) {
        let m_start = self.feature.param_count();
        (m_start, m_start + self.target_len() * self.feature_dim)
    }
}

/// Flat hypernetwork parameters; see the module docs for the layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypernetParams {
    data: Vec<f64>,
}

impl HypernetParams {
    pub fn from_flat(spec: &HypernetSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != spec.param_count() {
            return Err(Error::shape("hypernetwork parameters", spec.param_count(), data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("hypernetwork parameters"));
        }
        Ok(HypernetParams { data })
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn feature<'a>(&'a self, spec: &HypernetSpec) -> &'a [f64] {
        &self.data[..spec.offsets().0]
    }

    /// Row-major |Θ|×F mixing matrix.
    pub fn matrix<'a>(&'a self, spec: &HypernetSpec) -> &'a [f64] {
        let (m0, b0) = spec.offsets();
        &self.data[m0..b0]
    }

    pub fn bias<'a>(&'a self, spec: &HypernetSpec) -> &'a [f64] {
        &self.data[spec.offsets().1..]
    }
}

fn check_tradeoff(spec: &HypernetSpec, w: &TradeoffVector) -> Result<()> {
    if w.dim() != spec.objectives {
        return Err(Error::shape("hypernetwork trade-off", spec.objectives, w.dim()));
    }
    Ok(())
}

fn check_params(spec: &HypernetSpec, hp: &HypernetParams) -> Result<()> {
    if hp.data.len() != spec.param_count() {
        return Err(Error::shape("hypernetwork parameters", spec.param_count(), hp.data.len()));
    }
    Ok(())
}

/// Feature vector `f(w)`.
pub fn features(spec: &HypernetSpec, hp: &HypernetParams, w: &TradeoffVector) -> Result<Vec<f64>> {
    check_tradeoff(spec, w)?;
    check_params(spec, hp)?;
    nn::mlp_forward(&spec.feature, hp.feature(spec), w.weights())
}

fn mix(spec: &HypernetSpec, hp: &HypernetParams, f: &[f64]) -> Vec<f64> {
    hp.matrix(spec)
        .chunks_exact(spec.feature_dim)
        .zip(hp.bias(spec))
        .map(|(row, b)| row.iter().zip(f).map(|(m, x)| m * x).sum::<f64>() + b)
        .collect()
}

/// `M·f(w) + b`.
pub fn hypernet_forward(
    spec: &HypernetSpec,
    hp: &HypernetParams,
    w: &TradeoffVector,
) -> Result<Vec<f64>> {
    let f = features(spec, hp, w)?;
    Ok(mix(spec, hp, &f))
}

/// Accumulates ∂L/∂(feature params, M, b) into `grad` given ∂L/∂θ at `w`.
pub fn hypernet_backward(
    spec: &HypernetSpec,
    hp: &HypernetParams,
    w: &TradeoffVector,
    grad_theta: &[f64],
    grad: &mut [f64],
) -> Result<()> {
    check_tradeoff(spec, w)?;
    check_params(spec, hp)?;
    if grad_theta.len() != spec.target_len() {
        return Err(Error::shape("parameter-space gradient", spec.target_len(), grad_theta.len()));
    }
    if grad.len() != spec.param_count() {
        return Err(Error::shape("hypernetwork gradient buffer", spec.param_count(), grad.len()));
    }
    let f_dim = spec.feature_dim;
    let trace = nn::mlp_forward_trace(&spec.feature, hp.feature(spec), w.weights())?;
    let f = trace.output();
    let (m0, b0) = spec.offsets();
    let matrix = hp.matrix(spec);

    let mut grad_f = vec![0.0; f_dim];
    {
        let (g_feat, rest) = grad.split_at_mut(m0);
        let (g_m, g_b) = rest.split_at_mut(b0 - m0);
        for (r, &g) in grad_theta.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            g_b[r] += g;
            let row = &matrix[r * f_dim..(r + 1) * f_dim];
            let g_row = &mut g_m[r * f_dim..(r + 1) * f_dim];
            for k in 0..f_dim {
                g_row[k] += g * f[k];
                grad_f[k] += row[k] * g;
            }
        }
        nn::mlp_backward(&spec.feature, hp.feature(spec), &trace, &grad_f, g_feat)?;
    }
    Ok(())
}

/// Random initialization: `b` is a fan-in initialized target network,
/// `M ~ Normal(0, (ε_M/√F)²)`, and `f` is fan-in initialized.
///
/// `output_scale` shrinks the generated network's last layer and
/// `init_log_std` seeds the actor's log-std entries of `b`.
pub fn init_hypernet(
    spec: &HypernetSpec,
    rng: &mut Rng,
    output_scale: f64,
    init_log_std: f64,
) -> HypernetParams {
    let mut data = nn::init_mlp_params(&spec.feature, rng, 1.0);
    let m_std = INIT_MATRIX_SCALE / (spec.feature_dim as f64).sqrt();
    data.extend((0..spec.target_len() * spec.feature_dim).map(|_| m_std * rng.normal()));
    match &spec.target {
        TargetSpec::Actor(p) => {
            data.extend(nn::init_mlp_params(&p.mlp, rng, output_scale));
            data.extend(std::iter::repeat_n(init_log_std, p.act_dim()));
        }
        TargetSpec::Critic(c) => data.extend(nn::init_mlp_params(c, rng, output_scale)),
    }
    HypernetParams { data }
}
