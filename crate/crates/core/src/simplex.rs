//! Trade-off vectors on the probability simplex and the per-iteration
//! sampling schedule that assigns one to every parallel environment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

const SIMPLEX_TOL: f64 = 1e-9;

/// Objective weights: nonnegative, summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TradeoffVector(Vec<f64>);

impl TradeoffVector {
    /// Validates simplex membership. A single objective only admits `[1]`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDimension(
                "trade-off vector needs at least one objective".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDimension(format!(
                "trade-off weights must be finite and nonnegative: {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidDimension(format!(
                "trade-off weights sum to {sum}, expected 1"
            )));
        }
        Ok(TradeoffVector(weights))
    }

    /// The `j`-th simplex vertex in `m` dimensions.
    pub fn vertex(m: usize, j: usize) -> Self {
        assert!(j < m, "vertex index {j} out of range for m={m}");
        let mut w = vec![0.0; m];
        w[j] = 1.0;
        TradeoffVector(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Scalarization wᵀv.
    pub fn dot(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.0.len());
        self.0.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

impl TryFrom<Vec<f64>> for TradeoffVector {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        TradeoffVector::new(value)
    }
}

impl From<TradeoffVector> for Vec<f64> {
    fn from(value: TradeoffVector) -> Self {
        value.0
    }
}

/// Cluster layout of the trade-offs handed to the `num_envs` environments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplingConfig {
    /// Distinct trade-offs per iteration (K).
    pub clusters: usize,
    /// How many of the clusters are pinned to simplex vertices (κ).
    pub extremes: usize,
    /// Parallel environments (N).
    pub num_envs: usize,
    /// Objective count (m).
    pub objectives: usize,
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        let SamplingConfig {
            clusters: k,
            extremes,
            num_envs: n,
            objectives: m,
        } = *self;
        if m == 0 {
            return Err(Error::Config("objective count must be at least 1".into()));
        }
        if n == 0 {
            return Err(Error::Config("num_envs must be positive".into()));
        }
        // a single objective has a single trade-off, so one cluster is allowed
        if k == 0 || (k == 1 && m > 1) {
            return Err(Error::Config(format!("K must be greater than 1 (K={k})")));
        }
        if n % k != 0 {
            return Err(Error::Config(format!("K must divide N (K={k}, N={n})")));
        }
        if extremes > k || extremes > m {
            return Err(Error::Config(format!(
                "kappa must not exceed min(K, m) (kappa={extremes}, K={k}, m={m})"
            )));
        }
        Ok(())
    }

    /// Environments sharing one trade-off (N / K).
    pub fn cluster_size(&self) -> usize {
        self.num_envs / self.clusters
    }
}

/// `n` i.i.d. draws from the symmetric Dirichlet(1, …, 1), i.e. uniform on
/// the simplex, via normalized unit exponentials.
pub fn dirichlet_sample(rng: &mut Rng, m: usize, n: usize) -> Result<Vec<TradeoffVector>> {
    if m < 2 {
        return Err(Error::InvalidDimension(format!(
            "Dirichlet sampling needs m >= 2, got {m}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut e: Vec<f64> = (0..m).map(|_| rng.exponential()).collect();
        let mut total: f64 = e.iter().sum();
        while total <= 0.0 {
            e = (0..m).map(|_| rng.exponential()).collect();
            total = e.iter().sum();
        }
        e.iter_mut().for_each(|x| *x /= total);
        out.push(TradeoffVector(e));
    }
    Ok(out)
}

/// Per-environment trade-offs for one iteration: `K − κ` Dirichlet draws then
/// the first `κ` vertices, each repeated contiguously `N / K` times.
pub fn build_tradeoff_batch(cfg: &SamplingConfig, rng: &mut Rng) -> Result<Vec<TradeoffVector>> {
    cfg.validate()?;
    let m = cfg.objectives;
    let distinct: Vec<TradeoffVector> = if m == 1 {
        vec![TradeoffVector(vec![1.0]); cfg.clusters]
    } else {
        let mut d = dirichlet_sample(rng, m, cfg.clusters - cfg.extremes)?;
        d.extend((0..cfg.extremes).map(|j| TradeoffVector::vertex(m, j)));
        d
    };
    let reps = cfg.cluster_size();
    Ok(distinct
        .into_iter()
        .flat_map(|w| std::iter::repeat_n(w, reps))
        .collect())
}

/// All simplex points whose coordinates are multiples of `1/resolution`,
/// ordered with the first coordinate descending.
pub fn simplex_grid(m: usize, resolution: usize) -> Result<Vec<TradeoffVector>> {
    if m == 0 {
        return Err(Error::InvalidDimension("simplex grid needs m >= 1".into()));
    }
    if resolution == 0 {
        return Err(Error::InvalidDimension("grid resolution must be >= 1".into()));
    }
    let mut out = Vec::new();
    let mut counts = vec![0usize; m];
    fill_grid(&mut counts, 0, resolution, resolution, &mut out);
    Ok(out)
}

fn fill_grid(
    counts: &mut [usize],
    pos: usize,
    remaining: usize,
    resolution: usize,
    out: &mut Vec<TradeoffVector>,
) {
    if pos == counts.len() - 1 {
        counts[pos] = remaining;
        let r = resolution as f64;
        out.push(TradeoffVector(counts.iter().map(|&c| c as f64 / r).collect()));
        return;
    }
    for k in (0..=remaining).rev() {
        counts[pos] = k;
        fill_grid(counts, pos + 1, remaining - k, resolution, out);
    }
}
