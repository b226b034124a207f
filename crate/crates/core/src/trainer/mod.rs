//! The training loop: sample trade-offs, roll out the generated policies,
//! estimate per-objective advantages, and update both hypernetworks.

mod adam;
mod checkpoint;
mod config;
mod evaluate;
mod gae;
mod loss;
mod rollout;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};

pub use adam::{adam_apply, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{AdvantageNorm, EvalConfig, NetworkConfig, TrainerConfig};
pub use evaluate::{evaluate, evaluate_tradeoff, evaluate_tradeoffs, EvalRow};
pub use gae::{gae_per_objective, gae_trajectory, normalize_and_scalarize, Advantages, ADV_STD_EPS};
pub use loss::{actor_loss, critic_loss, ActorLoss, CriticLoss};
pub use rollout::{cluster_ids, collect_rollouts, RolloutBatch};

use crate::envs::{make_env, BatchedEnv, MoEnv};
use crate::error::{Error, Result};
use crate::hypernet::{init_hypernet, HypernetParams, HypernetSpec, TargetSpec};
use crate::nn::{Activation, MlpSpec, PolicySpec};
use crate::pareto::{hypervolume, nondominated_filter, ParetoFront};
use crate::rng::Rng;
use crate::simplex::{build_tradeoff_batch, simplex_grid, TradeoffVector};

/// Scale of the generated actor's output layer at initialization.
pub const ACTOR_OUTPUT_SCALE: f64 = 0.01;

/// Everything needed to start a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainJob {
    pub env_name: String,
    pub trainer: TrainerConfig,
    pub network: NetworkConfig,
    pub eval: EvalConfig,
    /// Hypervolume reference; the environment's own when `None`.
    pub reference: Option<Vec<f64>>,
}

impl TrainJob {
    pub fn new(env_name: &str, trainer: TrainerConfig) -> Self {
        TrainJob {
            env_name: env_name.to_string(),
            trainer,
            network: NetworkConfig::default(),
            eval: EvalConfig::default(),
            reference: None,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Single-threaded rollouts and zero wall-clock entries in the log, so
    /// repeated runs are byte-identical.
    pub deterministic: bool,
    /// Where `checkpoint.json` and `metrics.csv` go, if anywhere.
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub wall_ms: u64,
    /// Mean scalarized return of the last finished episode of each
    /// environment in the cluster; `None` until one has finished.
    pub cluster_returns: Vec<Option<f64>>,
    pub archive_hv: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<MetricsRow>,
    /// Nondominated evaluation returns gathered over the run.
    pub archive: Vec<Vec<f64>>,
    /// `max |r − 1|` over the first minibatch of every iteration.
    pub first_minibatch_ratio_deviation: Vec<f64>,
}

pub fn actor_hypernet_spec(env: &dyn MoEnv, net: &NetworkConfig) -> Result<HypernetSpec> {
    let s = env.spec();
    let policy = PolicySpec::new(s.obs_dim, &net.actor_hidden, s.act_dim)?;
    HypernetSpec::new(s.objectives, net.feature_dim, &net.feature_hidden, TargetSpec::Actor(policy))
}

pub fn critic_hypernet_spec(env: &dyn MoEnv, net: &NetworkConfig) -> Result<HypernetSpec> {
    let s = env.spec();
    let critic = MlpSpec::tanh_mlp(s.obs_dim, &net.critic_hidden, s.objectives, Activation::Identity)?;
    HypernetSpec::new(s.objectives, net.feature_dim, &net.feature_hidden, TargetSpec::Critic(critic))
}

/// Scales `grad` so its L2 norm is at most `max_norm` (0 disables).
fn clip_grad_norm(grad: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

/// Splits `0..len` after a shuffle into `count` nearly equal minibatches.
fn minibatches(rng: &mut Rng, len: usize, count: usize) -> Vec<Vec<usize>> {
    let mut rows: Vec<usize> = (0..len).collect();
    rng.shuffle(&mut rows);
    let base = len / count;
    let extra = len % count;
    let mut out = Vec::with_capacity(count);
    let mut start = 0;
    for i in 0..count {
        let size = base + usize::from(i < extra);
        out.push(rows[start..start + size].to_vec());
        start += size;
    }
    out
}

struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    fn create(path: &Path, clusters: usize) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        let cols: Vec<String> = (1..=clusters).map(|c| format!("cluster_{c}")).collect();
        writeln!(out, "iteration,wall_ms,{},archive_hv", cols.join(","))?;
        out.flush()?;
        Ok(MetricsWriter { out })
    }

    fn write(&mut self, row: &MetricsRow) -> Result<()> {
        let cols: Vec<String> = row
            .cluster_returns
            .iter()
            .map(|c| c.map_or_else(String::new, |v| v.to_string()))
            .collect();
        writeln!(
            self.out,
            "{},{},{},{}",
            row.iteration,
            row.wall_ms,
            cols.join(","),
            row.archive_hv
        )?;
        self.out.flush()?;
        Ok(())
    }
}

/// Mutable run state; cloning it yields a restorable snapshot.
#[derive(Clone)]
struct State {
    actor: HypernetParams,
    critic: HypernetParams,
    actor_adam: AdamState,
    critic_adam: AdamState,
    rng: Rng,
    iteration: usize,
}

struct IterationStats {
    cluster_returns: Vec<Option<f64>>,
    actor_loss: f64,
    critic_loss: f64,
    first_ratio_deviation: f64,
}

struct Trainer<'a> {
    job: &'a TrainJob,
    env: BatchedEnv,
    actor_spec: HypernetSpec,
    critic_spec: HypernetSpec,
    episode_returns: Vec<Vec<f64>>,
    /// Last finished episode return of each environment.
    last_returns: Vec<Option<Vec<f64>>>,
    parallel: bool,
}

impl Trainer<'_> {
    fn iterate(&mut self, st: &mut State) -> Result<IterationStats> {
        let cfg = &self.job.trainer;
        let m = self.actor_spec.objectives();
        let mut it_rng = st.rng.split();
        let tradeoffs = build_tradeoff_batch(&cfg.sampling(m), &mut it_rng)?;
        let rollout_rng = it_rng.split();
        let batch = collect_rollouts(
            (&self.actor_spec, &st.actor),
            (&self.critic_spec, &st.critic),
            &mut self.env,
            &tradeoffs,
            cfg.rollout_len,
            &rollout_rng,
            &mut self.episode_returns,
            self.parallel,
        )?;
        batch.check()?;
        for (i, finished) in batch.finished_returns.iter().enumerate() {
            if let Some(last) = finished.last() {
                self.last_returns[i] = Some(last.clone());
            }
        }

        let adv = gae_per_objective(&batch, cfg.gamma, cfg.gae_lambda);
        let scalar = normalize_and_scalarize(&adv.advantages, m, cfg.advantage_norm, |r| {
            batch.tradeoff_of_row(r)
        });

        let mut actor_total = 0.0;
        let mut critic_total = 0.0;
        let mut updates = 0usize;
        let mut first_dev = f64::NAN;
        for _ in 0..cfg.epochs {
            for rows in minibatches(&mut it_rng, batch.rows(), cfg.minibatch_count) {
                let mut a = actor_loss(
                    &self.actor_spec,
                    &st.actor,
                    &batch,
                    &scalar,
                    &rows,
                    cfg.clip_eps,
                    cfg.entropy_coef,
                )?;
                let mut c = critic_loss(&self.critic_spec, &st.critic, &batch, &adv.targets, &rows)?;
                if first_dev.is_nan() {
                    first_dev = a.max_ratio_deviation;
                }
                if a.grad.iter().chain(&c.grad).any(|g| !g.is_finite()) {
                    return Err(Error::numeric("loss gradient"));
                }
                clip_grad_norm(&mut a.grad, cfg.max_grad_norm);
                clip_grad_norm(&mut c.grad, cfg.max_grad_norm);
                adam_apply(&mut st.actor_adam, st.actor.as_flat_mut(), &a.grad, cfg.actor_lr)?;
                adam_apply(&mut st.critic_adam, st.critic.as_flat_mut(), &c.grad, cfg.critic_lr)?;
                actor_total += a.loss;
                critic_total += c.loss;
                updates += 1;
            }
        }

        let k = batch.cluster_of_env.iter().copied().max().map_or(0, |c| c + 1);
        let mut sums = vec![(0.0, 0usize); k];
        for (i, ret) in self.last_returns.iter().enumerate() {
            if let Some(ret) = ret {
                let s = &mut sums[batch.cluster_of_env[i]];
                s.0 += tradeoffs[i].dot(ret);
                s.1 += 1;
            }
        }
        Ok(IterationStats {
            cluster_returns: sums
                .into_iter()
                .map(|(s, n)| (n > 0).then(|| s / n as f64))
                .collect(),
            actor_loss: actor_total / updates as f64,
            critic_loss: critic_total / updates as f64,
            first_ratio_deviation: first_dev,
        })
    }
}

fn snapshot(job: &TrainJob, actor_spec: &HypernetSpec, critic_spec: &HypernetSpec, st: &State) -> Checkpoint {
    Checkpoint {
        version: CHECKPOINT_VERSION.to_string(),
        env_name: job.env_name.clone(),
        actor_spec: actor_spec.clone(),
        critic_spec: critic_spec.clone(),
        actor_params: st.actor.clone(),
        critic_params: st.critic.clone(),
        trainer: job.trainer.clone(),
        network: job.network.clone(),
        iteration: st.iteration,
        rng: st.rng.state(),
        actor_adam: st.actor_adam.clone(),
        critic_adam: st.critic_adam.clone(),
    }
}

/// Runs `job.trainer.iterations` sample-rollout-update iterations.
///
/// A non-finite value anywhere in an iteration aborts the run with a numeric
/// error after saving the state from before that iteration.
pub fn train(job: &TrainJob, opts: &TrainOptions) -> Result<TrainOutcome> {
    let env = make_env(&job.env_name)?;
    let m = env.spec().objectives;
    let cfg = &job.trainer;
    cfg.validate(m)?;
    let reference = job.reference.clone().unwrap_or_else(|| env.reference_point());
    if reference.len() != m {
        return Err(Error::shape("hypervolume reference", m, reference.len()));
    }
    let actor_spec = actor_hypernet_spec(env.as_ref(), &job.network)?;
    let critic_spec = critic_hypernet_spec(env.as_ref(), &job.network)?;

    let mut rng = Rng::new(cfg.seed);
    let actor = init_hypernet(&actor_spec, &mut rng.split(), ACTOR_OUTPUT_SCALE, job.network.init_log_std);
    let critic = init_hypernet(&critic_spec, &mut rng.split(), 1.0, 0.0);
    let env_rng = rng.split();
    let eval_rng = rng.split();
    let mut st = State {
        actor_adam: AdamState::new(actor.as_flat().len()),
        critic_adam: AdamState::new(critic.as_flat().len()),
        actor,
        critic,
        rng,
        iteration: 0,
    };
    let mut trainer = Trainer {
        job,
        env: BatchedEnv::new(env.clone(), cfg.num_envs, &env_rng),
        actor_spec,
        critic_spec,
        episode_returns: vec![vec![0.0; m]; cfg.num_envs],
        last_returns: vec![None; cfg.num_envs],
        parallel: !opts.deterministic,
    };

    let mut writer = match &opts.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(MetricsWriter::create(&dir.join("metrics.csv"), cfg.clusters)?)
        }
        None => None,
    };
    let grid = simplex_grid(m, job.eval.grid_resolution)?;
    let started = Instant::now();
    let mut archive: Vec<Vec<f64>> = Vec::new();
    let mut archive_hv = 0.0;
    let mut metrics = Vec::with_capacity(cfg.iterations);
    let mut deviations = Vec::with_capacity(cfg.iterations);

    for iteration in 1..=cfg.iterations {
        let before = st.clone();
        let stats = match trainer.iterate(&mut st) {
            Ok(stats) => stats,
            Err(e @ Error::Numeric { .. }) => {
                if let Some(dir) = &opts.out_dir {
                    snapshot(job, &trainer.actor_spec, &trainer.critic_spec, &before)
                        .save(&dir.join("checkpoint.json"))?;
                    warn!("iteration {iteration}: {e}; saved the last good checkpoint");
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        st.iteration = iteration;

        if iteration % cfg.log_interval == 0 || iteration == cfg.iterations {
            let rows = evaluate_tradeoffs(
                &trainer.actor_spec,
                &st.actor,
                env.as_ref(),
                &grid,
                job.eval.episodes_per_point,
                &eval_rng,
            )?;
            archive.extend(rows.into_iter().map(|r| r.returns));
            archive = nondominated_filter(&archive);
            archive_hv = hypervolume(&ParetoFront::new(archive.clone(), reference.clone()))?.value;
        }
        let row = MetricsRow {
            iteration,
            wall_ms: if opts.deterministic {
                0
            } else {
                started.elapsed().as_millis() as u64
            },
            cluster_returns: stats.cluster_returns,
            archive_hv,
            actor_loss: stats.actor_loss,
            critic_loss: stats.critic_loss,
        };
        if iteration % cfg.log_interval == 0 || iteration == 1 {
            info!(
                "iteration {iteration}: actor loss {:.4e}, critic loss {:.4e}, archive hv {:.6e}",
                row.actor_loss, row.critic_loss, row.archive_hv
            );
        }
        if let Some(w) = writer.as_mut() {
            w.write(&row)?;
        }
        metrics.push(row);
        deviations.push(stats.first_ratio_deviation);
    }

    let checkpoint = snapshot(job, &trainer.actor_spec, &trainer.critic_spec, &st);
    if let Some(dir) = &opts.out_dir {
        checkpoint.save(&dir.join("checkpoint.json"))?;
    }
    Ok(TrainOutcome {
        checkpoint,
        metrics,
        archive,
        first_minibatch_ratio_deviation: deviations,
    })
}

/// Scalarized evaluation return of a trained actor at `w`.
pub fn scalarized_return(
    ckpt: &Checkpoint,
    env: &dyn MoEnv,
    w: &TradeoffVector,
    episodes: usize,
    rng: &Rng,
) -> Result<f64> {
    let r = evaluate_tradeoff(&ckpt.actor_spec, &ckpt.actor_params, env, w, episodes, rng)?;
    Ok(w.dot(&r))
}
