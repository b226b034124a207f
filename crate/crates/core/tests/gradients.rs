//! Finite-difference checks of every analytic gradient, including the full
//! hypernetwork → generated network → loss composition.

use morl_core::envs::{make_env, BatchedEnv};
use morl_core::hypernet::{hypernet_backward, hypernet_forward, init_hypernet, HypernetParams, HypernetSpec, TargetSpec};
use morl_core::nn::{self, Activation, MlpSpec, PolicySpec};
use morl_core::simplex::TradeoffVector;
use morl_core::trainer::{
    actor_hypernet_spec, actor_loss, collect_rollouts, critic_hypernet_spec, critic_loss, gae_per_objective,
    normalize_and_scalarize, AdvantageNorm, NetworkConfig, RolloutBatch,
};
use morl_core::Rng;

const H: f64 = 1e-6;

/// Relative error with a 1e-5 floor on the denominator: central differences
/// carry roundoff of order ε·|L|/h, so coordinates near zero compare absolutely.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

/// Central differences of `f` over every coordinate of `x`, compared to `grad`.
fn check(name: &str, x: &[f64], grad: &[f64], mut f: impl FnMut(&[f64]) -> f64, tol: f64) {
    assert_eq!(x.len(), grad.len());
    let mut worst: f64 = 0.0;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + H;
        let up = f(&probe);
        probe[i] = x[i] - H;
        let down = f(&probe);
        probe[i] = x[i];
        let fd = (up - down) / (2.0 * H);
        let e = rel_err(fd, grad[i]);
        assert!(e < tol, "{name}: coordinate {i}: analytic {} vs numeric {fd}", grad[i]);
        worst = worst.max(e);
    }
}

#[test]
fn mlp_params_and_input() {
    let spec = MlpSpec::tanh_mlp(3, &[5, 4], 2, Activation::Tanh).unwrap();
    let mut rng = Rng::new(1);
    let params: Vec<f64> = (0..spec.param_count()).map(|_| 0.5 * rng.normal()).collect();
    let input = vec![0.3, -0.7, 1.1];
    let weights = [0.6, -1.3];
    let loss = |p: &[f64], x: &[f64]| {
        let out = nn::mlp_forward(&spec, p, x).unwrap();
        out.iter().zip(weights).map(|(o, w)| w * o).sum::<f64>()
    };
    let trace = nn::mlp_forward_trace(&spec, &params, &input).unwrap();
    let mut g = vec![0.0; params.len()];
    let gx = nn::mlp_backward(&spec, &params, &trace, &weights, &mut g).unwrap();
    check("mlp params", &params, &g, |p| loss(p, &input), 1e-4);
    check("mlp input", &input, &gx, |x| loss(&params, x), 1e-4);
}

#[test]
fn policy_log_prob_and_entropy() {
    let spec = PolicySpec::new(2, &[6], 2).unwrap();
    let mut rng = Rng::new(2);
    let mut params: Vec<f64> = (0..spec.param_count()).map(|_| 0.4 * rng.normal()).collect();
    let n = params.len();
    params[n - 2] = -0.3;
    params[n - 1] = 0.2;
    let obs = vec![0.5, -0.25];
    let action = vec![0.4, -0.8];
    let f = |p: &[f64]| {
        let d = nn::policy_forward(&spec, p, &obs).unwrap();
        nn::log_prob(&d, &action) + 0.7 * nn::gaussian_entropy(&d)
    };
    let (dist, trace) = nn::policy_forward_trace(&spec, &params, &obs).unwrap();
    let (_, g_loc, g_ls) = nn::log_prob_with_grad(&dist, &action);
    let g_ls: Vec<f64> = g_ls.iter().map(|g| g + 0.7).collect();
    let mut g = vec![0.0; n];
    nn::policy_backward(&spec, &params, &dist, &trace, &g_loc, &g_ls, &mut g).unwrap();
    check("policy", &params, &g, f, 1e-4);
}

#[test]
fn clamped_log_std_has_zero_gradient() {
    let spec = PolicySpec::new(1, &[], 1).unwrap();
    let params = vec![0.2, 0.1, -7.0];
    let (dist, trace) = nn::policy_forward_trace(&spec, &params, &[1.0]).unwrap();
    let (_, g_loc, g_ls) = nn::log_prob_with_grad(&dist, &[0.3]);
    let mut g = vec![0.0; 3];
    nn::policy_backward(&spec, &params, &dist, &trace, &g_loc, &g_ls, &mut g).unwrap();
    assert_eq!(g[2], 0.0);
}

fn hyper(target: TargetSpec, seed: u64) -> (HypernetSpec, HypernetParams) {
    let spec = HypernetSpec::new(3, 4, &[4, 4], target).unwrap();
    let mut hp = init_hypernet(&spec, &mut Rng::new(seed), 1.0, -0.2);
    // larger M than the default init so every block matters numerically
    let mut rng = Rng::new(seed + 100);
    for v in hp.as_flat_mut().iter_mut() {
        *v += 0.2 * rng.normal();
    }
    (spec, hp)
}

#[test]
fn hypernet_backward_matches_differences() {
    let target = MlpSpec::tanh_mlp(2, &[3], 2, Activation::Identity).unwrap();
    let (spec, hp) = hyper(TargetSpec::Critic(target), 3);
    let w = TradeoffVector::new(vec![0.2, 0.5, 0.3]).unwrap();
    let coef: Vec<f64> = (0..spec.target_len()).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
    let mut g = vec![0.0; spec.param_count()];
    hypernet_backward(&spec, &hp, &w, &coef, &mut g).unwrap();
    check(
        "hypernet",
        hp.as_flat(),
        &g,
        |p| {
            let hp = HypernetParams::from_flat(&spec, p.to_vec()).unwrap();
            let theta = hypernet_forward(&spec, &hp, &w).unwrap();
            theta.iter().zip(&coef).map(|(t, c)| t * c).sum()
        },
        1e-4,
    );
}

fn small_net() -> NetworkConfig {
    NetworkConfig {
        feature_dim: 3,
        feature_hidden: vec![3, 3],
        actor_hidden: vec![4],
        critic_hidden: vec![4],
        init_log_std: -0.3,
    }
}

fn perturbed(spec: &HypernetSpec, seed: u64, scale: f64, log_std: f64) -> HypernetParams {
    let mut hp = init_hypernet(spec, &mut Rng::new(seed), 1.0, log_std);
    let mut rng = Rng::new(seed ^ 0xabc);
    for v in hp.as_flat_mut().iter_mut() {
        *v += scale * rng.normal();
    }
    hp
}

fn batch_for(env_name: &str) -> (HypernetSpec, HypernetParams, HypernetSpec, HypernetParams, RolloutBatch) {
    let env = make_env(env_name).unwrap();
    let m = env.spec().objectives;
    let a_spec = actor_hypernet_spec(env.as_ref(), &small_net()).unwrap();
    let c_spec = critic_hypernet_spec(env.as_ref(), &small_net()).unwrap();
    let a_hp = perturbed(&a_spec, 5, 0.05, -0.3);
    let c_hp = perturbed(&c_spec, 6, 0.05, 0.0);
    let mut benv = BatchedEnv::new(env.clone(), 4, &Rng::new(7));
    let tradeoffs = vec![
        TradeoffVector::new(vec![0.3, 0.7]).unwrap(),
        TradeoffVector::new(vec![0.3, 0.7]).unwrap(),
        TradeoffVector::vertex(2, 0),
        TradeoffVector::vertex(2, 0),
    ];
    let mut running = vec![vec![0.0; m]; 4];
    let batch = collect_rollouts((&a_spec, &a_hp), (&c_spec, &c_hp), &mut benv, &tradeoffs, 6, &Rng::new(8), &mut running, false)
        .unwrap();
    (a_spec, a_hp, c_spec, c_hp, batch)
}

#[test]
fn actor_loss_gradient_through_hypernetwork() {
    let (spec, hp, _, _, batch) = batch_for("mo-pointmass");
    let adv = gae_per_objective(&batch, 0.99, 0.95);
    let scalar = normalize_and_scalarize(&adv.advantages, 2, AdvantageNorm::PerObjective, |r| batch.tradeoff_of_row(r));
    let rows: Vec<usize> = (0..batch.rows()).step_by(2).collect();
    // shift the parameters so ratios differ from one and some rows clip
    let mut moved = hp.clone();
    let mut rng = Rng::new(11);
    for v in moved.as_flat_mut().iter_mut() {
        *v += 0.01 * rng.normal();
    }
    let out = actor_loss(&spec, &moved, &batch, &scalar, &rows, 0.2, 0.01).unwrap();
    check(
        "actor loss",
        moved.as_flat(),
        &out.grad,
        |p| {
            let hp = HypernetParams::from_flat(&spec, p.to_vec()).unwrap();
            actor_loss(&spec, &hp, &batch, &scalar, &rows, 0.2, 0.01).unwrap().loss
        },
        1e-4,
    );
}

#[test]
fn actor_loss_at_old_parameters_is_negative_mean_advantage() {
    let (spec, hp, _, _, batch) = batch_for("mo-lqr1d");
    let scalar: Vec<f64> = (0..batch.rows()).map(|i| (i as f64 * 0.37).sin()).collect();
    let rows: Vec<usize> = (0..batch.rows()).collect();
    let out = actor_loss(&spec, &hp, &batch, &scalar, &rows, 0.2, 0.0).unwrap();
    let mean = scalar.iter().sum::<f64>() / scalar.len() as f64;
    assert!(out.max_ratio_deviation < 1e-9);
    assert!((out.loss + mean).abs() < 1e-9);
    assert_eq!(out.clip_fraction, 0.0);
}

#[test]
fn clipped_row_contributes_bound_and_no_gradient() {
    let (spec, hp, _, _, batch) = batch_for("mo-lqr1d");
    // find a row whose log-prob rises under a parameter shift
    let mut moved = hp.clone();
    let n = moved.as_flat().len();
    moved.as_flat_mut()[n - 1] -= 0.6;
    let rows: Vec<usize> = (0..batch.rows()).collect();
    let ones = vec![1.0; batch.rows()];
    let probe = actor_loss(&spec, &moved, &batch, &ones, &rows, 0.2, 0.0).unwrap();
    assert!(probe.clip_fraction > 0.0);
    // with every ratio above 1+ε and positive advantages everything clips
    for &row in &rows {
        let single = actor_loss(&spec, &moved, &batch, &ones, &[row], 0.2, 0.0).unwrap();
        if single.clip_fraction == 1.0 {
            assert!((single.loss + 1.2).abs() < 1e-12);
            assert!(single.grad.iter().all(|g| *g == 0.0));
            return;
        }
    }
    panic!("no clipped row found");
}

#[test]
fn critic_loss_gradient_through_hypernetwork() {
    let (_, _, spec, hp, batch) = batch_for("mo-dst-continuous");
    let adv = gae_per_objective(&batch, 0.99, 0.95);
    let rows: Vec<usize> = (1..batch.rows()).step_by(3).collect();
    let out = critic_loss(&spec, &hp, &batch, &adv.targets, &rows).unwrap();
    check(
        "critic loss",
        hp.as_flat(),
        &out.grad,
        |p| {
            let hp = HypernetParams::from_flat(&spec, p.to_vec()).unwrap();
            critic_loss(&spec, &hp, &batch, &adv.targets, &rows).unwrap().loss
        },
        1e-4,
    );
}

#[test]
fn critic_loss_zero_at_own_values() {
    let (_, _, spec, hp, batch) = batch_for("mo-lqr1d");
    let rows: Vec<usize> = (0..batch.rows()).collect();
    let out = critic_loss(&spec, &hp, &batch, &batch.values, &rows).unwrap();
    assert!(out.loss < 1e-24);
    assert!(out.grad.iter().all(|g| g.abs() < 1e-12));
}
