//! Training drivers: sampled natural-gradient updates and model-based
//! linear-quadratic control, both per target context, plus the shared
//! evaluation protocol.

use envsim::{ContextParams, HORIZON};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reward::RewardTargets;

use crate::lqr::{
    fit_linear_dynamics, lqr_backward, LinearGaussianController, LqrConfig, QuadraticCost,
    Transition,
};
use crate::npg::{natural_pg_update, PgConfig};
use crate::policy::GaussianPolicy;
use crate::rollout::{run_rollout, Agent, RewardSource, StateEncoder, UniformRandomAgent};
use crate::{PolicyError, Result};

#[derive(Debug, Clone)]
pub struct PgTrainConfig {
    pub iterations: usize,
    pub rollouts_per_iter: usize,
    pub hidden: usize,
    pub init_std: f64,
    pub seed: u64,
    pub pg: PgConfig,
}

impl Default for PgTrainConfig {
    fn default() -> Self {
        PgTrainConfig {
            iterations: 20,
            rollouts_per_iter: 10,
            hidden: 32,
            init_std: 0.1,
            seed: 0,
            pg: PgConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LqrTrainConfig {
    pub iterations: usize,
    pub rollouts_per_iter: usize,
    pub seed: u64,
    pub lqr: LqrConfig,
}

impl Default for LqrTrainConfig {
    fn default() -> Self {
        LqrTrainConfig {
            iterations: 10,
            rollouts_per_iter: 10,
            seed: 0,
            lqr: LqrConfig::default(),
        }
    }
}

/// One point on a learning curve. `iteration` 0 is the untrained agent.
#[derive(Debug, Clone, Copy)]
pub struct TrainPoint {
    pub iteration: usize,
    pub mean_reward: f64,
    pub mean_norm_distance: f64,
    pub success_rate: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalStats {
    pub mean_reward: f64,
    pub mean_norm_distance: f64,
    pub success_rate: f64,
}

/// Noise-free evaluation episode. Resets are deterministic per context,
/// so a single deterministic rollout characterizes the agent exactly.
pub fn evaluate(
    ctx: &ContextParams,
    agent: &dyn Agent,
    encoder: &StateEncoder,
    source: &RewardSource,
) -> Result<EvalStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = run_rollout(ctx, agent, encoder, source, true, &mut rng)?;
    let norm = r.final_distance as f64 / (r.initial_distance as f64).max(1e-6);
    let success = if (norm as f32) < demodata::SUCCESS_THRESHOLD { 1.0 } else { 0.0 };
    Ok(EvalStats {
        mean_reward: r.total_reward(),
        mean_norm_distance: norm,
        success_rate: success,
    })
}

fn point(iteration: usize, stats: &EvalStats, kl: f64) -> TrainPoint {
    TrainPoint {
        iteration,
        mean_reward: stats.mean_reward,
        mean_norm_distance: stats.mean_norm_distance,
        success_rate: stats.success_rate,
        kl,
    }
}

fn iter_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Stream 0 is reserved for initialization draws.
    rng.set_stream(1 + iteration as u64);
    rng
}

/// Natural-gradient training against one target context. Returns the
/// final policy and the evaluation curve (one leading point for the
/// untrained policy, then one per update).
pub fn train_natural_pg(
    ctx: &ContextParams,
    encoder: &StateEncoder,
    source: &RewardSource,
    cfg: &PgTrainConfig,
) -> Result<(GaussianPolicy, Vec<TrainPoint>)> {
    if cfg.rollouts_per_iter == 0 {
        return Err(PolicyError::Config("rollouts_per_iter must be positive".into()));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy =
        GaussianPolicy::new(encoder.dim(ctx.task), cfg.hidden, 2, cfg.init_std, &mut init_rng)?;
    let mut curve = vec![point(0, &evaluate(ctx, &policy, encoder, source)?, 0.0)];
    for i in 0..cfg.iterations {
        let mut rng = iter_rng(cfg.seed, i);
        let mut rollouts = Vec::with_capacity(cfg.rollouts_per_iter);
        for _ in 0..cfg.rollouts_per_iter {
            rollouts.push(run_rollout(ctx, &policy, encoder, source, false, &mut rng)?);
        }
        let report = natural_pg_update(&mut policy, &rollouts, &cfg.pg)?;
        let stats = evaluate(ctx, &policy, encoder, source)?;
        curve.push(point(i + 1, &stats, report.kl));
    }
    Ok((policy, curve))
}

/// Model-based training against one target context: collect transitions
/// (random at first, then on-controller), refit per-timestep affine
/// dynamics over everything seen so far, and re-solve the control
/// problem. The curve's leading point is the do-nothing agent.
pub fn train_lqr(
    ctx: &ContextParams,
    encoder: &StateEncoder,
    source: &RewardSource,
    cost: &QuadraticCost,
    cfg: &LqrTrainConfig,
) -> Result<(LinearGaussianController, Vec<TrainPoint>)> {
    if cfg.rollouts_per_iter == 0 || cfg.iterations == 0 {
        return Err(PolicyError::Config("iterations and rollouts_per_iter must be positive".into()));
    }
    let t_len = HORIZON as usize;
    let explorer = UniformRandomAgent;
    let mut pool: Vec<Vec<Transition>> = vec![Vec::new(); t_len];
    let mut controller: Option<LinearGaussianController> = None;
    let mut curve = vec![point(0, &evaluate(ctx, &explorer, encoder, source)?, 0.0)];
    for i in 0..cfg.iterations {
        let mut rng = iter_rng(cfg.seed, i);
        for _ in 0..cfg.rollouts_per_iter {
            let agent: &dyn Agent = match &controller {
                Some(c) => c,
                None => &explorer,
            };
            let r = run_rollout(ctx, agent, encoder, source, false, &mut rng)?;
            for t in 0..r.actions.len() {
                pool[t].push(Transition {
                    state: r.states[t].clone(),
                    action: r.actions[t].to_vec(),
                    next_state: r.states[t + 1].clone(),
                });
            }
        }
        let dynamics = fit_linear_dynamics(&pool, cfg.lqr.ridge)?;
        let next = lqr_backward(&dynamics, cost, &cfg.lqr)?;
        let stats = evaluate(ctx, &next, encoder, source)?;
        curve.push(point(i + 1, &stats, 0.0));
        controller = Some(next);
    }
    Ok((controller.expect("at least one iteration ran"), curve))
}

/// Quadratic cost that tracks per-timestep feature targets: the state's
/// feature block (everything past `position_dim`) is pulled toward the
/// translated demonstration features, optionally weighted by the same
/// quadratic ramp the reward uses.
pub fn feature_tracking_cost(
    targets: &RewardTargets,
    ramp: bool,
    position_dim: usize,
    action_penalty: f64,
) -> QuadraticCost {
    let t_len = targets.horizon as usize;
    let n = position_dim + targets.feature_dim;
    let mut state_quad = Vec::with_capacity(t_len + 1);
    let mut state_lin = Vec::with_capacity(t_len + 1);
    for t in 0..=t_len {
        let w = if ramp { (t as f64 / t_len as f64).powi(2) } else { 1.0 };
        let mut quad = DMatrix::zeros(n, n);
        let mut lin = DVector::zeros(n);
        let feat = targets.feat_at(t as u32);
        for j in 0..targets.feature_dim {
            quad[(position_dim + j, position_dim + j)] = w;
            lin[position_dim + j] = w * feat[j] as f64;
        }
        state_quad.push(quad);
        state_lin.push(lin);
    }
    QuadraticCost { state_quad, state_lin, action_penalty }
}
