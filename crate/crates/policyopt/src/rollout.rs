//! Episode collection: drive the simulator with an agent, build state
//! vectors, and attach rewards.

use envsim::{
    ground_truth_distance, render, reset, scripted_expert, step, ActionVec, ContextParams,
    EnvState, ObservationImage, Task, ACTION_MAX, HORIZON,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use reward::RewardEvaluator;
use translate::TranslationModel;

use crate::policy::GaussianPolicy;
use crate::Result;

/// Everything an agent may look at when choosing an action.
pub struct StepView<'a> {
    pub env: &'a EnvState,
    pub ctx: &'a ContextParams,
    pub state: &'a [f64],
    pub t: usize,
}

pub trait Agent {
    fn act(&self, view: &StepView, rng: &mut ChaCha8Rng) -> ActionVec;
    /// Noise-free action used for evaluation rollouts.
    fn act_deterministic(&self, view: &StepView) -> ActionVec;
}

impl Agent for GaussianPolicy {
    fn act(&self, view: &StepView, rng: &mut ChaCha8Rng) -> ActionVec {
        let a = self.sample(view.state, rng);
        ActionVec([a[0] as f32, a[1] as f32])
    }

    fn act_deterministic(&self, view: &StepView) -> ActionVec {
        let mu = self.forward(view.state).mu;
        ActionVec([mu[0] as f32, mu[1] as f32])
    }
}

/// The demonstration expert, usable as an upper-line comparison.
pub struct ScriptedAgent;

impl Agent for ScriptedAgent {
    fn act(&self, view: &StepView, _rng: &mut ChaCha8Rng) -> ActionVec {
        scripted_expert(view.env, view.ctx)
    }

    fn act_deterministic(&self, view: &StepView) -> ActionVec {
        scripted_expert(view.env, view.ctx)
    }
}

/// Uniform random actions, the floor-line comparison.
pub struct UniformRandomAgent;

impl Agent for UniformRandomAgent {
    fn act(&self, _view: &StepView, rng: &mut ChaCha8Rng) -> ActionVec {
        ActionVec([
            rng.random_range(-ACTION_MAX..ACTION_MAX),
            rng.random_range(-ACTION_MAX..ACTION_MAX),
        ])
    }

    fn act_deterministic(&self, _view: &StepView) -> ActionVec {
        ActionVec([0.0, 0.0])
    }
}

/// How environment snapshots turn into the agent's state vector.
pub enum StateEncoder<'a> {
    /// Agent position, plus the object position for pushing.
    Positions,
    /// Positions followed by the source encoder's features of the
    /// rendered observation.
    WithFeatures(&'a TranslationModel),
}

impl StateEncoder<'_> {
    pub fn position_dim(task: Task) -> usize {
        match task {
            Task::Reach => 2,
            Task::Push => 4,
        }
    }

    pub fn dim(&self, task: Task) -> usize {
        let base = Self::position_dim(task);
        match self {
            StateEncoder::Positions => base,
            StateEncoder::WithFeatures(model) => base + model.arch.feature_dim,
        }
    }

    pub fn encode(
        &self,
        env: &EnvState,
        ctx: &ContextParams,
        obs: &ObservationImage,
    ) -> Result<Vec<f64>> {
        let mut s = vec![env.agent_position[0] as f64, env.agent_position[1] as f64];
        if ctx.task == Task::Push {
            s.push(env.object_position[0] as f64);
            s.push(env.object_position[1] as f64);
        }
        if let StateEncoder::WithFeatures(model) = self {
            let feats = reward::encode_features(model, obs)?;
            s.extend(feats.iter().map(|&v| v as f64));
        }
        Ok(s)
    }
}

/// Where rollout rewards come from.
pub enum RewardSource<'a> {
    /// The translation-derived reward model.
    Learned(&'a RewardEvaluator<'a>),
    /// Negative ground-truth distance after each action; used by tests
    /// and baselines, never by the imitation pipeline.
    OracleDistance,
    /// All zeros (demo collection, evaluation of distance only).
    None,
}

/// One episode. `states` and `frames` have horizon + 1 entries;
/// `actions` and `rewards` have horizon entries, with `rewards[t]` the
/// score of the observation that followed `actions[t]`.
pub struct Rollout {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<[f64; 2]>,
    pub rewards: Vec<f64>,
    pub frames: Vec<ObservationImage>,
    pub initial_distance: f32,
    pub final_distance: f32,
}

impl Rollout {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

pub fn run_rollout(
    ctx: &ContextParams,
    agent: &dyn Agent,
    encoder: &StateEncoder,
    source: &RewardSource,
    deterministic: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout> {
    let mut env = reset(ctx);
    let initial_distance = ground_truth_distance(&env, ctx);
    let first = render(&env, ctx);
    let mut states = vec![encoder.encode(&env, ctx, &first)?];
    let mut frames = vec![first];
    let mut actions = Vec::with_capacity(HORIZON as usize);
    let mut oracle = Vec::with_capacity(HORIZON as usize);
    for t in 0..HORIZON as usize {
        let view = StepView { env: &env, ctx, state: &states[t], t };
        let a = if deterministic { agent.act_deterministic(&view) } else { agent.act(&view, rng) };
        env = step(&env, &a, ctx)?;
        let frame = render(&env, ctx);
        states.push(encoder.encode(&env, ctx, &frame)?);
        frames.push(frame);
        actions.push([a.0[0] as f64, a.0[1] as f64]);
        oracle.push(-(ground_truth_distance(&env, ctx) as f64));
    }
    let rewards = match source {
        RewardSource::Learned(ev) => {
            let all = ev.rollout_rewards(&frames)?;
            all[1..].iter().map(|&v| v as f64).collect()
        }
        RewardSource::OracleDistance => oracle,
        RewardSource::None => vec![0.0; HORIZON as usize],
    };
    let final_distance = ground_truth_distance(&env, ctx);
    Ok(Rollout { states, actions, rewards, frames, initial_distance, final_distance })
}
