//! Rewards derived from translated demonstrations.
//!
//! Given a trained translation model, a target context's initial frame,
//! and a set of demonstration videos, every demo is translated into the
//! target context and averaged per timestep, in feature space and in
//! image space. A rollout observation then earns the negative squared
//! distance to those per-timestep targets: a feature-space term compared
//! against the source encoder's embedding of the observation, plus a
//! small image-space term, optionally scaled by a quadratic ramp that
//! discounts early timesteps.

mod container;
mod targets;

pub use container::{load_targets, save_targets};
pub use targets::{compute_targets, RewardTargets};

use envsim::{ObservationImage, Task};
use thiserror::Error;
use translate::{eval_encode, images_to_batch, Encoder, TranslationModel};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error(transparent)]
    Translate(#[from] translate::TranslateError),
    #[error(transparent)]
    Nn(#[from] nncore::NnError),
    #[error("reward input error: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, RewardError>;

/// Default weight of the image-space term relative to the feature term.
pub const IMAGE_WEIGHT: f32 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    /// Scale rewards by (t / T)^2 so early, easily-confused frames count
    /// less. On for pushing, off for reaching.
    pub ramp: bool,
    pub feat_weight: f32,
    pub img_weight: f32,
}

impl RewardConfig {
    pub fn for_task(task: Task) -> Self {
        RewardConfig {
            ramp: matches!(task, Task::Push),
            feat_weight: 1.0,
            img_weight: IMAGE_WEIGHT,
        }
    }
}

/// Scores observations against precomputed targets. The borrowed model
/// supplies the source encoder for the feature-space term.
pub struct RewardEvaluator<'a> {
    model: &'a TranslationModel,
    targets: &'a RewardTargets,
    cfg: RewardConfig,
}

impl<'a> RewardEvaluator<'a> {
    pub fn new(
        model: &'a TranslationModel,
        targets: &'a RewardTargets,
        cfg: RewardConfig,
    ) -> Result<Self> {
        if targets.feature_dim != model.arch.feature_dim
            || targets.image_hw != model.arch.image_hw
        {
            return Err(RewardError::Input(format!(
                "targets were computed for {}-dim features on {}px images, model expects {} on {}px",
                targets.feature_dim,
                targets.image_hw,
                model.arch.feature_dim,
                model.arch.image_hw
            )));
        }
        Ok(RewardEvaluator { model, targets, cfg })
    }

    pub fn config(&self) -> RewardConfig {
        self.cfg
    }

    pub fn horizon(&self) -> u32 {
        self.targets.horizon
    }

    /// Reward of one observation at timestep `t` (0 ..= horizon).
    pub fn reward_at(&self, obs: &ObservationImage, t: u32) -> Result<f32> {
        Ok(self.rewards(std::slice::from_ref(obs), &[t])?[0])
    }

    /// Rewards of a full rollout: frames[t] is scored at timestep t.
    pub fn rollout_rewards(&self, frames: &[ObservationImage]) -> Result<Vec<f32>> {
        let ts: Vec<u32> = (0..frames.len() as u32).collect();
        let refs: Vec<&ObservationImage> = frames.iter().collect();
        self.rewards_ref(&refs, &ts)
    }

    fn rewards(&self, frames: &[ObservationImage], ts: &[u32]) -> Result<Vec<f32>> {
        let refs: Vec<&ObservationImage> = frames.iter().collect();
        self.rewards_ref(&refs, ts)
    }

    fn rewards_ref(&self, frames: &[&ObservationImage], ts: &[u32]) -> Result<Vec<f32>> {
        if frames.is_empty() || frames.len() != ts.len() {
            return Err(RewardError::Input("empty or mismatched frame/timestep lists".into()));
        }
        let hw = self.targets.image_hw;
        for f in frames {
            if f.height != hw || f.width != hw {
                return Err(RewardError::Input(format!(
                    "frame is {}x{}, targets expect {}x{}",
                    f.height, f.width, hw, hw
                )));
            }
        }
        for &t in ts {
            if t > self.targets.horizon {
                return Err(RewardError::Input(format!(
                    "timestep {} beyond horizon {}",
                    t, self.targets.horizon
                )));
            }
        }
        let batch = images_to_batch(frames);
        let enc = eval_encode(self.model, Encoder::Source, &batch)?;
        let f = self.targets.feature_dim;
        let img_len = 3 * hw * hw;
        let horizon = self.targets.horizon as f64;
        let mut out = Vec::with_capacity(frames.len());
        for (row, &t) in ts.iter().enumerate() {
            let feat = &enc.features.data()[row * f..(row + 1) * f];
            let obs_chw = &batch.data()[row * img_len..(row + 1) * img_len];
            let r_feat = neg_sq_dist(feat, self.targets.feat_at(t));
            let r_img = neg_sq_dist(obs_chw, self.targets.img_at(t));
            let inner =
                self.cfg.feat_weight as f64 * r_feat + self.cfg.img_weight as f64 * r_img;
            let ramp =
                if self.cfg.ramp { (t as f64 / horizon) * (t as f64 / horizon) } else { 1.0 };
            out.push((ramp * inner) as f32);
        }
        Ok(out)
    }
}

/// Source-encoder features of a single observation; the LQR learner puts
/// these in its state vector.
pub fn encode_features(model: &TranslationModel, obs: &ObservationImage) -> Result<Vec<f32>> {
    let batch = images_to_batch(&[obs]);
    let enc = eval_encode(model, Encoder::Source, &batch)?;
    Ok(enc.features.data().to_vec())
}

fn neg_sq_dist(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    -a.iter().zip(b).map(|(&x, &y)| ((x - y) as f64).powi(2)).sum::<f64>()
}
