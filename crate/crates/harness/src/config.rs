//! Flat `key = value` run configuration: typed parsing with unknown-key
//! rejection, defaults, and an exact re-serialization used as the config
//! snapshot inside every run directory.

use std::path::{Path, PathBuf};

use envsim::Task;

use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerKind {
    /// Sampled natural-gradient policy search on the learned reward.
    Pg,
    /// Fitted linear dynamics plus a Riccati backward pass on the
    /// feature-tracking cost.
    Lqr,
    /// Policy search on the ground-truth distance reward; upper line.
    Oracle,
    /// Untrained uniform-random actions; lower line.
    Random,
}

impl LearnerKind {
    fn parse(v: &str) -> Option<Self> {
        match v {
            "pg" => Some(LearnerKind::Pg),
            "lqr" => Some(LearnerKind::Lqr),
            "oracle" => Some(LearnerKind::Oracle),
            "random" => Some(LearnerKind::Random),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::Pg => "pg",
            LearnerKind::Lqr => "lqr",
            LearnerKind::Oracle => "oracle",
            LearnerKind::Random => "random",
        }
    }
}

/// Where `translate` takes its target context from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSel {
    /// A freshly sampled context (seeded).
    Sample,
    /// The starting frame of an existing demonstration.
    Demo(usize),
}

impl TargetSel {
    fn parse(v: &str) -> Option<Self> {
        if v == "sample" {
            return Some(TargetSel::Sample);
        }
        v.parse::<usize>().ok().map(TargetSel::Demo)
    }

    fn to_value(self) -> String {
        match self {
            TargetSel::Sample => "sample".into(),
            TargetSel::Demo(i) => i.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub demo_file: PathBuf,
    pub checkpoint_file: PathBuf,
    pub adam_file: PathBuf,
    pub eval_run: PathBuf,
    pub demo_count: usize,
    pub horizon: u32,
    pub image_size: usize,
    pub feature_dim: usize,
    pub lambda1: f32,
    pub lambda2: f32,
    pub img_reward_weight: f32,
    pub ramp: bool,
    pub tie_encoders: bool,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub lr_decay: f32,
    pub resume: bool,
    pub holdout_samples: usize,
    pub learner: LearnerKind,
    pub iterations: usize,
    pub rollouts_per_iter: usize,
    pub eval_contexts: usize,
    pub eval_every: usize,
    pub targets_demos: usize,
    pub random_episodes: usize,
    pub hidden: usize,
    pub init_std: f64,
    pub max_kl: f64,
    pub action_penalty: f64,
    pub success_threshold: f32,
    pub drop_l_trans: bool,
    pub drop_l_rec: bool,
    pub drop_l_align: bool,
    pub drop_r_feat: bool,
    pub drop_r_img: bool,
    pub ablate_seeds: usize,
    pub translate_demo: usize,
    pub translate_target: TargetSel,
}

fn invalid(key: &str, value: &str, want: &str) -> HarnessError {
    HarnessError::Validation(format!("config key `{key}`: `{value}` is not {want}"))
}

/// Raw parse result: only the keys the file actually set.
#[derive(Debug, Default, Clone)]
pub struct PartialConfig {
    task: Option<Task>,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    demo_file: Option<PathBuf>,
    checkpoint_file: Option<PathBuf>,
    adam_file: Option<PathBuf>,
    eval_run: Option<PathBuf>,
    demo_count: Option<usize>,
    horizon: Option<u32>,
    image_size: Option<usize>,
    feature_dim: Option<usize>,
    lambda1: Option<f32>,
    lambda2: Option<f32>,
    img_reward_weight: Option<f32>,
    ramp: Option<bool>,
    tie_encoders: Option<bool>,
    epochs: Option<usize>,
    steps_per_epoch: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f32>,
    lr_decay: Option<f32>,
    resume: Option<bool>,
    holdout_samples: Option<usize>,
    learner: Option<LearnerKind>,
    iterations: Option<usize>,
    rollouts_per_iter: Option<usize>,
    eval_contexts: Option<usize>,
    eval_every: Option<usize>,
    targets_demos: Option<usize>,
    random_episodes: Option<usize>,
    hidden: Option<usize>,
    init_std: Option<f64>,
    max_kl: Option<f64>,
    action_penalty: Option<f64>,
    success_threshold: Option<f32>,
    drop_l_trans: Option<bool>,
    drop_l_rec: Option<bool>,
    drop_l_align: Option<bool>,
    drop_r_feat: Option<bool>,
    drop_r_img: Option<bool>,
    ablate_seeds: Option<usize>,
    translate_demo: Option<usize>,
    translate_target: Option<TargetSel>,
}

macro_rules! set_typed {
    ($slot:expr, $key:expr, $value:expr, $parsed:expr, $want:expr) => {{
        if $slot.is_some() {
            return Err(HarnessError::Validation(format!("duplicate config key `{}`", $key)));
        }
        match $parsed {
            Some(v) => $slot = Some(v),
            None => return Err(invalid($key, $value, $want)),
        }
    }};
}

pub fn parse_config(text: &str) -> Result<PartialConfig> {
    let mut cfg = PartialConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(HarnessError::Validation(format!(
                "config line {} is not `key = value`: `{line}`",
                lineno + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        cfg.set(key, value)?;
    }
    Ok(cfg)
}

impl PartialConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let as_bool = |v: &str| match v {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        };
        match key {
            "task" => set_typed!(
                self.task,
                key,
                value,
                match value {
                    "reach" => Some(Task::Reach),
                    "push" => Some(Task::Push),
                    _ => None,
                },
                "`reach` or `push`"
            ),
            "seed" => set_typed!(self.seed, key, value, value.parse().ok(), "an unsigned integer"),
            "out_dir" => {
                set_typed!(self.out_dir, key, value, Some(PathBuf::from(value)), "a path")
            }
            "demo_file" => {
                set_typed!(self.demo_file, key, value, Some(PathBuf::from(value)), "a path")
            }
            "checkpoint_file" => {
                set_typed!(self.checkpoint_file, key, value, Some(PathBuf::from(value)), "a path")
            }
            "adam_file" => {
                set_typed!(self.adam_file, key, value, Some(PathBuf::from(value)), "a path")
            }
            "eval_run" => {
                set_typed!(self.eval_run, key, value, Some(PathBuf::from(value)), "a path")
            }
            "demo_count" => set_typed!(
                self.demo_count,
                key,
                value,
                value.parse().ok(),
                "an unsigned integer"
            ),
            "horizon" => {
                set_typed!(self.horizon, key, value, value.parse().ok(), "an unsigned integer")
            }
            "image_size" => {
                set_typed!(self.image_size, key, value, value.parse().ok(), "an unsigned integer")
            }
            "feature_dim" => {
                set_typed!(self.feature_dim, key, value, value.parse().ok(), "an unsigned integer")
            }
            "lambda1" => set_typed!(self.lambda1, key, value, value.parse().ok(), "a number"),
            "lambda2" => set_typed!(self.lambda2, key, value, value.parse().ok(), "a number"),
            "img_reward_weight" => {
                set_typed!(self.img_reward_weight, key, value, value.parse().ok(), "a number")
            }
            "ramp" => set_typed!(self.ramp, key, value, as_bool(value), "`true` or `false`"),
            "tie_encoders" => {
                set_typed!(self.tie_encoders, key, value, as_bool(value), "`true` or `false`")
            }
            "epochs" => {
                set_typed!(self.epochs, key, value, value.parse().ok(), "an unsigned integer")
            }
            "steps_per_epoch" => set_typed!(
                self.steps_per_epoch,
                key,
                value,
                value.parse().ok(),
                "an unsigned integer"
            ),
            "batch_size" => {
                set_typed!(self.batch_size, key, value, value.parse().ok(), "an unsigned integer")
            }
            "learning_rate" => {
                set_typed!(self.learning_rate, key, value, value.parse().ok(), "a number")
            }
            "resume" => set_typed!(self.resume, key, value, as_bool(value), "`true` or `false`"),
            "holdout_samples" => set_typed!(
                self.holdout_samples,
                key,
                value,
                value.parse().ok(),
                "an unsigned integer"
            ),
            "learner" => set_typed!(
                self.learner,
                key,
                value,
                LearnerKind::parse(value),
                "`pg`, `lqr`, `oracle`, or `random`"
            ),
            "iterations" => {
                set_typed!(self.iterations, key, value, value.parse().ok(), "an unsigned integer")
            }
            "rollouts_per_iter" => set_typed!(
                self.rollouts_per_iter,
                key,
                value,
                value.parse().ok(),
                "an unsigned integer"
            ),
            "eval_contexts" => set_typed!(
                self.eval_contexts,
                key,
                value,
                value.parse().ok(),
                "an unsigned integer"
            ),
            "eval_every" => {
                set_typed!(self.eval_every, key, value, value.parse().ok(), "an unsigned integer")
            }
            "targets_demos" => set_typed!(
                self.targets_demos,
                key,
                value,
                value.parse().ok(),
                "an unsigned integer"
            ),
            "random_episodes" => set_typed!(
                self.random_episodes,
                key,
                value,
                value.parse().ok(),
                "an unsigned integer"
            ),
            "hidden" => {
                set_typed!(self.hidden, key, value, value.parse().ok(), "an unsigned integer")
            }
            "init_std" => set_typed!(self.init_std, key, value, value.parse().ok(), "a number"),
            "max_kl" => set_typed!(self.max_kl, key, value, value.parse().ok(), "a number"),
            "action_penalty" => {
                set_typed!(self.action_penalty, key, value, value.parse().ok(), "a number")
            }
            "success_threshold" => {
                set_typed!(self.success_threshold, key, value, value.parse().ok(), "a number")
            }
            "drop_l_trans" => {
                set_typed!(self.drop_l_trans, key, value, as_bool(value), "`true` or `false`")
            }
            "drop_l_rec" => {
                set_typed!(self.drop_l_rec, key, value, as_bool(value), "`true` or `false`")
            }
            "drop_l_align" => {
                set_typed!(self.drop_l_align, key, value, as_bool(value), "`true` or `false`")
            }
            "drop_r_feat" => {
                set_typed!(self.drop_r_feat, key, value, as_bool(value), "`true` or `false`")
            }
            "drop_r_img" => {
                set_typed!(self.drop_r_img, key, value, as_bool(value), "`true` or `false`")
            }
            "ablate_seeds" => set_typed!(
                self.ablate_seeds,
                key,
                value,
                value.parse().ok(),
                "an unsigned integer"
            ),
            "translate_demo" => set_typed!(
                self.translate_demo,
                key,
                value,
                value.parse().ok(),
                "an unsigned integer"
            ),
            "translate_target" => set_typed!(
                self.translate_target,
                key,
                value,
                TargetSel::parse(value),
                "`sample` or a demo index"
            ),
            _ => {
                return Err(HarnessError::Validation(format!("unknown config key `{key}`")));
            }
        }
        Ok(())
    }

    /// Fill defaults, apply CLI overrides, derive dependent values, and
    /// validate. The result round-trips exactly through `snapshot`.
    pub fn resolve(self, seed_override: Option<u64>, out_override: Option<&Path>) -> Result<RunConfig> {
        let task = self.task.unwrap_or(Task::Reach);
        let out_dir = out_override
            .map(Path::to_path_buf)
            .or(self.out_dir)
            .unwrap_or_else(|| PathBuf::from("runs/default"));
        let cfg = RunConfig {
            task,
            seed: seed_override.or(self.seed).unwrap_or(0),
            demo_file: self.demo_file.unwrap_or_else(|| out_dir.join("demos.bin")),
            checkpoint_file: self
                .checkpoint_file
                .unwrap_or_else(|| out_dir.join("checkpoint.bin")),
            adam_file: self.adam_file.unwrap_or_else(|| out_dir.join("adam.bin")),
            eval_run: self.eval_run.unwrap_or_else(|| out_dir.clone()),
            out_dir,
            demo_count: self.demo_count.unwrap_or(200),
            horizon: self.horizon.unwrap_or(envsim::HORIZON),
            image_size: self.image_size.unwrap_or(envsim::IMAGE_SIZE),
            feature_dim: self.feature_dim.unwrap_or(100),
            lambda1: self.lambda1.unwrap_or(1.0),
            lambda2: self.lambda2.unwrap_or(1.0),
            img_reward_weight: self.img_reward_weight.unwrap_or(reward::IMAGE_WEIGHT),
            // The time ramp matters when later timesteps carry the task
            // signal (pushing); reaching scores all timesteps evenly.
            ramp: self.ramp.unwrap_or(task == Task::Push),
            tie_encoders: self.tie_encoders.unwrap_or(true),
            epochs: self.epochs.unwrap_or(30),
            steps_per_epoch: self.steps_per_epoch.unwrap_or(50),
            batch_size: self.batch_size.unwrap_or(16),
            learning_rate: self.learning_rate.unwrap_or(1e-4),
            resume: self.resume.unwrap_or(false),
            holdout_samples: self.holdout_samples.unwrap_or(64),
            learner: self.learner.unwrap_or(LearnerKind::Pg),
            iterations: self.iterations.unwrap_or(60),
            rollouts_per_iter: self.rollouts_per_iter.unwrap_or(20),
            eval_contexts: self.eval_contexts.unwrap_or(10),
            eval_every: self.eval_every.unwrap_or(5),
            targets_demos: self.targets_demos.unwrap_or(24),
            random_episodes: self.random_episodes.unwrap_or(5),
            hidden: self.hidden.unwrap_or(32),
            init_std: self.init_std.unwrap_or(0.1),
            max_kl: self.max_kl.unwrap_or(0.01),
            action_penalty: self.action_penalty.unwrap_or(0.01),
            success_threshold: self.success_threshold.unwrap_or(demodata::SUCCESS_THRESHOLD),
            drop_l_trans: self.drop_l_trans.unwrap_or(false),
            drop_l_rec: self.drop_l_rec.unwrap_or(false),
            drop_l_align: self.drop_l_align.unwrap_or(false),
            drop_r_feat: self.drop_r_feat.unwrap_or(false),
            drop_r_img: self.drop_r_img.unwrap_or(false),
            ablate_seeds: self.ablate_seeds.unwrap_or(3),
            translate_demo: self.translate_demo.unwrap_or(0),
            translate_target: self.translate_target.unwrap_or(TargetSel::Sample),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(HarnessError::Validation(msg));
        if self.horizon != envsim::HORIZON {
            return fail(format!(
                "horizon {} is not supported; the simulator runs fixed episodes of {}",
                self.horizon,
                envsim::HORIZON
            ));
        }
        if self.image_size != envsim::IMAGE_SIZE {
            return fail(format!(
                "image_size {} is not supported; the simulator renders {}x{} frames",
                self.image_size,
                envsim::IMAGE_SIZE,
                envsim::IMAGE_SIZE
            ));
        }
        if self.demo_count < 2 {
            return fail("demo_count must be at least 2 for pair sampling".into());
        }
        if self.feature_dim == 0 || self.hidden == 0 {
            return fail("feature_dim and hidden must be positive".into());
        }
        if self.epochs == 0 || self.steps_per_epoch == 0 || self.batch_size == 0 {
            return fail("epochs, steps_per_epoch, and batch_size must be positive".into());
        }
        if self.holdout_samples == 0 {
            return fail("holdout_samples must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive".into());
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !v.is_finite() || v < 0.0 {
                return fail(format!("{name} must be finite and non-negative"));
            }
        }
        if !self.img_reward_weight.is_finite() || self.img_reward_weight < 0.0 {
            return fail("img_reward_weight must be finite and non-negative".into());
        }
        if self.rollouts_per_iter == 0 || self.eval_contexts == 0 || self.eval_every == 0 {
            return fail("rollouts_per_iter, eval_contexts, and eval_every must be positive".into());
        }
        if self.random_episodes == 0 {
            return fail("random_episodes must be positive".into());
        }
        if !(self.init_std > 0.0) || !(self.max_kl > 0.0) || !(self.action_penalty > 0.0) {
            return fail("init_std, max_kl, and action_penalty must be positive".into());
        }
        if !(self.success_threshold > 0.0 && self.success_threshold <= 1.0) {
            return fail("success_threshold must be in (0, 1]".into());
        }
        if self.drop_r_feat && self.drop_r_img {
            return fail(
                "drop_r_feat and drop_r_img cannot both be set: no reward term would remain"
                    .into(),
            );
        }
        if self.ablate_seeds < 3 {
            return fail("ablate_seeds must be at least 3".into());
        }
        if self.learner == LearnerKind::Lqr && self.iterations == 0 {
            return fail("the lqr learner needs at least one iteration".into());
        }
        Ok(())
    }

    /// Exact textual form: parsing it back yields `self`.
    pub fn snapshot(&self) -> String {
        let task = match self.task {
            Task::Reach => "reach",
            Task::Push => "push",
        };
        let lines = [
            format!("ablate_seeds = {}", self.ablate_seeds),
            format!("action_penalty = {}", self.action_penalty),
            format!("adam_file = {}", self.adam_file.display()),
            format!("batch_size = {}", self.batch_size),
            format!("checkpoint_file = {}", self.checkpoint_file.display()),
            format!("demo_count = {}", self.demo_count),
            format!("demo_file = {}", self.demo_file.display()),
            format!("drop_l_align = {}", self.drop_l_align),
            format!("drop_l_rec = {}", self.drop_l_rec),
            format!("drop_l_trans = {}", self.drop_l_trans),
            format!("drop_r_feat = {}", self.drop_r_feat),
            format!("drop_r_img = {}", self.drop_r_img),
            format!("epochs = {}", self.epochs),
            format!("eval_contexts = {}", self.eval_contexts),
            format!("eval_every = {}", self.eval_every),
            format!("eval_run = {}", self.eval_run.display()),
            format!("feature_dim = {}", self.feature_dim),
            format!("hidden = {}", self.hidden),
            format!("holdout_samples = {}", self.holdout_samples),
            format!("horizon = {}", self.horizon),
            format!("image_size = {}", self.image_size),
            format!("img_reward_weight = {}", self.img_reward_weight),
            format!("init_std = {}", self.init_std),
            format!("iterations = {}", self.iterations),
            format!("lambda1 = {}", self.lambda1),
            format!("lambda2 = {}", self.lambda2),
            format!("learner = {}", self.learner.name()),
            format!("learning_rate = {}", self.learning_rate),
            format!("max_kl = {}", self.max_kl),
            format!("out_dir = {}", self.out_dir.display()),
            format!("ramp = {}", self.ramp),
            format!("random_episodes = {}", self.random_episodes),
            format!("resume = {}", self.resume),
            format!("rollouts_per_iter = {}", self.rollouts_per_iter),
            format!("seed = {}", self.seed),
            format!("steps_per_epoch = {}", self.steps_per_epoch),
            format!("success_threshold = {}", self.success_threshold),
            format!("targets_demos = {}", self.targets_demos),
            format!("task = {task}"),
            format!("tie_encoders = {}", self.tie_encoders),
            format!("translate_demo = {}", self.translate_demo),
            format!("translate_target = {}", self.translate_target.to_value()),
        ];
        let mut out = String::new();
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }
}

pub fn load_config(
    path: &Path,
    seed_override: Option<u64>,
    out_override: Option<&Path>,
) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        HarnessError::Validation(format!("cannot read config {}: {e}", path.display()))
    })?;
    parse_config(&text)?.resolve(seed_override, out_override)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_and_round_trip() {
        let cfg = parse_config("").unwrap().resolve(None, None).unwrap();
        assert_eq!(cfg.task, Task::Reach);
        assert!(!cfg.ramp);
        assert_eq!(cfg.demo_file, PathBuf::from("runs/default/demos.bin"));
        let back = parse_config(&cfg.snapshot()).unwrap().resolve(None, None).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn push_defaults_enable_the_ramp_and_overrides_win() {
        let cfg = parse_config("task = push\nseed = 7\n")
            .unwrap()
            .resolve(Some(99), Some(Path::new("elsewhere")))
            .unwrap();
        assert!(cfg.ramp);
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.out_dir, PathBuf::from("elsewhere"));
        assert_eq!(cfg.demo_file, PathBuf::from("elsewhere/demos.bin"));
        let back = parse_config(&cfg.snapshot()).unwrap().resolve(None, None).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_duplicate_and_malformed_keys_are_rejected() {
        assert!(matches!(
            parse_config("bogus_key = 3"),
            Err(HarnessError::Validation(_))
        ));
        assert!(matches!(
            parse_config("seed = 1\nseed = 2"),
            Err(HarnessError::Validation(_))
        ));
        assert!(matches!(parse_config("seed 1"), Err(HarnessError::Validation(_))));
        assert!(matches!(parse_config("seed = soon"), Err(HarnessError::Validation(_))));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = parse_config("# a comment\n\n  seed = 5\n").unwrap();
        assert_eq!(cfg.seed, Some(5));
    }

    #[test]
    fn reward_ablation_cannot_drop_both_terms() {
        let err = parse_config("drop_r_feat = true\ndrop_r_img = true")
            .unwrap()
            .resolve(None, None)
            .unwrap_err();
        let HarnessError::Validation(msg) = err else { panic!("wrong error kind") };
        assert!(msg.contains("no reward term"));
    }

    #[test]
    fn simulator_scale_is_pinned() {
        let err = parse_config("horizon = 21").unwrap().resolve(None, None).unwrap_err();
        assert!(matches!(err, HarnessError::Validation(_)));
        let err = parse_config("image_size = 64").unwrap().resolve(None, None).unwrap_err();
        assert!(matches!(err, HarnessError::Validation(_)));
    }
}
