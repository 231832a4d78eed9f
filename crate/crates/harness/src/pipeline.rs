//! Shared machinery behind the commands: demo generation, translator
//! training with per-epoch holdout metrics, reward-target construction,
//! the per-context policy-learning loop, and the ablation driver.
//!
//! Randomness layout: every stage derives its generator from the run seed.
//! Model initialization and demo generation use the seed directly; holdout
//! pair sampling, evaluation-context sampling, and the translate command's
//! sampled context each use their own fixed stream; per-context learners
//! get a seed mixed from the run seed and the context index so their
//! internal iteration streams never collide across contexts.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use demodata::{generate_demos, load_demoset, save_demoset, DemoSet, Demonstration};
use envsim::{render, reset, sample_context, ContextParams, ObservationImage};
use nncore::container::{load_adam, save_adam};
use nncore::{AdamState, Mode};
use policyopt::{
    evaluate, feature_tracking_cost, run_rollout, train_lqr, train_natural_pg, EvalStats,
    GaussianPolicy, LinearGaussianController, LqrConfig, LqrTrainConfig, PgConfig, PgTrainConfig,
    RewardSource, StateEncoder, TrainPoint, UniformRandomAgent,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reward::{compute_targets, RewardConfig, RewardEvaluator, RewardTargets};
use translate::{
    batch_loss_tape, load_model, save_model, train_translator, ArchConfig, LossWeights,
    TrainConfig, TrainSample, TranslationModel,
};

use crate::config::{LearnerKind, RunConfig, TargetSel};
use crate::csv::{append_row, write_csv, Cell};
use crate::{runtime, runtime_at, HarnessError, Result};

const STREAM_EVAL_CONTEXTS: u64 = 11;
const STREAM_TRANSLATE_CTX: u64 = 12;
const STREAM_HOLDOUT: u64 = 13;
const STREAM_RANDOM_EPISODES: u64 = 14;

pub const LOSS_HEADER: &str = "epoch,l_trans,l_rec,l_align,total,holdout_total";
pub const CURVE_HEADER: &str = "iteration,mean_reward,mean_norm_distance,success_rate,kl";
pub const EVAL_HEADER: &str = "context,mean_reward,mean_norm_distance,success_rate";

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| runtime_at(&path.display().to_string(), e))
}

/// Every command writes the effective configuration into its run directory
/// before doing anything else.
pub fn write_snapshot(cfg: &RunConfig, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let path = dir.join("config.snapshot");
    std::fs::write(&path, cfg.snapshot()).map_err(|e| runtime_at(&path.display().to_string(), e))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for the learner attached to eval context `index`; the golden-ratio
/// multiply spreads consecutive run seeds far apart before the index is
/// mixed in.
pub fn derive_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
}

pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(HarnessError::Validation(format!("{what} not found: {}", path.display())))
    }
}

// ---------------------------------------------------------------------------
// Demonstrations

pub fn build_demos(cfg: &RunConfig) -> Result<DemoSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let set = generate_demos(cfg.task, cfg.demo_count, &mut rng).map_err(runtime)?;
    if let Some(parent) = cfg.demo_file.parent() {
        ensure_dir(parent)?;
    }
    save_demoset(&cfg.demo_file, &set).map_err(runtime)?;
    Ok(set)
}

pub fn load_demos_checked(cfg: &RunConfig) -> Result<DemoSet> {
    require_file(&cfg.demo_file, "demo file")?;
    let set = load_demoset(&cfg.demo_file).map_err(runtime)?;
    if set.task != cfg.task {
        return Err(HarnessError::Validation(format!(
            "demo file holds {:?} demonstrations but the config asks for {:?}",
            set.task, cfg.task
        )));
    }
    Ok(set)
}

// ---------------------------------------------------------------------------
// Translator training

pub fn arch_for(cfg: &RunConfig) -> ArchConfig {
    ArchConfig { image_hw: cfg.image_size, ..ArchConfig::desk() }.with_feature_dim(cfg.feature_dim)
}

/// Loss weights after applying the ablation switches.
pub fn effective_weights(cfg: &RunConfig) -> LossWeights {
    LossWeights {
        translation: if cfg.drop_l_trans { 0.0 } else { 1.0 },
        reconstruction: if cfg.drop_l_rec { 0.0 } else { cfg.lambda1 },
        alignment: if cfg.drop_l_align { 0.0 } else { cfg.lambda2 },
    }
}

pub fn reward_config(cfg: &RunConfig) -> RewardConfig {
    RewardConfig {
        ramp: cfg.ramp,
        feat_weight: if cfg.drop_r_feat { 0.0 } else { 1.0 },
        img_weight: if cfg.drop_r_img { 0.0 } else { cfg.img_reward_weight },
    }
}

/// Fixed holdout sample triples (source demo, target demo, timestep), drawn
/// once per run so per-epoch holdout losses are comparable. Falls back to
/// self-translation pairs when the holdout split has a single demo, and to
/// no samples at all when it is empty.
pub fn holdout_samples(set: &DemoSet, count: usize, seed: u64) -> Vec<(usize, usize, usize)> {
    let holdout = set.holdout_indices();
    if holdout.is_empty() || count == 0 {
        return Vec::new();
    }
    let mut rng = stream_rng(seed, STREAM_HOLDOUT);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let a_pos = rng.random_range(0..holdout.len());
        let a = holdout[a_pos];
        let b = if holdout.len() < 2 {
            a
        } else {
            let mut k = rng.random_range(0..holdout.len() - 1);
            if k >= a_pos {
                k += 1;
            }
            holdout[k]
        };
        let len = set.demos[a].frames.len().min(set.demos[b].frames.len());
        let t = rng.random_range(0..len);
        out.push((a, b, t));
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct HoldoutMeans {
    pub l_trans: f64,
    pub l_rec: f64,
    pub l_align: f64,
    pub total: f64,
}

/// Mean holdout losses in eval mode over the fixed sample triples.
pub fn holdout_eval(
    model: &TranslationModel,
    set: &DemoSet,
    weights: &LossWeights,
    samples: &[(usize, usize, usize)],
    batch_size: usize,
) -> Result<HoldoutMeans> {
    if samples.is_empty() {
        let nan = f64::NAN;
        return Ok(HoldoutMeans { l_trans: nan, l_rec: nan, l_align: nan, total: nan });
    }
    let mut sums = [0f64; 4];
    let mut seen = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(0); // eval mode draws nothing
    for chunk in samples.chunks(batch_size.max(1)) {
        let batch: Vec<TrainSample> = chunk
            .iter()
            .map(|&(i, j, t)| TrainSample {
                source: &set.demos[i].frames[t],
                context_start: &set.demos[j].frames[0],
                target: &set.demos[j].frames[t],
            })
            .collect();
        let (_, _, report) =
            batch_loss_tape(model, &batch, weights, Mode::Eval, &mut rng).map_err(runtime)?;
        let w = chunk.len() as f64;
        sums[0] += report.l_trans as f64 * w;
        sums[1] += report.l_rec as f64 * w;
        sums[2] += report.l_align as f64 * w;
        sums[3] += report.total as f64 * w;
        seen += chunk.len();
    }
    let n = seen as f64;
    Ok(HoldoutMeans {
        l_trans: sums[0] / n,
        l_rec: sums[1] / n,
        l_align: sums[2] / n,
        total: sums[3] / n,
    })
}

/// Translation loss of the copy-context baseline (predicting the target
/// demo's initial frame at every timestep) over the same holdout triples
/// the model sees, in the model's convention: squared error summed over
/// pixels, averaged over samples.
pub fn copy_context_baseline(set: &DemoSet, samples: &[(usize, usize, usize)]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut sum = 0f64;
    for &(_, j, t) in samples {
        let first = &set.demos[j].frames[0];
        let target = &set.demos[j].frames[t];
        let mut acc = 0f64;
        for (a, b) in first.pixels.iter().zip(target.pixels.iter()) {
            let d = (*a - *b) as f64;
            acc += d * d;
        }
        sum += acc;
    }
    sum / samples.len() as f64
}

pub struct TrainOutcome {
    pub model: TranslationModel,
    pub rows: usize,
    pub last_holdout: f64,
    pub baseline: f64,
}

/// Runs (or resumes) translator training, appending one `loss.csv` row and
/// saving the checkpoint and optimizer state after every epoch. A run that
/// diverges keeps the last epoch's files on disk and reports the failure.
pub fn train_translator_run(cfg: &RunConfig, set: &DemoSet, out: &Path) -> Result<TrainOutcome> {
    let weights = effective_weights(cfg);
    let (mut model, mut adam) = if cfg.resume {
        require_file(&cfg.checkpoint_file, "checkpoint to resume")?;
        require_file(&cfg.adam_file, "optimizer state to resume")?;
        let model = load_model(&cfg.checkpoint_file).map_err(runtime)?;
        let adam = load_adam(&cfg.adam_file).map_err(runtime)?;
        (model, adam)
    } else {
        let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let model = arch_new_model(cfg, &mut init_rng)?;
        (model, AdamState::new(cfg.learning_rate))
    };
    adam.learning_rate = cfg.learning_rate;

    let samples = holdout_samples(set, cfg.holdout_samples, cfg.seed);
    let baseline = copy_context_baseline(set, &samples);
    let loss_path = out.join("loss.csv");
    let epoch_base = (adam.step as usize) / cfg.steps_per_epoch;

    let mut last_holdout = f64::NAN;
    let mut rows = 0usize;
    for e in 0..cfg.epochs {
        let epoch = epoch_base + e;
        let inner = TrainConfig {
            epochs: 1,
            steps_per_epoch: cfg.steps_per_epoch,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
            weights,
        };
        let mut stats = None;
        let outcome = train_translator(&mut model, &mut adam, set, &inner, |s| stats = Some(*s));
        if let Err(err) = outcome {
            // Parameters were rolled back to the epoch start; make sure a
            // checkpoint exists so the failure leaves something usable.
            if !cfg.checkpoint_file.is_file() {
                save_model(&cfg.checkpoint_file, &model).map_err(runtime)?;
                save_adam(&cfg.adam_file, &adam).map_err(runtime)?;
            }
            return Err(runtime_at(
                &format!("training diverged in epoch {epoch}; last good checkpoint retained"),
                err,
            ));
        }
        let stats = stats.expect("one epoch reports once");
        let hold = holdout_eval(&model, set, &weights, &samples, cfg.batch_size)?;
        last_holdout = hold.total;
        save_model(&cfg.checkpoint_file, &model).map_err(runtime)?;
        save_adam(&cfg.adam_file, &adam).map_err(runtime)?;
        append_row(
            &loss_path,
            LOSS_HEADER,
            &[
                Cell::Int(epoch as i64),
                Cell::F32(stats.mean_trans),
                Cell::F32(stats.mean_rec),
                Cell::F32(stats.mean_align),
                Cell::F32(stats.mean_total),
                Cell::F64(hold.total),
            ],
        )?;
        println!(
            "epoch {epoch}: total {:.5} (trans {:.5} rec {:.5} align {:.5}) holdout {:.5}",
            stats.mean_total, stats.mean_trans, stats.mean_rec, stats.mean_align, hold.total
        );
        rows += 1;
    }
    Ok(TrainOutcome { model, rows, last_holdout, baseline })
}

fn arch_new_model(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<TranslationModel> {
    TranslationModel::new(arch_for(cfg), cfg.tie_encoders, cfg.lambda1, cfg.lambda2, rng)
        .map_err(runtime)
}

// ---------------------------------------------------------------------------
// Reward targets

/// The training demos whose translations are averaged into reward targets:
/// the first `count` of the train split, or the whole split when zero.
pub fn target_demo_refs(set: &DemoSet, count: usize) -> Vec<&Demonstration> {
    let train = set.train_indices();
    let take = if count == 0 { train.len() } else { count.min(train.len()) };
    train[..take].iter().map(|&i| &set.demos[i]).collect()
}

pub fn targets_for_context(
    model: &TranslationModel,
    set: &DemoSet,
    cfg: &RunConfig,
    ctx: &ContextParams,
) -> Result<RewardTargets> {
    let demos = target_demo_refs(set, cfg.targets_demos);
    let ctx0 = render(&reset(ctx), ctx);
    compute_targets(model, &demos, &ctx0).map_err(runtime)
}

// ---------------------------------------------------------------------------
// Per-context learning

pub struct ContextOutcome {
    pub curve: Vec<TrainPoint>,
    pub stats: EvalStats,
    pub artifact: Option<PathBuf>,
}

pub fn eval_contexts(cfg: &RunConfig) -> Result<Vec<ContextParams>> {
    let mut rng = stream_rng(cfg.seed, STREAM_EVAL_CONTEXTS);
    let mut out = Vec::with_capacity(cfg.eval_contexts);
    for _ in 0..cfg.eval_contexts {
        out.push(sample_context(cfg.task, &mut rng).map_err(runtime)?);
    }
    Ok(out)
}

fn pg_train_config(cfg: &RunConfig, ctx_seed: u64) -> PgTrainConfig {
    PgTrainConfig {
        iterations: cfg.iterations,
        rollouts_per_iter: cfg.rollouts_per_iter,
        hidden: cfg.hidden,
        init_std: cfg.init_std,
        seed: ctx_seed,
        pg: PgConfig { max_kl: cfg.max_kl, ..PgConfig::default() },
    }
}

fn policy_artifact(out: &Path, index: usize) -> PathBuf {
    out.join(format!("policy_{index:02}.bin"))
}

fn controller_artifact(out: &Path, index: usize) -> PathBuf {
    out.join(format!("controller_{index:02}.bin"))
}

/// Mean stochastic-episode statistics for the do-nothing-free random
/// baseline. No reward model is involved; rewards report as zero.
fn random_baseline(cfg: &RunConfig, ctx: &ContextParams, ctx_seed: u64) -> Result<ContextOutcome> {
    let encoder = StateEncoder::Positions;
    let agent = UniformRandomAgent;
    let mut rng = stream_rng(ctx_seed, STREAM_RANDOM_EPISODES);
    let episodes = cfg.random_episodes.max(1);
    let mut sum_norm = 0f64;
    let mut successes = 0usize;
    for _ in 0..episodes {
        let roll = run_rollout(ctx, &agent, &encoder, &RewardSource::None, false, &mut rng)
            .map_err(runtime)?;
        let norm = roll.final_distance as f64 / (roll.initial_distance as f64).max(1e-6);
        sum_norm += norm;
        if (norm as f32) < cfg.success_threshold {
            successes += 1;
        }
    }
    let stats = EvalStats {
        mean_reward: 0.0,
        mean_norm_distance: sum_norm / episodes as f64,
        success_rate: successes as f64 / episodes as f64,
    };
    let point = TrainPoint {
        iteration: 0,
        mean_reward: stats.mean_reward,
        mean_norm_distance: stats.mean_norm_distance,
        success_rate: stats.success_rate,
        kl: 0.0,
    };
    Ok(ContextOutcome { curve: vec![point], stats, artifact: None })
}

/// Runs one learner against one evaluation context and saves its artifact.
/// `model` and `demos` are required only for the learners that use the
/// translated reward (policy gradient and the linear-quadratic solver).
pub fn learn_one_context(
    cfg: &RunConfig,
    model: Option<&TranslationModel>,
    set: Option<&DemoSet>,
    ctx: &ContextParams,
    index: usize,
    out: &Path,
) -> Result<ContextOutcome> {
    let ctx_seed = derive_seed(cfg.seed, index);
    match cfg.learner {
        LearnerKind::Random => random_baseline(cfg, ctx, ctx_seed),
        LearnerKind::Oracle => {
            let encoder = StateEncoder::Positions;
            let source = RewardSource::OracleDistance;
            let (policy, curve) =
                train_natural_pg(ctx, &encoder, &source, &pg_train_config(cfg, ctx_seed))
                    .map_err(runtime)?;
            let path = policy_artifact(out, index);
            policy.save(&path).map_err(runtime)?;
            // Score the artifact as saved, so a later re-evaluation of the
            // file reproduces eval.csv exactly.
            let policy = GaussianPolicy::load(&path).map_err(runtime)?;
            let stats = evaluate(ctx, &policy, &encoder, &source).map_err(runtime)?;
            Ok(ContextOutcome { curve, stats, artifact: Some(path) })
        }
        LearnerKind::Pg => {
            let model = model.expect("validated: pg needs a translator");
            let set = set.expect("validated: pg needs demos");
            let targets = targets_for_context(model, set, cfg, ctx)?;
            let evaluator =
                RewardEvaluator::new(model, &targets, reward_config(cfg)).map_err(runtime)?;
            let encoder = StateEncoder::Positions;
            let source = RewardSource::Learned(&evaluator);
            let (policy, curve) =
                train_natural_pg(ctx, &encoder, &source, &pg_train_config(cfg, ctx_seed))
                    .map_err(runtime)?;
            let path = policy_artifact(out, index);
            policy.save(&path).map_err(runtime)?;
            let policy = GaussianPolicy::load(&path).map_err(runtime)?;
            let stats = evaluate(ctx, &policy, &encoder, &source).map_err(runtime)?;
            Ok(ContextOutcome { curve, stats, artifact: Some(path) })
        }
        LearnerKind::Lqr => {
            let model = model.expect("validated: lqr needs a translator");
            let set = set.expect("validated: lqr needs demos");
            let targets = targets_for_context(model, set, cfg, ctx)?;
            let evaluator =
                RewardEvaluator::new(model, &targets, reward_config(cfg)).map_err(runtime)?;
            let encoder = StateEncoder::WithFeatures(model);
            let source = RewardSource::Learned(&evaluator);
            let pos_dim = StateEncoder::position_dim(cfg.task);
            let cost = feature_tracking_cost(&targets, cfg.ramp, pos_dim, cfg.action_penalty);
            let train_cfg = LqrTrainConfig {
                iterations: cfg.iterations,
                rollouts_per_iter: cfg.rollouts_per_iter,
                seed: ctx_seed,
                lqr: LqrConfig::default(),
            };
            let (controller, curve) =
                train_lqr(ctx, &encoder, &source, &cost, &train_cfg).map_err(runtime)?;
            let path = controller_artifact(out, index);
            controller.save(&path).map_err(runtime)?;
            let controller = LinearGaussianController::load(&path).map_err(runtime)?;
            let stats = evaluate(ctx, &controller, &encoder, &source).map_err(runtime)?;
            Ok(ContextOutcome { curve, stats, artifact: Some(path) })
        }
    }
}

// ---------------------------------------------------------------------------
// Learn / evaluate drivers

pub struct LearnSummary {
    pub per_context_norm: Vec<f64>,
    pub mean_norm: f64,
    pub success_rate: f64,
}

fn summarize(cfg: &RunConfig, outcomes: &[ContextOutcome]) -> LearnSummary {
    let per: Vec<f64> = outcomes.iter().map(|o| o.stats.mean_norm_distance).collect();
    let mean = per.iter().sum::<f64>() / per.len().max(1) as f64;
    let succ = outcomes
        .iter()
        .filter(|o| (o.stats.mean_norm_distance as f32) < cfg.success_threshold)
        .count() as f64
        / outcomes.len().max(1) as f64;
    LearnSummary { per_context_norm: per, mean_norm: mean, success_rate: succ }
}

fn write_eval_csv(cfg: &RunConfig, outcomes: &[ContextOutcome], out: &Path) -> Result<()> {
    let rows: Vec<Vec<Cell>> = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let success =
                if (o.stats.mean_norm_distance as f32) < cfg.success_threshold { 1.0 } else { 0.0 };
            vec![
                Cell::Int(i as i64),
                Cell::F64(o.stats.mean_reward),
                Cell::F64(o.stats.mean_norm_distance),
                Cell::F64(success),
            ]
        })
        .collect();
    write_csv(&out.join("eval.csv"), EVAL_HEADER, &rows)
}

/// Iteration marks reported in `curve.csv`: every `eval_every` iterations
/// plus the final one.
fn curve_marks(iterations: usize, every: usize) -> Vec<usize> {
    let mut marks: Vec<usize> = (0..=iterations).step_by(every.max(1)).collect();
    if *marks.last().unwrap_or(&0) != iterations {
        marks.push(iterations);
    }
    marks
}

fn write_curve_csv(cfg: &RunConfig, outcomes: &[ContextOutcome], out: &Path) -> Result<()> {
    let len = outcomes.iter().map(|o| o.curve.len()).min().unwrap_or(0);
    if len == 0 {
        return write_csv(&out.join("curve.csv"), CURVE_HEADER, &[]);
    }
    let marks = curve_marks(len - 1, cfg.eval_every);
    let n = outcomes.len() as f64;
    let rows: Vec<Vec<Cell>> = marks
        .iter()
        .map(|&m| {
            let mut reward = 0f64;
            let mut norm = 0f64;
            let mut succ = 0f64;
            let mut kl = 0f64;
            for o in outcomes {
                let p = &o.curve[m];
                reward += p.mean_reward;
                norm += p.mean_norm_distance;
                if (p.mean_norm_distance as f32) < cfg.success_threshold {
                    succ += 1.0;
                }
                kl += p.kl;
            }
            vec![
                Cell::Int(o_iter(outcomes, m) as i64),
                Cell::F64(reward / n),
                Cell::F64(norm / n),
                Cell::F64(succ / n),
                Cell::F64(kl / n),
            ]
        })
        .collect();
    write_csv(&out.join("curve.csv"), CURVE_HEADER, &rows)
}

fn o_iter(outcomes: &[ContextOutcome], m: usize) -> usize {
    outcomes.first().map(|o| o.curve[m].iteration).unwrap_or(m)
}

/// Full learning run: sample evaluation contexts, train one learner per
/// context, and write `curve.csv`, `eval.csv`, and the per-context
/// artifacts into the run directory.
pub fn run_learn(cfg: &RunConfig, out: &Path) -> Result<LearnSummary> {
    let needs_model = matches!(cfg.learner, LearnerKind::Pg | LearnerKind::Lqr);
    let (model, set) = if needs_model {
        require_file(&cfg.checkpoint_file, "translator checkpoint")?;
        let model = load_model(&cfg.checkpoint_file).map_err(runtime)?;
        let set = load_demos_checked(cfg)?;
        (Some(model), Some(set))
    } else {
        (None, None)
    };
    let contexts = eval_contexts(cfg)?;

    let mut outcomes = Vec::with_capacity(contexts.len());
    for (i, ctx) in contexts.iter().enumerate() {
        let outcome = learn_one_context(cfg, model.as_ref(), set.as_ref(), ctx, i, out)?;
        println!(
            "context {i}: norm distance {:.4} ({})",
            outcome.stats.mean_norm_distance,
            if (outcome.stats.mean_norm_distance as f32) < cfg.success_threshold {
                "success"
            } else {
                "miss"
            }
        );
        outcomes.push(outcome);
    }
    write_curve_csv(cfg, &outcomes, out)?;
    write_eval_csv(cfg, &outcomes, out)?;
    Ok(summarize(cfg, &outcomes))
}

/// Re-evaluates a previous run's artifacts on the identically resampled
/// contexts and rewrites `eval.csv` in this command's run directory.
pub fn run_evaluate(cfg: &RunConfig, out: &Path) -> Result<LearnSummary> {
    let needs_model = matches!(cfg.learner, LearnerKind::Pg | LearnerKind::Lqr);
    let (model, set) = if needs_model {
        require_file(&cfg.checkpoint_file, "translator checkpoint")?;
        let model = load_model(&cfg.checkpoint_file).map_err(runtime)?;
        let set = load_demos_checked(cfg)?;
        (Some(model), Some(set))
    } else {
        (None, None)
    };
    let contexts = eval_contexts(cfg)?;
    let run_dir = &cfg.eval_run;

    let mut outcomes = Vec::with_capacity(contexts.len());
    for (i, ctx) in contexts.iter().enumerate() {
        let ctx_seed = derive_seed(cfg.seed, i);
        let outcome = match cfg.learner {
            LearnerKind::Random => random_baseline(cfg, ctx, ctx_seed)?,
            LearnerKind::Oracle => {
                let path = policy_artifact(run_dir, i);
                require_file(&path, "policy artifact")?;
                let policy = GaussianPolicy::load(&path).map_err(runtime)?;
                let stats =
                    evaluate(ctx, &policy, &StateEncoder::Positions, &RewardSource::OracleDistance)
                        .map_err(runtime)?;
                ContextOutcome { curve: Vec::new(), stats, artifact: Some(path) }
            }
            LearnerKind::Pg => {
                let model = model.as_ref().unwrap();
                let set = set.as_ref().unwrap();
                let targets = targets_for_context(model, set, cfg, ctx)?;
                let evaluator =
                    RewardEvaluator::new(model, &targets, reward_config(cfg)).map_err(runtime)?;
                let path = policy_artifact(run_dir, i);
                require_file(&path, "policy artifact")?;
                let policy = GaussianPolicy::load(&path).map_err(runtime)?;
                let stats = evaluate(
                    ctx,
                    &policy,
                    &StateEncoder::Positions,
                    &RewardSource::Learned(&evaluator),
                )
                .map_err(runtime)?;
                ContextOutcome { curve: Vec::new(), stats, artifact: Some(path) }
            }
            LearnerKind::Lqr => {
                let model = model.as_ref().unwrap();
                let set = set.as_ref().unwrap();
                let targets = targets_for_context(model, set, cfg, ctx)?;
                let evaluator =
                    RewardEvaluator::new(model, &targets, reward_config(cfg)).map_err(runtime)?;
                let path = controller_artifact(run_dir, i);
                require_file(&path, "controller artifact")?;
                let controller = LinearGaussianController::load(&path).map_err(runtime)?;
                let stats = evaluate(
                    ctx,
                    &controller,
                    &StateEncoder::WithFeatures(model),
                    &RewardSource::Learned(&evaluator),
                )
                .map_err(runtime)?;
                ContextOutcome { curve: Vec::new(), stats, artifact: Some(path) }
            }
        };
        println!("context {i}: norm distance {:.4}", outcome.stats.mean_norm_distance);
        outcomes.push(outcome);
    }
    write_eval_csv(cfg, &outcomes, out)?;
    Ok(summarize(cfg, &outcomes))
}

// ---------------------------------------------------------------------------
// Translate command

pub struct TranslateOutcome {
    pub frames: usize,
    pub wrote_truth: bool,
}

/// Translates one demo into a target context and writes four image rows:
/// the source frames, the single context frame, the translated frames, and
/// (when the target is another demo) the ground-truth frames.
pub fn run_translate(cfg: &RunConfig, out: &Path) -> Result<TranslateOutcome> {
    require_file(&cfg.checkpoint_file, "translator checkpoint")?;
    let model = load_model(&cfg.checkpoint_file).map_err(runtime)?;
    let set = load_demos_checked(cfg)?;

    let d = cfg.translate_demo;
    if d >= set.demos.len() {
        return Err(HarnessError::Validation(format!(
            "source demo index {d} out of range: the set holds {} demos",
            set.demos.len()
        )));
    }
    let (ctx0, truth): (ObservationImage, Option<&Demonstration>) = match cfg.translate_target {
        TargetSel::Demo(j) => {
            if j >= set.demos.len() {
                return Err(HarnessError::Validation(format!(
                    "target demo index {j} out of range: the set holds {} demos",
                    set.demos.len()
                )));
            }
            (set.demos[j].frames[0].clone(), Some(&set.demos[j]))
        }
        TargetSel::Sample => {
            let mut rng = stream_rng(cfg.seed, STREAM_TRANSLATE_CTX);
            let ctx = sample_context(cfg.task, &mut rng).map_err(runtime)?;
            (render(&reset(&ctx), &ctx), None)
        }
    };

    let source = &set.demos[d].frames;
    let steps = source.len();
    let src_refs: Vec<&ObservationImage> = source.iter().collect();
    let ctx_refs: Vec<&ObservationImage> = vec![&ctx0; steps];

    let enc_src =
        translate::eval_encode(&model, translate::Encoder::Source, &translate::images_to_batch(&src_refs))
            .map_err(runtime)?;
    let enc_ctx =
        translate::eval_encode(&model, translate::Encoder::Context, &translate::images_to_batch(&ctx_refs))
            .map_err(runtime)?;
    let z3 =
        translate::eval_translate(&model, &enc_src.features, &enc_ctx.features).map_err(runtime)?;
    let decoded = translate::eval_decode(&model, &z3, &enc_ctx.skips).map_err(runtime)?;
    let translated: Vec<ObservationImage> =
        (0..steps).map(|n| translate::batch_to_image(&decoded, n)).collect();

    envsim::write_strip(source, &out.join("source.ppm")).map_err(runtime)?;
    envsim::write_ppm(&ctx0, &out.join("context.ppm")).map_err(runtime)?;
    envsim::write_strip(&translated, &out.join("translated.ppm")).map_err(runtime)?;
    let wrote_truth = if let Some(demo) = truth {
        envsim::write_strip(&demo.frames, &out.join("truth.ppm")).map_err(runtime)?;
        true
    } else {
        false
    };
    Ok(TranslateOutcome { frames: steps, wrote_truth })
}

// ---------------------------------------------------------------------------
// Ablations

pub const ABLATION_VARIANTS: [&str; 6] =
    ["full", "no_l_trans", "no_l_rec", "no_l_align", "no_r_feat", "no_r_img"];

fn apply_variant(cfg: &RunConfig, label: &str) -> RunConfig {
    let mut v = cfg.clone();
    match label {
        "full" => {}
        "no_l_trans" => v.drop_l_trans = true,
        "no_l_rec" => v.drop_l_rec = true,
        "no_l_align" => v.drop_l_align = true,
        "no_r_feat" => v.drop_r_feat = true,
        "no_r_img" => v.drop_r_img = true,
        other => unreachable!("unknown ablation variant {other}"),
    }
    v
}

pub struct AblateRow {
    pub variant: &'static str,
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub stddev: f64,
}

pub struct AblateOutcome {
    pub rows: Vec<AblateRow>,
    pub failures: usize,
}

/// Population mean and standard deviation over the finite entries.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// The full ablation sweep: six variants, each trained and evaluated at
/// `ablate_seeds` consecutive seeds. Demonstrations are generated once and
/// shared; translators are trained once per (seed, loss-switch setting) and
/// reused by the reward-side ablations, which leave training untouched.
pub fn run_ablate(cfg: &RunConfig, out: &Path) -> Result<AblateOutcome> {
    // Demonstrations are shared by every variant and seed.
    let demo_path = out.join("demos.bin");
    let mut base = cfg.clone();
    base.demo_file = demo_path.clone();
    if !demo_path.is_file() {
        build_demos(&base)?;
        println!("generated {} shared demos", base.demo_count);
    }

    let mut translators: HashMap<(u64, bool, bool, bool), PathBuf> = HashMap::new();
    let mut rows = Vec::with_capacity(ABLATION_VARIANTS.len());
    let mut failures = 0usize;

    for label in ABLATION_VARIANTS {
        let variant_dir = out.join("variants").join(label);
        ensure_dir(&variant_dir)?;
        // The variant-defining configuration: the base run with exactly one
        // switch toggled. Seed- and path-level details live in the per-seed
        // run snapshots below it.
        write_snapshot(&apply_variant(cfg, label), &variant_dir)?;

        let mut per_seed = Vec::with_capacity(cfg.ablate_seeds);
        for s in 0..cfg.ablate_seeds {
            let run_seed = cfg.seed.wrapping_add(s as u64);
            let mut sub = apply_variant(&base, label);
            sub.seed = run_seed;
            sub.out_dir = variant_dir.join(format!("s{run_seed}"));
            sub.demo_file = demo_path.clone();

            let result = ablate_one(&mut sub, &mut translators, out);
            match result {
                Ok(norm) => {
                    println!("{label} seed {run_seed}: norm distance {norm:.4}");
                    per_seed.push(norm);
                }
                Err(err) => {
                    eprintln!("{label} seed {run_seed} failed: {err}");
                    failures += 1;
                    per_seed.push(f64::NAN);
                }
            }
        }
        let (mean, stddev) = mean_std(&per_seed);
        rows.push(AblateRow { variant: label, per_seed, mean, stddev });
    }

    let mut seed_rows = Vec::new();
    for row in &rows {
        for (s, v) in row.per_seed.iter().enumerate() {
            seed_rows.push(vec![
                Cell::Str(row.variant.to_string()),
                Cell::Int(cfg.seed.wrapping_add(s as u64) as i64),
                Cell::Str(if v.is_finite() { "ok".into() } else { "failed".into() }),
                Cell::F64(*v),
            ]);
        }
    }
    write_csv(&out.join("seeds.csv"), "variant,seed,status,norm_distance", &seed_rows)?;

    let report_rows: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            vec![
                Cell::Str(r.variant.to_string()),
                Cell::Int(r.per_seed.iter().filter(|v| v.is_finite()).count() as i64),
                Cell::F64(r.mean),
                Cell::F64(r.stddev),
            ]
        })
        .collect();
    write_csv(
        &out.join("report.csv"),
        "variant,runs,mean_norm_distance,stddev_norm_distance",
        &report_rows,
    )?;
    Ok(AblateOutcome { rows, failures })
}

/// One variant x seed cell: train (or reuse) the translator this variant's
/// loss switches call for, then run the learner and report the mean final
/// normalized distance over the evaluation contexts.
fn ablate_one(
    sub: &mut RunConfig,
    translators: &mut HashMap<(u64, bool, bool, bool), PathBuf>,
    out: &Path,
) -> Result<f64> {
    let key = (sub.seed, sub.drop_l_trans, sub.drop_l_rec, sub.drop_l_align);
    let ckpt = match translators.get(&key) {
        Some(path) => path.clone(),
        None => {
            let tag = format!(
                "t{}{}{}_s{}",
                sub.drop_l_trans as u8, sub.drop_l_rec as u8, sub.drop_l_align as u8, sub.seed
            );
            let dir = out.join("translators").join(tag);
            ensure_dir(&dir)?;
            let mut tcfg = sub.clone();
            tcfg.checkpoint_file = dir.join("checkpoint.bin");
            tcfg.adam_file = dir.join("adam.bin");
            tcfg.resume = false;
            let set = load_demos_checked(&tcfg)?;
            write_snapshot(&tcfg, &dir)?;
            train_translator_run(&tcfg, &set, &dir)?;
            translators.insert(key, tcfg.checkpoint_file.clone());
            tcfg.checkpoint_file
        }
    };
    sub.checkpoint_file = ckpt;
    ensure_dir(&sub.out_dir)?;
    write_snapshot(sub, &sub.out_dir)?;
    let out_dir = sub.out_dir.clone();
    let summary = run_learn(sub, &out_dir)?;
    Ok(summary.mean_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn cfg_from(text: &str) -> RunConfig {
        parse_config(text).unwrap().resolve(None, None).unwrap()
    }

    #[test]
    fn derived_seeds_are_distinct_across_contexts_and_runs() {
        let mut seen = std::collections::HashSet::new();
        for seed in 0..8u64 {
            for i in 0..12usize {
                assert!(seen.insert(derive_seed(seed, i)));
            }
        }
    }

    #[test]
    fn curve_marks_cover_start_cadence_and_end() {
        assert_eq!(curve_marks(20, 5), vec![0, 5, 10, 15, 20]);
        assert_eq!(curve_marks(7, 3), vec![0, 3, 6, 7]);
        assert_eq!(curve_marks(0, 5), vec![0]);
    }

    #[test]
    fn ablation_variants_toggle_exactly_one_switch() {
        let base = cfg_from("task = reach");
        for label in ABLATION_VARIANTS {
            let v = apply_variant(&base, label);
            let flips = [
                v.drop_l_trans != base.drop_l_trans,
                v.drop_l_rec != base.drop_l_rec,
                v.drop_l_align != base.drop_l_align,
                v.drop_r_feat != base.drop_r_feat,
                v.drop_r_img != base.drop_r_img,
            ]
            .iter()
            .filter(|f| **f)
            .count();
            assert_eq!(flips, usize::from(label != "full"), "variant {label}");
        }
    }

    #[test]
    fn effective_weights_zero_only_the_dropped_term() {
        let mut cfg = cfg_from("lambda1 = 0.7\nlambda2 = 0.3");
        let w = effective_weights(&cfg);
        assert_eq!((w.translation, w.reconstruction, w.alignment), (1.0, 0.7, 0.3));
        cfg.drop_l_rec = true;
        let w = effective_weights(&cfg);
        assert_eq!((w.translation, w.reconstruction, w.alignment), (1.0, 0.0, 0.3));
    }

    #[test]
    fn mean_std_skips_failures() {
        let (m, s) = mean_std(&[1.0, f64::NAN, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        let (m, _) = mean_std(&[f64::NAN]);
        assert!(m.is_nan());
    }
}
