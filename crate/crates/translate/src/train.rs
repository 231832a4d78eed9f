//! Minibatch training loop over demonstration pairs.
//!
//! All randomness is derived per optimizer step from the config seed and
//! the Adam step counter, so a run resumed from a checkpoint replays the
//! exact batches and dropout masks the uninterrupted run would have seen.

use demodata::{sample_pair, DemoSet};
use nncore::{adam_step, AdamState, Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{batch_loss_tape, LossWeights, TrainSample, TranslationModel};
use crate::{Result, TranslateError};

const STREAM_BATCH: u64 = 1;
const STREAM_DROPOUT: u64 = 2;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weights: LossWeights,
}

/// Per-term loss means over one epoch's optimizer steps.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_total: f32,
    pub mean_trans: f32,
    pub mean_rec: f32,
    pub mean_align: f32,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingLog {
    pub epochs: Vec<EpochStats>,
    pub step_totals: Vec<f32>,
}

fn stream_rng(seed: u64, purpose: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose << 56 | step);
    rng
}

/// Runs `epochs x steps_per_epoch` Adam steps, sampling time-aligned
/// source/target pairs from the training split. A non-finite loss or
/// gradient rolls parameters and optimizer state back to the start of the
/// failing epoch and reports the step that diverged. `on_epoch` fires
/// after each epoch with that epoch's stats.
pub fn train_translator(
    model: &mut TranslationModel,
    adam: &mut AdamState,
    demos: &DemoSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainingLog> {
    if cfg.batch_size == 0 || cfg.steps_per_epoch == 0 {
        return Err(TranslateError::Config("batch_size and steps_per_epoch must be positive".into()));
    }
    let mut log = TrainingLog::default();
    for epoch in 0..cfg.epochs {
        let snapshot_params = model.params.clone();
        let snapshot_adam = adam.clone();
        let mut sums = [0f64; 4];
        for _ in 0..cfg.steps_per_epoch {
            let gstep = adam.step;
            let mut batch_rng = stream_rng(cfg.seed, STREAM_BATCH, gstep);
            let mut dropout_rng = stream_rng(cfg.seed, STREAM_DROPOUT, gstep);

            let mut picks = Vec::with_capacity(cfg.batch_size);
            for _ in 0..cfg.batch_size {
                let (i, j) = sample_pair(demos, &mut batch_rng)?;
                let len = demos.demos[i].frames.len().min(demos.demos[j].frames.len());
                let t = batch_rng.random_range(0..len);
                picks.push((i, j, t));
            }
            let samples: Vec<TrainSample> = picks
                .iter()
                .map(|&(i, j, t)| TrainSample {
                    source: &demos.demos[i].frames[t],
                    context_start: &demos.demos[j].frames[0],
                    target: &demos.demos[j].frames[t],
                })
                .collect();

            let step_result = (|| -> Result<crate::LossReport> {
                let (mut tape, total, report) =
                    batch_loss_tape(model, &samples, &cfg.weights, Mode::Train, &mut dropout_rng)?;
                if !report.total.is_finite() {
                    return Err(TranslateError::NonFinite { step: gstep });
                }
                tape.backward(total)?;
                model.params.zero_grads();
                tape.accumulate_param_grads(&mut model.params)?;
                adam_step(&mut model.params, adam)
                    .map_err(|_| TranslateError::NonFinite { step: gstep })?;
                Ok(report)
            })();
            let report = match step_result {
                Ok(r) => r,
                Err(err) => {
                    model.params = snapshot_params;
                    *adam = snapshot_adam;
                    return Err(err);
                }
            };
            sums[0] += report.total as f64;
            sums[1] += report.l_trans as f64;
            sums[2] += report.l_rec as f64;
            sums[3] += report.l_align as f64;
            log.step_totals.push(report.total);
        }
        let n = cfg.steps_per_epoch as f64;
        let stats = EpochStats {
            epoch,
            mean_total: (sums[0] / n) as f32,
            mean_trans: (sums[1] / n) as f32,
            mean_rec: (sums[2] / n) as f32,
            mean_align: (sums[3] / n) as f32,
        };
        on_epoch(&stats);
        log.epochs.push(stats);
    }
    Ok(log)
}
