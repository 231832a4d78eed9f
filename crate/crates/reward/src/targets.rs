//! Per-timestep translation targets averaged over demonstrations.

use demodata::Demonstration;
use envsim::ObservationImage;
use nncore::Tensor;
use translate::{
    eval_decode, eval_encode, eval_translate, images_to_batch, Encoder, TranslationModel,
};

use crate::{Result, RewardError};

/// Mean translated features and images, one row per timestep. Images are
/// stored channel-major ([3, hw, hw] flattened) to match the decoder
/// output and the packed observation layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTargets {
    pub horizon: u32,
    pub feature_dim: usize,
    pub image_hw: usize,
    feat: Vec<f32>,
    img: Vec<f32>,
}

impl RewardTargets {
    pub fn new(
        horizon: u32,
        feature_dim: usize,
        image_hw: usize,
        feat: Vec<f32>,
        img: Vec<f32>,
    ) -> Result<Self> {
        let steps = horizon as usize + 1;
        if horizon == 0 || feature_dim == 0 || image_hw == 0 {
            return Err(RewardError::Input("degenerate target dimensions".into()));
        }
        if feat.len() != steps * feature_dim || img.len() != steps * 3 * image_hw * image_hw {
            return Err(RewardError::Input(format!(
                "target buffer lengths {}/{} do not match horizon {} and dims {}/{}",
                feat.len(),
                img.len(),
                horizon,
                feature_dim,
                image_hw
            )));
        }
        Ok(RewardTargets { horizon, feature_dim, image_hw, feat, img })
    }

    pub fn feat_at(&self, t: u32) -> &[f32] {
        let f = self.feature_dim;
        &self.feat[t as usize * f..(t as usize + 1) * f]
    }

    pub fn img_at(&self, t: u32) -> &[f32] {
        let len = 3 * self.image_hw * self.image_hw;
        &self.img[t as usize * len..(t as usize + 1) * len]
    }

    pub fn feat_raw(&self) -> &[f32] {
        &self.feat
    }

    pub fn img_raw(&self) -> &[f32] {
        &self.img
    }
}

/// Repeats a batch-1 tensor n times along the batch dimension.
fn repeat_batch(t: &Tensor, n: usize) -> Tensor {
    assert_eq!(t.shape()[0], 1);
    let mut shape = t.shape().to_vec();
    shape[0] = n;
    let mut data = Vec::with_capacity(t.numel() * n);
    for _ in 0..n {
        data.extend_from_slice(t.data());
    }
    Tensor::new(shape, data).expect("repeat keeps volume consistent")
}

/// Translates every demo into the context that starts with `ctx0` and
/// averages per timestep, accumulating in f64. Demos must share a frame
/// count; the horizon is that count minus one.
pub fn compute_targets(
    model: &TranslationModel,
    demos: &[&Demonstration],
    ctx0: &ObservationImage,
) -> Result<RewardTargets> {
    if demos.is_empty() {
        return Err(RewardError::Input("no demonstrations to translate".into()));
    }
    let steps = demos[0].frames.len();
    if steps < 2 {
        return Err(RewardError::Input("demonstrations must span at least two frames".into()));
    }
    if demos.iter().any(|d| d.frames.len() != steps) {
        return Err(RewardError::Input("demonstrations have differing frame counts".into()));
    }
    let hw = model.arch.image_hw;
    if ctx0.height != hw || ctx0.width != hw {
        return Err(RewardError::Input(format!(
            "context frame is {}x{}, model expects {}x{}",
            ctx0.height, ctx0.width, hw, hw
        )));
    }

    let ctx = eval_encode(model, Encoder::Context, &images_to_batch(&[ctx0]))?;
    let ctx_feat = repeat_batch(&ctx.features, steps);
    let ctx_skips: [Tensor; 4] = [
        repeat_batch(&ctx.skips[0], steps),
        repeat_batch(&ctx.skips[1], steps),
        repeat_batch(&ctx.skips[2], steps),
        repeat_batch(&ctx.skips[3], steps),
    ];

    let f = model.arch.feature_dim;
    let img_len = 3 * hw * hw;
    let mut feat_acc = vec![0f64; steps * f];
    let mut img_acc = vec![0f64; steps * img_len];
    for demo in demos {
        let frames: Vec<&ObservationImage> = demo.frames.iter().collect();
        let batch = images_to_batch(&frames);
        let enc = eval_encode(model, Encoder::Source, &batch)?;
        let z3 = eval_translate(model, &enc.features, &ctx_feat)?;
        let img = eval_decode(model, &z3, &ctx_skips)?;
        for (acc, &v) in feat_acc.iter_mut().zip(z3.data()) {
            *acc += v as f64;
        }
        for (acc, &v) in img_acc.iter_mut().zip(img.data()) {
            *acc += v as f64;
        }
    }
    let inv = 1.0 / demos.len() as f64;
    let feat: Vec<f32> = feat_acc.iter().map(|&v| (v * inv) as f32).collect();
    let img: Vec<f32> = img_acc.iter().map(|&v| (v * inv) as f32).collect();
    RewardTargets::new((steps - 1) as u32, f, hw, feat, img)
}
