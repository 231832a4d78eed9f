//! Context translation model: given an observation from a source context
//! and the initial frame of a target context, predict how the source
//! observation would look in the target context.
//!
//! Two convolutional encoders (usually weight-tied) map images to feature
//! vectors; a small translator network combines source features with
//! target context features; a deconvolutional decoder, fed skip
//! activations from the context encoder, produces the translated image.
//! Training minimizes translation error plus weighted reconstruction and
//! feature-alignment terms.

mod arch;
mod checkpoint;
mod model;
mod train;

pub use arch::ArchConfig;
pub use checkpoint::{load_model, save_model};
pub use model::{
    batch_loss_tape, eval_decode, eval_encode, eval_translate, Encoder, EvalEncoding, LossReport,
    LossWeights, TrainSample, TranslationModel,
};
pub use train::{train_translator, EpochStats, TrainConfig, TrainingLog};

use envsim::ObservationImage;
use nncore::Tensor;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error(transparent)]
    Nn(#[from] nncore::NnError),
    #[error(transparent)]
    Demo(#[from] demodata::DemoError),
    #[error("non-finite loss at training step {step}; parameters rolled back to the last epoch")]
    NonFinite { step: u64 },
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, TranslateError>;

/// Packs HWC observation images into one [N, 3, H, W] tensor.
pub fn images_to_batch(images: &[&ObservationImage]) -> Tensor {
    assert!(!images.is_empty());
    let (h, w) = (images[0].height, images[0].width);
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        assert_eq!((img.height, img.width), (h, w));
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    data.push(img.pixels[(y * w + x) * 3 + c]);
                }
            }
        }
    }
    Tensor::new(vec![images.len(), 3, h, w], data).expect("consistent dims")
}

/// Unpacks batch row `n` of a [N, 3, H, W] tensor into an HWC image.
pub fn batch_to_image(batch: &Tensor, n: usize) -> ObservationImage {
    let shape = batch.shape();
    assert_eq!(shape.len(), 4);
    assert_eq!(shape[1], 3);
    let (h, w) = (shape[2], shape[3]);
    let plane = h * w;
    let base = n * 3 * plane;
    let data = batch.data();
    let mut pixels = vec![0.0f32; plane * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                pixels[(y * w + x) * 3 + c] = data[base + c * plane + y * w + x];
            }
        }
    }
    ObservationImage::new(h, w, pixels)
}
