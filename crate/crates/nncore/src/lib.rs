//! Small reverse-mode autodiff core for the translation model.
//!
//! The design is a Wengert tape over dense f32 buffers: forward ops append
//! a node describing which buffers they read and wrote, and `backward`
//! replays the list in reverse, accumulating gradients into per-buffer
//! slots. Convolutions and dense layers lower to GEMM via im2col, so the
//! heavy lifting lives in one well-tested kernel path.
//!
//! Everything here is deterministic: no threads, no iteration over unordered
//! maps, and dropout masks are drawn from a caller-supplied generator.

pub mod container;
pub mod gradcheck;
pub mod kernels;
pub mod params;
pub mod tape;
pub mod tensor;

pub use params::{adam_step, AdamState, ParamSet};
pub use tape::{BufId, Mode, Tape};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("checkpoint format error: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
