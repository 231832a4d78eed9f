//! Deterministic 2D tabletop simulator with a rasterized camera.
//!
//! The world is the square [-1, 1]^2. An agent disc moves under clamped
//! velocity actions; in the push task it shoves a second disc by contact.
//! Observations are 32x32 RGB images rendered through a per-context camera
//! (small rotation plus offset), so the same world state looks different
//! in different contexts. Everything is a pure function of its arguments:
//! stepping, rendering, and the scripted experts carry no hidden state.

mod expert;
mod ppm;
mod render;
mod sim;

pub use expert::scripted_expert;
pub use ppm::{write_ppm, write_strip};
pub use render::render;
pub use sim::{ground_truth_distance, reset, sample_context, step};

use thiserror::Error;

pub const HORIZON: u32 = 20;
pub const IMAGE_SIZE: usize = 32;
pub const ACTION_MAX: f32 = 0.15;
pub const AGENT_RADIUS: f32 = 0.08;
pub const OBJECT_RADIUS: f32 = 0.08;
pub const GOAL_RADIUS: f32 = 0.10;
/// Separation the push dynamics restore between agent and object centers.
pub const CONTACT_DISTANCE: f32 = AGENT_RADIUS + OBJECT_RADIUS;
pub const CAMERA_OFFSET_MAX: f32 = 0.15;
pub const CAMERA_ROTATION_MAX: f32 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Reach,
    Push,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distractor {
    pub position: [f32; 2],
    pub radius: f32,
    pub color: [f32; 3],
}

/// Everything that varies between contexts: task geometry, colors,
/// clutter, and the camera pose.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextParams {
    pub task: Task,
    pub start_position: [f32; 2],
    pub goal_position: [f32; 2],
    /// Initial object position; present but unused for Reach, where it
    /// stays [0, 0] and nothing is drawn for it.
    pub object_position: [f32; 2],
    pub agent_color: [f32; 3],
    pub object_color: [f32; 3],
    pub background_color: [f32; 3],
    pub goal_color: [f32; 3],
    pub distractors: Vec<Distractor>,
    pub camera_offset: [f32; 2],
    pub camera_rotation: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    pub agent_position: [f32; 2],
    pub agent_velocity: [f32; 2],
    pub object_position: [f32; 2],
    pub timestep: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionVec(pub [f32; 2]);

/// HWC image with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
}

impl ObservationImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Self {
        assert_eq!(pixels.len(), height * width * 3);
        ObservationImage { height, width, pixels }
    }
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode is over: timestep {0} reached the horizon")]
    EpisodeOver(u32),
    #[error("could not sample a context satisfying the constraints in {0} attempts")]
    ContextSampling(u32),
}

pub(crate) fn dist(a: [f32; 2], b: [f32; 2]) -> f32 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}
