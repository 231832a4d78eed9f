//! Context sampling, dynamics, and the task distance metric.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{
    dist, ActionVec, ContextParams, Distractor, EnvError, EnvState, Task, ACTION_MAX,
    AGENT_RADIUS, CAMERA_OFFSET_MAX, CAMERA_ROTATION_MAX, CONTACT_DISTANCE, GOAL_RADIUS, HORIZON,
    OBJECT_RADIUS,
};

const MAX_ATTEMPTS: u32 = 1000;
/// Required clearance between the task elements' discs at reset.
const SEPARATION_MARGIN: f32 = 0.1;
/// Element centers are drawn from this box; the in-frame check after the
/// camera transform is what actually decides acceptance.
const PLACEMENT: f32 = 0.85;

/// Samples a context by rejection. Geometry constraints keep every element
/// fully in frame after the camera transform, keep the discs separated,
/// and bound the task distances so the scripted expert can finish within
/// the horizon.
pub fn sample_context(task: Task, rng: &mut ChaCha8Rng) -> Result<ContextParams, EnvError> {
    fn color(rng: &mut ChaCha8Rng) -> [f32; 3] {
        [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]
    }
    fn pos(rng: &mut ChaCha8Rng) -> [f32; 2] {
        [rng.random_range(-PLACEMENT..PLACEMENT), rng.random_range(-PLACEMENT..PLACEMENT)]
    }
    for _ in 0..MAX_ATTEMPTS {
        let background_color = color(rng);
        let agent_color = color(rng);
        let object_color = color(rng);
        let goal_color = color(rng);
        let camera_offset = [
            rng.random_range(-CAMERA_OFFSET_MAX..CAMERA_OFFSET_MAX),
            rng.random_range(-CAMERA_OFFSET_MAX..CAMERA_OFFSET_MAX),
        ];
        let camera_rotation = rng.random_range(-CAMERA_ROTATION_MAX..CAMERA_ROTATION_MAX);
        let (start_position, goal_position, object_position) = match task {
            Task::Reach => (pos(rng), pos(rng), [0.0, 0.0]),
            Task::Push => {
                let object = [rng.random_range(-0.5..0.5f32), rng.random_range(-0.5..0.5)];
                let goal = pos(rng);
                let start = pos(rng);
                (start, goal, object)
            }
        };
        let n_distractors = rng.random_range(0..=3u32);
        let distractors: Vec<Distractor> = (0..n_distractors)
            .map(|_| Distractor {
                position: pos(rng),
                radius: rng.random_range(0.05..0.12),
                color: color(rng),
            })
            .collect();

        let ctx = ContextParams {
            task,
            start_position,
            goal_position,
            object_position,
            agent_color,
            object_color,
            background_color,
            goal_color,
            distractors,
            camera_offset,
            camera_rotation,
        };
        if context_feasible(&ctx) {
            return Ok(ctx);
        }
    }
    Err(EnvError::ContextSampling(MAX_ATTEMPTS))
}

fn context_feasible(ctx: &ContextParams) -> bool {
    // Task distances the expert can cover in HORIZON steps.
    match ctx.task {
        Task::Reach => {
            if dist(ctx.start_position, ctx.goal_position) < 0.4 {
                return false;
            }
        }
        Task::Push => {
            let og = dist(ctx.object_position, ctx.goal_position);
            let so = dist(ctx.start_position, ctx.object_position);
            if !(0.35..=0.8).contains(&og) || !(0.25..=0.8).contains(&so) {
                return false;
            }
        }
    }
    // Pairwise clearance between the task elements present at reset.
    let mut elements = vec![
        (ctx.start_position, AGENT_RADIUS),
        (ctx.goal_position, GOAL_RADIUS),
    ];
    if ctx.task == Task::Push {
        elements.push((ctx.object_position, OBJECT_RADIUS));
    }
    for i in 0..elements.len() {
        for j in i + 1..elements.len() {
            let (pa, ra) = elements[i];
            let (pb, rb) = elements[j];
            if dist(pa, pb) < ra + rb + SEPARATION_MARGIN {
                return false;
            }
        }
    }
    // Distractors stay clear of the task elements so they never occlude
    // them at reset; they may overlap each other.
    for d in &ctx.distractors {
        for &(p, r) in &elements {
            if dist(d.position, p) < d.radius + r + 0.05 {
                return false;
            }
        }
    }
    // Everything must be fully visible after the camera transform.
    for d in &ctx.distractors {
        elements.push((d.position, d.radius));
    }
    elements.iter().all(|&(p, r)| {
        let c = camera_transform(ctx, p);
        c[0].abs() <= 1.0 - r && c[1].abs() <= 1.0 - r
    })
}

/// World point through the context camera: rotate, then offset.
pub(crate) fn camera_transform(ctx: &ContextParams, p: [f32; 2]) -> [f32; 2] {
    let (s, c) = ctx.camera_rotation.sin_cos();
    [
        c * p[0] - s * p[1] + ctx.camera_offset[0],
        s * p[0] + c * p[1] + ctx.camera_offset[1],
    ]
}

pub fn reset(ctx: &ContextParams) -> EnvState {
    EnvState {
        agent_position: ctx.start_position,
        agent_velocity: [0.0, 0.0],
        object_position: ctx.object_position,
        timestep: 0,
    }
}

/// One dynamics step. Action components clamp to [-a_max, a_max] and
/// become the velocity; positions clamp to the world square. In the push
/// task an overlapping object is projected out along the contact normal to
/// exactly the contact distance.
pub fn step(state: &EnvState, action: &ActionVec, ctx: &ContextParams) -> Result<EnvState, EnvError> {
    if state.timestep >= HORIZON {
        return Err(EnvError::EpisodeOver(state.timestep));
    }
    let vel = [
        action.0[0].clamp(-ACTION_MAX, ACTION_MAX),
        action.0[1].clamp(-ACTION_MAX, ACTION_MAX),
    ];
    let agent = [
        (state.agent_position[0] + vel[0]).clamp(-1.0, 1.0),
        (state.agent_position[1] + vel[1]).clamp(-1.0, 1.0),
    ];
    let mut object = state.object_position;
    if ctx.task == Task::Push {
        let d = dist(agent, object);
        if d < CONTACT_DISTANCE {
            let normal = if d > 1e-6 {
                [(object[0] - agent[0]) / d, (object[1] - agent[1]) / d]
            } else {
                // Agent landed on the object center; push along the motion
                // direction, or +x if the agent did not move.
                let v = (vel[0] * vel[0] + vel[1] * vel[1]).sqrt();
                if v > 1e-6 { [vel[0] / v, vel[1] / v] } else { [1.0, 0.0] }
            };
            object = [
                (agent[0] + CONTACT_DISTANCE * normal[0]).clamp(-1.0, 1.0),
                (agent[1] + CONTACT_DISTANCE * normal[1]).clamp(-1.0, 1.0),
            ];
        }
    }
    Ok(EnvState { agent_position: agent, agent_velocity: vel, object_position: object, timestep: state.timestep + 1 })
}

/// Task progress in world coordinates: agent-to-goal distance for Reach,
/// object-to-goal for Push.
pub fn ground_truth_distance(state: &EnvState, ctx: &ContextParams) -> f32 {
    match ctx.task {
        Task::Reach => dist(state.agent_position, ctx.goal_position),
        Task::Push => dist(state.object_position, ctx.goal_position),
    }
}
