//! Rasterizer: paints hard-edged discs through the context camera.

use crate::sim::camera_transform;
use crate::{
    ContextParams, EnvState, ObservationImage, Task, AGENT_RADIUS, GOAL_RADIUS, IMAGE_SIZE,
    OBJECT_RADIUS,
};

/// Renders the state as seen by the context camera. Paint order is
/// background, goal, distractors, object, agent; a pixel takes the color
/// of the last disc covering its center. Rigid camera motion preserves
/// radii, so discs stay discs.
pub fn render(state: &EnvState, ctx: &ContextParams) -> ObservationImage {
    let n = IMAGE_SIZE;
    let mut pixels = vec![0.0f32; n * n * 3];
    let goal = camera_transform(ctx, ctx.goal_position);
    let agent = camera_transform(ctx, state.agent_position);
    let object = camera_transform(ctx, state.object_position);
    let distractors: Vec<([f32; 2], f32, [f32; 3])> = ctx
        .distractors
        .iter()
        .map(|d| (camera_transform(ctx, d.position), d.radius * d.radius, d.color))
        .collect();
    let scale = 2.0 / n as f32;
    for row in 0..n {
        let y = 1.0 - (row as f32 + 0.5) * scale;
        for col in 0..n {
            let x = -1.0 + (col as f32 + 0.5) * scale;
            let covered = |c: [f32; 2], r2: f32| {
                let (dx, dy) = (x - c[0], y - c[1]);
                dx * dx + dy * dy <= r2
            };
            let mut color = ctx.background_color;
            if covered(goal, GOAL_RADIUS * GOAL_RADIUS) {
                color = ctx.goal_color;
            }
            for &(c, r2, col_d) in &distractors {
                if covered(c, r2) {
                    color = col_d;
                }
            }
            if ctx.task == Task::Push && covered(object, OBJECT_RADIUS * OBJECT_RADIUS) {
                color = ctx.object_color;
            }
            if covered(agent, AGENT_RADIUS * AGENT_RADIUS) {
                color = ctx.agent_color;
            }
            let base = (row * n + col) * 3;
            pixels[base] = color[0];
            pixels[base + 1] = color[1];
            pixels[base + 2] = color[2];
        }
    }
    ObservationImage::new(n, n, pixels)
}
