//! Scripted experts used to produce demonstrations.

use crate::{dist, ActionVec, ContextParams, EnvState, Task, ACTION_MAX};

/// Staging radius behind the object for the push approach; far enough out
/// that reaching it never disturbs the object.
const STAGING_RADIUS: f32 = 0.2;
/// Clearance kept from the object center while navigating around it.
const AVOID_RADIUS: f32 = 0.17;
/// Largest azimuth change per orbit step; 0.2 * 0.6 < a_max keeps orbit
/// steps feasible.
const ORBIT_STEP: f32 = 0.6;
/// Cone behind the object (radius and alignment) in which the expert
/// commits to pushing straight through.
const PUSH_RADIUS: f32 = 0.22;
const PUSH_ALIGN_COS: f32 = 0.969; // cos(0.25 rad)

/// Deterministic expert action for the context's task. Magnitude never
/// exceeds a_max.
pub fn scripted_expert(state: &EnvState, ctx: &ContextParams) -> ActionVec {
    match ctx.task {
        Task::Reach => cap(sub(ctx.goal_position, state.agent_position)),
        Task::Push => push_action(state, ctx),
    }
}

/// Two-phase push: navigate (orbiting the object when the straight path
/// would disturb it) to a staging point behind the object on the
/// object-to-goal line, then drive straight through. Replanning happens
/// every step from the current positions, so earlier nudges self-correct.
fn push_action(state: &EnvState, ctx: &ContextParams) -> ActionVec {
    let agent = state.agent_position;
    let object = state.object_position;
    let goal = ctx.goal_position;
    let to_goal = sub(goal, object);
    let d_og = norm(to_goal);
    if d_og < 1e-4 {
        return ActionVec([0.0, 0.0]);
    }
    let dir = [to_goal[0] / d_og, to_goal[1] / d_og];
    let behind = [-dir[0], -dir[1]];
    let rel = sub(agent, object);
    let r = norm(rel);
    if r > 1e-6 && r <= PUSH_RADIUS {
        let align = (rel[0] * behind[0] + rel[1] * behind[1]) / r;
        if align >= PUSH_ALIGN_COS {
            // In the push cone: advancing exactly the remaining distance
            // leaves the object on the goal once contact is made.
            let mag = d_og.min(ACTION_MAX);
            return ActionVec([mag * dir[0], mag * dir[1]]);
        }
    }
    let staging = [object[0] + STAGING_RADIUS * behind[0], object[1] + STAGING_RADIUS * behind[1]];
    let to_staging = sub(staging, agent);
    let direct = cap(to_staging);
    let end = [agent[0] + direct.0[0], agent[1] + direct.0[1]];
    if segment_point_distance(agent, end, object) >= AVOID_RADIUS {
        return direct;
    }
    // Orbit around the object toward the staging azimuth, shrinking the
    // radius gradually; chords between consecutive orbit points stay
    // outside the avoidance circle.
    let ua = rel[1].atan2(rel[0]);
    let ud = behind[1].atan2(behind[0]);
    let dang = wrap_pi(ud - ua).clamp(-ORBIT_STEP, ORBIT_STEP);
    let r_orbit = STAGING_RADIUS.max(r - 0.1);
    let target = [
        object[0] + r_orbit * (ua + dang).cos(),
        object[1] + r_orbit * (ua + dang).sin(),
    ];
    cap(sub(target, agent))
}

fn sub(a: [f32; 2], b: [f32; 2]) -> [f32; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(v: [f32; 2]) -> f32 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Full vector when its norm fits under a_max, otherwise rescaled to
/// a_max; reaching therefore lands exactly on targets closer than a_max.
fn cap(v: [f32; 2]) -> ActionVec {
    let n = norm(v);
    if n <= ACTION_MAX {
        ActionVec(v)
    } else {
        ActionVec([v[0] * ACTION_MAX / n, v[1] * ACTION_MAX / n])
    }
}

fn wrap_pi(a: f32) -> f32 {
    let mut a = a;
    while a > std::f32::consts::PI {
        a -= 2.0 * std::f32::consts::PI;
    }
    while a < -std::f32::consts::PI {
        a += 2.0 * std::f32::consts::PI;
    }
    a
}

fn segment_point_distance(a: [f32; 2], b: [f32; 2], p: [f32; 2]) -> f32 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 < 1e-12 {
        return norm(ap);
    }
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0);
    dist([a[0] + t * ab[0], a[1] + t * ab[1]], p)
}
