//! Trust-region natural-gradient update for the Gaussian policy.
//!
//! The step direction solves F x = g by conjugate gradients against the
//! exact per-batch Fisher; the step length targets a KL budget and backs
//! off until the divergence constraint holds and the linearized surrogate
//! actually improves.

use nalgebra::DVector;

use crate::policy::GaussianPolicy;
use crate::rollout::Rollout;
use crate::Result;

#[derive(Debug, Clone)]
pub struct PgConfig {
    /// Trust-region size: mean KL between successive policies.
    pub max_kl: f64,
    pub cg_iters: usize,
    pub cg_damping: f64,
    pub backtracks: usize,
}

impl Default for PgConfig {
    fn default() -> Self {
        PgConfig { max_kl: 0.01, cg_iters: 20, cg_damping: 1e-3, backtracks: 10 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PgUpdateReport {
    pub accepted: bool,
    /// Mean KL of the accepted step (0 when no step was taken).
    pub kl: f64,
    /// Importance-weighted advantage gain of the accepted step.
    pub surrogate_improvement: f64,
    /// Number of halvings before acceptance.
    pub backtracks_used: usize,
    pub mean_return: f64,
}

fn no_op(mean_return: f64) -> PgUpdateReport {
    PgUpdateReport {
        accepted: false,
        kl: 0.0,
        surrogate_improvement: 0.0,
        backtracks_used: 0,
        mean_return,
    }
}

/// Reward-to-go advantages with a per-timestep mean baseline, normalized
/// to unit scale across the batch. Returns None when every advantage is
/// (numerically) identical, in which case no gradient signal exists.
fn advantages(rollouts: &[Rollout]) -> Option<Vec<Vec<f64>>> {
    let t_len = rollouts[0].rewards.len();
    let mut togo: Vec<Vec<f64>> = Vec::with_capacity(rollouts.len());
    for r in rollouts {
        let mut acc = 0.0;
        let mut rev = vec![0.0; t_len];
        for t in (0..t_len).rev() {
            acc += r.rewards[t];
            rev[t] = acc;
        }
        togo.push(rev);
    }
    let n = rollouts.len() as f64;
    let mut adv = togo;
    for t in 0..t_len {
        let mean: f64 = adv.iter().map(|r| r[t]).sum::<f64>() / n;
        for r in adv.iter_mut() {
            r[t] -= mean;
        }
    }
    let count = (rollouts.len() * t_len) as f64;
    let var: f64 = adv.iter().flatten().map(|&v| v * v).sum::<f64>() / count;
    let std = var.sqrt();
    if std < 1e-8 {
        return None;
    }
    for r in adv.iter_mut() {
        for v in r.iter_mut() {
            *v /= std;
        }
    }
    Some(adv)
}

/// Plain conjugate gradients for the damped Fisher system.
fn conjugate_gradient<F>(fvp: F, g: &DVector<f64>, iters: usize) -> Option<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut x = DVector::zeros(g.len());
    let mut r = g.clone();
    let mut p = g.clone();
    let mut rs = r.dot(&r);
    if rs == 0.0 {
        return None;
    }
    for _ in 0..iters {
        let fp = fvp(&p);
        let p_fp = p.dot(&fp);
        if !p_fp.is_finite() || p_fp <= 0.0 {
            return None;
        }
        let alpha = rs / p_fp;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &fp, 1.0);
        let rs_new = r.dot(&r);
        if !rs_new.is_finite() {
            return None;
        }
        if rs_new < 1e-12 {
            break;
        }
        p = &r + &p * (rs_new / rs);
        rs = rs_new;
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// One natural-gradient update in place. Returns what happened; the
/// policy is left untouched when no acceptable step exists.
pub fn natural_pg_update(
    policy: &mut GaussianPolicy,
    rollouts: &[Rollout],
    cfg: &PgConfig,
) -> Result<PgUpdateReport> {
    assert!(!rollouts.is_empty());
    let mean_return =
        rollouts.iter().map(Rollout::total_reward).sum::<f64>() / rollouts.len() as f64;
    let Some(adv) = advantages(rollouts) else {
        return Ok(no_op(mean_return));
    };

    // Flatten (state, action, advantage) triples once.
    let mut states: Vec<Vec<f64>> = Vec::new();
    let mut actions: Vec<[f64; 2]> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (r, ra) in rollouts.iter().zip(&adv) {
        for t in 0..r.actions.len() {
            states.push(r.states[t].clone());
            actions.push(r.actions[t]);
            weights.push(ra[t]);
        }
    }
    let n = states.len() as f64;

    let mut g = DVector::zeros(policy.param_count());
    for ((s, a), &w) in states.iter().zip(&actions).zip(&weights) {
        g.axpy(w / n, &policy.grad_log_prob(s, a), 1.0);
    }
    if g.iter().all(|&v| v == 0.0) {
        return Ok(no_op(mean_return));
    }

    let fvp = |v: &DVector<f64>| policy.fisher_vector_product(&states, v, cfg.cg_damping);
    // Fall back to the raw gradient direction when CG stalls.
    let direction = conjugate_gradient(&fvp, &g, cfg.cg_iters).unwrap_or_else(|| g.clone());
    let quad = direction.dot(&fvp(&direction));
    if !quad.is_finite() || quad <= 0.0 {
        return Ok(no_op(mean_return));
    }
    let full_step = (2.0 * cfg.max_kl / quad).sqrt();

    let old = policy.clone();
    let old_flat = old.flatten();
    let old_log_probs: Vec<f64> =
        states.iter().zip(&actions).map(|(s, a)| old.log_prob(s, a)).collect();
    let surrogate = |p: &GaussianPolicy| -> f64 {
        let mut acc = 0.0;
        for (((s, a), &w), &lp0) in states.iter().zip(&actions).zip(&weights).zip(&old_log_probs) {
            acc += (p.log_prob(s, a) - lp0).exp() * w;
        }
        acc / n
    };
    let base = surrogate(&old);

    for i in 0..cfg.backtracks {
        let scale = full_step * 0.5f64.powi(i as i32);
        let candidate_flat = &old_flat + &direction * scale;
        policy.set_from_flat(&candidate_flat)?;
        let kl = old.kl_mean(policy, &states);
        let improvement = surrogate(policy) - base;
        if kl.is_finite() && kl <= cfg.max_kl && improvement > 0.0 {
            return Ok(PgUpdateReport {
                accepted: true,
                kl,
                surrogate_improvement: improvement,
                backtracks_used: i,
                mean_return,
            });
        }
    }
    policy.set_from_flat(&old_flat)?;
    Ok(no_op(mean_return))
}
