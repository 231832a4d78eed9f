//! Time-varying linear-quadratic control on fitted dynamics.
//!
//! Model-based half of policy learning: transitions collected in the
//! simulator are fit with per-timestep affine models, a quadratic cost
//! built from translated feature targets is minimized by a Riccati
//! backward pass, and the result is a time-varying linear-Gaussian
//! controller whose exploration covariance follows the local action
//! curvature.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use envsim::{ActionVec, ACTION_MAX};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand_chacha::ChaCha8Rng;

use nncore::container::{read_records, write_records};
use nncore::{NnError, Tensor};

use crate::policy::gauss_pair;
use crate::rollout::{Agent, StepView};
use crate::{PolicyError, Result};

/// One observed (state, action, next-state) triple.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
}

/// Per-timestep affine model s' = A s + B u + c.
#[derive(Debug, Clone)]
pub struct AffineDynamics {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub c: Vec<DVector<f64>>,
}

impl AffineDynamics {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn state_dim(&self) -> usize {
        self.a.first().map_or(0, |m| m.nrows())
    }

    pub fn action_dim(&self) -> usize {
        self.b.first().map_or(0, |m| m.ncols())
    }
}

/// Cost sum_t (s_t' L_t s_t - 2 l_t' s_t) + alpha * |u_t|^2 with one
/// (L, l) pair per state visit, horizon + 1 in total.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub state_quad: Vec<DMatrix<f64>>,
    pub state_lin: Vec<DVector<f64>>,
    pub action_penalty: f64,
}

#[derive(Debug, Clone)]
pub struct LqrConfig {
    /// Ridge strength for the dynamics fit.
    pub ridge: f64,
    /// Initial diagonal boost when the action-curvature factorization
    /// fails; grows fivefold per retry.
    pub jitter: f64,
    pub jitter_tries: usize,
    /// Smallest eigenvalue allowed in exploration covariances.
    pub cov_floor: f64,
}

impl Default for LqrConfig {
    fn default() -> Self {
        LqrConfig { ridge: 1e-3, jitter: 1e-6, jitter_tries: 8, cov_floor: 1e-4 }
    }
}

/// Time-varying affine controller u = K_t s + k_t with Gaussian
/// exploration noise per step.
#[derive(Debug, Clone)]
pub struct LinearGaussianController {
    pub gains: Vec<DMatrix<f64>>,
    pub offsets: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
    chols: Vec<DMatrix<f64>>,
}

impl LinearGaussianController {
    fn from_parts(
        gains: Vec<DMatrix<f64>>,
        offsets: Vec<DVector<f64>>,
        covs: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let mut chols = Vec::with_capacity(covs.len());
        for cov in &covs {
            let ch = Cholesky::new(cov.clone()).ok_or_else(|| {
                PolicyError::Numeric("exploration covariance is not positive definite".into())
            })?;
            chols.push(ch.l());
        }
        Ok(LinearGaussianController { gains, offsets, covs, chols })
    }

    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    pub fn covariance(&self, t: usize) -> &DMatrix<f64> {
        &self.covs[t.min(self.covs.len() - 1)]
    }

    pub fn mean_action(&self, state: &[f64], t: usize) -> Vec<f64> {
        let t = t.min(self.gains.len() - 1);
        let s = DVector::from_column_slice(state);
        let u = &self.gains[t] * s + &self.offsets[t];
        u.iter().copied().collect()
    }

    fn noisy_action(&self, state: &[f64], t: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let t = t.min(self.gains.len() - 1);
        let mut u = {
            let s = DVector::from_column_slice(state);
            &self.gains[t] * s + &self.offsets[t]
        };
        let dim = u.len();
        let mut z = DVector::zeros(dim);
        let mut i = 0;
        while i < dim {
            let (z0, z1) = gauss_pair(rng);
            z[i] = z0;
            if i + 1 < dim {
                z[i + 1] = z1;
            }
            i += 2;
        }
        u += &self.chols[t] * z;
        u.iter().copied().collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let t_len = self.gains.len();
        let m = self.gains[0].nrows();
        let n = self.gains[0].ncols();
        let flat = |mats: &[DMatrix<f64>]| -> Vec<f32> {
            // Row-major per timestep so the record reads [t, rows, cols].
            let mut out = Vec::new();
            for mat in mats {
                for r in 0..mat.nrows() {
                    for c in 0..mat.ncols() {
                        out.push(mat[(r, c)] as f32);
                    }
                }
            }
            out
        };
        let meta = Tensor::new(vec![3], vec![t_len as f32, m as f32, n as f32])?;
        let gains = Tensor::new(vec![t_len, m, n], flat(&self.gains))?;
        let covs = Tensor::new(vec![t_len, m, m], flat(&self.covs))?;
        let mut off = Vec::with_capacity(t_len * m);
        for v in &self.offsets {
            off.extend(v.iter().map(|&x| x as f32));
        }
        let offsets = Tensor::new(vec![t_len, m], off)?;
        let mut w = BufWriter::new(File::create(path).map_err(NnError::from)?);
        write_records(
            &mut w,
            &[
                ("__ctrl_meta", &meta),
                ("covs", &covs),
                ("gains", &gains),
                ("offsets", &offsets),
            ],
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |msg: &str| PolicyError::Nn(NnError::BadCheckpoint(msg.into()));
        let mut r = BufReader::new(File::open(path).map_err(NnError::from)?);
        let records = read_records(&mut r)?;
        let find = |name: &str| -> Result<&Tensor> {
            records
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| bad(&format!("controller file lacks record {name}")))
        };
        let meta = find("__ctrl_meta")?;
        if meta.shape() != [3] {
            return Err(bad("controller meta record has the wrong shape"));
        }
        let t_len = meta.data()[0] as usize;
        let m = meta.data()[1] as usize;
        let n = meta.data()[2] as usize;
        if t_len == 0 || m == 0 || n == 0 {
            return Err(bad("controller meta dimensions must be positive"));
        }
        let gains_t = find("gains")?;
        let offsets_t = find("offsets")?;
        let covs_t = find("covs")?;
        if gains_t.shape() != [t_len, m, n]
            || offsets_t.shape() != [t_len, m]
            || covs_t.shape() != [t_len, m, m]
        {
            return Err(bad("controller record shapes disagree with the meta record"));
        }
        let unflat = |t: &Tensor, rows: usize, cols: usize| -> Vec<DMatrix<f64>> {
            t.data()
                .chunks(rows * cols)
                .map(|ch| {
                    DMatrix::from_fn(rows, cols, |r, c| ch[r * cols + c] as f64)
                })
                .collect()
        };
        let gains = unflat(gains_t, m, n);
        let covs = unflat(covs_t, m, m);
        let offsets: Vec<DVector<f64>> = offsets_t
            .data()
            .chunks(m)
            .map(|ch| DVector::from_iterator(m, ch.iter().map(|&x| x as f64)))
            .collect();
        Self::from_parts(gains, offsets, covs)
    }
}

impl Agent for LinearGaussianController {
    fn act(&self, view: &StepView, rng: &mut ChaCha8Rng) -> ActionVec {
        let u = self.noisy_action(view.state, view.t, rng);
        // Clamp here so the recorded action equals the applied one and
        // dynamics fits stay consistent with what the simulator saw.
        ActionVec([
            (u[0] as f32).clamp(-ACTION_MAX, ACTION_MAX),
            (u[1] as f32).clamp(-ACTION_MAX, ACTION_MAX),
        ])
    }

    fn act_deterministic(&self, view: &StepView) -> ActionVec {
        let u = self.mean_action(view.state, view.t);
        ActionVec([
            (u[0] as f32).clamp(-ACTION_MAX, ACTION_MAX),
            (u[1] as f32).clamp(-ACTION_MAX, ACTION_MAX),
        ])
    }
}

/// Ridge-regularized least squares per timestep over rows [s' u' 1],
/// predicting the next state.
pub fn fit_linear_dynamics(per_step: &[Vec<Transition>], ridge: f64) -> Result<AffineDynamics> {
    if per_step.is_empty() {
        return Err(PolicyError::Config("dynamics fit needs at least one timestep".into()));
    }
    let first = per_step
        .first()
        .and_then(|v| v.first())
        .ok_or_else(|| PolicyError::Config("dynamics fit needs transitions at every step".into()))?;
    let n = first.state.len();
    let m = first.action.len();
    if n == 0 || m == 0 {
        return Err(PolicyError::Config("dynamics fit needs nonempty states and actions".into()));
    }
    let d = n + m + 1;
    let mut a = Vec::with_capacity(per_step.len());
    let mut b = Vec::with_capacity(per_step.len());
    let mut c = Vec::with_capacity(per_step.len());
    for (t, rows) in per_step.iter().enumerate() {
        if rows.is_empty() {
            return Err(PolicyError::Config(format!("no transitions recorded at timestep {t}")));
        }
        let mut gram = DMatrix::<f64>::zeros(d, d);
        let mut rhs = DMatrix::<f64>::zeros(d, n);
        let mut x = DVector::<f64>::zeros(d);
        for tr in rows {
            if tr.state.len() != n || tr.action.len() != m || tr.next_state.len() != n {
                return Err(PolicyError::Config(format!(
                    "transition dimensions changed at timestep {t}"
                )));
            }
            x.as_mut_slice()[..n].copy_from_slice(&tr.state);
            x.as_mut_slice()[n..n + m].copy_from_slice(&tr.action);
            x[d - 1] = 1.0;
            gram.ger(1.0, &x, &x, 1.0);
            for (j, &y) in tr.next_state.iter().enumerate() {
                rhs.column_mut(j).axpy(y, &x, 1.0);
            }
        }
        for i in 0..d {
            gram[(i, i)] += ridge;
        }
        let ch = Cholesky::new(gram)
            .ok_or_else(|| PolicyError::Numeric("dynamics normal equations not solvable".into()))?;
        let w = ch.solve(&rhs); // d x n, prediction is w' x
        let wt = w.transpose();
        a.push(wt.columns(0, n).into_owned());
        b.push(wt.columns(n, m).into_owned());
        c.push(wt.column(d - 1).into_owned());
    }
    Ok(AffineDynamics { a, b, c })
}

fn chol_with_jitter(mat: &DMatrix<f64>, cfg: &LqrConfig) -> Result<Cholesky<f64, Dyn>> {
    if let Some(ch) = Cholesky::new(mat.clone()) {
        return Ok(ch);
    }
    let mut jitter = cfg.jitter;
    for _ in 0..cfg.jitter_tries {
        let mut boosted = mat.clone();
        for i in 0..mat.nrows() {
            boosted[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(boosted) {
            return Ok(ch);
        }
        jitter *= 5.0;
    }
    Err(PolicyError::Numeric(format!(
        "action curvature stayed indefinite after jitter up to {jitter:.1e}"
    )))
}

/// Floor the eigenvalues of a symmetric matrix.
fn floor_eigs(mat: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = (mat + mat.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut vals = eig.eigenvalues;
    for v in vals.iter_mut() {
        if *v < floor {
            *v = floor;
        }
    }
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Backward Riccati pass. Value functions carry the convention
/// V(s) = s' V s + 2 v' s; the terminal pair is (L_T, -l_T) and each
/// earlier stage substitutes the minimizing action u = K s + k into the
/// closed-loop dynamics M = A + B K, m = B k + c.
pub fn lqr_backward(
    dynamics: &AffineDynamics,
    cost: &QuadraticCost,
    cfg: &LqrConfig,
) -> Result<LinearGaussianController> {
    let t_len = dynamics.horizon();
    if t_len == 0 {
        return Err(PolicyError::Config("zero-horizon control problem".into()));
    }
    if cost.state_quad.len() != t_len + 1 || cost.state_lin.len() != t_len + 1 {
        return Err(PolicyError::Config(format!(
            "cost has {} state terms for horizon {}; need horizon + 1",
            cost.state_quad.len(),
            t_len
        )));
    }
    let n = dynamics.state_dim();
    let m = dynamics.action_dim();
    if cost.state_quad.iter().any(|q| q.nrows() != n || q.ncols() != n)
        || cost.state_lin.iter().any(|l| l.len() != n)
    {
        return Err(PolicyError::Config(format!(
            "cost terms must match the {n}-dimensional state"
        )));
    }
    let alpha = cost.action_penalty;
    let mut v_quad = cost.state_quad[t_len].clone();
    let mut v_lin = -cost.state_lin[t_len].clone();
    let mut gains = vec![DMatrix::zeros(0, 0); t_len];
    let mut offsets = vec![DVector::zeros(0); t_len];
    let mut covs = vec![DMatrix::zeros(0, 0); t_len];
    for t in (0..t_len).rev() {
        let a = &dynamics.a[t];
        let b = &dynamics.b[t];
        let c = &dynamics.c[t];
        let vb = &v_quad * b; // n x m
        let mut q_uu = b.transpose() * &vb;
        for i in 0..m {
            q_uu[(i, i)] += alpha;
        }
        q_uu = (&q_uu + q_uu.transpose()) * 0.5;
        let ch = chol_with_jitter(&q_uu, cfg)?;
        let bva = vb.transpose() * a; // m x n
        let bvc = b.transpose() * (&v_quad * c + &v_lin); // m
        let k_gain = -ch.solve(&bva);
        let k_off = -ch.solve(&bvc);
        let closed_a = a + b * &k_gain;
        let closed_c = b * &k_off + c;
        let new_quad = &cost.state_quad[t]
            + k_gain.transpose() * &k_gain * alpha
            + closed_a.transpose() * &v_quad * &closed_a;
        let new_lin = -&cost.state_lin[t]
            + k_gain.transpose() * &k_off * alpha
            + closed_a.transpose() * (&v_quad * &closed_c)
            + closed_a.transpose() * &v_lin;
        v_quad = (&new_quad + new_quad.transpose()) * 0.5;
        v_lin = new_lin;
        let precision_inv = ch.inverse();
        covs[t] = floor_eigs(&precision_inv, cfg.cov_floor);
        gains[t] = k_gain;
        offsets[t] = k_off;
    }
    debug_assert_eq!(gains[0].ncols(), n);
    LinearGaussianController::from_parts(gains, offsets, covs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Independent scalar recursion in the textbook elimination form
    /// (Schur complement of the action block), no closed-loop
    /// substitution anywhere.
    fn scalar_oracle(
        a: &[f64],
        b: &[f64],
        c: &[f64],
        lq: &[f64],
        ll: &[f64],
        alpha: f64,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let t_len = a.len();
        let mut v = lq[t_len];
        let mut vl = -ll[t_len];
        let mut ks = vec![0.0; t_len];
        let mut koffs = vec![0.0; t_len];
        let mut quus = vec![0.0; t_len];
        for t in (0..t_len).rev() {
            let q_ss = lq[t] + a[t] * v * a[t];
            let q_uu = alpha + b[t] * v * b[t];
            let q_us = b[t] * v * a[t];
            let q_s = a[t] * (v * c[t] + vl) - ll[t];
            let q_u = b[t] * (v * c[t] + vl);
            ks[t] = -q_us / q_uu;
            koffs[t] = -q_u / q_uu;
            quus[t] = q_uu;
            v = q_ss - q_us * q_us / q_uu;
            vl = q_s - q_us * q_u / q_uu;
        }
        (ks, koffs, quus)
    }

    #[test]
    fn matches_independent_scalar_recursion() {
        let a = [1.1, 0.9, 1.05, 0.8, 1.2];
        let b = [0.7, 1.3, 0.5, 1.0, 0.6];
        let c = [0.1, -0.2, 0.05, 0.3, -0.1];
        let lq = [0.5, 1.0, 0.2, 0.8, 1.5, 2.0];
        let ll = [0.1, -0.3, 0.2, 0.0, 0.4, -0.5];
        let alpha = 0.3;
        let (ks, koffs, quus) = scalar_oracle(&a, &b, &c, &lq, &ll, alpha);
        let dynamics = AffineDynamics {
            a: a.iter().map(|&x| DMatrix::from_element(1, 1, x)).collect(),
            b: b.iter().map(|&x| DMatrix::from_element(1, 1, x)).collect(),
            c: c.iter().map(|&x| DVector::from_element(1, x)).collect(),
        };
        let cost = QuadraticCost {
            state_quad: lq.iter().map(|&x| DMatrix::from_element(1, 1, x)).collect(),
            state_lin: ll.iter().map(|&x| DVector::from_element(1, x)).collect(),
            action_penalty: alpha,
        };
        let ctrl = lqr_backward(&dynamics, &cost, &LqrConfig::default()).unwrap();
        for t in 0..a.len() {
            assert!(
                (ctrl.gains[t][(0, 0)] - ks[t]).abs() < 1e-9,
                "gain mismatch at {t}: {} vs {}",
                ctrl.gains[t][(0, 0)],
                ks[t]
            );
            assert!((ctrl.offsets[t][0] - koffs[t]).abs() < 1e-9);
            let sigma = (1.0 / quus[t]).max(LqrConfig::default().cov_floor);
            assert!((ctrl.covariance(t)[(0, 0)] - sigma).abs() < 1e-9);
        }
    }

    #[test]
    fn one_step_problem_matches_hand_arithmetic() {
        // s' = s + u, terminal cost s^2 - 2*0.5*s (minimum at 0.5),
        // action cost u^2. Minimizing (s+u)^2 - (s+u) + u^2 over u gives
        // u = -s/2 + 1/4; curvature 2 + 2 means precision 4, sigma 1/4.
        let dynamics = AffineDynamics {
            a: vec![DMatrix::from_element(1, 1, 1.0)],
            b: vec![DMatrix::from_element(1, 1, 1.0)],
            c: vec![DVector::from_element(1, 0.0)],
        };
        let cost = QuadraticCost {
            state_quad: vec![DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0)],
            state_lin: vec![DVector::zeros(1), DVector::from_element(1, 0.5)],
            action_penalty: 1.0,
        };
        let ctrl = lqr_backward(&dynamics, &cost, &LqrConfig::default()).unwrap();
        assert!((ctrl.gains[0][(0, 0)] - (-0.5)).abs() < 1e-12);
        assert!((ctrl.offsets[0][0] - 0.25).abs() < 1e-12);
        assert!((ctrl.covariance(0)[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn point_mass_controller_reaches_the_target() {
        // True dynamics s' = s + u in 2-d; quadratic cost pulls the
        // state to (0.6, -0.3) with a ramp profile.
        let t_len = 10;
        let target = DVector::from_column_slice(&[0.6, -0.3]);
        let eye = DMatrix::<f64>::identity(2, 2);
        let dynamics = AffineDynamics {
            a: vec![eye.clone(); t_len],
            b: vec![eye.clone(); t_len],
            c: vec![DVector::zeros(2); t_len],
        };
        let mut state_quad = Vec::new();
        let mut state_lin = Vec::new();
        for t in 0..=t_len {
            let w = (t as f64 / t_len as f64).powi(2);
            state_quad.push(&eye * w);
            state_lin.push(&target * w);
        }
        let cost = QuadraticCost { state_quad, state_lin, action_penalty: 1e-2 };
        let ctrl = lqr_backward(&dynamics, &cost, &LqrConfig::default()).unwrap();
        let mut s = vec![0.0, 0.0];
        for t in 0..t_len {
            let u = ctrl.mean_action(&s, t);
            s[0] += u[0];
            s[1] += u[1];
        }
        let miss = ((s[0] - 0.6f64).powi(2) + (s[1] + 0.3f64).powi(2)).sqrt();
        assert!(miss < 0.05, "final state {:?} missed the target by {miss}", s);
    }

    #[test]
    fn dynamics_fit_recovers_a_known_affine_model() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let t_len = 4;
        let n = 3;
        let m = 2;
        let mut per_step = Vec::new();
        let mut truth = Vec::new();
        for t in 0..t_len {
            let a = DMatrix::from_fn(n, n, |r, c| {
                0.1 * (t as f64) + if r == c { 0.9 } else { 0.05 * (r as f64 - c as f64) }
            });
            let b = DMatrix::from_fn(n, m, |r, c| 0.2 + 0.1 * r as f64 - 0.05 * c as f64);
            let c_vec = DVector::from_fn(n, |r, _| 0.01 * (r as f64 + t as f64));
            let mut rows = Vec::new();
            for _ in 0..40 {
                let s = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                let u = DVector::from_fn(m, |_, _| rng.random_range(-0.2..0.2));
                let next = &a * &s + &b * &u + &c_vec;
                rows.push(Transition {
                    state: s.iter().copied().collect(),
                    action: u.iter().copied().collect(),
                    next_state: next.iter().copied().collect(),
                });
            }
            per_step.push(rows);
            truth.push((a, b, c_vec));
        }
        let fit = fit_linear_dynamics(&per_step, 1e-3).unwrap();
        for t in 0..t_len {
            assert!((&fit.a[t] - &truth[t].0).abs().max() < 1e-2, "A off at step {t}");
            assert!((&fit.b[t] - &truth[t].1).abs().max() < 1e-2, "B off at step {t}");
            assert!((&fit.c[t] - &truth[t].2).abs().max() < 1e-2, "c off at step {t}");
        }
    }

    #[test]
    fn exploration_covariance_is_floored() {
        // Huge action penalty makes the unfloored covariance ~1e-6.
        let dynamics = AffineDynamics {
            a: vec![DMatrix::from_element(1, 1, 1.0)],
            b: vec![DMatrix::from_element(1, 1, 1.0)],
            c: vec![DVector::zeros(1)],
        };
        let cost = QuadraticCost {
            state_quad: vec![DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0)],
            state_lin: vec![DVector::zeros(1); 2],
            action_penalty: 1e6,
        };
        let cfg = LqrConfig::default();
        let ctrl = lqr_backward(&dynamics, &cost, &cfg).unwrap();
        assert!((ctrl.covariance(0)[(0, 0)] - cfg.cov_floor).abs() < 1e-12);
    }

    #[test]
    fn controller_round_trips_through_a_file() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let t_len = 3;
        let n = 4;
        let m = 2;
        let gains: Vec<DMatrix<f64>> = (0..t_len)
            .map(|_| DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let offsets: Vec<DVector<f64>> =
            (0..t_len).map(|_| DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0))).collect();
        let covs: Vec<DMatrix<f64>> = (0..t_len)
            .map(|_| {
                let g = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
                &g * g.transpose() + DMatrix::identity(m, m) * 0.5
            })
            .collect();
        let ctrl = LinearGaussianController::from_parts(gains, offsets, covs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("controller.bin");
        ctrl.save(&path).unwrap();
        let back = LinearGaussianController::load(&path).unwrap();
        assert_eq!(back.horizon(), t_len);
        for t in 0..t_len {
            for r in 0..m {
                for c in 0..n {
                    let orig = ctrl.gains[t][(r, c)] as f32;
                    assert_eq!(orig, back.gains[t][(r, c)] as f32);
                }
                assert_eq!(ctrl.offsets[t][r] as f32, back.offsets[t][r] as f32);
                for c in 0..m {
                    assert_eq!(
                        ctrl.covariance(t)[(r, c)] as f32,
                        back.covariance(t)[(r, c)] as f32
                    );
                }
            }
        }
        // Same state, same rng stream: identical noisy actions.
        let s = vec![0.1, -0.2, 0.3, 0.05];
        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let u1 = back.noisy_action(&s, 1, &mut r1);
        let u2 = back.noisy_action(&s, 1, &mut r2);
        assert_eq!(u1, u2);
    }

    #[test]
    fn indefinite_curvature_is_a_hard_error() {
        // Negative action penalty with no state cost cannot be repaired
        // by bounded jitter.
        let dynamics = AffineDynamics {
            a: vec![DMatrix::from_element(1, 1, 1.0)],
            b: vec![DMatrix::from_element(1, 1, 0.0)],
            c: vec![DVector::zeros(1)],
        };
        let cost = QuadraticCost {
            state_quad: vec![DMatrix::zeros(1, 1); 2],
            state_lin: vec![DVector::zeros(1); 2],
            action_penalty: -1.0,
        };
        let err = lqr_backward(&dynamics, &cost, &LqrConfig::default()).unwrap_err();
        assert!(matches!(err, PolicyError::Numeric(_)));
    }
}
