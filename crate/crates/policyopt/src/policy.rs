//! Diagonal-Gaussian policy with a small tanh MLP mean network and a
//! state-independent log standard deviation. All math runs in f64;
//! checkpoints store f32.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use nncore::container::{read_records, write_records};
use nncore::{NnError, Tensor};

use crate::{PolicyError, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub in_dim: usize,
    pub hidden: usize,
    pub act_dim: usize,
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    w2: DMatrix<f64>,
    b2: DVector<f64>,
    w3: DMatrix<f64>,
    b3: DVector<f64>,
    log_std: DVector<f64>,
}

/// Forward activations kept for backprop through the mean network.
pub struct MeanCache {
    x: DVector<f64>,
    h1: DVector<f64>,
    h2: DVector<f64>,
    pub mu: DVector<f64>,
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
}

/// One standard-normal pair via the Box-Muller transform.
pub(crate) fn gauss_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    let r = (-2.0 * u1.ln()).sqrt();
    let th = std::f64::consts::TAU * u2;
    (r * th.cos(), r * th.sin())
}

impl GaussianPolicy {
    pub fn new(
        in_dim: usize,
        hidden: usize,
        act_dim: usize,
        init_std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if in_dim == 0 || hidden == 0 || act_dim == 0 || !(init_std > 0.0) {
            return Err(PolicyError::Config("policy dimensions and init_std must be positive".into()));
        }
        let ls = init_std.ln().clamp(LOG_STD_MIN, LOG_STD_MAX);
        Ok(GaussianPolicy {
            in_dim,
            hidden,
            act_dim,
            w1: glorot(hidden, in_dim, rng),
            b1: DVector::zeros(hidden),
            w2: glorot(hidden, hidden, rng),
            b2: DVector::zeros(hidden),
            w3: glorot(act_dim, hidden, rng),
            b3: DVector::zeros(act_dim),
            log_std: DVector::from_element(act_dim, ls),
        })
    }

    pub fn param_count(&self) -> usize {
        self.w1.len()
            + self.b1.len()
            + self.w2.len()
            + self.b2.len()
            + self.w3.len()
            + self.b3.len()
            + self.log_std.len()
    }

    /// Canonical flat parameter order: w1, b1, w2, b2, w3, b3, log_std,
    /// matrices flattened column-major.
    pub fn flatten(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for block in [
            self.w1.as_slice(),
            self.b1.as_slice(),
            self.w2.as_slice(),
            self.b2.as_slice(),
            self.w3.as_slice(),
            self.b3.as_slice(),
            self.log_std.as_slice(),
        ] {
            out.extend_from_slice(block);
        }
        DVector::from_vec(out)
    }

    pub fn set_from_flat(&mut self, flat: &DVector<f64>) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(PolicyError::Config(format!(
                "flat vector has {} entries, policy has {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat.as_slice()[off..off + dst.len()]);
            off += dst.len();
        };
        take(self.w1.as_mut_slice());
        take(self.b1.as_mut_slice());
        take(self.w2.as_mut_slice());
        take(self.b2.as_mut_slice());
        take(self.w3.as_mut_slice());
        take(self.b3.as_mut_slice());
        take(self.log_std.as_mut_slice());
        for v in self.log_std.iter_mut() {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
        Ok(())
    }

    /// Offset of the log_std block inside the flat layout.
    pub fn log_std_offset(&self) -> usize {
        self.param_count() - self.act_dim
    }

    pub fn forward(&self, state: &[f64]) -> MeanCache {
        assert_eq!(state.len(), self.in_dim);
        let x = DVector::from_column_slice(state);
        let h1 = (&self.w1 * &x + &self.b1).map(f64::tanh);
        let h2 = (&self.w2 * &h1 + &self.b2).map(f64::tanh);
        let mu = &self.w3 * &h2 + &self.b3;
        MeanCache { x, h1, h2, mu }
    }

    pub fn std(&self) -> DVector<f64> {
        self.log_std.map(f64::exp)
    }

    pub fn log_std(&self) -> &DVector<f64> {
        &self.log_std
    }

    /// Writes the gradient of mean component `d` into `out` (flat layout,
    /// log_std block untouched), scaled by `scale` and accumulated.
    pub fn accumulate_mean_grad(&self, cache: &MeanCache, d: usize, scale: f64, out: &mut DVector<f64>) {
        let dh2 = self.w3.row(d).transpose() * scale;
        let da2 = dh2.component_mul(&cache.h2.map(|h| 1.0 - h * h));
        let dh1 = self.w2.transpose() * &da2;
        let da1 = dh1.component_mul(&cache.h1.map(|h| 1.0 - h * h));

        let (h, n, a) = (self.hidden, self.in_dim, self.act_dim);
        let s = out.as_mut_slice();
        // w1 column-major: entry (r, c) at c * h + r.
        for c in 0..n {
            let xc = cache.x[c];
            for r in 0..h {
                s[c * h + r] += da1[r] * xc;
            }
        }
        let b1_off = h * n;
        for r in 0..h {
            s[b1_off + r] += da1[r];
        }
        let w2_off = b1_off + h;
        for c in 0..h {
            let hc = cache.h1[c];
            for r in 0..h {
                s[w2_off + c * h + r] += da2[r] * hc;
            }
        }
        let b2_off = w2_off + h * h;
        for r in 0..h {
            s[b2_off + r] += da2[r];
        }
        let w3_off = b2_off + h;
        // Row d of w3: entry (d, c) at c * a + d.
        for c in 0..h {
            s[w3_off + c * a + d] += scale * cache.h2[c];
        }
        let b3_off = w3_off + a * h;
        s[b3_off + d] += scale;
    }

    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> f64 {
        let cache = self.forward(state);
        let mut lp = 0.0;
        for d in 0..self.act_dim {
            let ls = self.log_std[d];
            let inv_var = (-2.0 * ls).exp();
            let diff = action[d] - cache.mu[d];
            lp += -0.5 * (std::f64::consts::TAU).ln() - ls - 0.5 * diff * diff * inv_var;
        }
        lp
    }

    /// Gradient of log pi(action | state) in the flat layout.
    pub fn grad_log_prob(&self, state: &[f64], action: &[f64]) -> DVector<f64> {
        let cache = self.forward(state);
        let mut out = DVector::zeros(self.param_count());
        let ls_off = self.log_std_offset();
        for d in 0..self.act_dim {
            let inv_var = (-2.0 * self.log_std[d]).exp();
            let diff = action[d] - cache.mu[d];
            self.accumulate_mean_grad(&cache, d, diff * inv_var, &mut out);
            out[ls_off + d] = diff * diff * inv_var - 1.0;
        }
        out
    }

    /// Draws an action; the caller's environment applies its own clamp.
    pub fn sample(&self, state: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let cache = self.forward(state);
        let std = self.std();
        let mut out = Vec::with_capacity(self.act_dim);
        let mut pending: Option<f64> = None;
        for d in 0..self.act_dim {
            let z = match pending.take() {
                Some(z) => z,
                None => {
                    let (a, b) = gauss_pair(rng);
                    pending = Some(b);
                    a
                }
            };
            out.push(cache.mu[d] + std[d] * z);
        }
        out
    }

    /// Mean divergence KL(self || other) over a batch of states; both
    /// policies are diagonal Gaussians, so the divergence is closed-form.
    pub fn kl_mean(&self, other: &GaussianPolicy, states: &[Vec<f64>]) -> f64 {
        assert!(!states.is_empty());
        let mut acc = 0.0;
        for s in states {
            let mu0 = self.forward(s).mu;
            let mu1 = other.forward(s).mu;
            for d in 0..self.act_dim {
                let ls0 = self.log_std[d];
                let ls1 = other.log_std[d];
                let var0 = (2.0 * ls0).exp();
                let inv_var1 = (-2.0 * ls1).exp();
                let dm = mu0[d] - mu1[d];
                acc += ls1 - ls0 + 0.5 * (var0 + dm * dm) * inv_var1 - 0.5;
            }
        }
        acc / states.len() as f64
    }

    /// Exact Fisher-vector product for the diagonal Gaussian, averaged
    /// over states: the mean block is J^T diag(1/var) J with J the
    /// per-state mean Jacobian, and the log_std block is the constant 2I.
    pub fn fisher_vector_product(
        &self,
        states: &[Vec<f64>],
        v: &DVector<f64>,
        damping: f64,
    ) -> DVector<f64> {
        assert!(!states.is_empty());
        let mut out = v * damping;
        let ls_off = self.log_std_offset();
        for d in 0..self.act_dim {
            out[ls_off + d] += 2.0 * v[ls_off + d];
        }
        let inv_n = 1.0 / states.len() as f64;
        let mut jrow = DVector::zeros(self.param_count());
        for s in states {
            let cache = self.forward(s);
            for d in 0..self.act_dim {
                jrow.fill(0.0);
                self.accumulate_mean_grad(&cache, d, 1.0, &mut jrow);
                let inv_var = (-2.0 * self.log_std[d]).exp();
                let coeff = jrow.dot(v) * inv_var * inv_n;
                out.axpy(coeff, &jrow, 1.0);
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = Tensor::new(
            vec![3],
            vec![self.in_dim as f32, self.hidden as f32, self.act_dim as f32],
        )?;
        let data: Vec<f32> = self.flatten().iter().map(|&v| v as f32).collect();
        let params = Tensor::new(vec![data.len()], data)?;
        let mut w = BufWriter::new(File::create(path).map_err(NnError::from)?);
        write_records(&mut w, &[("__policy_meta", &meta), ("params", &params)])?;
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
                .ok_or_else(|| bad(&format!("policy file lacks record {name}")))
        };
        let meta = find("__policy_meta")?;
        if meta.shape() != [3] {
            return Err(bad("policy meta record has the wrong shape"));
        }
        let dims: Vec<usize> = meta.data().iter().map(|&v| v as usize).collect();
        let (in_dim, hidden, act_dim) = (dims[0], dims[1], dims[2]);
        if in_dim == 0 || hidden == 0 || act_dim == 0 {
            return Err(bad("policy meta dimensions must be positive"));
        }
        let mut policy = GaussianPolicy {
            in_dim,
            hidden,
            act_dim,
            w1: DMatrix::zeros(hidden, in_dim),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(hidden, hidden),
            b2: DVector::zeros(hidden),
            w3: DMatrix::zeros(act_dim, hidden),
            b3: DVector::zeros(act_dim),
            log_std: DVector::zeros(act_dim),
        };
        let params = find("params")?;
        if params.numel() != policy.param_count() {
            return Err(bad(&format!(
                "policy file holds {} parameters, meta dimensions need {}",
                params.numel(),
                policy.param_count()
            )));
        }
        let flat =
            DVector::from_iterator(params.numel(), params.data().iter().map(|&v| v as f64));
        policy.set_from_flat(&flat)?;
        Ok(policy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn policy(seed: u64) -> GaussianPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GaussianPolicy::new(3, 8, 2, 0.2, &mut rng).unwrap()
    }

    fn states() -> Vec<Vec<f64>> {
        vec![vec![0.3, -0.2, 0.5], vec![-0.7, 0.1, 0.0], vec![0.05, 0.9, -0.4]]
    }

    #[test]
    fn flat_round_trip_is_identity() {
        let p = policy(1);
        let flat = p.flatten();
        assert_eq!(flat.len(), p.param_count());
        let mut q = policy(2);
        q.set_from_flat(&flat).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let p = policy(3);
        let s = vec![0.4, -0.1, 0.2];
        let a = vec![0.05, -0.12];
        let analytic = p.grad_log_prob(&s, &a);
        let flat = p.flatten();
        let h = 1e-6;
        // Every 7th index plus the log_std block keeps the test fast while
        // touching all blocks.
        let mut idxs: Vec<usize> = (0..p.param_count()).step_by(7).collect();
        idxs.push(p.log_std_offset());
        idxs.push(p.log_std_offset() + 1);
        for idx in idxs {
            let mut q = p.clone();
            let mut fp = flat.clone();
            fp[idx] += h;
            q.set_from_flat(&fp).unwrap();
            let up = q.log_prob(&s, &a);
            let mut fm = flat.clone();
            fm[idx] -= h;
            q.set_from_flat(&fm).unwrap();
            let dn = q.log_prob(&s, &a);
            let fd = (up - dn) / (2.0 * h);
            assert!(
                (analytic[idx] - fd).abs() <= 1e-5 * analytic[idx].abs().max(fd.abs()).max(1.0),
                "idx {}: {} vs {}",
                idx,
                analytic[idx],
                fd
            );
        }
    }

    #[test]
    fn kl_is_zero_on_self_and_positive_off_self() {
        let p = policy(4);
        let q = policy(5);
        let st = states();
        assert!(p.kl_mean(&p, &st).abs() < 1e-12);
        assert!(p.kl_mean(&q, &st) > 0.0);
    }

    #[test]
    fn kl_curvature_matches_fisher_quadratic_form() {
        // For a small parameter step dv, KL(theta || theta + dv) is
        // 0.5 dv^T F dv + O(|dv|^3); this ties the KL and the Fisher
        // product to each other without either oracle being shared.
        let p = policy(6);
        let st = states();
        let flat = p.flatten();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dv = DVector::from_fn(p.param_count(), |_, _| rng.random_range(-1.0..1.0));
        let eps = 1e-3;
        let step = &dv * eps;
        let mut q = p.clone();
        q.set_from_flat(&(&flat + &step)).unwrap();
        let kl = p.kl_mean(&q, &st);
        let fv = p.fisher_vector_product(&st, &step, 0.0);
        let quad = 0.5 * step.dot(&fv);
        assert!(
            (kl - quad).abs() <= 1e-2 * quad.abs().max(1e-12),
            "kl {} vs quadratic form {}",
            kl,
            quad
        );
    }

    #[test]
    fn fisher_log_std_block_is_twice_identity() {
        let p = policy(7);
        let st = states();
        let mut v = DVector::zeros(p.param_count());
        let off = p.log_std_offset();
        v[off] = 0.7;
        v[off + 1] = -0.3;
        let fv = p.fisher_vector_product(&st, &v, 0.0);
        for i in 0..p.param_count() {
            let expect = if i == off {
                1.4
            } else if i == off + 1 {
                -0.6
            } else {
                0.0
            };
            assert!((fv[i] - expect).abs() < 1e-12, "i={}: {} vs {}", i, fv[i], expect);
        }
        // Damping adds a scaled copy of v.
        let fv_damped = p.fisher_vector_product(&st, &v, 0.5);
        assert!((fv_damped[off] - (1.4 + 0.35)).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic_and_concentrates_at_low_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut narrow = policy(8);
        let flat_len = narrow.param_count();
        let mut flat = narrow.flatten();
        flat[flat_len - 1] = LOG_STD_MIN;
        flat[flat_len - 2] = LOG_STD_MIN;
        narrow.set_from_flat(&flat).unwrap();
        let s = vec![0.2, 0.2, -0.3];
        let mu = narrow.forward(&s).mu;
        let a = narrow.sample(&s, &mut rng);
        assert!((a[0] - mu[0]).abs() < 0.01 && (a[1] - mu[1]).abs() < 0.01);

        let mut r1 = ChaCha8Rng::seed_from_u64(12);
        let mut r2 = ChaCha8Rng::seed_from_u64(12);
        assert_eq!(narrow.sample(&s, &mut r1), narrow.sample(&s, &mut r2));
    }

    #[test]
    fn log_std_is_clamped_on_load() {
        let mut p = policy(9);
        let mut flat = p.flatten();
        let off = p.log_std_offset();
        flat[off] = -20.0;
        flat[off + 1] = 5.0;
        p.set_from_flat(&flat).unwrap();
        assert_eq!(p.log_std()[0], LOG_STD_MIN);
        assert_eq!(p.log_std()[1], LOG_STD_MAX);
    }
}
