//! Wengert-list reverse-mode autodiff.
//!
//! Forward methods append one node per op and return the id of the output
//! buffer. `backward_seeded` walks the list in reverse once, accumulating
//! into per-buffer gradient slots; a buffer read by several later ops
//! therefore receives the sum of its consumers' contributions. The tape is
//! single-use per backward pass.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::kernels;
use crate::params::ParamSet;
use crate::tensor::Tensor;
use crate::{NnError, Result};

pub type BufId = usize;

/// Train samples dropout masks; Eval is the identity everywhere dropout
/// appears.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

enum Op {
    Conv2d { input: BufId, weights: BufId, bias: BufId, out: BufId, stride: usize, pad: usize },
    Deconv2d { input: BufId, weights: BufId, bias: BufId, out: BufId, upsample: usize },
    Dense { input: BufId, weights: BufId, bias: BufId, out: BufId },
    LeakyRelu { input: BufId, out: BufId, leak: f32 },
    Sigmoid { input: BufId, out: BufId },
    Dropout { input: BufId, out: BufId, mask: Vec<f32> },
    ConcatChannels { a: BufId, b: BufId, out: BufId },
    Identity { input: BufId, out: BufId },
    Mse { a: BufId, b: BufId, out: BufId },
    WeightedSum { terms: Vec<(BufId, f32)>, out: BufId },
}

pub struct Tape {
    bufs: Vec<Tensor>,
    grads: Vec<Option<Vec<f32>>>,
    ops: Vec<Op>,
    params: Vec<(String, BufId)>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Lazily allocates the gradient slot for a buffer.
fn slot<'a>(grads: &'a mut [Option<Vec<f32>>], bufs: &[Tensor], id: BufId) -> &'a mut Vec<f32> {
    grads[id].get_or_insert_with(|| vec![0.0; bufs[id].numel()])
}

impl Tape {
    pub fn new() -> Self {
        Tape { bufs: Vec::new(), grads: Vec::new(), ops: Vec::new(), params: Vec::new() }
    }

    fn push_buf(&mut self, t: Tensor) -> BufId {
        self.bufs.push(t);
        self.grads.push(None);
        self.bufs.len() - 1
    }

    /// Registers a constant leaf (inputs, targets). Gradients still flow to
    /// it and can be read back with `grad`.
    pub fn input(&mut self, t: Tensor) -> BufId {
        self.push_buf(t)
    }

    /// Copies a named parameter onto the tape. After backward,
    /// `accumulate_param_grads` folds the tape gradients back into the set.
    pub fn param(&mut self, params: &ParamSet, name: &str) -> Result<BufId> {
        let value = params.value(name)?.clone();
        let id = self.push_buf(value);
        self.params.push((name.to_string(), id));
        Ok(id)
    }

    pub fn value(&self, id: BufId) -> &Tensor {
        &self.bufs[id]
    }

    pub fn grad(&self, id: BufId) -> Option<&[f32]> {
        self.grads[id].as_deref()
    }

    pub fn conv2d(&mut self, input: BufId, weights: BufId, bias: BufId, stride: usize, pad: usize) -> Result<BufId> {
        let out = kernels::conv2d_fwd(&self.bufs[input], &self.bufs[weights], &self.bufs[bias], stride, pad)?;
        let out = self.push_buf(out);
        self.ops.push(Op::Conv2d { input, weights, bias, out, stride, pad });
        Ok(out)
    }

    pub fn deconv2d(&mut self, input: BufId, weights: BufId, bias: BufId, upsample: usize) -> Result<BufId> {
        let out = kernels::deconv2d_fwd(&self.bufs[input], &self.bufs[weights], &self.bufs[bias], upsample)?;
        let out = self.push_buf(out);
        self.ops.push(Op::Deconv2d { input, weights, bias, out, upsample });
        Ok(out)
    }

    pub fn dense(&mut self, input: BufId, weights: BufId, bias: BufId) -> Result<BufId> {
        let out = kernels::dense_fwd(&self.bufs[input], &self.bufs[weights], &self.bufs[bias])?;
        let out = self.push_buf(out);
        self.ops.push(Op::Dense { input, weights, bias, out });
        Ok(out)
    }

    pub fn leaky_relu(&mut self, input: BufId, leak: f32) -> BufId {
        let out = kernels::leaky_relu_fwd(&self.bufs[input], leak);
        let out = self.push_buf(out);
        self.ops.push(Op::LeakyRelu { input, out, leak });
        out
    }

    pub fn sigmoid(&mut self, input: BufId) -> BufId {
        let out = kernels::sigmoid_fwd(&self.bufs[input]);
        let out = self.push_buf(out);
        self.ops.push(Op::Sigmoid { input, out });
        out
    }

    /// Inverted dropout: in Train mode each element is zeroed with
    /// probability 1 - keep and survivors are scaled by 1 / keep, so the
    /// expectation matches Eval mode, where this is the identity.
    pub fn dropout(&mut self, input: BufId, keep: f32, mode: Mode, rng: &mut ChaCha8Rng) -> Result<BufId> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(NnError::ShapeMismatch {
                op: "dropout",
                detail: format!("keep probability {} outside (0, 1]", keep),
            });
        }
        if mode == Mode::Eval {
            let out = self.bufs[input].clone();
            let out = self.push_buf(out);
            self.ops.push(Op::Identity { input, out });
            return Ok(out);
        }
        let n = self.bufs[input].numel();
        let scale = 1.0 / keep;
        let mask: Vec<f32> =
            (0..n).map(|_| if rng.random::<f32>() < keep { scale } else { 0.0 }).collect();
        let data: Vec<f32> =
            self.bufs[input].data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::new(self.bufs[input].shape().to_vec(), data).expect("same shape");
        let out = self.push_buf(out);
        self.ops.push(Op::Dropout { input, out, mask });
        Ok(out)
    }

    pub fn concat_channels(&mut self, a: BufId, b: BufId) -> Result<BufId> {
        let out = kernels::concat_channels_fwd(&self.bufs[a], &self.bufs[b])?;
        let out = self.push_buf(out);
        self.ops.push(Op::ConcatChannels { a, b, out });
        Ok(out)
    }

    pub fn reshape(&mut self, input: BufId, shape: Vec<usize>) -> Result<BufId> {
        let out = self.bufs[input].reshaped(shape)?;
        let out = self.push_buf(out);
        self.ops.push(Op::Identity { input, out });
        Ok(out)
    }

    /// Mean over the leading (batch) dim of per-example squared L2 error:
    /// sum((a - b)^2) / a.shape[0]. Output is a scalar.
    pub fn mse(&mut self, a: BufId, b: BufId) -> Result<BufId> {
        let (ta, tb) = (&self.bufs[a], &self.bufs[b]);
        if ta.shape() != tb.shape() {
            return Err(NnError::ShapeMismatch {
                op: "mse",
                detail: format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            });
        }
        let batch = ta.shape()[0] as f64;
        let sum: f64 =
            ta.data().iter().zip(tb.data()).map(|(&x, &y)| ((x - y) as f64).powi(2)).sum();
        let out = self.push_buf(Tensor::scalar((sum / batch) as f32));
        self.ops.push(Op::Mse { a, b, out });
        Ok(out)
    }

    /// Scalar combination sum_i w_i * x_i over scalar buffers.
    pub fn weighted_sum(&mut self, terms: Vec<(BufId, f32)>) -> Result<BufId> {
        let mut acc = 0.0f32;
        for &(id, w) in &terms {
            if self.bufs[id].numel() != 1 {
                return Err(NnError::ShapeMismatch {
                    op: "weighted_sum",
                    detail: format!("term has shape {:?}", self.bufs[id].shape()),
                });
            }
            acc += w * self.bufs[id].data()[0];
        }
        let out = self.push_buf(Tensor::scalar(acc));
        self.ops.push(Op::WeightedSum { terms, out });
        Ok(out)
    }

    /// Backward from a scalar loss, seeding its gradient with 1.
    pub fn backward(&mut self, loss: BufId) -> Result<()> {
        if self.bufs[loss].numel() != 1 {
            return Err(NnError::ShapeMismatch {
                op: "backward",
                detail: format!("loss has shape {:?}", self.bufs[loss].shape()),
            });
        }
        self.backward_seeded(loss, &[1.0])
    }

    /// Backward from an arbitrary buffer with an explicit output gradient.
    pub fn backward_seeded(&mut self, out: BufId, seed: &[f32]) -> Result<()> {
        if seed.len() != self.bufs[out].numel() {
            return Err(NnError::ShapeMismatch {
                op: "backward",
                detail: format!("seed length {} vs buffer {}", seed.len(), self.bufs[out].numel()),
            });
        }
        let bufs = &self.bufs;
        let grads = &mut self.grads;
        slot(grads, bufs, out).copy_from_slice(seed);
        for op in self.ops.iter().rev() {
            // The gradient of an op's output is complete here: every
            // consumer sits later in the list and has already run.
            match op {
                Op::Conv2d { input, weights, bias, out, stride, pad } => {
                    let Some(d_out) = grads[*out].take() else { continue };
                    let mut d_input = std::mem::take(slot(grads, bufs, *input));
                    let mut d_w = std::mem::take(slot(grads, bufs, *weights));
                    let mut d_b = std::mem::take(slot(grads, bufs, *bias));
                    kernels::conv2d_bwd(
                        &bufs[*input], &bufs[*weights], &d_out, *stride, *pad,
                        &mut d_input, &mut d_w, &mut d_b,
                    );
                    grads[*input] = Some(d_input);
                    grads[*weights] = Some(d_w);
                    grads[*bias] = Some(d_b);
                }
                Op::Deconv2d { input, weights, bias, out, upsample } => {
                    let Some(d_out) = grads[*out].take() else { continue };
                    let mut d_input = std::mem::take(slot(grads, bufs, *input));
                    let mut d_w = std::mem::take(slot(grads, bufs, *weights));
                    let mut d_b = std::mem::take(slot(grads, bufs, *bias));
                    kernels::deconv2d_bwd(
                        &bufs[*input], &bufs[*weights], &d_out, *upsample,
                        &mut d_input, &mut d_w, &mut d_b,
                    );
                    grads[*input] = Some(d_input);
                    grads[*weights] = Some(d_w);
                    grads[*bias] = Some(d_b);
                }
                Op::Dense { input, weights, bias, out } => {
                    let Some(d_out) = grads[*out].take() else { continue };
                    let mut d_input = std::mem::take(slot(grads, bufs, *input));
                    let mut d_w = std::mem::take(slot(grads, bufs, *weights));
                    let mut d_b = std::mem::take(slot(grads, bufs, *bias));
                    kernels::dense_bwd(
                        &bufs[*input], &bufs[*weights], &d_out,
                        &mut d_input, &mut d_w, &mut d_b,
                    );
                    grads[*input] = Some(d_input);
                    grads[*weights] = Some(d_w);
                    grads[*bias] = Some(d_b);
                }
                Op::LeakyRelu { input, out, leak } => {
                    let Some(d_out) = grads[*out].take() else { continue };
                    let vals = bufs[*input].data();
                    let d_in = slot(grads, bufs, *input);
                    for i in 0..d_out.len() {
                        d_in[i] += d_out[i] * if vals[i] >= 0.0 { 1.0 } else { *leak };
                    }
                }
                Op::Sigmoid { input, out } => {
                    let Some(d_out) = grads[*out].take() else { continue };
                    let vals = bufs[*out].data();
                    let d_in = slot(grads, bufs, *input);
                    for i in 0..d_out.len() {
                        d_in[i] += d_out[i] * vals[i] * (1.0 - vals[i]);
                    }
                }
                Op::Dropout { input, out, mask } => {
                    let Some(d_out) = grads[*out].take() else { continue };
                    let d_in = slot(grads, bufs, *input);
                    for i in 0..d_out.len() {
                        d_in[i] += d_out[i] * mask[i];
                    }
                }
                Op::ConcatChannels { a, b, out } => {
                    let Some(d_out) = grads[*out].take() else { continue };
                    let (sa, sb) = (bufs[*a].shape(), bufs[*b].shape());
                    let (n, ca, cb, hw) = (sa[0], sa[1], sb[1], sa[2] * sa[3]);
                    let d_a = slot(grads, bufs, *a);
                    for i in 0..n {
                        let src = &d_out[i * (ca + cb) * hw..];
                        for j in 0..ca * hw {
                            d_a[i * ca * hw + j] += src[j];
                        }
                    }
                    let d_b = slot(grads, bufs, *b);
                    for i in 0..n {
                        let src = &d_out[i * (ca + cb) * hw + ca * hw..];
                        for j in 0..cb * hw {
                            d_b[i * cb * hw + j] += src[j];
                        }
                    }
                }
                Op::Identity { input, out } => {
                    let Some(d_out) = grads[*out].take() else { continue };
                    let d_in = slot(grads, bufs, *input);
                    for i in 0..d_out.len() {
                        d_in[i] += d_out[i];
                    }
                }
                Op::Mse { a, b, out } => {
                    let Some(d_out) = grads[*out].take() else { continue };
                    let scale = 2.0 * d_out[0] / bufs[*a].shape()[0] as f32;
                    let (va, vb) = (bufs[*a].data(), bufs[*b].data());
                    {
                        let d_a = slot(grads, bufs, *a);
                        for i in 0..va.len() {
                            d_a[i] += scale * (va[i] - vb[i]);
                        }
                    }
                    let d_b = slot(grads, bufs, *b);
                    for i in 0..va.len() {
                        d_b[i] -= scale * (va[i] - vb[i]);
                    }
                }
                Op::WeightedSum { terms, out } => {
                    let Some(d_out) = grads[*out].take() else { continue };
                    for &(id, w) in terms {
                        slot(grads, bufs, id)[0] += w * d_out[0];
                    }
                }
            }
        }
        Ok(())
    }

    /// Adds the tape's parameter gradients into the set, in registration
    /// order. Parameters the loss never touched contribute nothing. A name
    /// registered twice (tied weights) accumulates both contributions.
    pub fn accumulate_param_grads(&self, params: &mut ParamSet) -> Result<()> {
        for (name, id) in &self.params {
            if let Some(g) = self.grads[*id].as_ref() {
                let p = params.get_mut(name)?;
                for (dst, src) in p.grad.iter_mut().zip(g) {
                    *dst += src;
                }
            }
        }
        Ok(())
    }
}
