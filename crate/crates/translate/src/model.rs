//! Model parameters, the tape-based training graph, and the tape-free
//! evaluation path. Both paths call the same kernels in the same order,
//! so eval-mode outputs agree bitwise between them.

use envsim::ObservationImage;
use nncore::kernels;
use nncore::{BufId, Mode, ParamSet, Tape, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::arch::ArchConfig;
use crate::{images_to_batch, Result, TranslateError};

/// Which encoder an image goes through. With tied encoders both roles
/// share the "enc1" parameters; untied context images use "enc2".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoder {
    Source,
    Context,
}

#[derive(Debug, Clone)]
pub struct TranslationModel {
    pub arch: ArchConfig,
    pub tie_encoders: bool,
    pub lambda1: f32,
    pub lambda2: f32,
    pub params: ParamSet,
}

/// Weights applied to the three loss terms; ablations zero single fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub translation: f32,
    pub reconstruction: f32,
    pub alignment: f32,
}

/// Raw per-term values (batch means) and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub l_trans: f32,
    pub l_rec: f32,
    pub l_align: f32,
    pub total: f32,
}

/// One training triple: an observation from the source demo, the initial
/// frame of the target demo, and the time-aligned target observation.
#[derive(Debug, Clone, Copy)]
pub struct TrainSample<'a> {
    pub source: &'a ObservationImage,
    pub context_start: &'a ObservationImage,
    pub target: &'a ObservationImage,
}

enum Init {
    Glorot { fan_in: usize, fan_out: usize },
    Zero,
}

fn param_specs(arch: &ArchConfig, tie: bool) -> Vec<(String, Vec<usize>, Init)> {
    let k = arch.kernel;
    let kk = k * k;
    let mut specs = Vec::new();
    let enc_prefixes: &[&str] = if tie { &["enc1"] } else { &["enc1", "enc2"] };
    for prefix in enc_prefixes {
        let mut ci = 3;
        for (i, &co) in arch.enc_filters.iter().enumerate() {
            specs.push((
                format!("{}.c{}.w", prefix, i + 1),
                vec![co, ci, k, k],
                Init::Glorot { fan_in: ci * kk, fan_out: co * kk },
            ));
            specs.push((format!("{}.c{}.b", prefix, i + 1), vec![co], Init::Zero));
            ci = co;
        }
        let flat = arch.flat_dim();
        let f = arch.feature_dim;
        specs.push((format!("{}.f1.w", prefix), vec![flat, f], Init::Glorot { fan_in: flat, fan_out: f }));
        specs.push((format!("{}.f1.b", prefix), vec![f], Init::Zero));
        specs.push((format!("{}.f2.w", prefix), vec![f, f], Init::Glorot { fan_in: f, fan_out: f }));
        specs.push((format!("{}.f2.b", prefix), vec![f], Init::Zero));
    }
    let f = arch.feature_dim;
    specs.push(("trn.f1.w".into(), vec![2 * f, f], Init::Glorot { fan_in: 2 * f, fan_out: f }));
    specs.push(("trn.f1.b".into(), vec![f], Init::Zero));
    specs.push(("trn.f2.w".into(), vec![f, f], Init::Glorot { fan_in: f, fan_out: f }));
    specs.push(("trn.f2.b".into(), vec![f], Init::Zero));
    let flat = arch.flat_dim();
    specs.push(("dec.f.w".into(), vec![f, flat], Init::Glorot { fan_in: f, fan_out: flat }));
    specs.push(("dec.f.b".into(), vec![flat], Init::Zero));
    let dec_in = arch.dec_in_channels();
    for i in 0..4 {
        let (ci, co) = (dec_in[i], arch.dec_filters[i]);
        specs.push((
            format!("dec.d{}.w", i + 1),
            vec![ci, co, k, k],
            Init::Glorot { fan_in: ci * kk, fan_out: co * kk },
        ));
        specs.push((format!("dec.d{}.b", i + 1), vec![co], Init::Zero));
    }
    specs
}

impl TranslationModel {
    pub fn new(
        arch: ArchConfig,
        tie_encoders: bool,
        lambda1: f32,
        lambda2: f32,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        arch.validate()?;
        let mut params = ParamSet::new();
        for (name, shape, init) in param_specs(&arch, tie_encoders) {
            let numel: usize = shape.iter().product();
            let data = match init {
                Init::Zero => vec![0.0; numel],
                Init::Glorot { fan_in, fan_out } => {
                    let limit = (6.0 / (fan_in + fan_out) as f32).sqrt();
                    (0..numel).map(|_| rng.random_range(-limit..limit)).collect()
                }
            };
            params.insert(&name, Tensor::new(shape, data)?);
        }
        Ok(TranslationModel { arch, tie_encoders, lambda1, lambda2, params })
    }

    /// Reconstructs a model around an existing parameter set, verifying
    /// that every expected parameter is present with the right shape.
    pub fn from_params(
        arch: ArchConfig,
        tie_encoders: bool,
        lambda1: f32,
        lambda2: f32,
        params: ParamSet,
    ) -> Result<Self> {
        arch.validate()?;
        let specs = param_specs(&arch, tie_encoders);
        if params.len() != specs.len() {
            return Err(TranslateError::Config(format!(
                "parameter count {} does not match architecture ({} expected)",
                params.len(),
                specs.len()
            )));
        }
        for (name, shape, _) in &specs {
            let t = params
                .value(name)
                .map_err(|_| TranslateError::Config(format!("missing parameter {}", name)))?;
            if t.shape() != shape.as_slice() {
                return Err(TranslateError::Config(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    name,
                    t.shape(),
                    shape
                )));
            }
        }
        Ok(TranslationModel { arch, tie_encoders, lambda1, lambda2, params })
    }

    pub fn prefix(&self, enc: Encoder) -> &'static str {
        match enc {
            Encoder::Source => "enc1",
            Encoder::Context => {
                if self.tie_encoders {
                    "enc1"
                } else {
                    "enc2"
                }
            }
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights { translation: 1.0, reconstruction: self.lambda1, alignment: self.lambda2 }
    }
}

/// Tape-side encoder: returns the feature buffer and the four conv
/// activations (skips).
struct TapeEncoding {
    features: BufId,
    skips: [BufId; 4],
}

#[allow(clippy::too_many_arguments)]
fn encode_on_tape(
    tape: &mut Tape,
    model: &TranslationModel,
    enc: Encoder,
    img: BufId,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<TapeEncoding> {
    let arch = &model.arch;
    let prefix = model.prefix(enc);
    let pad = (arch.kernel - 1) / 2;
    let n = tape.value(img).shape()[0];
    let mut h = img;
    let mut skips = [0; 4];
    for i in 0..4 {
        let w = tape.param(&model.params, &format!("{}.c{}.w", prefix, i + 1))?;
        let b = tape.param(&model.params, &format!("{}.c{}.b", prefix, i + 1))?;
        h = tape.conv2d(h, w, b, arch.enc_strides[i], pad)?;
        h = tape.leaky_relu(h, arch.leak);
        skips[i] = h;
    }
    let mut z = tape.reshape(h, vec![n, arch.flat_dim()])?;
    for fc in ["f1", "f2"] {
        let w = tape.param(&model.params, &format!("{}.{}.w", prefix, fc))?;
        let b = tape.param(&model.params, &format!("{}.{}.b", prefix, fc))?;
        z = tape.dense(z, w, b)?;
        z = tape.leaky_relu(z, arch.leak);
        z = tape.dropout(z, arch.keep_prob, mode, rng)?;
    }
    Ok(TapeEncoding { features: z, skips })
}

fn translate_on_tape(
    tape: &mut Tape,
    model: &TranslationModel,
    z1: BufId,
    z2: BufId,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<BufId> {
    let f = model.arch.feature_dim;
    let n = tape.value(z1).shape()[0];
    let a = tape.reshape(z1, vec![n, f, 1, 1])?;
    let b = tape.reshape(z2, vec![n, f, 1, 1])?;
    let cat = tape.concat_channels(a, b)?;
    let mut z = tape.reshape(cat, vec![n, 2 * f])?;
    let w1 = tape.param(&model.params, "trn.f1.w")?;
    let b1 = tape.param(&model.params, "trn.f1.b")?;
    z = tape.dense(z, w1, b1)?;
    z = tape.leaky_relu(z, model.arch.leak);
    z = tape.dropout(z, model.arch.keep_prob, mode, rng)?;
    let w2 = tape.param(&model.params, "trn.f2.w")?;
    let b2 = tape.param(&model.params, "trn.f2.b")?;
    z = tape.dense(z, w2, b2)?;
    // Linear output head: z3 lives in the same space as encoder features.
    z = tape.dropout(z, model.arch.keep_prob, mode, rng)?;
    Ok(z)
}

fn decode_on_tape(
    tape: &mut Tape,
    model: &TranslationModel,
    z3: BufId,
    skips: &[BufId; 4],
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<BufId> {
    let arch = &model.arch;
    let n = tape.value(z3).shape()[0];
    let w = tape.param(&model.params, "dec.f.w")?;
    let b = tape.param(&model.params, "dec.f.b")?;
    let mut h = tape.dense(z3, w, b)?;
    h = tape.leaky_relu(h, arch.leak);
    h = tape.dropout(h, arch.keep_prob, mode, rng)?;
    let m = arch.map_hw();
    let mut x = tape.reshape(h, vec![n, arch.enc_filters[3], m, m])?;
    for i in 0..4 {
        let skip = skips[3 - i];
        x = tape.concat_channels(x, skip)?;
        let w = tape.param(&model.params, &format!("dec.d{}.w", i + 1))?;
        let b = tape.param(&model.params, &format!("dec.d{}.b", i + 1))?;
        x = tape.deconv2d(x, w, b, arch.dec_upsamples[i])?;
        if i < 3 {
            x = tape.leaky_relu(x, arch.leak);
        } else {
            x = tape.sigmoid(x);
        }
    }
    Ok(x)
}

/// Builds the full training graph for a batch and returns the tape, the
/// total-loss buffer, and the per-term report. Gradients flow after
/// `tape.backward(total)` and fold into the model's parameter set via
/// `tape.accumulate_param_grads`.
pub fn batch_loss_tape(
    model: &TranslationModel,
    samples: &[TrainSample],
    weights: &LossWeights,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<(Tape, BufId, LossReport)> {
    if samples.is_empty() {
        return Err(TranslateError::Config("empty batch".into()));
    }
    let src: Vec<&ObservationImage> = samples.iter().map(|s| s.source).collect();
    let ctx0: Vec<&ObservationImage> = samples.iter().map(|s| s.context_start).collect();
    let tgt: Vec<&ObservationImage> = samples.iter().map(|s| s.target).collect();
    let mut tape = Tape::new();
    let src_b = tape.input(images_to_batch(&src));
    let ctx0_b = tape.input(images_to_batch(&ctx0));
    let tgt_b = tape.input(images_to_batch(&tgt));

    let e_src = encode_on_tape(&mut tape, model, Encoder::Source, src_b, mode, rng)?;
    let e_ctx = encode_on_tape(&mut tape, model, Encoder::Context, ctx0_b, mode, rng)?;
    let z3 = translate_on_tape(&mut tape, model, e_src.features, e_ctx.features, mode, rng)?;
    let trans_img = decode_on_tape(&mut tape, model, z3, &e_ctx.skips, mode, rng)?;
    let l_trans = tape.mse(trans_img, tgt_b)?;

    let e_tgt = encode_on_tape(&mut tape, model, Encoder::Source, tgt_b, mode, rng)?;
    let rec_img = decode_on_tape(&mut tape, model, e_tgt.features, &e_tgt.skips, mode, rng)?;
    let l_rec = tape.mse(rec_img, tgt_b)?;

    let l_align = tape.mse(z3, e_tgt.features)?;

    let total = tape.weighted_sum(vec![
        (l_trans, weights.translation),
        (l_rec, weights.reconstruction),
        (l_align, weights.alignment),
    ])?;
    let report = LossReport {
        l_trans: tape.value(l_trans).data()[0],
        l_rec: tape.value(l_rec).data()[0],
        l_align: tape.value(l_align).data()[0],
        total: tape.value(total).data()[0],
    };
    Ok((tape, total, report))
}

/// Feature vector plus conv skips from the tape-free eval path.
#[derive(Debug, Clone)]
pub struct EvalEncoding {
    pub features: Tensor,
    pub skips: [Tensor; 4],
}

/// Eval-mode encoder (dropout is the identity).
pub fn eval_encode(model: &TranslationModel, enc: Encoder, batch: &Tensor) -> Result<EvalEncoding> {
    let arch = &model.arch;
    let prefix = model.prefix(enc);
    let pad = (arch.kernel - 1) / 2;
    let n = batch.shape()[0];
    let mut h = batch.clone();
    let mut skips: Vec<Tensor> = Vec::with_capacity(4);
    for i in 0..4 {
        let w = model.params.value(&format!("{}.c{}.w", prefix, i + 1))?;
        let b = model.params.value(&format!("{}.c{}.b", prefix, i + 1))?;
        h = kernels::conv2d_fwd(&h, w, b, arch.enc_strides[i], pad)?;
        h = kernels::leaky_relu_fwd(&h, arch.leak);
        skips.push(h.clone());
    }
    let mut z = h.reshaped(vec![n, arch.flat_dim()])?;
    for fc in ["f1", "f2"] {
        let w = model.params.value(&format!("{}.{}.w", prefix, fc))?;
        let b = model.params.value(&format!("{}.{}.b", prefix, fc))?;
        z = kernels::dense_fwd(&z, w, b)?;
        z = kernels::leaky_relu_fwd(&z, arch.leak);
    }
    let skips: [Tensor; 4] = skips.try_into().expect("four skips");
    Ok(EvalEncoding { features: z, skips })
}

/// Eval-mode translator: z3 from source features and context features.
pub fn eval_translate(model: &TranslationModel, z1: &Tensor, z2: &Tensor) -> Result<Tensor> {
    let f = model.arch.feature_dim;
    let n = z1.shape()[0];
    let mut cat = Vec::with_capacity(n * 2 * f);
    for row in 0..n {
        cat.extend_from_slice(&z1.data()[row * f..(row + 1) * f]);
        cat.extend_from_slice(&z2.data()[row * f..(row + 1) * f]);
    }
    let mut z = Tensor::new(vec![n, 2 * f], cat)?;
    let w1 = model.params.value("trn.f1.w")?;
    let b1 = model.params.value("trn.f1.b")?;
    z = kernels::dense_fwd(&z, w1, b1)?;
    z = kernels::leaky_relu_fwd(&z, model.arch.leak);
    let w2 = model.params.value("trn.f2.w")?;
    let b2 = model.params.value("trn.f2.b")?;
    z = kernels::dense_fwd(&z, w2, b2)?;
    Ok(z)
}

/// Eval-mode decoder over context skips.
pub fn eval_decode(model: &TranslationModel, z3: &Tensor, skips: &[Tensor; 4]) -> Result<Tensor> {
    let arch = &model.arch;
    let n = z3.shape()[0];
    let w = model.params.value("dec.f.w")?;
    let b = model.params.value("dec.f.b")?;
    let mut h = kernels::dense_fwd(z3, w, b)?;
    h = kernels::leaky_relu_fwd(&h, arch.leak);
    let m = arch.map_hw();
    let mut x = h.reshaped(vec![n, arch.enc_filters[3], m, m])?;
    for i in 0..4 {
        x = kernels::concat_channels_fwd(&x, &skips[3 - i])?;
        let w = model.params.value(&format!("dec.d{}.w", i + 1))?;
        let b = model.params.value(&format!("dec.d{}.b", i + 1))?;
        x = kernels::deconv2d_fwd(&x, w, b, arch.dec_upsamples[i])?;
        x = if i < 3 { kernels::leaky_relu_fwd(&x, arch.leak) } else { kernels::sigmoid_fwd(&x) };
    }
    Ok(x)
}
