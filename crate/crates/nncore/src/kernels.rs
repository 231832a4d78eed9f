//! Forward and backward compute kernels, independent of the tape.
//!
//! Convolutions lower to GEMM through im2col/col2im. The transposed
//! convolution is implemented as the exact adjoint of the strided
//! convolution with the same kernel: its forward pass is the conv
//! input-gradient, and its input-gradient is the conv forward pass. That
//! identity is what makes <conv(x), y> == <x, deconv(y)> hold to rounding,
//! and the tests pin it.
//!
//! All image buffers are NCHW row-major. Backward kernels accumulate into
//! the provided gradient slices (+=), matching tape semantics where a
//! buffer may feed several consumers.

use crate::tensor::Tensor;
use crate::{NnError, Result};

/// C = A @ B + beta * C for row-major slices. `a` is m x k, `b` is k x n.
fn gemm(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], beta: f32, c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::sgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), n as isize, 1, beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// C = A^T @ B + beta * C where `a` is stored row-major as k x m.
fn gemm_at_b(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], beta: f32, c: &mut [f32]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::sgemm(
            m, k, n, 1.0, a.as_ptr(), 1, m as isize, b.as_ptr(), n as isize, 1, beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// C = A @ B^T + beta * C where `b` is stored row-major as n x k.
fn gemm_a_bt(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], beta: f32, c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::sgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), 1, k as isize, beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

fn conv_out_dim(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

#[derive(Debug, Clone, Copy)]
pub struct ConvGeom {
    pub n: usize,
    pub ci: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

pub fn conv2d_geom(
    input: &[usize],
    weights: &[usize],
    bias: &[usize],
    stride: usize,
    pad: usize,
) -> Result<ConvGeom> {
    let err = |detail: String| NnError::ShapeMismatch { op: "conv2d", detail };
    if input.len() != 4 || weights.len() != 4 || bias.len() != 1 {
        return Err(err(format!("input {:?} weights {:?} bias {:?}", input, weights, bias)));
    }
    let (n, ci, h, w) = (input[0], input[1], input[2], input[3]);
    let (co, wci, kh, kw) = (weights[0], weights[1], weights[2], weights[3]);
    if wci != ci || kh != kw || bias[0] != co || stride == 0 {
        return Err(err(format!(
            "input {:?} weights {:?} bias {:?} stride {}",
            input, weights, bias, stride
        )));
    }
    let k = kh;
    let oh = conv_out_dim(h, k, stride, pad)
        .ok_or_else(|| err(format!("kernel {} exceeds padded height {}", k, h + 2 * pad)))?;
    let ow = conv_out_dim(w, k, stride, pad)
        .ok_or_else(|| err(format!("kernel {} exceeds padded width {}", k, w + 2 * pad)))?;
    Ok(ConvGeom { n, ci, h, w, co, k, stride, pad, oh, ow })
}

/// Geometry of the transposed convolution. Weights are [ci, co, k, k] where
/// ci is the deconv input channel count. Output spatial dims are exactly
/// `upsample` times the input's, with internal padding (k - 1) / 2; the
/// constructor verifies that the adjoint convolution maps back to the input
/// size under the floor rule.
#[derive(Debug, Clone, Copy)]
pub struct DeconvGeom {
    pub n: usize,
    pub ci: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub k: usize,
    pub upsample: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

pub fn deconv2d_geom(
    input: &[usize],
    weights: &[usize],
    bias: &[usize],
    upsample: usize,
) -> Result<DeconvGeom> {
    let err = |detail: String| NnError::ShapeMismatch { op: "deconv2d", detail };
    if input.len() != 4 || weights.len() != 4 || bias.len() != 1 {
        return Err(err(format!("input {:?} weights {:?} bias {:?}", input, weights, bias)));
    }
    let (n, ci, h, w) = (input[0], input[1], input[2], input[3]);
    let (wci, co, kh, kw) = (weights[0], weights[1], weights[2], weights[3]);
    if wci != ci || kh != kw || bias[0] != co || upsample == 0 || kh % 2 == 0 {
        return Err(err(format!(
            "input {:?} weights {:?} bias {:?} upsample {}",
            input, weights, bias, upsample
        )));
    }
    let k = kh;
    let pad = (k - 1) / 2;
    let (oh, ow) = (h * upsample, w * upsample);
    if conv_out_dim(oh, k, upsample, pad) != Some(h) || conv_out_dim(ow, k, upsample, pad) != Some(w)
    {
        return Err(err(format!(
            "upsample {} with kernel {} is not adjoint-consistent for {}x{}",
            upsample, k, h, w
        )));
    }
    Ok(DeconvGeom { n, ci, h, w, co, k, upsample, pad, oh, ow })
}

/// Unrolls one image [ci, h, w] into columns [ci*k*k, oh*ow].
fn im2col(
    img: &[f32],
    ci: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    col: &mut [f32],
) {
    debug_assert_eq!(col.len(), ci * k * k * oh * ow);
    let mut r = 0;
    for c in 0..ci {
        let plane = &img[c * h * w..(c + 1) * h * w];
        for kh in 0..k {
            for kw in 0..k {
                let row = &mut col[r * oh * ow..(r + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * stride + kh) as isize - pad as isize;
                    let out_row = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * stride + kw) as isize - pad as isize;
                        out_row[ox] = if ix >= 0 && ix < w as isize { src[ix as usize] } else { 0.0 };
                    }
                }
                r += 1;
            }
        }
    }
}

/// Adjoint of `im2col`: scatter-adds columns back into the image.
fn col2im(
    col: &[f32],
    ci: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    img: &mut [f32],
) {
    debug_assert_eq!(col.len(), ci * k * k * oh * ow);
    debug_assert_eq!(img.len(), ci * h * w);
    let mut r = 0;
    for c in 0..ci {
        let plane = &mut img[c * h * w..(c + 1) * h * w];
        for kh in 0..k {
            for kw in 0..k {
                let row = &col[r * oh * ow..(r + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * stride + kh) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * stride + kw) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += row[oy * ow + ox];
                        }
                    }
                }
                r += 1;
            }
        }
    }
}

pub fn conv2d_fwd(input: &Tensor, weights: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let g = conv2d_geom(input.shape(), weights.shape(), bias.shape(), stride, pad)?;
    let kk = g.ci * g.k * g.k;
    let ohw = g.oh * g.ow;
    let mut col = vec![0.0; kk * ohw];
    let mut out = Tensor::zeros(vec![g.n, g.co, g.oh, g.ow])?;
    for i in 0..g.n {
        let img = &input.data()[i * g.ci * g.h * g.w..(i + 1) * g.ci * g.h * g.w];
        im2col(img, g.ci, g.h, g.w, g.k, g.stride, g.pad, g.oh, g.ow, &mut col);
        let dst = &mut out.data_mut()[i * g.co * ohw..(i + 1) * g.co * ohw];
        gemm(g.co, kk, ohw, weights.data(), &col, 0.0, dst);
        for c in 0..g.co {
            let b = bias.data()[c];
            for v in &mut dst[c * ohw..(c + 1) * ohw] {
                *v += b;
            }
        }
    }
    Ok(out)
}

pub fn conv2d_bwd(
    input: &Tensor,
    weights: &Tensor,
    d_out: &[f32],
    stride: usize,
    pad: usize,
    d_input: &mut [f32],
    d_weights: &mut [f32],
    d_bias: &mut [f32],
) {
    let g = conv2d_geom(
        input.shape(),
        weights.shape(),
        &[weights.shape()[0]],
        stride,
        pad,
    )
    .expect("conv2d_bwd called with shapes that passed forward");
    let kk = g.ci * g.k * g.k;
    let ohw = g.oh * g.ow;
    let mut col = vec![0.0; kk * ohw];
    let mut d_col = vec![0.0; kk * ohw];
    for i in 0..g.n {
        let img = &input.data()[i * g.ci * g.h * g.w..(i + 1) * g.ci * g.h * g.w];
        let dout_i = &d_out[i * g.co * ohw..(i + 1) * g.co * ohw];
        im2col(img, g.ci, g.h, g.w, g.k, g.stride, g.pad, g.oh, g.ow, &mut col);
        // dW += dOut_i @ col^T
        gemm_a_bt(g.co, ohw, kk, dout_i, &col, 1.0, d_weights);
        // dCol = W^T @ dOut_i, scattered back into dInput
        gemm_at_b(kk, g.co, ohw, weights.data(), dout_i, 0.0, &mut d_col);
        let dst = &mut d_input[i * g.ci * g.h * g.w..(i + 1) * g.ci * g.h * g.w];
        col2im(&d_col, g.ci, g.h, g.w, g.k, g.stride, g.pad, g.oh, g.ow, dst);
        for c in 0..g.co {
            d_bias[c] += dout_i[c * ohw..(c + 1) * ohw].iter().sum::<f32>();
        }
    }
}

pub fn deconv2d_fwd(input: &Tensor, weights: &Tensor, bias: &Tensor, upsample: usize) -> Result<Tensor> {
    let g = deconv2d_geom(input.shape(), weights.shape(), bias.shape(), upsample)?;
    let kk = g.co * g.k * g.k;
    let hw = g.h * g.w;
    let mut d_col = vec![0.0; kk * hw];
    let mut out = Tensor::zeros(vec![g.n, g.co, g.oh, g.ow])?;
    for i in 0..g.n {
        let x = &input.data()[i * g.ci * hw..(i + 1) * g.ci * hw];
        // col = W^T @ x, where W is [ci, co*k*k]
        gemm_at_b(kk, g.ci, hw, weights.data(), x, 0.0, &mut d_col);
        let dst = &mut out.data_mut()[i * g.co * g.oh * g.ow..(i + 1) * g.co * g.oh * g.ow];
        col2im(&d_col, g.co, g.oh, g.ow, g.k, g.upsample, g.pad, g.h, g.w, dst);
        let ohw = g.oh * g.ow;
        for c in 0..g.co {
            let b = bias.data()[c];
            for v in &mut dst[c * ohw..(c + 1) * ohw] {
                *v += b;
            }
        }
    }
    Ok(out)
}

pub fn deconv2d_bwd(
    input: &Tensor,
    weights: &Tensor,
    d_out: &[f32],
    upsample: usize,
    d_input: &mut [f32],
    d_weights: &mut [f32],
    d_bias: &mut [f32],
) {
    let g = deconv2d_geom(
        input.shape(),
        weights.shape(),
        &[weights.shape()[1]],
        upsample,
    )
    .expect("deconv2d_bwd called with shapes that passed forward");
    let kk = g.co * g.k * g.k;
    let hw = g.h * g.w;
    let ohw = g.oh * g.ow;
    let mut col = vec![0.0; kk * hw];
    for i in 0..g.n {
        let x = &input.data()[i * g.ci * hw..(i + 1) * g.ci * hw];
        let dout_i = &d_out[i * g.co * ohw..(i + 1) * g.co * ohw];
        im2col(dout_i, g.co, g.oh, g.ow, g.k, g.upsample, g.pad, g.h, g.w, &mut col);
        // dInput += W @ col  (the adjoint's adjoint: a plain convolution)
        let dst = &mut d_input[i * g.ci * hw..(i + 1) * g.ci * hw];
        gemm(g.ci, kk, hw, weights.data(), &col, 1.0, dst);
        // dW += x @ col^T
        gemm_a_bt(g.ci, hw, kk, x, &col, 1.0, d_weights);
        for c in 0..g.co {
            d_bias[c] += dout_i[c * ohw..(c + 1) * ohw].iter().sum::<f32>();
        }
    }
}

pub fn dense_geom(input: &[usize], weights: &[usize], bias: &[usize]) -> Result<(usize, usize, usize)> {
    if input.len() == 2
        && weights.len() == 2
        && bias.len() == 1
        && input[1] == weights[0]
        && bias[0] == weights[1]
    {
        Ok((input[0], input[1], weights[1]))
    } else {
        Err(NnError::ShapeMismatch {
            op: "dense",
            detail: format!("input {:?} weights {:?} bias {:?}", input, weights, bias),
        })
    }
}

pub fn dense_fwd(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, f, o) = dense_geom(input.shape(), weights.shape(), bias.shape())?;
    let mut out = Tensor::zeros(vec![n, o])?;
    gemm(n, f, o, input.data(), weights.data(), 0.0, out.data_mut());
    for row in 0..n {
        let dst = &mut out.data_mut()[row * o..(row + 1) * o];
        for (v, b) in dst.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
    Ok(out)
}

pub fn dense_bwd(
    input: &Tensor,
    weights: &Tensor,
    d_out: &[f32],
    d_input: &mut [f32],
    d_weights: &mut [f32],
    d_bias: &mut [f32],
) {
    let (n, f, o) = dense_geom(input.shape(), weights.shape(), &[weights.shape()[1]])
        .expect("dense_bwd called with shapes that passed forward");
    // dIn += dOut @ W^T
    gemm_a_bt(n, o, f, d_out, weights.data(), 1.0, d_input);
    // dW += In^T @ dOut
    gemm_at_b(f, n, o, input.data(), d_out, 1.0, d_weights);
    for row in 0..n {
        for c in 0..o {
            d_bias[c] += d_out[row * o + c];
        }
    }
}

pub fn leaky_relu_fwd(input: &Tensor, leak: f32) -> Tensor {
    let data = input.data().iter().map(|&v| if v >= 0.0 { v } else { leak * v }).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

pub fn sigmoid_fwd(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

/// Concatenates two NCHW batches along the channel axis.
pub fn concat_channels_fwd(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 4
        || sb.len() != 4
        || sa[0] != sb[0]
        || sa[2] != sb[2]
        || sa[3] != sb[3]
    {
        return Err(NnError::ShapeMismatch {
            op: "concat_channels",
            detail: format!("{:?} vs {:?}", sa, sb),
        });
    }
    let (n, ca, cb, h, w) = (sa[0], sa[1], sb[1], sa[2], sa[3]);
    let hw = h * w;
    let mut out = Tensor::zeros(vec![n, ca + cb, h, w])?;
    for i in 0..n {
        let dst = &mut out.data_mut()[i * (ca + cb) * hw..(i + 1) * (ca + cb) * hw];
        dst[..ca * hw].copy_from_slice(&a.data()[i * ca * hw..(i + 1) * ca * hw]);
        dst[ca * hw..].copy_from_slice(&b.data()[i * cb * hw..(i + 1) * cb * hw]);
    }
    Ok(out)
}
