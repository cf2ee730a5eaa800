//! Dense tensor operations for the detector: 2D convolution (forward and
//! backward), max pooling, and ReLU.
//!
//! Layout conventions: activations are `[H, W, C]` row-major, convolution
//! kernels are `[kh, kw, Cin, Cout]`. Convolution is cross-correlation with
//! zero padding, lowered to a matrix product: an im2col buffer of shape
//! `[out_h*out_w, kh*kw*Cin]` times the kernel viewed as `[kh*kw*Cin, Cout]`.
//! The kernel's natural layout already matches the im2col column order, so
//! no reshuffling happens on the hot path.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn conv_shapes(
    input: &Tensor,
    kernel: &Tensor,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Result<(usize, usize, usize, usize)> {
    if input.shape().len() != 3 || kernel.shape().len() != 4 {
        return Err(Error::Shape(format!(
            "conv2d wants input [H,W,C] and kernel [kh,kw,Cin,Cout], got {:?} and {:?}",
            input.shape(),
            kernel.shape()
        )));
    }
    let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (kh, kw, kc, cout) = (
        kernel.shape()[0],
        kernel.shape()[1],
        kernel.shape()[2],
        kernel.shape()[3],
    );
    if kc != c {
        return Err(Error::Shape(format!(
            "kernel expects {} input channels but input {:?} has {}",
            kc,
            input.shape(),
            c
        )));
    }
    if stride.0 == 0 || stride.1 == 0 {
        return Err(Error::Shape("conv2d stride must be positive".to_string()));
    }
    let (ph, pw) = pad;
    if h + 2 * ph < kh || w + 2 * pw < kw {
        return Err(Error::Shape(format!(
            "kernel {:?} larger than padded input {:?} (pad {:?})",
            kernel.shape(),
            input.shape(),
            pad
        )));
    }
    let oh = (h + 2 * ph - kh) / stride.0 + 1;
    let ow = (w + 2 * pw - kw) / stride.1 + 1;
    Ok((oh, ow, cout, kh * kw * c))
}

/// Fills `cols[oh*ow, kh*kw*c]` with input patches; out-of-bounds (padding)
/// entries stay zero.
fn im2col(
    input: &Tensor,
    kh: usize,
    kw: usize,
    stride: (usize, usize),
    pad: (usize, usize),
    oh: usize,
    ow: usize,
    cols: &mut [f64],
) {
    let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let data = input.data();
    let patch = kh * kw * c;
    for r_out in 0..oh {
        for dkh in 0..kh {
            let src_r = (r_out * stride.0 + dkh) as isize - pad.0 as isize;
            if src_r < 0 || src_r >= h as isize {
                continue;
            }
            let src_row_base = src_r as usize * w * c;
            for c_out in 0..ow {
                let dst_base = (r_out * ow + c_out) * patch + dkh * kw * c;
                let src_c0 = (c_out * stride.1) as isize - pad.1 as isize;
                // Clip the kw-column window to the valid range.
                let lo = (-src_c0).max(0) as usize;
                let hi = (w as isize - src_c0).clamp(0, kw as isize) as usize;
                if lo >= hi {
                    continue;
                }
                let src = src_row_base + (src_c0 + lo as isize) as usize * c;
                let dst = dst_base + lo * c;
                let len = (hi - lo) * c;
                cols[dst..dst + len].copy_from_slice(&data[src..src + len]);
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds patch gradients back to input.
fn col2im(
    d_input: &mut Tensor,
    kh: usize,
    kw: usize,
    stride: (usize, usize),
    pad: (usize, usize),
    oh: usize,
    ow: usize,
    d_cols: &[f64],
) {
    let (h, w, c) = (d_input.shape()[0], d_input.shape()[1], d_input.shape()[2]);
    let data = d_input.data_mut();
    let patch = kh * kw * c;
    for r_out in 0..oh {
        for dkh in 0..kh {
            let src_r = (r_out * stride.0 + dkh) as isize - pad.0 as isize;
            if src_r < 0 || src_r >= h as isize {
                continue;
            }
            let src_row_base = src_r as usize * w * c;
            for c_out in 0..ow {
                let dst_base = (r_out * ow + c_out) * patch + dkh * kw * c;
                let src_c0 = (c_out * stride.1) as isize - pad.1 as isize;
                let lo = (-src_c0).max(0) as usize;
                let hi = (w as isize - src_c0).clamp(0, kw as isize) as usize;
                if lo >= hi {
                    continue;
                }
                let dst = src_row_base + (src_c0 + lo as isize) as usize * c;
                let src = dst_base + lo * c;
                for i in 0..(hi - lo) * c {
                    data[dst + i] += d_cols[src + i];
                }
            }
        }
    }
}

/// Row-major matrix product `c[m,n] = a[m,k] * b[k,n]`, with optional
/// transposes expressed through strides.
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    c: &mut [f64],
) {
    debug_assert!(c.len() == m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Cross-correlation of `input [H,W,Cin]` with `kernel [kh,kw,Cin,Cout]`
/// under zero padding. Output is
/// `[(H+2ph-kh)/sh+1, (W+2pw-kw)/sw+1, Cout]`.
pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Result<Tensor> {
    let (oh, ow, cout, patch) = conv_shapes(input, kernel, stride, pad)?;
    let (kh, kw) = (kernel.shape()[0], kernel.shape()[1]);
    let mut cols = vec![0.0f64; oh * ow * patch];
    im2col(input, kh, kw, stride, pad, oh, ow, &mut cols);
    let mut out = Tensor::zeros(&[oh, ow, cout]);
    gemm(
        oh * ow,
        patch,
        cout,
        &cols,
        (patch as isize, 1),
        kernel.data(),
        (cout as isize, 1),
        out.data_mut(),
    );
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to input and kernel, given the
/// upstream gradient `d_out`.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    stride: (usize, usize),
    pad: (usize, usize),
    d_out: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let (oh, ow, cout, patch) = conv_shapes(input, kernel, stride, pad)?;
    if d_out.shape() != [oh, ow, cout] {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match conv output [{}, {}, {}]",
            d_out.shape(),
            oh,
            ow,
            cout
        )));
    }
    let (kh, kw) = (kernel.shape()[0], kernel.shape()[1]);
    let m = oh * ow;
    let mut cols = vec![0.0f64; m * patch];
    im2col(input, kh, kw, stride, pad, oh, ow, &mut cols);

    // d_kernel[patch, cout] = cols^T [patch, m] * d_out [m, cout]
    let mut d_kernel = Tensor::zeros(kernel.shape());
    gemm(
        patch,
        m,
        cout,
        &cols,
        (1, patch as isize),
        d_out.data(),
        (cout as isize, 1),
        d_kernel.data_mut(),
    );

    // d_cols[m, patch] = d_out [m, cout] * kernel^T [cout, patch]
    let mut d_cols = vec![0.0f64; m * patch];
    gemm(
        m,
        cout,
        patch,
        d_out.data(),
        (cout as isize, 1),
        kernel.data(),
        (1, cout as isize),
        &mut d_cols,
    );
    let mut d_input = Tensor::zeros(input.shape());
    col2im(&mut d_input, kh, kw, stride, pad, oh, ow, &d_cols);
    Ok((d_input, d_kernel))
}

/// Max pooling without padding; ties go to the first maximizer in row-major
/// window order. Returns the pooled tensor and, per output element, the flat
/// index of its source element (needed by the backward pass).
pub fn maxpool(
    input: &Tensor,
    size: (usize, usize),
    stride: (usize, usize),
) -> Result<(Tensor, Vec<usize>)> {
    if input.shape().len() != 3 {
        return Err(Error::Shape(format!(
            "maxpool wants input [H,W,C], got {:?}",
            input.shape()
        )));
    }
    let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if size.0 == 0 || size.1 == 0 || stride.0 == 0 || stride.1 == 0 {
        return Err(Error::Shape("maxpool size and stride must be positive".to_string()));
    }
    if h < size.0 || w < size.1 {
        return Err(Error::Shape(format!(
            "pool window {:?} larger than input {:?}",
            size,
            input.shape()
        )));
    }
    let oh = (h - size.0) / stride.0 + 1;
    let ow = (w - size.1) / stride.1 + 1;
    let mut out = Tensor::zeros(&[oh, ow, c]);
    let mut argmax = vec![0usize; oh * ow * c];
    let data = input.data();
    for r in 0..oh {
        for col in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dr in 0..size.0 {
                    for dc in 0..size.1 {
                        let idx = ((r * stride.0 + dr) * w + col * stride.1 + dc) * c + ch;
                        if data[idx] > best {
                            best = data[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (r * ow + col) * c + ch;
                out.data_mut()[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok((out, argmax))
}

/// Routes upstream gradients back to each window's argmax element.
/// Overlapping windows that share a maximizer accumulate.
pub fn maxpool_backward(input_shape: &[usize], argmax: &[usize], d_out: &Tensor) -> Result<Tensor> {
    if d_out.len() != argmax.len() {
        return Err(Error::Shape(format!(
            "upstream gradient has {} elements but argmax has {}",
            d_out.len(),
            argmax.len()
        )));
    }
    let mut d_input = Tensor::zeros(input_shape);
    for (o, &src) in argmax.iter().enumerate() {
        d_input.data_mut()[src] += d_out.data()[o];
    }
    Ok(d_input)
}

/// Element-wise max(x, 0).
pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// ReLU gradient: passes `d_out` where the forward input was strictly
/// positive (the subgradient at exactly 0 is taken as 0).
pub fn relu_backward(input: &Tensor, d_out: &Tensor) -> Result<Tensor> {
    if input.shape() != d_out.shape() {
        return Err(Error::Shape(format!(
            "relu input {:?} and upstream gradient {:?} differ",
            input.shape(),
            d_out.shape()
        )));
    }
    let mut d_input = d_out.clone();
    for (d, &x) in d_input.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *d = 0.0;
        }
    }
    Ok(d_input)
}
