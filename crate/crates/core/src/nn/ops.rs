//! Convolution, batch normalization and ReLU.
//!
//! 3x3 convolutions are lowered to GEMM through im2col, one band of rows at a
//! time. Band boundaries depend only on the image width, so the arithmetic
//! for every output element is the same whether bands run serially or on a
//! thread pool.

use rayon::prelude::*;

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const KERNEL_TAPS: usize = 9;

/// Upper bound on output pixels lowered at once.
const BAND_PIXELS: usize = 4096;

pub const BN_EPS: f64 = 1e-5;

fn band_rows(width: usize) -> usize {
    (BAND_PIXELS / width.max(1)).max(1)
}

/// Fill `col` (rows `y0..y1` of the output, row-major `[pixels, 9 * cin]`)
/// with zero-padded taps of `x`.
fn im2col(x: &Tensor, y0: usize, y1: usize, dilation: usize, col: &mut [f64]) {
    let (h, w, cin) = (x.height as isize, x.width as isize, x.channels);
    let d = dilation as isize;
    let row_len = KERNEL_TAPS * cin;
    for y in y0..y1 {
        for xx in 0..x.width {
            let dst = &mut col[((y - y0) * x.width + xx) * row_len..][..row_len];
            for ky in 0..3isize {
                let sy = y as isize + (ky - 1) * d;
                for kx in 0..3isize {
                    let sx = xx as isize + (kx - 1) * d;
                    let tap = &mut dst[((ky * 3 + kx) as usize) * cin..][..cin];
                    if sy < 0 || sy >= h || sx < 0 || sx >= w {
                        tap.fill(0.0);
                    } else {
                        let src = ((sy * w + sx) as usize) * cin;
                        tap.copy_from_slice(&x.data[src..src + cin]);
                    }
                }
            }
        }
    }
}

/// Scatter-add of [`im2col`]'s adjoint.
fn col2im_add(dcol: &[f64], y0: usize, y1: usize, dilation: usize, dx: &mut Tensor) {
    let (h, w, cin) = (dx.height as isize, dx.width as isize, dx.channels);
    let d = dilation as isize;
    let row_len = KERNEL_TAPS * cin;
    for y in y0..y1 {
        for xx in 0..dx.width {
            let src = &dcol[((y - y0) * dx.width + xx) * row_len..][..row_len];
            for ky in 0..3isize {
                let sy = y as isize + (ky - 1) * d;
                if sy < 0 || sy >= h {
                    continue;
                }
                for kx in 0..3isize {
                    let sx = xx as isize + (kx - 1) * d;
                    if sx < 0 || sx >= w {
                        continue;
                    }
                    let dst = ((sy * w + sx) as usize) * cin;
                    let tap = &src[((ky * 3 + kx) as usize) * cin..][..cin];
                    for (o, g) in dx.data[dst..dst + cin].iter_mut().zip(tap) {
                        *o += g;
                    }
                }
            }
        }
    }
}

/// `c[m x n] = alpha * a[m x k] * b[k x n] + beta * c`, all row-major unless
/// strides say otherwise.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: callers pass slices covering every index reachable through the
    // given shapes and strides; `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn check_conv(x: &Tensor, kernel: &[f64], bias: &[f64], cout: usize, dilation: usize) -> Result<()> {
    if kernel.len() != KERNEL_TAPS * x.channels * cout {
        return Err(Error::Shape(format!(
            "kernel has {} weights, expected 3x3x{}x{}",
            kernel.len(),
            x.channels,
            cout
        )));
    }
    if bias.len() != cout {
        return Err(Error::Shape(format!("bias has {} entries, expected {cout}", bias.len())));
    }
    if dilation == 0 {
        return Err(Error::Invalid("dilation must be positive".into()));
    }
    Ok(())
}

/// Same-size 3x3 convolution with zero padding. `kernel` is `[3, 3, cin, cout]`
/// row-major.
pub fn conv2d(
    x: &Tensor,
    kernel: &[f64],
    bias: &[f64],
    cout: usize,
    dilation: usize,
) -> Result<Tensor> {
    check_conv(x, kernel, bias, cout, dilation)?;
    let mut out = Tensor::zeros(x.height, x.width, cout);
    let rows = band_rows(x.width);
    let k = KERNEL_TAPS * x.channels;
    out.data.par_chunks_mut(rows * x.width * cout).enumerate().for_each(|(band, chunk)| {
        let y0 = band * rows;
        let y1 = (y0 + rows).min(x.height);
        let m = (y1 - y0) * x.width;
        let mut col = vec![0.0; m * k];
        im2col(x, y0, y1, dilation, &mut col);
        for px in chunk.chunks_exact_mut(cout) {
            px.copy_from_slice(bias);
        }
        gemm(m, k, cout, &col, (k as isize, 1), kernel, (cout as isize, 1), 1.0, chunk);
    });
    Ok(out)
}

/// Gradients of a [`conv2d`] call.
pub struct ConvGrads {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Option<Tensor>,
}

/// Reverse pass of [`conv2d`] given the output gradient `dout`.
pub fn conv2d_backward(
    x: &Tensor,
    kernel: &[f64],
    dout: &Tensor,
    dilation: usize,
    want_input: bool,
) -> Result<ConvGrads> {
    let cout = dout.channels;
    if dout.height != x.height || dout.width != x.width {
        return Err(Error::Shape("output gradient differs from input in size".into()));
    }
    check_conv(x, kernel, &vec![0.0; cout], cout, dilation)?;
    let k = KERNEL_TAPS * x.channels;
    let mut dkernel = vec![0.0; k * cout];
    let mut dbias = vec![0.0; cout];
    for px in dout.data.chunks_exact(cout) {
        for (b, g) in dbias.iter_mut().zip(px) {
            *b += g;
        }
    }
    let mut dx = want_input.then(|| Tensor::zeros(x.height, x.width, x.channels));
    let rows = band_rows(x.width);
    let mut col = Vec::new();
    let mut dcol = Vec::new();
    let mut y0 = 0;
    while y0 < x.height {
        let y1 = (y0 + rows).min(x.height);
        let m = (y1 - y0) * x.width;
        col.resize(m * k, 0.0);
        im2col(x, y0, y1, dilation, &mut col);
        let dslice = &dout.data[y0 * x.width * cout..y1 * x.width * cout];
        // dK += col^T * dout
        gemm(k, m, cout, &col, (1, k as isize), dslice, (cout as isize, 1), 1.0, &mut dkernel);
        if let Some(dx) = dx.as_mut() {
            // dcol = dout * K^T
            dcol.resize(m * k, 0.0);
            gemm(m, cout, k, dslice, (cout as isize, 1), kernel, (1, cout as isize), 0.0, &mut dcol);
            col2im_add(&dcol, y0, y1, dilation, dx);
        }
        y0 = y1;
    }
    Ok(ConvGrads { kernel: dkernel, bias: dbias, input: dx })
}

/// Inference-mode batch normalization with fixed statistics.
pub fn batch_norm_infer(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    mean: &[f64],
    var: &[f64],
    eps: f64,
) -> Result<Tensor> {
    let c = x.channels;
    if [gamma.len(), beta.len(), mean.len(), var.len()].iter().any(|&n| n != c) {
        return Err(Error::Shape(format!("batch-norm statistics do not match {c} channels")));
    }
    if let Some(v) = var.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Numeric(format!("negative running variance {v}")));
    }
    let scale: Vec<f64> = gamma.iter().zip(var).map(|(g, v)| g / (v + eps).sqrt()).collect();
    let mut out = x.clone();
    for px in out.data.chunks_exact_mut(c) {
        for ch in 0..c {
            px[ch] = scale[ch] * (px[ch] - mean[ch]) + beta[ch];
        }
    }
    Ok(out)
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    relu_in_place(&mut out.data);
    out
}

#[inline]
pub fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}
