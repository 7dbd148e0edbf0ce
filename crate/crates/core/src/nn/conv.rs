//! Convolution and pooling kernels on raw NCHW buffers.

use rayon::prelude::*;

use super::tensor::{gemm, Float, Tensor};
use crate::error::{Error, Result};

/// Geometry of a 2-D convolution, resolved against concrete shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

/// Output extent of a sliding window, or `None` when it does not fit.
pub fn window_output(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

impl ConvGeometry {
    pub fn resolve(x: &[usize], w: &[usize], stride: usize, padding: usize) -> Result<Self> {
        let (&[batch, in_channels, height, width], &[out_channels, wc, kernel_h, kernel_w]) = (x, w) else {
            return Err(Error::shape(format!("conv2d expects 4-D input and weight, got {x:?} and {w:?}")));
        };
        if wc != in_channels {
            return Err(Error::shape(format!(
                "conv2d channel mismatch: input has {in_channels}, weight expects {wc}"
            )));
        }
        let out_h = window_output(height, kernel_h, stride, padding);
        let out_w = window_output(width, kernel_w, stride, padding);
        let (Some(out_h), Some(out_w)) = (out_h, out_w) else {
            return Err(Error::shape(format!(
                "conv2d kernel {kernel_h}x{kernel_w} (stride {stride}, pad {padding}) does not fit {height}x{width}"
            )));
        };
        Ok(Self {
            batch,
            in_channels,
            height,
            width,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
            padding,
            out_h,
            out_w,
        })
    }

    fn pointwise(&self) -> bool {
        self.kernel_h == 1 && self.kernel_w == 1 && self.stride == 1 && self.padding == 0
    }

    fn patch(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    fn in_plane(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    fn out_plane(&self) -> usize {
        self.out_channels * self.out_h * self.out_w
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.out_channels, self.out_h, self.out_w]
    }

    /// Multiply-accumulates for one forward pass.
    pub fn macs(&self) -> u64 {
        (self.batch * self.out_plane() * self.patch()) as u64
    }
}

fn im2col<T: Float>(g: &ConvGeometry, x: &[T], cols: &mut [T]) {
    let spatial = g.out_h * g.out_w;
    for c in 0..g.in_channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for i in 0..g.kernel_h {
            for j in 0..g.kernel_w {
                let row = ((c * g.kernel_h + i) * g.kernel_w + j) * spatial;
                for oy in 0..g.out_h {
                    let y = (oy * g.stride + i) as isize - g.padding as isize;
                    let dst = &mut cols[row + oy * g.out_w..row + (oy + 1) * g.out_w];
                    if y < 0 || y >= g.height as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[y as usize * g.width..(y as usize + 1) * g.width];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let xx = (ox * g.stride + j) as isize - g.padding as isize;
                        *d = if xx < 0 || xx >= g.width as isize {
                            T::zero()
                        } else {
                            src[xx as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Float>(g: &ConvGeometry, cols: &[T], dx: &mut [T]) {
    let spatial = g.out_h * g.out_w;
    for c in 0..g.in_channels {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for i in 0..g.kernel_h {
            for j in 0..g.kernel_w {
                let row = ((c * g.kernel_h + i) * g.kernel_w + j) * spatial;
                for oy in 0..g.out_h {
                    let y = (oy * g.stride + i) as isize - g.padding as isize;
                    if y < 0 || y >= g.height as isize {
                        continue;
                    }
                    let src = &cols[row + oy * g.out_w..row + (oy + 1) * g.out_w];
                    let dst = &mut plane[y as usize * g.width..(y as usize + 1) * g.width];
                    for (ox, &v) in src.iter().enumerate() {
                        let xx = (ox * g.stride + j) as isize - g.padding as isize;
                        if xx >= 0 && xx < g.width as isize {
                            dst[xx as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Forward convolution via im2col and GEMM, parallel over the batch.
pub fn conv2d_forward<T: Float>(g: &ConvGeometry, x: &[T], w: &[T]) -> Vec<T> {
    let spatial = g.out_h * g.out_w;
    let mut out = vec![T::zero(); g.batch * g.out_plane()];
    if g.batch == 0 {
        return out;
    }
    out.par_chunks_mut(g.out_plane())
        .zip(x.par_chunks(g.in_plane()))
        .for_each(|(o, xn)| {
            if g.pointwise() {
                gemm(false, false, g.out_channels, spatial, g.patch(), T::one(), w, xn, T::zero(), o);
            } else {
                let mut cols = vec![T::zero(); g.patch() * spatial];
                im2col(g, xn, &mut cols);
                gemm(false, false, g.out_channels, spatial, g.patch(), T::one(), w, &cols, T::zero(), o);
            }
        });
    out
}

/// Gradients of a convolution with respect to its input and weight.
///
/// Per-sample weight gradients are reduced in batch order, so the result
/// does not depend on the thread count.
pub fn conv2d_backward<T: Float>(
    g: &ConvGeometry,
    x: &[T],
    w: &[T],
    dy: &[T],
    want_dx: bool,
    want_dw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let spatial = g.out_h * g.out_w;
    let patch = g.patch();
    let parts: Vec<(Vec<T>, Vec<T>)> = x
        .par_chunks(g.in_plane())
        .zip(dy.par_chunks(g.out_plane()))
        .map(|(xn, dyn_)| {
            let mut dw = Vec::new();
            let mut dx = Vec::new();
            if g.pointwise() {
                if want_dw {
                    dw = vec![T::zero(); g.out_channels * patch];
                    gemm(false, true, g.out_channels, patch, spatial, T::one(), dyn_, xn, T::zero(), &mut dw);
                }
                if want_dx {
                    dx = vec![T::zero(); g.in_plane()];
                    gemm(true, false, patch, spatial, g.out_channels, T::one(), w, dyn_, T::zero(), &mut dx);
                }
            } else {
                if want_dw {
                    let mut cols = vec![T::zero(); patch * spatial];
                    im2col(g, xn, &mut cols);
                    dw = vec![T::zero(); g.out_channels * patch];
                    gemm(false, true, g.out_channels, patch, spatial, T::one(), dyn_, &cols, T::zero(), &mut dw);
                }
                if want_dx {
                    let mut dcols = vec![T::zero(); patch * spatial];
                    gemm(true, false, patch, spatial, g.out_channels, T::one(), w, dyn_, T::zero(), &mut dcols);
                    dx = vec![T::zero(); g.in_plane()];
                    col2im(g, &dcols, &mut dx);
                }
            }
            (dx, dw)
        })
        .collect();
    let dx = want_dx.then(|| parts.iter().flat_map(|(dx, _)| dx.iter().copied()).collect());
    let dw = want_dw.then(|| {
        let mut acc = vec![T::zero(); g.out_channels * patch];
        for (_, dw) in &parts {
            for (a, &b) in acc.iter_mut().zip(dw) {
                *a += b;
            }
        }
        acc
    });
    (dx, dw)
}

/// Plain nested-loop cross-correlation; slow, used to cross-check the
/// GEMM path.
pub fn conv2d_direct<T: Float>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, padding: usize) -> Result<Tensor<T>> {
    let g = ConvGeometry::resolve(&x.shape, &w.shape, stride, padding)?;
    let mut out = vec![T::zero(); g.batch * g.out_plane()];
    for n in 0..g.batch {
        for o in 0..g.out_channels {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let mut acc = T::zero();
                    for c in 0..g.in_channels {
                        for i in 0..g.kernel_h {
                            for j in 0..g.kernel_w {
                                let y = (oy * stride + i) as isize - padding as isize;
                                let xx = (ox * stride + j) as isize - padding as isize;
                                if y < 0 || xx < 0 || y >= g.height as isize || xx >= g.width as isize {
                                    continue;
                                }
                                let xi = ((n * g.in_channels + c) * g.height + y as usize) * g.width + xx as usize;
                                let wi = ((o * g.in_channels + c) * g.kernel_h + i) * g.kernel_w + j;
                                acc += x.data[xi] * w.data[wi];
                            }
                        }
                    }
                    out[((n * g.out_channels + o) * g.out_h + oy) * g.out_w + ox] = acc;
                }
            }
        }
    }
    Tensor::new(g.output_shape(), out)
}

/// Geometry of an average pool over NCHW; padded cells count as zeros in
/// the mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolGeometry {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl PoolGeometry {
    pub fn resolve(x: &[usize], kernel: usize, stride: usize, padding: usize) -> Result<Self> {
        let &[batch, channels, height, width] = x else {
            return Err(Error::shape(format!("avg_pool2d expects a 4-D input, got {x:?}")));
        };
        if padding >= kernel && kernel > 0 {
            return Err(Error::shape(format!("pool padding {padding} must be below kernel {kernel}")));
        }
        let (Some(out_h), Some(out_w)) = (
            window_output(height, kernel, stride, padding),
            window_output(width, kernel, stride, padding),
        ) else {
            return Err(Error::shape(format!(
                "pool window {kernel} (stride {stride}, pad {padding}) does not fit {height}x{width}"
            )));
        };
        Ok(Self {
            batch,
            channels,
            height,
            width,
            kernel,
            stride,
            padding,
            out_h,
            out_w,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.channels, self.out_h, self.out_w]
    }

    fn visit(&self, mut f: impl FnMut(usize, usize)) {
        let planes = self.batch * self.channels;
        for p in 0..planes {
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let o = (p * self.out_h + oy) * self.out_w + ox;
                    for i in 0..self.kernel {
                        let y = (oy * self.stride + i) as isize - self.padding as isize;
                        if y < 0 || y >= self.height as isize {
                            continue;
                        }
                        for j in 0..self.kernel {
                            let x = (ox * self.stride + j) as isize - self.padding as isize;
                            if x >= 0 && x < self.width as isize {
                                f(o, (p * self.height + y as usize) * self.width + x as usize);
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn avg_pool_forward<T: Float>(g: &PoolGeometry, x: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); g.batch * g.channels * g.out_h * g.out_w];
    g.visit(|o, i| out[o] += x[i]);
    let count = T::of((g.kernel * g.kernel) as f64);
    out.iter_mut().for_each(|v| *v /= count);
    out
}

pub fn avg_pool_backward<T: Float>(g: &PoolGeometry, dy: &[T]) -> Vec<T> {
    let mut dx = vec![T::zero(); g.batch * g.channels * g.height * g.width];
    let scale = T::one() / T::of((g.kernel * g.kernel) as f64);
    g.visit(|o, i| dx[i] += dy[o] * scale);
    dx
}
