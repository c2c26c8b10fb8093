//! Convolution kernels via im2col + GEMM.
//!
//! Weights of a convolution are `[out_channels, in_channels, k, k]`. A
//! transposed convolution reuses the geometry of the convolution it is the
//! adjoint of, so its weights are `[in_channels, out_channels, k, k]`.

use super::{gemm, Mat, Real};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding, output side `ceil(input / stride)`.
    Same,
    /// No padding, output side `(input - k) / stride + 1`.
    Valid,
}

/// Geometry of one forward convolution (input → output).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_rows: usize,
    pub in_cols: usize,
    pub out_rows: usize,
    pub out_cols: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

fn out_and_pad(input: usize, kernel: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            Ok((out, total / 2))
        }
        Padding::Valid => {
            if input < kernel {
                return Err(Error::shape(format!("input side {input} smaller than kernel {kernel}")));
            }
            Ok(((input - kernel) / stride + 1, 0))
        }
    }
}

impl ConvGeometry {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        in_rows: usize,
        in_cols: usize,
        padding: Padding,
    ) -> Result<Self> {
        if kernel == 0 || kernel.is_multiple_of(2) {
            return Err(Error::shape(format!("kernel side must be odd, got {kernel}")));
        }
        if stride == 0 {
            return Err(Error::shape("stride must be positive"));
        }
        if in_rows == 0 || in_cols == 0 {
            return Err(Error::shape("empty spatial extent"));
        }
        let (out_rows, pad_top) = out_and_pad(in_rows, kernel, stride, padding)?;
        let (out_cols, pad_left) = out_and_pad(in_cols, kernel, stride, padding)?;
        Ok(ConvGeometry {
            in_channels,
            out_channels,
            kernel,
            stride,
            in_rows,
            in_cols,
            out_rows,
            out_cols,
            pad_top,
            pad_left,
        })
    }

    /// Rows of the im2col matrix.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn in_plane(&self) -> usize {
        self.in_rows * self.in_cols
    }

    pub fn out_plane(&self) -> usize {
        self.out_rows * self.out_cols
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.patch_len()
    }

    /// Input row/col touched by output `o` and kernel tap `t`, if in bounds.
    #[inline]
    fn source(o: usize, t: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let i = (o * stride + t).checked_sub(pad)?;
        (i < extent).then_some(i)
    }

    /// Outputs `lo..hi` along one axis whose tap `t` lands inside the input.
    #[inline]
    fn valid_range(t: usize, stride: usize, pad: usize, extent: usize, out: usize) -> (usize, usize) {
        let lo = if pad > t { (pad - t).div_ceil(stride) } else { 0 };
        let hi = if extent + pad > t {
            ((extent - 1 + pad - t) / stride + 1).min(out)
        } else {
            0
        };
        (lo.min(hi), hi)
    }

    /// Whether the direct kernels beat im2col + GEMM for this geometry.
    pub(crate) fn use_direct(&self) -> bool {
        self.stride == 1
    }

    /// `cols[(c·k + ki)·k + kj, oy·out_cols + ox] = x[c, oy·s + ki − pt, ox·s + kj − pl]`.
    pub(crate) fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let (k, s) = (self.kernel, self.stride);
        let plane = self.out_plane();
        debug_assert_eq!(x.len(), self.in_channels * self.in_plane());
        debug_assert_eq!(cols.len(), self.patch_len() * plane);
        for c in 0..self.in_channels {
            let xc = &x[c * self.in_plane()..(c + 1) * self.in_plane()];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let dst = &mut cols[row * plane..(row + 1) * plane];
                    for oy in 0..self.out_rows {
                        let out_row = &mut dst[oy * self.out_cols..(oy + 1) * self.out_cols];
                        match Self::source(oy, ki, s, self.pad_top, self.in_rows) {
                            None => out_row.fill(T::zero()),
                            Some(iy) => {
                                let src = &xc[iy * self.in_cols..(iy + 1) * self.in_cols];
                                let (lo, hi) = Self::valid_range(kj, s, self.pad_left, self.in_cols, self.out_cols);
                                out_row[..lo].fill(T::zero());
                                out_row[hi..].fill(T::zero());
                                let first = lo * s + kj - self.pad_left;
                                if s == 1 {
                                    out_row[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                                } else {
                                    for (v, &x) in out_row[lo..hi].iter_mut().zip(src[first..].iter().step_by(s)) {
                                        *v = x;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`im2col`](Self::im2col): scatters columns back, adding into `x`.
    pub(crate) fn col2im<T: Real>(&self, cols: &[T], x: &mut [T]) {
        let (k, s) = (self.kernel, self.stride);
        let plane = self.out_plane();
        let in_plane = self.in_plane();
        for c in 0..self.in_channels {
            let xc = &mut x[c * in_plane..(c + 1) * in_plane];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src = &cols[row * plane..(row + 1) * plane];
                    for oy in 0..self.out_rows {
                        let Some(iy) = Self::source(oy, ki, s, self.pad_top, self.in_rows) else {
                            continue;
                        };
                        let dst = &mut xc[iy * self.in_cols..(iy + 1) * self.in_cols];
                        let from = &src[oy * self.out_cols..(oy + 1) * self.out_cols];
                        let (lo, hi) = Self::valid_range(kj, s, self.pad_left, self.in_cols, self.out_cols);
                        if lo == hi {
                            continue;
                        }
                        let first = lo * s + kj - self.pad_left;
                        for (d, &v) in dst[first..].iter_mut().step_by(s).zip(&from[lo..hi]) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

// Direct kernels computed as shifted row updates. They avoid materializing an
// im2col matrix, which for few channels costs more to build and pack than the
// arithmetic it feeds.

impl ConvGeometry {
    /// Calls `f(tap, out_row, in_row, lo, hi, first)` for every in-bounds row
    /// pairing, `tap = ki·k + kj`. Outputs `lo..hi` of `out_row` line up with
    /// inputs `first, first + stride, …` of `in_row`.
    #[inline]
    fn for_each_row(&self, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
        let (k, s) = (self.kernel, self.stride);
        for ki in 0..k {
            let (ylo, yhi) = Self::valid_range(ki, s, self.pad_top, self.in_rows, self.out_rows);
            for kj in 0..k {
                let (lo, hi) = Self::valid_range(kj, s, self.pad_left, self.in_cols, self.out_cols);
                if lo == hi {
                    continue;
                }
                let first = lo * s + kj - self.pad_left;
                for oy in ylo..yhi {
                    f(ki * k + kj, oy, oy * s + ki - self.pad_top, lo, hi, first);
                }
            }
        }
    }

    /// `y += conv(x, w)` for one sample.
    fn direct_forward<T: Real>(&self, x: &[T], w: &[T], y: &mut [T]) {
        let (kk, p, ip, s) = (
            self.kernel * self.kernel,
            self.out_plane(),
            self.in_plane(),
            self.stride,
        );
        let (oc, ic) = (self.out_cols, self.in_cols);
        for co in 0..self.out_channels {
            let yc = &mut y[co * p..(co + 1) * p];
            for c in 0..self.in_channels {
                let xc = &x[c * ip..(c + 1) * ip];
                let wc = &w[(co * self.in_channels + c) * kk..][..kk];
                self.for_each_row(|t, oy, iy, lo, hi, first| {
                    let wv = wc[t];
                    let dst = &mut yc[oy * oc + lo..oy * oc + hi];
                    let src = &xc[iy * ic + first..];
                    if s == 1 {
                        for (d, &v) in dst.iter_mut().zip(&src[..hi - lo]) {
                            *d += wv * v;
                        }
                    } else {
                        for (d, &v) in dst.iter_mut().zip(src.iter().step_by(s)) {
                            *d += wv * v;
                        }
                    }
                });
            }
        }
    }

    /// `dx += convᵀ(dy, w)` for one sample.
    fn direct_input_grad<T: Real>(&self, w: &[T], dy: &[T], dx: &mut [T]) {
        let (kk, p, ip, s) = (
            self.kernel * self.kernel,
            self.out_plane(),
            self.in_plane(),
            self.stride,
        );
        let (oc, ic) = (self.out_cols, self.in_cols);
        for c in 0..self.in_channels {
            let dxc = &mut dx[c * ip..(c + 1) * ip];
            for co in 0..self.out_channels {
                let dyc = &dy[co * p..(co + 1) * p];
                let wc = &w[(co * self.in_channels + c) * kk..][..kk];
                self.for_each_row(|t, oy, iy, lo, hi, first| {
                    let wv = wc[t];
                    let src = &dyc[oy * oc + lo..oy * oc + hi];
                    let dst = &mut dxc[iy * ic + first..];
                    if s == 1 {
                        for (d, &v) in dst[..hi - lo].iter_mut().zip(src) {
                            *d += wv * v;
                        }
                    } else {
                        for (d, &v) in dst.iter_mut().step_by(s).zip(src) {
                            *d += wv * v;
                        }
                    }
                });
            }
        }
    }

    /// `dw += ∂⟨dy, conv(x, w)⟩/∂w` for one sample.
    fn direct_weight_grad<T: Real>(&self, x: &[T], dy: &[T], dw: &mut [T]) {
        let (kk, p, ip, s) = (
            self.kernel * self.kernel,
            self.out_plane(),
            self.in_plane(),
            self.stride,
        );
        let (oc, ic) = (self.out_cols, self.in_cols);
        for co in 0..self.out_channels {
            let dyc = &dy[co * p..(co + 1) * p];
            for c in 0..self.in_channels {
                let xc = &x[c * ip..(c + 1) * ip];
                let dwc = &mut dw[(co * self.in_channels + c) * kk..][..kk];
                self.for_each_row(|t, oy, iy, lo, hi, first| {
                    let a = &dyc[oy * oc + lo..oy * oc + hi];
                    let b = &xc[iy * ic + first..];
                    dwc[t] += if s == 1 {
                        dot(a, &b[..hi - lo])
                    } else {
                        a.iter().zip(b.iter().step_by(s)).map(|(&u, &v)| u * v).sum()
                    };
                });
            }
        }
    }
}

/// Dot product with eight independent partial sums so it vectorizes.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ac.remainder().iter().zip(bc.remainder()).map(|(&x, &y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

/// Batched convolution forward. `x` is `[batch, in_channels, in_rows, in_cols]`.
pub(crate) fn conv_forward<T: Real>(g: &ConvGeometry, batch: usize, x: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let (p, kk) = (g.out_plane(), g.patch_len());
    let in_len = g.in_channels * g.in_plane();
    let out_len = g.out_channels * p;
    let mut out = vec![T::zero(); batch * out_len];
    let mut cols = if g.use_direct() {
        Vec::new()
    } else {
        vec![T::zero(); kk * p]
    };
    let direct = g.use_direct();
    for n in 0..batch {
        let y = &mut out[n * out_len..(n + 1) * out_len];
        if direct {
            g.direct_forward(&x[n * in_len..(n + 1) * in_len], w, y);
        } else {
            g.im2col(&x[n * in_len..(n + 1) * in_len], &mut cols);
            gemm(g.out_channels, kk, p, Mat::n(w), Mat::n(&cols), y, false);
        }
        for (yc, &bc) in y.chunks_exact_mut(p).zip(b) {
            yc.iter_mut().for_each(|v| *v += bc);
        }
    }
    out
}

/// Gradients of a batched convolution. `dx` is only computed when requested.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Real>(
    g: &ConvGeometry,
    batch: usize,
    x: &[T],
    w: &[T],
    dy: &[T],
    dx: Option<&mut [T]>,
    dw: &mut [T],
    db: &mut [T],
) {
    let (p, kk) = (g.out_plane(), g.patch_len());
    let in_len = g.in_channels * g.in_plane();
    let out_len = g.out_channels * p;
    let mut cols = if g.use_direct() {
        Vec::new()
    } else {
        vec![T::zero(); kk * p]
    };
    let mut dx = dx;
    for n in 0..batch {
        let dyn_ = &dy[n * out_len..(n + 1) * out_len];
        for (dbc, row) in db.iter_mut().zip(dyn_.chunks_exact(p)) {
            *dbc += row.iter().copied().sum();
        }
        let xn = &x[n * in_len..(n + 1) * in_len];
        if g.use_direct() {
            g.direct_weight_grad(xn, dyn_, dw);
            if let Some(dx) = dx.as_deref_mut() {
                g.direct_input_grad(w, dyn_, &mut dx[n * in_len..(n + 1) * in_len]);
            }
            continue;
        }
        g.im2col(xn, &mut cols);
        gemm(g.out_channels, p, kk, Mat::n(dyn_), Mat::t(&cols), dw, true);
        if let Some(dx) = dx.as_deref_mut() {
            gemm(kk, g.out_channels, p, Mat::t(w), Mat::n(dyn_), &mut cols, false);
            g.col2im(&cols, &mut dx[n * in_len..(n + 1) * in_len]);
        }
    }
}

/// Batched transposed convolution: the adjoint of `conv_forward` under `g`
/// (plus bias). `y` is `[batch, g.out_channels, g.out_rows, g.out_cols]`, the
/// result `[batch, g.in_channels, g.in_rows, g.in_cols]`.
pub(crate) fn deconv_forward<T: Real>(g: &ConvGeometry, batch: usize, y: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let (p, kk) = (g.out_plane(), g.patch_len());
    let in_len = g.in_channels * g.in_plane();
    let out_len = g.out_channels * p;
    let mut result = vec![T::zero(); batch * in_len];
    let mut cols = if g.use_direct() {
        Vec::new()
    } else {
        vec![T::zero(); kk * p]
    };
    for n in 0..batch {
        let yn = &y[n * out_len..(n + 1) * out_len];
        let r = &mut result[n * in_len..(n + 1) * in_len];
        if g.use_direct() {
            g.direct_input_grad(w, yn, r);
        } else {
            gemm(kk, g.out_channels, p, Mat::t(w), Mat::n(yn), &mut cols, false);
            g.col2im(&cols, r);
        }
        for (rc, &bc) in r.chunks_exact_mut(g.in_plane()).zip(b) {
            rc.iter_mut().for_each(|v| *v += bc);
        }
    }
    result
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn deconv_backward<T: Real>(
    g: &ConvGeometry,
    batch: usize,
    y: &[T],
    w: &[T],
    dr: &[T],
    dy: Option<&mut [T]>,
    dw: &mut [T],
    db: &mut [T],
) {
    let (p, kk) = (g.out_plane(), g.patch_len());
    let in_len = g.in_channels * g.in_plane();
    let out_len = g.out_channels * p;
    let mut cols = if g.use_direct() {
        Vec::new()
    } else {
        vec![T::zero(); kk * p]
    };
    let mut dy = dy;
    for n in 0..batch {
        let drn = &dr[n * in_len..(n + 1) * in_len];
        for (dbc, plane) in db.iter_mut().zip(drn.chunks_exact(g.in_plane())) {
            *dbc += plane.iter().copied().sum();
        }
        let yn = &y[n * out_len..(n + 1) * out_len];
        if g.use_direct() {
            g.direct_weight_grad(drn, yn, dw);
            if let Some(dy) = dy.as_deref_mut() {
                g.direct_forward(drn, w, &mut dy[n * out_len..(n + 1) * out_len]);
            }
            continue;
        }
        g.im2col(drn, &mut cols);
        gemm(g.out_channels, p, kk, Mat::n(yn), Mat::t(&cols), dw, true);
        if let Some(dy) = dy.as_deref_mut() {
            gemm(
                g.out_channels,
                kk,
                p,
                Mat::n(w),
                Mat::n(&cols),
                &mut dy[n * out_len..(n + 1) * out_len],
                true,
            );
        }
    }
}
