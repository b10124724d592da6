//! Raw forward/backward kernels over flat slices.

use super::Real;
use crate::error::{Error, Result};

#[inline]
fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Eight independent accumulators so the reduction vectorizes.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
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

pub(crate) fn concat_shape<'a>(shapes: impl Iterator<Item = &'a [usize]>) -> Result<(usize, usize, usize)> {
    let mut total = 0;
    let mut hw: Option<(usize, usize)> = None;
    for s in shapes {
        let [c, h, w] = s[..] else {
            return Err(Error::dim(
                "concat_channels",
                "rank",
                format!("expected [C,H,W], got {s:?}"),
            ));
        };
        match hw {
            None => hw = Some((h, w)),
            Some((h0, w0)) if (h0, w0) != (h, w) => {
                return Err(Error::dim("concat_channels", "H,W", format!("{h0}x{w0} vs {h}x{w}")))
            }
            _ => {}
        }
        total += c;
    }
    let (h, w) = hw.ok_or_else(|| Error::Contract("concat_channels: empty input list".into()))?;
    Ok((total, h, w))
}

/// Geometry of a (possibly batched) convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(x: &[usize], w: &[usize], b: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let (batch, cin, h, wd) = match x[..] {
            [c, h, w] => (1, c, h, w),
            [n, c, h, w] => (n, c, h, w),
            _ => {
                return Err(Error::dim(
                    "conv2d",
                    "input rank",
                    format!("expected [C,H,W] or [N,C,H,W], got {x:?}"),
                ))
            }
        };
        let [cout, wcin, kh, kw] = w[..] else {
            return Err(Error::dim(
                "conv2d",
                "weight rank",
                format!("expected [Co,Ci,kh,kw], got {w:?}"),
            ));
        };
        if wcin != cin {
            return Err(Error::dim(
                "conv2d",
                "C_in",
                format!("input has {cin} channels, weight expects {wcin}"),
            ));
        }
        if b != [cout] {
            return Err(Error::dim("conv2d", "bias", format!("expected [{cout}], got {b:?}")));
        }
        if stride == 0 {
            return Err(Error::Contract("conv2d: stride must be at least 1".into()));
        }
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(Error::dim(
                "conv2d",
                "H,W",
                format!(
                    "kernel {kh}x{kw} larger than padded input {}x{}",
                    h + 2 * pad,
                    wd + 2 * pad
                ),
            ));
        }
        Ok(ConvGeom {
            batch,
            cin,
            h,
            w: wd,
            cout,
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (wd + 2 * pad - kw) / stride + 1,
        })
    }

    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.ho * self.wo
    }

    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    pub fn out_shape(&self, batched: bool) -> Vec<usize> {
        if batched {
            vec![self.batch, self.cout, self.ho, self.wo]
        } else {
            vec![self.cout, self.ho, self.wo]
        }
    }
}

/// Output columns `[lo, hi)` whose input column `ox * stride + kj - pad` is in bounds.
#[inline]
fn valid_span(out: usize, inp: usize, stride: usize, k: usize, pad: usize) -> (usize, usize) {
    // ox * stride + k >= pad  and  ox * stride + k < inp + pad
    let lo = pad.saturating_sub(k).div_ceil(stride).min(out);
    let hi = if inp + pad > k {
        ((inp + pad - k).div_ceil(stride)).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Writes the patch matrix of one item into `cols`, whose rows are `stride`
/// apart; the item occupies columns `offset..offset + p` of every row.
fn im2col<T: Real>(x: &[T], g: &ConvGeom, cols: &mut [T], stride: usize, offset: usize) {
    let p = g.p();
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let out = &mut cols[row * stride + offset..row * stride + offset + p];
                let (lo, hi) = valid_span(g.wo, g.w, g.stride, kj, g.pad);
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let dst = &mut out[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    if lo == hi {
                        continue;
                    }
                    let x0 = lo * g.stride + kj - g.pad;
                    if g.stride == 1 {
                        dst[lo..hi].copy_from_slice(&src[x0..x0 + hi - lo]);
                    } else {
                        for (i, d) in dst[lo..hi].iter_mut().enumerate() {
                            *d = src[x0 + i * g.stride];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`].
fn col2im_add<T: Real>(cols: &[T], g: &ConvGeom, dx: &mut [T], stride: usize, offset: usize) {
    let p = g.p();
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &cols[row * stride + offset..row * stride + offset + p];
                let (lo, hi) = valid_span(g.wo, g.w, g.stride, kj, g.pad);
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    if lo == hi {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let x0 = lo * g.stride + kj - g.pad;
                    let srow = &src[oy * g.wo + lo..oy * g.wo + hi];
                    for (i, &v) in srow.iter().enumerate() {
                        dst[x0 + i * g.stride] += v;
                    }
                }
            }
        }
    }
}

/// Largest `k * p` for which the tap table is used instead of row copies.
const TAP_TABLE_LIMIT: usize = 1 << 16;

/// Source offset within one input item for every `(row, position)` of the
/// patch matrix, or `u32::MAX` for zero padding.
fn tap_table(g: &ConvGeom) -> Vec<u32> {
    let mut table = Vec::with_capacity(g.k() * g.p());
    for ci in 0..g.cin {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        let inside = iy >= 0 && iy < g.h as isize && ix >= 0 && ix < g.w as isize;
                        table.push(if inside {
                            ((ci * g.h + iy as usize) * g.w + ix as usize) as u32
                        } else {
                            u32::MAX
                        });
                    }
                }
            }
        }
    }
    table
}

fn small_patches(g: &ConvGeom) -> bool {
    g.k() * g.p() <= TAP_TABLE_LIMIT
}

/// Patch matrix `[k, batch * p]` for the whole batch. Pointwise convolutions
/// of a single item use the input directly.
fn gather_cols<'a, T: Real>(x: &'a [T], g: &ConvGeom, buf: &'a mut Vec<T>) -> &'a [T] {
    if g.pointwise() && g.batch == 1 {
        return x;
    }
    let (k, p) = (g.k(), g.p());
    let width = g.batch * p;
    buf.resize(k * width, T::zero());
    let in_item = g.cin * g.h * g.w;
    if !g.pointwise() && small_patches(g) {
        let table = tap_table(g);
        for (kk, taps) in table.chunks_exact(p).enumerate() {
            let row = &mut buf[kk * width..(kk + 1) * width];
            for (n, dst) in row.chunks_exact_mut(p).enumerate() {
                let xi = &x[n * in_item..(n + 1) * in_item];
                for (d, &t) in dst.iter_mut().zip(taps) {
                    *d = if t == u32::MAX { T::zero() } else { xi[t as usize] };
                }
            }
        }
        return buf;
    }
    for n in 0..g.batch {
        let xi = &x[n * in_item..(n + 1) * in_item];
        if g.pointwise() {
            for ci in 0..g.cin {
                buf[ci * width + n * p..ci * width + (n + 1) * p].copy_from_slice(&xi[ci * p..(ci + 1) * p]);
            }
        } else {
            im2col(xi, g, buf, width, n * p);
        }
    }
    buf
}

/// `[N, C, p]` to `[C, N * p]`, or back when `inverse` is set.
fn swap_batch<T: Real>(src: &[T], n: usize, c: usize, p: usize, inverse: bool) -> Vec<T> {
    if n == 1 {
        return src.to_vec();
    }
    let mut out = vec![T::zero(); src.len()];
    for b in 0..n {
        for ch in 0..c {
            let item = (b * c + ch) * p;
            let wide = ch * n * p + b * p;
            if inverse {
                out[item..item + p].copy_from_slice(&src[wide..wide + p]);
            } else {
                out[wide..wide + p].copy_from_slice(&src[item..item + p]);
            }
        }
    }
    out
}

/// Single-image stride-1 convolutions over maps big enough that shifted-row
/// loops beat building the patch matrix.
fn use_direct(g: &ConvGeom) -> bool {
    g.batch == 1 && g.stride == 1 && !g.pointwise() && g.wo >= 16
}

/// Visits every `(out row, in row, out span, in start)` contributing to kernel tap `(ki, kj)`.
#[inline]
fn for_each_tap_row(g: &ConvGeom, ki: usize, kj: usize, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
    let (lo, hi) = valid_span(g.wo, g.w, 1, kj, g.pad);
    if lo == hi {
        return;
    }
    let x0 = lo + kj - g.pad;
    for oy in 0..g.ho {
        let iy = (oy + ki) as isize - g.pad as isize;
        if iy >= 0 && iy < g.h as isize {
            f(oy, iy as usize, lo, hi, x0);
        }
    }
}

fn direct_forward<T: Real>(x: &[T], w: &[T], b: &[T], g: &ConvGeom) -> Vec<T> {
    let (plane_in, plane_out) = (g.h * g.w, g.p());
    let mut out = vec![T::zero(); g.cout * plane_out];
    for co in 0..g.cout {
        let o = &mut out[co * plane_out..(co + 1) * plane_out];
        o.fill(b[co]);
        for ci in 0..g.cin {
            let xi = &x[ci * plane_in..(ci + 1) * plane_in];
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let wv = w[((co * g.cin + ci) * g.kh + ki) * g.kw + kj];
                    for_each_tap_row(g, ki, kj, |oy, iy, lo, hi, x0| {
                        let src = &xi[iy * g.w + x0..iy * g.w + x0 + hi - lo];
                        axpy(&mut o[oy * g.wo + lo..oy * g.wo + hi], wv, src);
                    });
                }
            }
        }
    }
    out
}

fn direct_backward<T: Real>(
    x: &[T],
    w: &[T],
    dout: &[T],
    g: &ConvGeom,
    want_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let (plane_in, plane_out) = (g.h * g.w, g.p());
    let mut dw = vec![T::zero(); w.len()];
    let mut db = vec![T::zero(); g.cout];
    let mut dx = want_dx.then(|| vec![T::zero(); g.cin * plane_in]);
    for co in 0..g.cout {
        let d = &dout[co * plane_out..(co + 1) * plane_out];
        db[co] = d.iter().copied().sum::<T>();
        for ci in 0..g.cin {
            let xi = &x[ci * plane_in..(ci + 1) * plane_in];
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let wi = ((co * g.cin + ci) * g.kh + ki) * g.kw + kj;
                    let mut acc = T::zero();
                    for_each_tap_row(g, ki, kj, |oy, iy, lo, hi, x0| {
                        acc += dot(
                            &d[oy * g.wo + lo..oy * g.wo + hi],
                            &xi[iy * g.w + x0..iy * g.w + x0 + hi - lo],
                        );
                    });
                    dw[wi] = acc;
                    if let Some(dx) = dx.as_mut() {
                        let dxi = &mut dx[ci * plane_in..(ci + 1) * plane_in];
                        let wv = w[wi];
                        for_each_tap_row(g, ki, kj, |oy, iy, lo, hi, x0| {
                            axpy(
                                &mut dxi[iy * g.w + x0..iy * g.w + x0 + hi - lo],
                                wv,
                                &d[oy * g.wo + lo..oy * g.wo + hi],
                            );
                        });
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

pub(crate) fn conv_forward<T: Real>(x: &[T], w: &[T], b: &[T], g: &ConvGeom) -> Vec<T> {
    if use_direct(g) {
        return direct_forward(x, w, b, g);
    }
    let k = g.k();
    let width = g.batch * g.p();
    let mut buf = Vec::new();
    let cols = gather_cols(x, g, &mut buf);
    let mut out = vec![T::zero(); g.cout * width];
    for co in 0..g.cout {
        let row = &mut out[co * width..(co + 1) * width];
        row.fill(b[co]);
        for (kk, &wv) in w[co * k..(co + 1) * k].iter().enumerate() {
            axpy(row, wv, &cols[kk * width..(kk + 1) * width]);
        }
    }
    swap_batch(&out, g.batch, g.cout, g.p(), true)
}

/// Returns `(dx, dw, db)`; `dx` only when requested.
pub(crate) fn conv_backward<T: Real>(
    x: &[T],
    w: &[T],
    dout: &[T],
    g: &ConvGeom,
    want_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    if use_direct(g) {
        return direct_backward(x, w, dout, g, want_dx);
    }
    let (k, p) = (g.k(), g.p());
    let width = g.batch * p;
    let dout = swap_batch(dout, g.batch, g.cout, p, false);
    let mut buf = Vec::new();
    let cols = gather_cols(x, g, &mut buf);
    let mut dw = vec![T::zero(); g.cout * k];
    let mut db = vec![T::zero(); g.cout];
    for co in 0..g.cout {
        let drow = &dout[co * width..(co + 1) * width];
        db[co] = drow.iter().copied().sum::<T>();
        for (kk, dwv) in dw[co * k..(co + 1) * k].iter_mut().enumerate() {
            *dwv = dot(drow, &cols[kk * width..(kk + 1) * width]);
        }
    }
    let dx = want_dx.then(|| {
        let mut dcols = vec![T::zero(); k * width];
        for (kk, dc) in dcols.chunks_exact_mut(width).enumerate() {
            for co in 0..g.cout {
                axpy(dc, w[co * k + kk], &dout[co * width..(co + 1) * width]);
            }
        }
        if g.pointwise() {
            return swap_batch(&dcols, g.batch, g.cin, p, true);
        }
        let in_item = g.cin * g.h * g.w;
        let mut dx = vec![T::zero(); g.batch * in_item];
        if small_patches(g) {
            let table = tap_table(g);
            for (kk, taps) in table.chunks_exact(p).enumerate() {
                let row = &dcols[kk * width..(kk + 1) * width];
                for (n, src) in row.chunks_exact(p).enumerate() {
                    let dxi = &mut dx[n * in_item..(n + 1) * in_item];
                    for (&v, &t) in src.iter().zip(taps) {
                        if t != u32::MAX {
                            dxi[t as usize] += v;
                        }
                    }
                }
            }
            return dx;
        }
        for n in 0..g.batch {
            col2im_add(&dcols, g, &mut dx[n * in_item..(n + 1) * in_item], width, n * p);
        }
        dx
    });
    (dx, dw, db)
}

/// Source index pair and interpolation weight for one output coordinate.
fn resize_taps(inp: usize, out: usize) -> Vec<(usize, usize, f64)> {
    let scale = inp as f64 / out as f64;
    (0..out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(inp - 1);
            let i1 = (i0 + 1).min(inp - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub(crate) fn resize_forward<T: Real>(x: &[T], c: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
    let ty = resize_taps(h, oh);
    let tx = resize_taps(w, ow);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, ly) in &ty {
            let ly = T::of(ly);
            for &(x0, x1, lx) in &tx {
                let lx = T::of(lx);
                let top = plane[y0 * w + x0] * (T::one() - lx) + plane[y0 * w + x1] * lx;
                let bot = plane[y1 * w + x0] * (T::one() - lx) + plane[y1 * w + x1] * lx;
                out.push(top * (T::one() - ly) + bot * ly);
            }
        }
    }
    out
}

pub(crate) fn resize_backward<T: Real>(dout: &[T], c: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
    let ty = resize_taps(h, oh);
    let tx = resize_taps(w, ow);
    let mut dx = vec![T::zero(); c * h * w];
    for ch in 0..c {
        let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        let dplane = &dout[ch * oh * ow..(ch + 1) * oh * ow];
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            let ly = T::of(ly);
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let lx = T::of(lx);
                let d = dplane[oy * ow + ox];
                plane[y0 * w + x0] += d * (T::one() - ly) * (T::one() - lx);
                plane[y0 * w + x1] += d * (T::one() - ly) * lx;
                plane[y1 * w + x0] += d * ly * (T::one() - lx);
                plane[y1 * w + x1] += d * ly * lx;
            }
        }
    }
    dx
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Separable Gaussian filter keeping only fully-covered positions.
fn gauss_valid(x: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (vh, vw) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut tmp = vec![0.0; h * vw];
    for y in 0..h {
        let row = &x[y * w..(y + 1) * w];
        for j in 0..vw {
            tmp[y * vw + j] = g.iter().zip(&row[j..]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; vh * vw];
    for i in 0..vh {
        for (a, &ga) in g.iter().enumerate() {
            let src = &tmp[(i + a) * vw..(i + a + 1) * vw];
            axpy(&mut out[i * vw..(i + 1) * vw], ga, src);
        }
    }
    out
}

fn gauss_valid_adjoint(d: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (vh, vw) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut tmp = vec![0.0; h * vw];
    for i in 0..vh {
        for (a, &ga) in g.iter().enumerate() {
            axpy(&mut tmp[(i + a) * vw..(i + a + 1) * vw], ga, &d[i * vw..(i + 1) * vw]);
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let row = &mut out[y * w..(y + 1) * w];
        for j in 0..vw {
            let v = tmp[y * vw + j];
            for (b, &gb) in g.iter().enumerate() {
                row[j + b] += gb * v;
            }
        }
    }
    out
}

struct SsimStats {
    mx: Vec<f64>,
    my: Vec<f64>,
    s: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
}

fn ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> SsimStats {
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = gauss_valid(x, h, w, g);
    let my = gauss_valid(y, h, w, g);
    let exx = gauss_valid(&xx, h, w, g);
    let eyy = gauss_valid(&yy, h, w, g);
    let exy = gauss_valid(&xy, h, w, g);
    let n = mx.len();
    let mut st = SsimStats {
        s: Vec::with_capacity(n),
        a1: Vec::with_capacity(n),
        a2: Vec::with_capacity(n),
        b1: Vec::with_capacity(n),
        b2: Vec::with_capacity(n),
        mx,
        my,
    };
    for i in 0..n {
        let (mx, my) = (st.mx[i], st.my[i]);
        let sx = exx[i] - mx * mx;
        let sy = eyy[i] - my * my;
        let sxy = exy[i] - mx * my;
        let a1 = 2.0 * mx * my + c1;
        let a2 = 2.0 * sxy + c2;
        let b1 = mx * mx + my * my + c1;
        let b2 = sx + sy + c2;
        st.s.push(a1 * a2 / (b1 * b2));
        st.a1.push(a1);
        st.a2.push(a2);
        st.b1.push(b1);
        st.b2.push(b2);
    }
    st
}

pub(crate) fn ssim_check(a: &[usize], b: &[usize]) -> Result<(usize, usize, usize)> {
    if a != b {
        return Err(Error::dim("ssim", "shape", format!("{a:?} vs {b:?}")));
    }
    let [c, h, w] = a[..] else {
        return Err(Error::dim("ssim", "rank", format!("expected [C,H,W], got {a:?}")));
    };
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::dim(
            "ssim",
            "H,W",
            format!("{h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    Ok((c, h, w))
}

/// Mean SSIM over all channels and valid window positions.
pub(crate) fn ssim_forward<T: Real>(a: &[T], b: &[T], c: usize, h: usize, w: usize) -> f64 {
    let g = gaussian_taps();
    let plane = h * w;
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..c {
        let x: Vec<f64> = a[ch * plane..(ch + 1) * plane].iter().map(|v| v.f64()).collect();
        let y: Vec<f64> = b[ch * plane..(ch + 1) * plane].iter().map(|v| v.f64()).collect();
        let st = ssim_plane(&x, &y, h, w, &g);
        total += st.s.iter().sum::<f64>();
        count += st.s.len();
    }
    total / count as f64
}

/// Gradients of the mean SSIM with respect to both inputs, scaled by `upstream`.
pub(crate) fn ssim_backward<T: Real>(
    a: &[T],
    b: &[T],
    c: usize,
    h: usize,
    w: usize,
    upstream: f64,
) -> (Vec<T>, Vec<T>) {
    let g = gaussian_taps();
    let plane = h * w;
    let (vh, vw) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let scale = upstream / (c * vh * vw) as f64;
    let mut da = Vec::with_capacity(a.len());
    let mut db = Vec::with_capacity(b.len());
    for ch in 0..c {
        let x: Vec<f64> = a[ch * plane..(ch + 1) * plane].iter().map(|v| v.f64()).collect();
        let y: Vec<f64> = b[ch * plane..(ch + 1) * plane].iter().map(|v| v.f64()).collect();
        let st = ssim_plane(&x, &y, h, w, &g);
        let n = st.s.len();
        let (mut d_mx, mut d_my, mut d_var, mut d_cov) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let (mx, my, s) = (st.mx[i], st.my[i], st.s[i]);
            let (a1, a2, b1, b2) = (st.a1[i], st.a2[i], st.b1[i], st.b2[i]);
            let inv = 1.0 / (b1 * b2);
            let k = 1.0 / b1 - 1.0 / b2;
            d_mx[i] = scale * (2.0 * my * (a2 - a1) * inv - 2.0 * mx * s * k);
            d_my[i] = scale * (2.0 * mx * (a2 - a1) * inv - 2.0 * my * s * k);
            // Same partial for E[x^2] and E[y^2].
            d_var[i] = scale * (-s / b2);
            d_cov[i] = scale * (2.0 * a1 * inv);
        }
        let gx = gauss_valid_adjoint(&d_mx, h, w, &g);
        let gy = gauss_valid_adjoint(&d_my, h, w, &g);
        let gvar = gauss_valid_adjoint(&d_var, h, w, &g);
        let gcov = gauss_valid_adjoint(&d_cov, h, w, &g);
        for i in 0..plane {
            da.push(T::of(gx[i] + 2.0 * x[i] * gvar[i] + y[i] * gcov[i]));
            db.push(T::of(gy[i] + 2.0 * y[i] * gvar[i] + x[i] * gcov[i]));
        }
    }
    (da, db)
}
