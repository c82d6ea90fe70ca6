use ndarray::Array3;
use rand::Rng;

use super::params::{Grads, ParamId, ParamStore};
use crate::real::{matmul, matmul_nt, matmul_tn, Real};

pub(crate) fn slice3<T>(a: &Array3<T>) -> &[T] {
    a.as_slice().expect("standard layout feature map")
}

pub(crate) fn slice3_mut<T>(a: &mut Array3<T>) -> &mut [T] {
    a.as_slice_mut().expect("standard layout feature map")
}

fn from_vec<T>(c: usize, h: usize, w: usize, v: Vec<T>) -> Array3<T> {
    Array3::from_shape_vec((c, h, w), v).expect("shape matches length")
}

/// Square convolution with zero padding `k / 2`; `k` is 1 or 3.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
}

pub struct ConvCache<T> {
    /// im2col matrix `(cin·k·k) × (ho·wo)`, or the (strided) input for 1×1.
    col: Vec<T>,
    in_shape: (usize, usize, usize),
    out_hw: (usize, usize),
}

impl Conv2d {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        assert!(k == 1 || k == 3, "only 1x1 and 3x3 kernels");
        let weight = store.add_kaiming(
            format!("{name}.weight"),
            vec![cout, cin, k, k],
            cin * k * k,
            rng,
        );
        let bias = store.add_zeros(format!("{name}.bias"), vec![cout]);
        Conv2d {
            weight,
            bias,
            cin,
            cout,
            k,
            stride,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let pad = self.k / 2;
        (
            (h + 2 * pad - self.k) / self.stride + 1,
            (w + 2 * pad - self.k) / self.stride + 1,
        )
    }

    fn im2col<T: Real>(&self, x: &[T], h: usize, w: usize) -> Vec<T> {
        let (ho, wo) = self.out_hw(h, w);
        let (k, s) = (self.k, self.stride);
        let pad = (k / 2) as isize;
        let hwo = ho * wo;
        if k == 1 && s == 1 {
            return x.to_vec();
        }
        let mut col = vec![T::zero(); self.cin * k * k * hwo];
        for ci in 0..self.cin {
            let plane = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut col[((ci * k + ky) * k + kx) * hwo..][..hwo];
                    for oy in 0..ho {
                        let iy = (oy * s) as isize + ky as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        let dst = &mut row[oy * wo..(oy + 1) * wo];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * s) as isize + kx as isize - pad;
                            if ix >= 0 && ix < w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im<T: Real>(&self, col: &[T], h: usize, w: usize) -> Vec<T> {
        let (ho, wo) = self.out_hw(h, w);
        let (k, s) = (self.k, self.stride);
        let pad = (k / 2) as isize;
        let hwo = ho * wo;
        if k == 1 && s == 1 {
            return col.to_vec();
        }
        let mut x = vec![T::zero(); self.cin * h * w];
        for ci in 0..self.cin {
            let plane = &mut x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &col[((ci * k + ky) * k + kx) * hwo..][..hwo];
                    for oy in 0..ho {
                        let iy = (oy * s) as isize + ky as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        let src = &row[oy * wo..(oy + 1) * wo];
                        for (ox, v) in src.iter().enumerate() {
                            let ix = (ox * s) as isize + kx as isize - pad;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += *v;
                            }
                        }
                    }
                }
            }
        }
        x
    }

    pub fn forward<T: Real>(&self, p: &ParamStore<T>, x: &Array3<T>) -> (Array3<T>, ConvCache<T>) {
        let (c, h, w) = x.dim();
        assert_eq!(c, self.cin, "conv input channels");
        let (ho, wo) = self.out_hw(h, w);
        let col = self.im2col(slice3(x), h, w);
        let hwo = ho * wo;
        let kk = self.cin * self.k * self.k;
        let mut out = vec![T::zero(); self.cout * hwo];
        let bias = p.get(self.bias);
        for (co, row) in out.chunks_mut(hwo).enumerate() {
            row.iter_mut().for_each(|v| *v = bias[co]);
        }
        matmul(self.cout, kk, hwo, p.get(self.weight), &col, &mut out, true);
        (
            from_vec(self.cout, ho, wo, out),
            ConvCache {
                col,
                in_shape: (c, h, w),
                out_hw: (ho, wo),
            },
        )
    }

    /// Accumulates weight/bias gradients into `g` and returns the input gradient.
    pub fn backward<T: Real>(
        &self,
        p: &ParamStore<T>,
        cache: &ConvCache<T>,
        dy: &Array3<T>,
        g: &mut Grads<T>,
    ) -> Array3<T> {
        let (ho, wo) = cache.out_hw;
        let hwo = ho * wo;
        let kk = self.cin * self.k * self.k;
        let dy = slice3(dy);
        {
            let db = g.buf(self.bias);
            for (co, row) in dy.chunks(hwo).enumerate() {
                db[co] += row.iter().copied().sum::<T>();
            }
        }
        matmul_nt(self.cout, hwo, kk, dy, &cache.col, g.buf(self.weight), true);
        let mut dcol = vec![T::zero(); kk * hwo];
        matmul_tn(kk, self.cout, hwo, p.get(self.weight), dy, &mut dcol, false);
        let (c, h, w) = cache.in_shape;
        from_vec(c, h, w, self.col2im(&dcol, h, w))
    }
}

/// Per-sample, per-channel normalisation over spatial positions with a
/// learned affine transform.
#[derive(Clone, Debug)]
pub struct InstanceNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
    pub eps: f64,
}

pub struct NormCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    shape: (usize, usize, usize),
}

impl InstanceNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        InstanceNorm {
            gamma: store.add_filled(format!("{name}.gamma"), vec![channels], 1.0),
            beta: store.add_zeros(format!("{name}.beta"), vec![channels]),
            channels,
            eps: 1e-5,
        }
    }

    pub fn forward<T: Real>(&self, p: &ParamStore<T>, x: &Array3<T>) -> (Array3<T>, NormCache<T>) {
        let (c, h, w) = x.dim();
        assert_eq!(c, self.channels, "norm channels");
        let hw = h * w;
        let n = T::of(hw as f64);
        let eps = T::of(self.eps);
        let (gamma, beta) = (p.get(self.gamma), p.get(self.beta));
        let src = slice3(x);
        let mut xhat = vec![T::zero(); c * hw];
        let mut out = vec![T::zero(); c * hw];
        let mut inv_std = vec![T::zero(); c];
        for ch in 0..c {
            let xs = &src[ch * hw..(ch + 1) * hw];
            let mean = xs.iter().copied().sum::<T>() / n;
            let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std[ch] = is;
            let xh = &mut xhat[ch * hw..(ch + 1) * hw];
            let o = &mut out[ch * hw..(ch + 1) * hw];
            for i in 0..hw {
                xh[i] = (xs[i] - mean) * is;
                o[i] = gamma[ch] * xh[i] + beta[ch];
            }
        }
        (
            from_vec(c, h, w, out),
            NormCache {
                xhat,
                inv_std,
                shape: (c, h, w),
            },
        )
    }

    pub fn backward<T: Real>(
        &self,
        p: &ParamStore<T>,
        cache: &NormCache<T>,
        dy: &Array3<T>,
        g: &mut Grads<T>,
    ) -> Array3<T> {
        let (c, h, w) = cache.shape;
        let hw = h * w;
        let n = T::of(hw as f64);
        let gamma = p.get(self.gamma);
        let dy = slice3(dy);
        let mut dx = vec![T::zero(); c * hw];
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        for ch in 0..c {
            let d = &dy[ch * hw..(ch + 1) * hw];
            let xh = &cache.xhat[ch * hw..(ch + 1) * hw];
            let mut sum_d = T::zero();
            let mut sum_dx = T::zero();
            for i in 0..hw {
                sum_d += d[i];
                sum_dx += d[i] * xh[i];
            }
            dbeta[ch] = sum_d;
            dgamma[ch] = sum_dx;
            // dxhat = dy·γ; dx = inv_std/N · (N·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
            let k = gamma[ch] * cache.inv_std[ch] / n;
            let o = &mut dx[ch * hw..(ch + 1) * hw];
            for i in 0..hw {
                o[i] = k * (n * d[i] - sum_d - xh[i] * sum_dx);
            }
        }
        for (a, b) in g.buf(self.gamma).iter_mut().zip(dgamma) {
            *a += b;
        }
        for (a, b) in g.buf(self.beta).iter_mut().zip(dbeta) {
            *a += b;
        }
        from_vec(c, h, w, dx)
    }
}

pub fn relu<T: Real>(x: &Array3<T>) -> Array3<T> {
    x.mapv(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient through a ReLU given its *output*.
pub fn relu_backward<T: Real>(y: &Array3<T>, dy: &Array3<T>) -> Array3<T> {
    let mut dx = dy.clone();
    for (d, &v) in slice3_mut(&mut dx).iter_mut().zip(slice3(y)) {
        if v <= T::zero() {
            *d = T::zero();
        }
    }
    dx
}

pub fn upsample2<T: Real>(x: &Array3<T>) -> Array3<T> {
    let (c, h, w) = x.dim();
    let src = slice3(x);
    let mut out = vec![T::zero(); c * 4 * h * w];
    for ch in 0..c {
        for y in 0..2 * h {
            let srow = &src[(ch * h + y / 2) * w..][..w];
            let drow = &mut out[(ch * 2 * h + y) * 2 * w..][..2 * w];
            for (x2, d) in drow.iter_mut().enumerate() {
                *d = srow[x2 / 2];
            }
        }
    }
    from_vec(c, 2 * h, 2 * w, out)
}

pub fn upsample2_backward<T: Real>(dy: &Array3<T>) -> Array3<T> {
    let (c, h2, w2) = dy.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let src = slice3(dy);
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for y in 0..h2 {
            let srow = &src[(ch * h2 + y) * w2..][..w2];
            let drow = &mut out[(ch * h + y / 2) * w..][..w];
            for (x2, v) in srow.iter().enumerate() {
                drow[x2 / 2] += *v;
            }
        }
    }
    from_vec(c, h, w, out)
}

pub fn concat_channels<T: Real>(a: &Array3<T>, b: &Array3<T>) -> Array3<T> {
    let (ca, h, w) = a.dim();
    let (cb, hb, wb) = b.dim();
    assert_eq!((h, w), (hb, wb), "concat spatial mismatch");
    let mut v = Vec::with_capacity((ca + cb) * h * w);
    v.extend_from_slice(slice3(a));
    v.extend_from_slice(slice3(b));
    from_vec(ca + cb, h, w, v)
}

pub fn split_channels<T: Real>(x: &Array3<T>, first: usize) -> (Array3<T>, Array3<T>) {
    let (c, h, w) = x.dim();
    let s = slice3(x);
    let cut = first * h * w;
    (
        from_vec(first, h, w, s[..cut].to_vec()),
        from_vec(c - first, h, w, s[cut..].to_vec()),
    )
}
