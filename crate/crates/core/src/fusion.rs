//! Class/scale-conditioned fusion and the per-sample dynamic head.
//!
//! Pooled backbone features, the class one-hot and the expanded scale one-hot
//! are fused by a flattened triple outer product (`gap`-major, scale-minor).
//! A single affine controller maps the fused vector to the 162 parameters of a
//! three-layer 1×1 convolution head (8 → 8 → 8 → 2), generated afresh for
//! every sample.

use ndarray::{Array2, Array3, Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::backbone::stack;
use crate::error::{check_len, OmniError, Result};
use crate::nn::{Grads, ParamId, ParamStore};
use crate::real::{matmul, matmul_nt, matmul_tn, Real};
use crate::task::{Magnification, TissueClass};

/// Channels entering and leaving the hidden head layers.
pub const HEAD_CHANNELS: usize = 8;
/// Output channels (background, foreground).
pub const HEAD_OUT: usize = 2;
/// Sizes of w1, b1, w2, b2, w3, b3 in the omega vector.
pub const HEAD_LAYOUT: [usize; 6] = [64, 8, 64, 8, 16, 2];
pub const HEAD_PARAM_COUNT: usize = 162;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Flattened `gap ⊗ class ⊗ scale`.
    OuterProduct,
    /// `[gap; class; scale]` as in the earlier single-scale design.
    Concat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleExpansion {
    /// Parameter-free: each scale entry repeated over a contiguous block.
    Tile,
    /// Learned linear map `R^4 → R^embed`, initialised to the tiling pattern.
    Learned,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub gap_dim: usize,
    pub scale_embed_dim: usize,
    pub mode: FusionMode,
    pub scale_expansion: ScaleExpansion,
    pub controller_bias: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            gap_dim: 256,
            scale_embed_dim: 64,
            mode: FusionMode::OuterProduct,
            scale_expansion: ScaleExpansion::Tile,
            controller_bias: true,
        }
    }
}

impl FusionConfig {
    /// Small geometry (gap 32, scale embedding 8) for fast property tests.
    pub fn reduced() -> Self {
        FusionConfig {
            gap_dim: 32,
            scale_embed_dim: 8,
            ..Self::default()
        }
    }

    pub fn fused_dim(&self) -> usize {
        match self.mode {
            FusionMode::OuterProduct => self.gap_dim * TissueClass::COUNT * self.scale_embed_dim,
            FusionMode::Concat => self.gap_dim + TissueClass::COUNT + self.scale_embed_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gap_dim == 0 {
            return Err(OmniError::Config("gap_dim must be positive".into()));
        }
        if self.scale_embed_dim == 0 || !self.scale_embed_dim.is_multiple_of(Magnification::COUNT) {
            return Err(OmniError::Config(format!(
                "scale_embed_dim must be a positive multiple of {}",
                Magnification::COUNT
            )));
        }
        Ok(())
    }
}

/// Tile a length-4 scale vector into `out_dim` entries: `out[b·p + q] = s[p]`
/// with block size `b = out_dim / 4`.
pub fn expand_scale_vector_to<T: Real>(s: &[T], out_dim: usize) -> Result<Vec<T>> {
    check_len("expand_scale_vector", Magnification::COUNT, s.len())?;
    if !out_dim.is_multiple_of(Magnification::COUNT) {
        return Err(OmniError::Config(format!(
            "cannot tile 4 entries into {out_dim}"
        )));
    }
    let block = out_dim / Magnification::COUNT;
    Ok((0..out_dim).map(|i| s[i / block]).collect())
}

/// The default 4 → 64 expansion.
pub fn expand_scale_vector<T: Real>(s: &[T]) -> Result<Vec<T>> {
    expand_scale_vector_to(s, 64)
}

/// Flattened outer product of three vectors of any length, first-major.
pub fn outer_product3<T: Real>(a: &[T], b: &[T], c: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len() * b.len() * c.len());
    for &x in a {
        for &y in b {
            let xy = x * y;
            out.extend(c.iter().map(|&z| xy * z));
        }
    }
    out
}

/// Fuse pooled features (256), class vector (6) and expanded scale vector (64).
pub fn triple_outer_fuse<T: Real>(gap: &[T], t: &[T], s64: &[T]) -> Result<Vec<T>> {
    check_len("triple_outer_fuse gap", 256, gap.len())?;
    check_len("triple_outer_fuse class", TissueClass::COUNT, t.len())?;
    check_len("triple_outer_fuse scale", 64, s64.len())?;
    Ok(outer_product3(gap, t, s64))
}

/// Dense affine controller: `omega = W · fused + bias`, `W` stored `162 × D` row-major.
pub fn controller_forward<T: Real>(
    fused: &[T],
    weight: &[T],
    bias: Option<&[T]>,
) -> Result<Vec<T>> {
    let d = fused.len();
    check_len("controller weight", HEAD_PARAM_COUNT * d, weight.len())?;
    if let Some(b) = bias {
        check_len("controller bias", HEAD_PARAM_COUNT, b.len())?;
    }
    let mut out = match bias {
        Some(b) => b.to_vec(),
        None => vec![T::zero(); HEAD_PARAM_COUNT],
    };
    matmul(HEAD_PARAM_COUNT, d, 1, weight, fused, &mut out, true);
    Ok(out)
}

/// The 162 head parameters split into three 1×1 convolutions.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicHeadParams<T> {
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
    pub w3: Vec<T>,
    pub b3: Vec<T>,
}

pub fn slice_head_params<T: Real>(omega: &[T]) -> Result<DynamicHeadParams<T>> {
    check_len("slice_head_params", HEAD_PARAM_COUNT, omega.len())?;
    let mut parts = Vec::with_capacity(6);
    let mut at = 0;
    for n in HEAD_LAYOUT {
        parts.push(omega[at..at + n].to_vec());
        at += n;
    }
    let mut it = parts.into_iter();
    let mut next = || it.next().expect("six parts");
    Ok(DynamicHeadParams {
        w1: next(),
        b1: next(),
        w2: next(),
        b2: next(),
        w3: next(),
        b3: next(),
    })
}

impl<T: Real> DynamicHeadParams<T> {
    /// Concatenate back into the 162-vector; inverse of [`slice_head_params`].
    pub fn to_vec(&self) -> Vec<T> {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
            .into_iter()
            .flat_map(|v| v.iter().copied())
            .collect()
    }
}

pub struct HeadCache<T> {
    m: Vec<T>,
    x1: Vec<T>,
    x2: Vec<T>,
    hw: (usize, usize),
}

fn affine_1x1<T: Real>(cout: usize, cin: usize, hw: usize, w: &[T], b: &[T], x: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); cout * hw];
    for (co, row) in out.chunks_mut(hw).enumerate() {
        row.iter_mut().for_each(|v| *v = b[co]);
    }
    matmul(cout, cin, hw, w, x, &mut out, true);
    out
}

fn relu_in_place<T: Real>(v: &mut [T]) {
    v.iter_mut().for_each(|x| {
        if *x < T::zero() {
            *x = T::zero()
        }
    });
}

/// One sample: `relu(w1·m + b1) → relu(w2·· + b2) → w3·· + b3`.
pub fn head_forward_sample<T: Real>(
    m: &Array3<T>,
    p: &DynamicHeadParams<T>,
) -> Result<(Array3<T>, HeadCache<T>)> {
    let (c, h, w) = m.dim();
    if c != HEAD_CHANNELS {
        return Err(OmniError::shape(
            "dynamic head input channels",
            HEAD_CHANNELS,
            c,
        ));
    }
    let hw = h * w;
    let ms = m.as_slice().expect("standard layout").to_vec();
    let mut x1 = affine_1x1(HEAD_CHANNELS, HEAD_CHANNELS, hw, &p.w1, &p.b1, &ms);
    relu_in_place(&mut x1);
    let mut x2 = affine_1x1(HEAD_CHANNELS, HEAD_CHANNELS, hw, &p.w2, &p.b2, &x1);
    relu_in_place(&mut x2);
    let logits = affine_1x1(HEAD_OUT, HEAD_CHANNELS, hw, &p.w3, &p.b3, &x2);
    Ok((
        Array3::from_shape_vec((HEAD_OUT, h, w), logits).expect("shape"),
        HeadCache {
            m: ms,
            x1,
            x2,
            hw: (h, w),
        },
    ))
}

impl<T> HeadCache<T> {
    pub fn input(&self) -> &[T] {
        &self.m
    }
}

/// Returns `(dM, dOmega)` for one sample.
pub fn head_backward_sample<T: Real>(
    p: &DynamicHeadParams<T>,
    cache: &HeadCache<T>,
    dlogits: &Array3<T>,
) -> (Array3<T>, Vec<T>) {
    let (h, w) = cache.hw;
    let hw = h * w;
    let c = HEAD_CHANNELS;
    let dl = dlogits.as_slice().expect("standard layout");
    let mut grads = DynamicHeadParams {
        w1: vec![T::zero(); 64],
        b1: vec![T::zero(); 8],
        w2: vec![T::zero(); 64],
        b2: vec![T::zero(); 8],
        w3: vec![T::zero(); 16],
        b3: vec![T::zero(); 2],
    };
    let row_sums = |d: &[T], out: &mut [T]| {
        for (o, row) in out.iter_mut().zip(d.chunks(hw)) {
            *o = row.iter().copied().sum();
        }
    };

    row_sums(dl, &mut grads.b3);
    matmul_nt(HEAD_OUT, hw, c, dl, &cache.x2, &mut grads.w3, false);
    let mut dx2 = vec![T::zero(); c * hw];
    matmul_tn(c, HEAD_OUT, hw, &p.w3, dl, &mut dx2, false);
    for (d, &x) in dx2.iter_mut().zip(&cache.x2) {
        if x <= T::zero() {
            *d = T::zero();
        }
    }

    row_sums(&dx2, &mut grads.b2);
    matmul_nt(c, hw, c, &dx2, &cache.x1, &mut grads.w2, false);
    let mut dx1 = vec![T::zero(); c * hw];
    matmul_tn(c, c, hw, &p.w2, &dx2, &mut dx1, false);
    for (d, &x) in dx1.iter_mut().zip(&cache.x1) {
        if x <= T::zero() {
            *d = T::zero();
        }
    }

    row_sums(&dx1, &mut grads.b1);
    matmul_nt(c, hw, c, &dx1, &cache.m, &mut grads.w1, false);
    let mut dm = vec![T::zero(); c * hw];
    matmul_tn(c, c, hw, &p.w1, &dx1, &mut dm, false);

    (
        Array3::from_shape_vec((c, h, w), dm).expect("shape"),
        grads.to_vec(),
    )
}

/// Apply per-sample head parameters to an `N×8×H×W` batch (explicit loop).
pub fn dynamic_head_forward<T: Real>(
    m: &Array4<T>,
    params: &[DynamicHeadParams<T>],
) -> Result<Array4<T>> {
    let n = m.dim().0;
    check_len("dynamic head params per sample", n, params.len())?;
    let outs = (0..n)
        .map(|i| {
            head_forward_sample(&m.index_axis(Axis(0), i).to_owned(), &params[i]).map(|(l, _)| l)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(stack(outs.iter()))
}

/// Grouped 1×1 convolution: `x` is `(groups·cin) × hw`, `w` is `(groups·cout) × cin`.
fn grouped_conv1x1<T: Real>(
    groups: usize,
    cin: usize,
    cout: usize,
    hw: usize,
    x: &[T],
    w: &[T],
    b: &[T],
) -> Vec<T> {
    let mut out = vec![T::zero(); groups * cout * hw];
    for g in 0..groups {
        let xo = &x[g * cin * hw..(g + 1) * cin * hw];
        let wo = &w[g * cout * cin..(g + 1) * cout * cin];
        let bo = &b[g * cout..(g + 1) * cout];
        let oo = &mut out[g * cout * hw..(g + 1) * cout * hw];
        for (co, row) in oo.chunks_mut(hw).enumerate() {
            row.iter_mut().for_each(|v| *v = bo[co]);
        }
        matmul(cout, cin, hw, wo, xo, oo, true);
    }
    out
}

/// Same result as [`dynamic_head_forward`], computed as one grouped
/// convolution over the whole batch with one group per sample.
pub fn dynamic_head_forward_grouped<T: Real>(
    m: &Array4<T>,
    params: &[DynamicHeadParams<T>],
) -> Result<Array4<T>> {
    let (n, c, h, w) = m.dim();
    check_len("dynamic head params per sample", n, params.len())?;
    if c != HEAD_CHANNELS {
        return Err(OmniError::shape(
            "dynamic head input channels",
            HEAD_CHANNELS,
            c,
        ));
    }
    let hw = h * w;
    let gather = |f: fn(&DynamicHeadParams<T>) -> &Vec<T>| {
        params
            .iter()
            .flat_map(|p| f(p).iter().copied())
            .collect::<Vec<T>>()
    };
    let x = m.as_standard_layout().iter().copied().collect::<Vec<T>>();
    let mut x1 = grouped_conv1x1(n, c, c, hw, &x, &gather(|p| &p.w1), &gather(|p| &p.b1));
    relu_in_place(&mut x1);
    let mut x2 = grouped_conv1x1(n, c, c, hw, &x1, &gather(|p| &p.w2), &gather(|p| &p.b2));
    relu_in_place(&mut x2);
    let out = grouped_conv1x1(
        n,
        c,
        HEAD_OUT,
        hw,
        &x2,
        &gather(|p| &p.w3),
        &gather(|p| &p.b3),
    );
    Ok(Array4::from_shape_vec((n, HEAD_OUT, h, w), out).expect("shape"))
}

/// Foreground where channel 1 strictly exceeds channel 0.
pub fn predict_mask_sample<T: Real>(logits: &Array3<T>) -> Array2<bool> {
    let (_, h, w) = logits.dim();
    Array2::from_shape_fn((h, w), |(y, x)| logits[[1, y, x]] > logits[[0, y, x]])
}

pub fn predict_mask<T: Real>(logits: &Array4<T>) -> Array3<bool> {
    let (n, _, h, w) = logits.dim();
    Array3::from_shape_fn((n, h, w), |(i, y, x)| {
        logits[[i, 1, y, x]] > logits[[i, 0, y, x]]
    })
}

/// Controller weights plus the optional learned scale embedding.
#[derive(Clone, Debug)]
pub struct FusionBlock {
    pub config: FusionConfig,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub scale_embed: Option<ParamId>,
}

pub struct FusionCache<T> {
    gap: Vec<T>,
    class_vec: Vec<T>,
    scale_vec: Vec<T>,
    scale_expanded: Vec<T>,
    /// Indices of the fused vector that can carry value or gradient.
    support: Vec<u32>,
    fused_support: Vec<T>,
    pub omega: Vec<T>,
}

/// Rank-one form of one sample's controller-weight gradient:
/// `dW[r, support[k]] = d_omega[r] · values[k]`.
#[derive(Clone, Debug)]
pub struct ControllerOuter<T> {
    pub d_omega: Vec<T>,
    pub support: Vec<u32>,
    pub values: Vec<T>,
}

impl<T: Real> ControllerOuter<T> {
    pub fn add_into(&self, dw: &mut [T], fused_dim: usize) {
        for (r, &d) in self.d_omega.iter().enumerate() {
            if d == T::zero() {
                continue;
            }
            let row = &mut dw[r * fused_dim..(r + 1) * fused_dim];
            for (&j, &v) in self.support.iter().zip(&self.values) {
                row[j as usize] += d * v;
            }
        }
    }
}

impl FusionBlock {
    pub fn new<T: Real, R: rand::Rng>(
        config: FusionConfig,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.fused_dim();
        // Scaled so that omega starts at O(1) for unit-scale pooled features
        // with one-hot conditioning (gap_dim · block active inputs).
        let active = match config.mode {
            FusionMode::OuterProduct => {
                config.gap_dim * (config.scale_embed_dim / Magnification::COUNT)
            }
            FusionMode::Concat => d,
        };
        let std = 1.0 / (active as f64).sqrt();
        let weight = store.add_normal("controller.weight", vec![HEAD_PARAM_COUNT, d], std, rng);
        let bias = config.controller_bias.then(|| {
            let init: Vec<T> = head_bias_init().into_iter().map(T::of).collect();
            store.add("controller.bias", vec![HEAD_PARAM_COUNT], init)
        });
        let scale_embed = (config.scale_expansion == ScaleExpansion::Learned).then(|| {
            let e = config.scale_embed_dim;
            let block = e / Magnification::COUNT;
            let init = (0..e * Magnification::COUNT)
                .map(|i| {
                    let (row, col) = (i / Magnification::COUNT, i % Magnification::COUNT);
                    if row / block == col {
                        T::one()
                    } else {
                        T::zero()
                    }
                })
                .collect();
            store.add(
                "controller.scale_embed",
                vec![e, Magnification::COUNT],
                init,
            )
        });
        Ok(FusionBlock {
            config,
            weight,
            bias,
            scale_embed,
        })
    }

    pub fn expand_scale<T: Real>(&self, p: &ParamStore<T>, s: &[T]) -> Result<Vec<T>> {
        match self.scale_embed {
            None => expand_scale_vector_to(s, self.config.scale_embed_dim),
            Some(id) => {
                check_len("scale vector", Magnification::COUNT, s.len())?;
                let mut out = vec![T::zero(); self.config.scale_embed_dim];
                matmul(
                    self.config.scale_embed_dim,
                    Magnification::COUNT,
                    1,
                    p.get(id),
                    s,
                    &mut out,
                    false,
                );
                Ok(out)
            }
        }
    }

    /// The full fused vector (dense); the model itself only touches the support.
    pub fn fuse<T: Real>(
        &self,
        p: &ParamStore<T>,
        gap: &[T],
        class_vec: &[T],
        scale_vec: &[T],
    ) -> Result<Vec<T>> {
        check_len("fusion gap", self.config.gap_dim, gap.len())?;
        check_len("fusion class vector", TissueClass::COUNT, class_vec.len())?;
        let s = self.expand_scale(p, scale_vec)?;
        Ok(match self.config.mode {
            FusionMode::OuterProduct => outer_product3(gap, class_vec, &s),
            FusionMode::Concat => gap.iter().chain(class_vec).chain(&s).copied().collect(),
        })
    }

    fn support<T: Real>(&self, class_vec: &[T], scale_expanded: &[T]) -> Vec<u32> {
        match self.config.mode {
            FusionMode::Concat => (0..self.config.fused_dim() as u32).collect(),
            FusionMode::OuterProduct => {
                let (g, e) = (self.config.gap_dim, self.config.scale_embed_dim);
                let learned = self.scale_embed.is_some();
                let mut out = Vec::new();
                for a in 0..g {
                    for (b, &t) in class_vec.iter().enumerate() {
                        if t == T::zero() {
                            continue;
                        }
                        for (c, &s) in scale_expanded.iter().enumerate() {
                            if learned || s != T::zero() {
                                out.push(((a * TissueClass::COUNT + b) * e + c) as u32);
                            }
                        }
                    }
                }
                out
            }
        }
    }

    pub fn forward<T: Real>(
        &self,
        p: &ParamStore<T>,
        gap: &[T],
        class_vec: &[T],
        scale_vec: &[T],
    ) -> Result<FusionCache<T>> {
        check_len("fusion gap", self.config.gap_dim, gap.len())?;
        check_len("fusion class vector", TissueClass::COUNT, class_vec.len())?;
        let scale_expanded = self.expand_scale(p, scale_vec)?;
        let support = self.support(class_vec, &scale_expanded);
        let (g, e) = (self.config.gap_dim, self.config.scale_embed_dim);
        let fused_at = |j: usize| -> T {
            match self.config.mode {
                FusionMode::OuterProduct => {
                    let (a, rest) = (j / (TissueClass::COUNT * e), j % (TissueClass::COUNT * e));
                    gap[a] * class_vec[rest / e] * scale_expanded[rest % e]
                }
                FusionMode::Concat => {
                    if j < g {
                        gap[j]
                    } else if j < g + TissueClass::COUNT {
                        class_vec[j - g]
                    } else {
                        scale_expanded[j - g - TissueClass::COUNT]
                    }
                }
            }
        };
        let fused_support: Vec<T> = support.iter().map(|&j| fused_at(j as usize)).collect();
        let d = self.config.fused_dim();
        let weight = p.get(self.weight);
        let mut omega: Vec<T> = match self.bias {
            Some(id) => p.get(id).to_vec(),
            None => vec![T::zero(); HEAD_PARAM_COUNT],
        };
        for (r, o) in omega.iter_mut().enumerate() {
            let row = &weight[r * d..(r + 1) * d];
            let mut acc = T::zero();
            for (&j, &v) in support.iter().zip(&fused_support) {
                acc += row[j as usize] * v;
            }
            *o += acc;
        }
        Ok(FusionCache {
            gap: gap.to_vec(),
            class_vec: class_vec.to_vec(),
            scale_vec: scale_vec.to_vec(),
            scale_expanded,
            support,
            fused_support,
            omega,
        })
    }

    /// Backward from `d_omega`. Bias and scale-embedding gradients go into `g`;
    /// the controller weight gradient is returned in factored form.
    pub fn backward<T: Real>(
        &self,
        p: &ParamStore<T>,
        cache: &FusionCache<T>,
        d_omega: &[T],
        g: &mut Grads<T>,
    ) -> (Vec<T>, ControllerOuter<T>) {
        let d = self.config.fused_dim();
        let weight = p.get(self.weight);
        if let Some(id) = self.bias {
            for (a, &b) in g.buf(id).iter_mut().zip(d_omega) {
                *a += b;
            }
        }
        // dfused on the support
        let mut d_fused = vec![T::zero(); cache.support.len()];
        for (r, &dw) in d_omega.iter().enumerate() {
            if dw == T::zero() {
                continue;
            }
            let row = &weight[r * d..(r + 1) * d];
            for (k, &j) in cache.support.iter().enumerate() {
                d_fused[k] += row[j as usize] * dw;
            }
        }
        let (gdim, e) = (self.config.gap_dim, self.config.scale_embed_dim);
        let mut d_gap = vec![T::zero(); gdim];
        let mut d_scale = vec![T::zero(); e];
        match self.config.mode {
            FusionMode::OuterProduct => {
                for (&j, &df) in cache.support.iter().zip(&d_fused) {
                    let j = j as usize;
                    let (a, rest) = (j / (TissueClass::COUNT * e), j % (TissueClass::COUNT * e));
                    let (b, c) = (rest / e, rest % e);
                    d_gap[a] += df * cache.class_vec[b] * cache.scale_expanded[c];
                    d_scale[c] += df * cache.gap[a] * cache.class_vec[b];
                }
            }
            FusionMode::Concat => {
                for (&j, &df) in cache.support.iter().zip(&d_fused) {
                    let j = j as usize;
                    if j < gdim {
                        d_gap[j] += df;
                    } else if j >= gdim + TissueClass::COUNT {
                        d_scale[j - gdim - TissueClass::COUNT] += df;
                    }
                }
            }
        }
        if let Some(id) = self.scale_embed {
            let buf = g.buf(id);
            for c in 0..e {
                for q in 0..Magnification::COUNT {
                    buf[c * Magnification::COUNT + q] += d_scale[c] * cache.scale_vec[q];
                }
            }
        }
        (
            d_gap,
            ControllerOuter {
                d_omega: d_omega.to_vec(),
                support: cache.support.clone(),
                values: cache.fused_support.clone(),
            },
        )
    }
}

/// Initial head parameters encoded in the controller bias: identity hidden
/// layers, a zero last layer and a background-favouring last bias.
pub fn head_bias_init() -> Vec<f64> {
    let mut v = vec![0.0; HEAD_PARAM_COUNT];
    for i in 0..HEAD_CHANNELS {
        v[i * HEAD_CHANNELS + i] = 1.0; // w1
        v[72 + i * HEAD_CHANNELS + i] = 1.0; // w2
    }
    v[160] = 0.5;
    v[161] = -0.5;
    v
}
