//! Residual U-Net encoder–decoder.
//!
//! Produces the bottleneck map `F` (pooled into the controller) and the
//! 8-channel full-resolution map `M` consumed by the dynamic head. Blocks are
//! pre-activation residual units, `y = skip(x) + conv(relu(norm(conv(relu(norm(x))))))`,
//! so zeroing the last convolution of a branch leaves `skip(x)`.

use ndarray::{s, Array2, Array3, Array4, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OmniError, Result};
use crate::nn::{
    concat_channels, relu, relu_backward, split_channels, upsample2, upsample2_backward, Conv2d,
    ConvCache, Grads, InstanceNorm, NormCache, ParamStore,
};
use crate::par::{self, Exec};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    /// Channel width of each resolution level, shallowest first.
    pub widths: Vec<usize>,
    pub in_channels: usize,
    /// Channels of `M`; the dynamic head expects 8.
    pub out_channels: usize,
    /// Channels of `F`; a 1×1 projection is inserted when the deepest width differs.
    pub bottleneck_channels: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            widths: vec![32, 64, 128, 256, 256],
            in_channels: 3,
            out_channels: 8,
            bottleneck_channels: 256,
        }
    }
}

impl BackboneConfig {
    /// Default widths divided by four; the bottleneck stays 256 via projection.
    pub fn tiny() -> Self {
        BackboneConfig {
            widths: vec![8, 16, 32, 64, 64],
            ..Self::default()
        }
    }

    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    /// Spatial sizes must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << (self.depth() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(OmniError::Config(
                "backbone widths must be non-empty and positive".into(),
            ));
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.bottleneck_channels == 0 {
            return Err(OmniError::Config(
                "backbone channel counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ResBlock {
    pub norm1: InstanceNorm,
    pub conv1: Conv2d,
    pub norm2: InstanceNorm,
    pub conv2: Conv2d,
    pub skip: Option<Conv2d>,
}

pub struct BlockCache<T> {
    n1: NormCache<T>,
    r1: Array3<T>,
    c1: ConvCache<T>,
    n2: NormCache<T>,
    r2: Array3<T>,
    c2: ConvCache<T>,
    skip: Option<ConvCache<T>>,
}

impl ResBlock {
    fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let skip = (cin != cout || stride != 1)
            .then(|| Conv2d::new(store, &format!("{name}.skip"), cin, cout, 1, stride, rng));
        ResBlock {
            norm1: InstanceNorm::new(store, &format!("{name}.norm1"), cin),
            conv1: Conv2d::new(store, &format!("{name}.conv1"), cin, cout, 3, stride, rng),
            norm2: InstanceNorm::new(store, &format!("{name}.norm2"), cout),
            conv2: Conv2d::new(store, &format!("{name}.conv2"), cout, cout, 3, 1, rng),
            skip,
        }
    }

    pub fn forward<T: Real>(&self, p: &ParamStore<T>, x: &Array3<T>) -> (Array3<T>, BlockCache<T>) {
        let (a1, n1) = self.norm1.forward(p, x);
        let r1 = relu(&a1);
        let (h1, c1) = self.conv1.forward(p, &r1);
        let (a2, n2) = self.norm2.forward(p, &h1);
        let r2 = relu(&a2);
        let (mut y, c2) = self.conv2.forward(p, &r2);
        let skip = match &self.skip {
            Some(conv) => {
                let (s, sc) = conv.forward(p, x);
                y += &s;
                Some(sc)
            }
            None => {
                y += x;
                None
            }
        };
        (
            y,
            BlockCache {
                n1,
                r1,
                c1,
                n2,
                r2,
                c2,
                skip,
            },
        )
    }

    pub fn backward<T: Real>(
        &self,
        p: &ParamStore<T>,
        cache: &BlockCache<T>,
        dy: &Array3<T>,
        g: &mut Grads<T>,
    ) -> Array3<T> {
        let dr2 = self.conv2.backward(p, &cache.c2, dy, g);
        let da2 = relu_backward(&cache.r2, &dr2);
        let dh1 = self.norm2.backward(p, &cache.n2, &da2, g);
        let dr1 = self.conv1.backward(p, &cache.c1, &dh1, g);
        let da1 = relu_backward(&cache.r1, &dr1);
        let mut dx = self.norm1.backward(p, &cache.n1, &da1, g);
        match (&self.skip, &cache.skip) {
            (Some(conv), Some(sc)) => dx += &conv.backward(p, sc, dy, g),
            _ => dx += dy,
        }
        dx
    }
}

/// Per-sample backbone outputs.
#[derive(Clone, Debug)]
pub struct SampleFeatures<T> {
    /// `F`, shape `bottleneck_channels × h × w`.
    pub bottleneck: Array3<T>,
    /// `M`, shape `out_channels × H × W`.
    pub decoder_out: Array3<T>,
}

/// Batched backbone outputs.
#[derive(Clone, Debug)]
pub struct FeatureMaps<T> {
    pub bottleneck: Array4<T>,
    pub decoder_out: Array4<T>,
}

pub struct BackboneCache<T> {
    stem: ConvCache<T>,
    enc: Vec<BlockCache<T>>,
    proj: Option<(NormCache<T>, Array3<T>, ConvCache<T>)>,
    dec: Vec<BlockCache<T>>,
    out_norm: NormCache<T>,
    out_relu: Array3<T>,
    out_conv: ConvCache<T>,
}

#[derive(Clone, Debug)]
pub struct Backbone {
    pub config: BackboneConfig,
    stem: Conv2d,
    enc: Vec<ResBlock>,
    proj: Option<(InstanceNorm, Conv2d)>,
    /// `dec[l]` fuses level `l + 1` (upsampled) with the level-`l` skip.
    dec: Vec<ResBlock>,
    out_norm: InstanceNorm,
    out_conv: Conv2d,
}

impl Backbone {
    pub fn new<T: Real, R: Rng>(
        config: BackboneConfig,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let w = &config.widths;
        let depth = w.len();
        let stem = Conv2d::new(store, "backbone.stem", config.in_channels, w[0], 3, 1, rng);
        let enc = (0..depth)
            .map(|l| {
                let (cin, stride) = if l == 0 { (w[0], 1) } else { (w[l - 1], 2) };
                ResBlock::new(store, &format!("backbone.enc{l}"), cin, w[l], stride, rng)
            })
            .collect();
        let proj = (w[depth - 1] != config.bottleneck_channels).then(|| {
            (
                InstanceNorm::new(store, "backbone.proj.norm", w[depth - 1]),
                Conv2d::new(
                    store,
                    "backbone.proj.conv",
                    w[depth - 1],
                    config.bottleneck_channels,
                    1,
                    1,
                    rng,
                ),
            )
        });
        let dec = (0..depth - 1)
            .map(|l| {
                ResBlock::new(
                    store,
                    &format!("backbone.dec{l}"),
                    w[l + 1] + w[l],
                    w[l],
                    1,
                    rng,
                )
            })
            .collect();
        let out_norm = InstanceNorm::new(store, "backbone.out.norm", w[0]);
        let out_conv = Conv2d::new(
            store,
            "backbone.out.conv",
            w[0],
            config.out_channels,
            1,
            1,
            rng,
        );
        Ok(Backbone {
            config,
            stem,
            enc,
            proj,
            dec,
            out_norm,
            out_conv,
        })
    }

    pub fn check_input(&self, c: usize, h: usize, w: usize) -> Result<()> {
        if c != self.config.in_channels {
            return Err(OmniError::shape(
                "backbone input channels",
                self.config.in_channels,
                c,
            ));
        }
        let m = self.config.size_multiple();
        if h == 0 || w == 0 || !h.is_multiple_of(m) || !w.is_multiple_of(m) {
            return Err(OmniError::shape(
                "backbone input size",
                format!("multiple of {m}"),
                format!("{h}x{w}"),
            ));
        }
        Ok(())
    }

    pub fn forward<T: Real>(
        &self,
        p: &ParamStore<T>,
        x: &Array3<T>,
    ) -> Result<(SampleFeatures<T>, BackboneCache<T>)> {
        let (c, h, w) = x.dim();
        self.check_input(c, h, w)?;
        let (s, stem) = self.stem.forward(p, x);
        let mut enc_out = Vec::with_capacity(self.enc.len());
        let mut enc_cache = Vec::with_capacity(self.enc.len());
        let mut cur = s;
        for block in &self.enc {
            let (y, bc) = block.forward(p, &cur);
            enc_cache.push(bc);
            enc_out.push(y.clone());
            cur = y;
        }
        let bottom = cur;
        let (bottleneck, proj) = match &self.proj {
            Some((norm, conv)) => {
                let (a, nc) = norm.forward(p, &bottom);
                let r = relu(&a);
                let (f, cc) = conv.forward(p, &r);
                (f, Some((nc, r, cc)))
            }
            None => (bottom.clone(), None),
        };
        let mut d = bottom;
        let mut dec_cache: Vec<Option<BlockCache<T>>> = (0..self.dec.len()).map(|_| None).collect();
        for l in (0..self.dec.len()).rev() {
            let cat = concat_channels(&upsample2(&d), &enc_out[l]);
            let (y, bc) = self.dec[l].forward(p, &cat);
            dec_cache[l] = Some(bc);
            d = y;
        }
        let (a, out_norm) = self.out_norm.forward(p, &d);
        let out_relu = relu(&a);
        let (m, out_conv) = self.out_conv.forward(p, &out_relu);
        Ok((
            SampleFeatures {
                bottleneck,
                decoder_out: m,
            },
            BackboneCache {
                stem,
                enc: enc_cache,
                proj,
                dec: dec_cache.into_iter().map(|c| c.expect("filled")).collect(),
                out_norm,
                out_relu,
                out_conv,
            },
        ))
    }

    /// Backpropagate gradients w.r.t. `F` and `M` into `g`. Returns the input gradient.
    pub fn backward<T: Real>(
        &self,
        p: &ParamStore<T>,
        cache: &BackboneCache<T>,
        d_bottleneck: &Array3<T>,
        d_decoder_out: &Array3<T>,
        g: &mut Grads<T>,
    ) -> Array3<T> {
        let w = &self.config.widths;
        let depth = w.len();
        let dr = self.out_conv.backward(p, &cache.out_conv, d_decoder_out, g);
        let da = relu_backward(&cache.out_relu, &dr);
        let mut dd = self.out_norm.backward(p, &cache.out_norm, &da, g);

        let mut d_enc: Vec<Option<Array3<T>>> = (0..depth).map(|_| None).collect();
        for l in 0..self.dec.len() {
            let dcat = self.dec[l].backward(p, &cache.dec[l], &dd, g);
            let (dup, dskip) = split_channels(&dcat, w[l + 1]);
            accumulate(&mut d_enc[l], dskip);
            dd = upsample2_backward(&dup);
        }
        // `dd` is now the gradient reaching the deepest encoder output via the decoder.
        let d_bottom_from_f = match (&self.proj, &cache.proj) {
            (Some((norm, conv)), Some((nc, r, cc))) => {
                let dr = conv.backward(p, cc, d_bottleneck, g);
                let da = relu_backward(r, &dr);
                norm.backward(p, nc, &da, g)
            }
            _ => d_bottleneck.clone(),
        };
        dd += &d_bottom_from_f;
        accumulate(&mut d_enc[depth - 1], dd);

        let mut d_stem = None;
        for l in (0..depth).rev() {
            let dy = d_enc[l].take().expect("every level receives a gradient");
            let dx = self.enc[l].backward(p, &cache.enc[l], &dy, g);
            if l > 0 {
                accumulate(&mut d_enc[l - 1], dx);
            } else {
                d_stem = Some(dx);
            }
        }
        self.stem
            .backward(p, &cache.stem, &d_stem.expect("stem gradient"), g)
    }

    /// Batched forward in evaluation mode; samples are independent.
    pub fn forward_batch<T: Real>(
        &self,
        p: &ParamStore<T>,
        batch: &Array4<T>,
        exec: Exec,
    ) -> Result<FeatureMaps<T>> {
        let (n, c, h, w) = batch.dim();
        self.check_input(c, h, w)?;
        let samples: Vec<Array3<T>> = (0..n)
            .map(|i| batch.index_axis(Axis(0), i).to_owned())
            .collect();
        let outs = par::map(exec, &samples, |x| self.forward(p, x).map(|(f, _)| f));
        let outs: Vec<SampleFeatures<T>> = outs.into_iter().collect::<Result<_>>()?;
        Ok(FeatureMaps {
            bottleneck: stack(outs.iter().map(|o| &o.bottleneck)),
            decoder_out: stack(outs.iter().map(|o| &o.decoder_out)),
        })
    }

    /// Index of the last convolution in each block, for residual-branch tests.
    pub fn branch_output_convs(&self) -> Vec<&Conv2d> {
        self.enc
            .iter()
            .chain(self.dec.iter())
            .map(|b| &b.conv2)
            .collect()
    }

    pub fn encoder_block(&self, level: usize) -> &ResBlock {
        &self.enc[level]
    }
}

fn accumulate<T: Real>(slot: &mut Option<Array3<T>>, g: Array3<T>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

pub(crate) fn stack<'a, T: Real>(maps: impl Iterator<Item = &'a Array3<T>>) -> Array4<T> {
    let maps: Vec<&Array3<T>> = maps.collect();
    let (c, h, w) = maps.first().map(|m| m.dim()).unwrap_or((0, 0, 0));
    let mut out = Array4::zeros((maps.len(), c, h, w));
    for (i, m) in maps.iter().enumerate() {
        out.slice_mut(s![i, .., .., ..]).assign(m);
    }
    out
}

/// Spatial mean per channel of one `C×h×w` map.
pub fn gap<T: Real>(f: &Array3<T>) -> Vec<T> {
    let (c, h, w) = f.dim();
    let n = T::of((h * w) as f64);
    let s = f.as_slice().expect("standard layout");
    (0..c)
        .map(|ch| s[ch * h * w..(ch + 1) * h * w].iter().copied().sum::<T>() / n)
        .collect()
}

/// Adjoint of [`gap`]: spread each channel gradient uniformly.
pub fn gap_backward<T: Real>(d: &[T], h: usize, w: usize) -> Array3<T> {
    let n = T::of((h * w) as f64);
    Array3::from_shape_fn((d.len(), h, w), |(c, _, _)| d[c] / n)
}

/// Global average pooling of an `N×C×h×w` batch to `N×C`.
pub fn global_average_pool<T: Real>(bottleneck: &Array4<T>) -> Result<Array2<T>> {
    let (n, c, h, w) = bottleneck.dim();
    if h == 0 || w == 0 {
        return Err(OmniError::shape(
            "global_average_pool",
            "h, w >= 1",
            format!("{h}x{w}"),
        ));
    }
    let mut out = Array2::zeros((n, c));
    for i in 0..n {
        let sample = bottleneck.index_axis(Axis(0), i).to_owned();
        for (ch, v) in gap(&sample).into_iter().enumerate() {
            out[[i, ch]] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> BackboneConfig {
        BackboneConfig {
            widths: vec![4, 8, 8],
            in_channels: 3,
            out_channels: 8,
            bottleneck_channels: 16,
        }
    }

    #[test]
    fn forward_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f32>::new();
        let bb = Backbone::new(small_config(), &mut store, &mut rng).unwrap();
        let x = Array3::<f32>::from_elem((3, 16, 12), 0.5);
        let (f, _) = bb.forward(&store, &x).unwrap();
        assert_eq!(f.bottleneck.dim(), (16, 4, 3));
        assert_eq!(f.decoder_out.dim(), (8, 16, 12));
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f32>::new();
        let bb = Backbone::new(small_config(), &mut store, &mut rng).unwrap();
        assert!(bb.forward(&store, &Array3::zeros((3, 10, 8))).is_err());
        assert!(bb.forward(&store, &Array3::zeros((4, 8, 8))).is_err());
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        let bb = Backbone::new(small_config(), &mut store, &mut rng).unwrap();
        store.fill_zero();
        let (f, _) = bb.forward(&store, &Array3::zeros((3, 8, 8))).unwrap();
        assert!(f.bottleneck.iter().all(|&v| v == 0.0));
        assert!(f.decoder_out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zeroed_branch_passes_projected_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::<f64>::new();
        let bb = Backbone::new(small_config(), &mut store, &mut rng).unwrap();
        let block = bb.encoder_block(1);
        store
            .get_mut(block.conv2.weight)
            .iter_mut()
            .for_each(|v| *v = 0.0);
        store
            .get_mut(block.conv2.bias)
            .iter_mut()
            .for_each(|v| *v = 0.0);
        let x = Array3::from_shape_fn((4, 8, 8), |(c, y, x)| ((c * 31 + y * 7 + x) as f64).sin());
        let (y, _) = block.forward(&store, &x);
        let skip = block.skip.as_ref().expect("stride-2 block projects");
        let (want, _) = skip.forward(&store, &x);
        assert_eq!(y, want);
    }

    #[test]
    fn gap_examples() {
        let constant = Array4::<f64>::from_elem((1, 256, 3, 5), 3.5);
        let g = global_average_pool(&constant).unwrap();
        assert!(g.iter().all(|&v| (v - 3.5).abs() < 1e-12));

        let halves = Array4::<f64>::from_shape_fn(
            (2, 4, 2, 2),
            |(_, _, y, _)| if y == 0 { 0.0 } else { 2.0 },
        );
        let g = global_average_pool(&halves).unwrap();
        assert!(g.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(global_average_pool(&Array4::<f64>::zeros((1, 2, 0, 3))).is_err());
    }

    #[test]
    fn gap_commutes_with_channel_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = Array3::<f64>::from_shape_fn((5, 3, 3), |_| rng.random_range(-1.0..1.0));
        let perm = [3usize, 0, 4, 1, 2];
        let permuted = Array3::from_shape_fn((5, 3, 3), |(c, y, x)| f[[perm[c], y, x]]);
        let a = gap(&f);
        let b = gap(&permuted);
        for c in 0..5 {
            assert_eq!(b[c], a[perm[c]]);
        }
    }
}
