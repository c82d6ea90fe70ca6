//! The full network: backbone, fusion controller and dynamic head.

use ndarray::{Array3, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{gap, gap_backward, Backbone, BackboneCache, BackboneConfig, FeatureMaps};
use crate::error::{OmniError, Result};
use crate::fusion::{
    head_backward_sample, head_forward_sample, predict_mask_sample, slice_head_params,
    ControllerOuter, FusionBlock, FusionCache, FusionConfig, HeadCache, HEAD_CHANNELS,
    HEAD_PARAM_COUNT,
};
use crate::nn::{Grads, ParamStore};
use crate::par::{self, Exec};
use crate::pyramid::{Mask, PatchSegmenter};
use crate::real::Real;
use crate::task::{encode_class, encode_scale, Magnification, TissueClass};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub fusion: FusionConfig,
    /// Side of the square network input in pixels.
    pub patch_px: usize,
    /// When false the scale vector is replaced by a constant all-ones vector.
    pub scale_controller: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backbone: BackboneConfig::default(),
            fusion: FusionConfig::default(),
            patch_px: 256,
            scale_controller: true,
        }
    }
}

impl ModelConfig {
    pub fn tiny() -> Self {
        ModelConfig {
            backbone: BackboneConfig::tiny(),
            ..Self::default()
        }
    }

    /// The tiny backbone on 64 px patches.
    pub fn desk() -> Self {
        ModelConfig {
            patch_px: 64,
            ..Self::tiny()
        }
    }

    /// Reduced fusion geometry with a matching backbone bottleneck.
    pub fn with_reduced_fusion(mut self) -> Self {
        self.fusion = FusionConfig {
            mode: self.fusion.mode,
            scale_expansion: self.fusion.scale_expansion,
            controller_bias: self.fusion.controller_bias,
            ..FusionConfig::reduced()
        };
        self.backbone.bottleneck_channels = self.fusion.gap_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.fusion.validate()?;
        if self.backbone.bottleneck_channels != self.fusion.gap_dim {
            return Err(OmniError::Config(format!(
                "backbone bottleneck ({}) must equal fusion gap_dim ({})",
                self.backbone.bottleneck_channels, self.fusion.gap_dim
            )));
        }
        if self.backbone.out_channels != HEAD_CHANNELS {
            return Err(OmniError::Config(format!(
                "decoder output must have {HEAD_CHANNELS} channels, got {}",
                self.backbone.out_channels
            )));
        }
        if self.patch_px == 0 || !self.patch_px.is_multiple_of(self.backbone.size_multiple()) {
            return Err(OmniError::Config(format!(
                "patch_px {} must be a positive multiple of {}",
                self.patch_px,
                self.backbone.size_multiple()
            )));
        }
        Ok(())
    }

    /// Class and scale vectors fed to the controller for a task.
    pub fn condition<T: Real>(
        &self,
        tissue: TissueClass,
        scale: Magnification,
    ) -> (Vec<T>, Vec<T>) {
        let t = encode_class(tissue).iter().map(|&v| T::of(v)).collect();
        let s = if self.scale_controller {
            encode_scale(scale).iter().map(|&v| T::of(v)).collect()
        } else {
            vec![T::one(); Magnification::COUNT]
        };
        (t, s)
    }
}

pub struct SampleCache<T> {
    backbone: BackboneCache<T>,
    bottleneck_hw: (usize, usize),
    fusion: FusionCache<T>,
    head: HeadCache<T>,
}

impl<T: Real> SampleCache<T> {
    /// The shared decoder feature map the dynamic head consumed, `8·H·W` values.
    pub fn head_input(&self) -> &[T] {
        self.head.input()
    }
}

/// One sample's gradient: dense buffers for everything except the controller
/// weight, which is kept in rank-one form.
pub struct SampleGrad<T> {
    pub dense: Grads<T>,
    pub controller: ControllerOuter<T>,
}

#[derive(Clone, Debug)]
pub struct OmniSeg<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    backbone: Backbone,
    fusion: FusionBlock,
}

impl<T: Real> OmniSeg<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let backbone = Backbone::new(config.backbone.clone(), &mut params, &mut rng)?;
        let fusion = FusionBlock::new(config.fusion.clone(), &mut params, &mut rng)?;
        Ok(OmniSeg {
            config,
            params,
            backbone,
            fusion,
        })
    }

    /// Rebuild the layer layout for `config` and adopt `params`, which must
    /// match it name-for-name and shape-for-shape.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let template = Self::new(config, 0)?;
        if template.params.len() != params.len() {
            return Err(OmniError::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                template.params.len(),
                params.len()
            )));
        }
        for (a, b) in template.params.iter().zip(params.iter()) {
            if a.name != b.name || a.shape != b.shape {
                return Err(OmniError::Checkpoint(format!(
                    "parameter mismatch: expected {} {:?}, found {} {:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
        }
        Ok(OmniSeg { params, ..template })
    }

    pub fn cast<U: Real>(&self) -> OmniSeg<U> {
        OmniSeg {
            config: self.config.clone(),
            params: self.params.cast(),
            backbone: self.backbone.clone(),
            fusion: self.fusion.clone(),
        }
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn fusion(&self) -> &FusionBlock {
        &self.fusion
    }

    pub fn controller_weight_id(&self) -> usize {
        self.fusion.weight
    }

    pub fn forward_sample(
        &self,
        x: &Array3<T>,
        tissue: TissueClass,
        scale: Magnification,
    ) -> Result<(Array3<T>, SampleCache<T>)> {
        let (feats, bcache) = self.backbone.forward(&self.params, x)?;
        let (_, fh, fw) = feats.bottleneck.dim();
        let pooled = gap(&feats.bottleneck);
        let (t, s) = self.config.condition::<T>(tissue, scale);
        let fcache = self.fusion.forward(&self.params, &pooled, &t, &s)?;
        let head = slice_head_params(&fcache.omega)?;
        let (logits, hcache) = head_forward_sample(&feats.decoder_out, &head)?;
        Ok((
            logits,
            SampleCache {
                backbone: bcache,
                bottleneck_hw: (fh, fw),
                fusion: fcache,
                head: hcache,
            },
        ))
    }

    pub fn backward_sample(&self, cache: &SampleCache<T>, dlogits: &Array3<T>) -> SampleGrad<T> {
        let mut g = Grads::zeros_except(&self.params, &[self.fusion.weight]);
        let head = slice_head_params(&cache.fusion.omega).expect("cached omega has 162 entries");
        let (d_m, d_omega) = head_backward_sample(&head, &cache.head, dlogits);
        let (d_gap, controller) =
            self.fusion
                .backward(&self.params, &cache.fusion, &d_omega, &mut g);
        let (fh, fw) = cache.bottleneck_hw;
        let d_f = gap_backward(&d_gap, fh, fw);
        self.backbone
            .backward(&self.params, &cache.backbone, &d_f, &d_m, &mut g);
        SampleGrad {
            dense: g,
            controller,
        }
    }

    /// Logits `2×H×W` for one patch.
    pub fn infer(
        &self,
        x: &Array3<T>,
        tissue: TissueClass,
        scale: Magnification,
    ) -> Result<Array3<T>> {
        self.forward_sample(x, tissue, scale).map(|(l, _)| l)
    }

    /// The 162 head parameters generated for a patch under a task.
    pub fn omega(
        &self,
        x: &Array3<T>,
        tissue: TissueClass,
        scale: Magnification,
    ) -> Result<Vec<T>> {
        let (feats, _) = self.backbone.forward(&self.params, x)?;
        let (t, s) = self.config.condition::<T>(tissue, scale);
        Ok(self
            .fusion
            .forward(&self.params, &gap(&feats.bottleneck), &t, &s)?
            .omega)
    }

    /// Omega for every (class, scale) pair: a `6×4×162` array.
    pub fn omega_table(&self, x: &Array3<T>) -> Result<Array3<T>> {
        let (feats, _) = self.backbone.forward(&self.params, x)?;
        let pooled = gap(&feats.bottleneck);
        let mut out = Array3::zeros((TissueClass::COUNT, Magnification::COUNT, HEAD_PARAM_COUNT));
        for tissue in TissueClass::ALL {
            for scale in Magnification::ALL {
                let (t, s) = self.config.condition::<T>(tissue, scale);
                let omega = self.fusion.forward(&self.params, &pooled, &t, &s)?.omega;
                for (k, v) in omega.into_iter().enumerate() {
                    out[[tissue.index(), scale.index(), k]] = v;
                }
            }
        }
        Ok(out)
    }

    pub fn backbone_forward(&self, batch: &Array4<T>, exec: Exec) -> Result<FeatureMaps<T>> {
        self.backbone.forward_batch(&self.params, batch, exec)
    }

    /// Zeroed gradient buffers covering every parameter, including the controller weight.
    pub fn zero_grads(&self) -> Grads<T> {
        Grads::zeros_like(&self.params)
    }

    /// `total += sample`, expanding the factored controller gradient.
    pub fn accumulate(&self, total: &mut Grads<T>, sample: &SampleGrad<T>) {
        total.add_assign(&sample.dense);
        let d = self.fusion.config.fused_dim();
        sample.controller.add_into(total.buf(self.fusion.weight), d);
    }
}

impl PatchSegmenter for OmniSeg<f32> {
    fn segment(
        &self,
        patches: &[Array3<f32>],
        tissue: TissueClass,
        scale: Magnification,
        exec: Exec,
    ) -> Result<Vec<Mask>> {
        par::map(exec, patches, |p| {
            self.infer(p, tissue, scale)
                .map(|l| predict_mask_sample(&l))
        })
        .into_iter()
        .collect()
    }
}
