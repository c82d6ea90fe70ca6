//! Two-phase optimisation: supervised epochs first, then supervised plus
//! pseudo-labelled patches with consistency regularisation.

use std::collections::BTreeMap;

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_labeled, augment_pair, ColorJitter};
use crate::error::{OmniError, Result};
use crate::loss::{consistency_loss, segmentation_loss};
use crate::metrics::{evaluate_cases, MetricReport};
use crate::model::{OmniSeg, SampleGrad};
use crate::nn::Grads;
use crate::par::{self, Exec};
use crate::pyramid::{
    crop_mask, extract_patch, match_select, resize_mask, segment_tissue, tile_boxes, BBox, Mask,
};
use crate::task::{Magnification, TissueClass};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub dice: f64,
    pub ce: f64,
    pub kl: f64,
    pub mse: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            dice: 1.0,
            ce: 1.0,
            kl: 0.5,
            mse: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "sgd", alias = "SGD")]
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub every: usize,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    #[serde(default)]
    pub step_decay: Option<StepDecay>,
    /// Rescale the batch gradient to at most this L2 norm, separately for the
    /// controller weight and for all other parameters.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// Learning-rate multiplier for the controller weight.
    #[serde(default = "one")]
    pub controller_lr_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            lr: 0.01,
            momentum: 0.9,
            step_decay: None,
            grad_clip: None,
            controller_lr_scale: 1.0,
        }
    }
}

impl OptimizerConfig {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.step_decay {
            Some(StepDecay { every, gamma }) if every > 0 => {
                self.lr * gamma.powi((epoch / every) as i32)
            }
            _ => self.lr,
        }
    }
}

/// Ablation switches: scale-aware controller, matching selection and
/// consistency regularisation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub scale_controller: bool,
    pub matching_selection: bool,
    pub consistency_reg: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation {
            scale_controller: true,
            matching_selection: true,
            consistency_reg: true,
        }
    }
}

pub fn default_pseudo_counts() -> BTreeMap<TissueClass, usize> {
    TissueClass::ALL
        .iter()
        .map(|&t| (t, if t == TissueClass::Ptc { 16 } else { 4 }))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub supervised_epochs: usize,
    pub total_epochs: usize,
    pub optimizer: OptimizerConfig,
    /// Pseudo-labelled patches drawn per image per tissue each epoch.
    pub pseudo_patch_counts: BTreeMap<TissueClass, usize>,
    pub loss_weights: LossWeights,
    pub seed: u64,
    pub ablation: Ablation,
    /// Exclude CAP and TUFT from pseudo labelling.
    pub exclude_cap_tuft: bool,
    /// Regenerate pseudo-label canvases every this many semi-supervised epochs.
    pub pseudo_refresh_interval: usize,
    pub batch_size: usize,
    /// Supervised patches drawn per image per epoch; `None` uses every tile.
    pub supervised_per_image: Option<usize>,
    /// Tiling stride (fraction of the patch side) for supervised patches.
    pub tile_stride: f64,
    /// Share of each image's supervised draws taken from patches that
    /// contain foreground.
    pub foreground_fraction: f64,
    /// Let consistency gradients flow into both views.
    pub symmetric_consistency: bool,
    pub jitter: ColorJitter,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            supervised_epochs: 50,
            total_epochs: 100,
            optimizer: OptimizerConfig::default(),
            pseudo_patch_counts: default_pseudo_counts(),
            loss_weights: LossWeights::default(),
            seed: 0,
            ablation: Ablation::default(),
            exclude_cap_tuft: false,
            pseudo_refresh_interval: 1,
            batch_size: 8,
            supervised_per_image: None,
            tile_stride: 1.0,
            foreground_fraction: 0.0,
            symmetric_consistency: false,
            jitter: ColorJitter::default(),
        }
    }
}

impl TrainConfig {
    /// Schedule and sampling tuned for the tiny backbone on the synthetic
    /// corpus: 10 supervised epochs out of 30, 64 px patches tiled at half
    /// stride, a bounded number of draws per image and fewer pseudo patches.
    pub fn desk() -> Self {
        TrainConfig {
            supervised_epochs: 10,
            total_epochs: 30,
            optimizer: OptimizerConfig {
                lr: 0.02,
                grad_clip: Some(2.0),
                controller_lr_scale: 0.1,
                ..OptimizerConfig::default()
            },
            pseudo_patch_counts: TissueClass::ALL
                .iter()
                .map(|&t| (t, if t == TissueClass::Ptc { 4 } else { 1 }))
                .collect(),
            pseudo_refresh_interval: 10,
            batch_size: 4,
            supervised_per_image: Some(20),
            tile_stride: 0.5,
            foreground_fraction: 0.25,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(OmniError::Config(m));
        if self.supervised_epochs > self.total_epochs {
            return err(format!(
                "supervised_epochs ({}) exceeds total_epochs ({})",
                self.supervised_epochs, self.total_epochs
            ));
        }
        let w = &self.loss_weights;
        if [w.dice, w.ce, w.kl, w.mse]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return err("loss weights must be finite and non-negative".into());
        }
        let o = &self.optimizer;
        if !(o.lr.is_finite() && o.lr > 0.0) || !(0.0..1.0).contains(&o.momentum) {
            return err(format!(
                "invalid optimizer lr {} / momentum {}",
                o.lr, o.momentum
            ));
        }
        if self.batch_size == 0 || self.pseudo_refresh_interval == 0 {
            return err("batch_size and pseudo_refresh_interval must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.foreground_fraction) {
            return err(format!(
                "foreground_fraction {} not in [0, 1]",
                self.foreground_fraction
            ));
        }
        if !(self.tile_stride > 0.0 && self.tile_stride <= 1.0) {
            return err(format!("tile_stride {} not in (0, 1]", self.tile_stride));
        }
        Ok(())
    }

    /// Tissues that receive pseudo labels at all.
    pub fn pseudo_tissues(&self) -> Vec<TissueClass> {
        TissueClass::ALL
            .iter()
            .copied()
            .filter(|t| {
                !(self.exclude_cap_tuft && matches!(t, TissueClass::Cap | TissueClass::Tuft))
            })
            .filter(|t| self.pseudo_patch_counts.get(t).copied().unwrap_or(0) > 0)
            .collect()
    }
}

/// A 40x training image with whichever class masks are released for it.
#[derive(Clone, Debug)]
pub struct TrainImage {
    pub id: String,
    pub image: Array3<f32>,
    pub labels: BTreeMap<TissueClass, Mask>,
}

#[derive(Clone, Debug)]
pub struct LabeledPatch {
    pub image: usize,
    pub bbox: BBox,
    pub scale: Magnification,
    pub tissue: TissueClass,
    pub pixels: Array3<f32>,
    pub label: Mask,
}

/// Tile every labelled (image, tissue) at the tissue's optimal magnification.
pub fn supervised_patches(
    images: &[TrainImage],
    patch_px: usize,
    stride: f64,
    exec: Exec,
) -> Result<Vec<LabeledPatch>> {
    let mut jobs = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let (_, h, w) = img.image.dim();
        for &t in img.labels.keys() {
            let scale = t.optimal_scale();
            for bbox in tile_boxes(w, h, scale, stride, patch_px)? {
                jobs.push((i, t, scale, bbox));
            }
        }
    }
    par::map(exec, &jobs, |&(i, t, scale, bbox)| {
        let img = &images[i];
        Ok(LabeledPatch {
            image: i,
            bbox,
            scale,
            tissue: t,
            pixels: extract_patch(&img.image, bbox, patch_px)?,
            label: resize_mask(&crop_mask(&img.labels[&t], bbox)?, patch_px, patch_px),
        })
    })
    .into_iter()
    .collect()
}

/// Segment `tissues` on a 40x image, each at its optimal magnification with
/// the matching controllers, aggregated back into 40x canvases.
pub fn generate_pseudo_labels(
    model: &OmniSeg<f32>,
    image: &Array3<f32>,
    tissues: &[TissueClass],
    exec: Exec,
) -> Result<BTreeMap<TissueClass, Mask>> {
    tissues
        .iter()
        .map(|&t| {
            let m = segment_tissue(
                model,
                image,
                t,
                t.optimal_scale(),
                model.config.patch_px,
                1.0,
                exec,
            )?;
            Ok((t, m))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Supervised,
    SemiSupervised,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub batch: usize,
    pub supervised: usize,
    pub pseudo: BTreeMap<TissueClass, usize>,
    pub total: f64,
}

/// Means over the epoch's samples. Pseudo and consistency components are
/// exactly zero when no such samples were drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub phase: Phase,
    pub lr: f64,
    pub dice: f64,
    pub ce: f64,
    pub pseudo_dice: f64,
    pub pseudo_ce: f64,
    pub kl: f64,
    pub mse: f64,
    pub total: f64,
    pub supervised_samples: usize,
    pub pseudo_samples: usize,
    pub pseudo_by_tissue: BTreeMap<TissueClass, usize>,
    pub batches: Vec<BatchLog>,
}

#[derive(Clone, Debug)]
struct Sample {
    pixels: Array3<f32>,
    label: Mask,
    tissue: TissueClass,
    scale: Magnification,
    pseudo: bool,
}

#[derive(Clone, Copy, Debug, Default)]
struct SampleLoss {
    dice: f64,
    ce: f64,
    kl: f64,
    mse: f64,
    objective: f64,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 over the packed inputs
    let mut z =
        seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct Trainer {
    pub model: OmniSeg<f32>,
    pub config: TrainConfig,
    images: Vec<TrainImage>,
    patches: Vec<LabeledPatch>,
    by_image: Vec<Vec<usize>>,
    velocity: Grads<f32>,
    pseudo: Vec<BTreeMap<TissueClass, Mask>>,
    pseudo_epoch: Option<usize>,
    exec: Exec,
}

impl Trainer {
    /// The model's scale-controller switch is overridden by the ablation flag.
    pub fn new(
        mut model: OmniSeg<f32>,
        config: TrainConfig,
        images: Vec<TrainImage>,
        exec: Exec,
    ) -> Result<Self> {
        config.validate()?;
        if images.is_empty() || images.iter().all(|i| i.labels.is_empty()) {
            return Err(OmniError::EmptyDataset(
                "no labelled training images".into(),
            ));
        }
        model.config.scale_controller = config.ablation.scale_controller;
        let patches = supervised_patches(&images, model.config.patch_px, config.tile_stride, exec)?;
        let mut by_image = vec![Vec::new(); images.len()];
        for (k, p) in patches.iter().enumerate() {
            by_image[p.image].push(k);
        }
        let velocity = model.zero_grads();
        Ok(Trainer {
            model,
            config,
            images,
            patches,
            by_image,
            velocity,
            pseudo: Vec::new(),
            pseudo_epoch: None,
            exec,
        })
    }

    pub fn supervised_patch_count(&self) -> usize {
        self.patches.len()
    }

    pub fn pseudo_canvases(&self) -> &[BTreeMap<TissueClass, Mask>] {
        &self.pseudo
    }

    fn refresh_pseudo(&mut self, epoch: usize) -> Result<()> {
        let since = epoch - self.config.supervised_epochs;
        if self.pseudo_epoch.is_some() && !since.is_multiple_of(self.config.pseudo_refresh_interval)
        {
            return Ok(());
        }
        let tissues = self.config.pseudo_tissues();
        let mut out = Vec::with_capacity(self.images.len());
        for img in &self.images {
            let todo: Vec<TissueClass> = tissues
                .iter()
                .copied()
                .filter(|t| !img.labels.contains_key(t))
                .collect();
            out.push(generate_pseudo_labels(
                &self.model,
                &img.image,
                &todo,
                self.exec,
            )?);
        }
        log::debug!("pseudo labels refreshed at epoch {epoch}");
        self.pseudo = out;
        self.pseudo_epoch = Some(epoch);
        Ok(())
    }

    fn draw_supervised(&self, rng: &mut ChaCha8Rng) -> Vec<Sample> {
        let mut out = Vec::new();
        for idx in &self.by_image {
            let mut chosen = idx.clone();
            if let Some(k) = self.config.supervised_per_image.filter(|&k| k < idx.len()) {
                let (mut fg, mut rest): (Vec<usize>, Vec<usize>) = idx
                    .iter()
                    .partition(|&&j| self.patches[j].label.iter().any(|&v| v));
                fg.shuffle(rng);
                let n_fg =
                    ((k as f64 * self.config.foreground_fraction).round() as usize).min(fg.len());
                chosen = fg.split_off(fg.len() - n_fg);
                rest.extend(fg);
                rest.shuffle(rng);
                rest.truncate(k - n_fg);
                chosen.extend(rest);
                chosen.sort_unstable();
            }
            out.extend(chosen.into_iter().map(|k| {
                let p = &self.patches[k];
                Sample {
                    pixels: p.pixels.clone(),
                    label: p.label.clone(),
                    tissue: p.tissue,
                    scale: p.scale,
                    pseudo: false,
                }
            }));
        }
        out
    }

    fn draw_pseudo(&self, rng: &mut ChaCha8Rng) -> Result<Vec<Sample>> {
        let px = self.model.config.patch_px;
        let mut out = Vec::new();
        for (i, canvases) in self.pseudo.iter().enumerate() {
            let img = &self.images[i];
            for (&t, canvas) in canvases {
                let k = self
                    .config
                    .pseudo_patch_counts
                    .get(&t)
                    .copied()
                    .unwrap_or(0);
                if self.config.ablation.matching_selection {
                    // supervised patches re-labelled at their own location and scale
                    let pool = &self.by_image[i];
                    for j in pick(pool.len(), k, rng) {
                        let p = &self.patches[pool[j]];
                        let rec = crate::pyramid::PatchRecord {
                            image_id: img.id.clone(),
                            bbox: p.bbox,
                            magnification: p.scale,
                            pixels: p.pixels.clone(),
                            label: None,
                            label_kind: crate::pyramid::LabelKind::Pseudo,
                            tissue: Some(t),
                        };
                        let mut canv = BTreeMap::new();
                        canv.insert(t, canvas.clone());
                        let (_, label) = match_select(&rec, &canv, &[t])?
                            .pop()
                            .expect("one tissue requested");
                        out.push(Sample {
                            pixels: rec.pixels,
                            label,
                            tissue: t,
                            scale: p.scale,
                            pseudo: true,
                        });
                    }
                } else {
                    // grid patches at the tissue's own magnification
                    let scale = t.optimal_scale();
                    let (_, h, w) = img.image.dim();
                    let boxes = tile_boxes(w, h, scale, 1.0, px)?;
                    for j in pick(boxes.len(), k, rng) {
                        let b = boxes[j];
                        out.push(Sample {
                            pixels: extract_patch(&img.image, b, px)?,
                            label: resize_mask(&crop_mask(canvas, b)?, px, px),
                            tissue: t,
                            scale,
                            pseudo: true,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    fn sample_step(
        &self,
        s: &Sample,
        seed: u64,
        consistency: bool,
    ) -> Result<(Vec<SampleGrad<f32>>, SampleLoss)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = self.config.loss_weights;
        let m = &self.model;
        if !(s.pseudo && consistency) {
            let (x, y) = augment_labeled(&s.pixels, &s.label, &self.config.jitter, &mut rng);
            let (logits, cache) = m.forward_sample(&x, s.tissue, s.scale)?;
            let (seg, dl) = segmentation_loss(&logits, &y, w.dice, w.ce)?;
            let loss = SampleLoss {
                dice: seg.dice,
                ce: seg.ce,
                objective: w.dice * seg.dice + w.ce * seg.ce,
                ..SampleLoss::default()
            };
            return Ok((vec![m.backward_sample(&cache, &dl)], loss));
        }
        let pair = augment_pair(&s.pixels, &self.config.jitter, &mut rng);
        let label_a = pair.align.a.apply2(&s.label);
        let (la, ca) = m.forward_sample(&pair.view_a, s.tissue, s.scale)?;
        let (lb, cb) = m.forward_sample(&pair.view_b, s.tissue, s.scale)?;
        let (seg, mut dl) = segmentation_loss(&la, &label_a, w.dice, w.ce)?;
        let sym = self.config.symmetric_consistency;
        let cons = consistency_loss(&la, &lb, pair.align, w.kl, w.mse, sym)?;
        dl += &cons.grad_a;
        let mut grads = vec![m.backward_sample(&ca, &dl)];
        if let Some(gb) = &cons.grad_b {
            grads.push(m.backward_sample(&cb, gb));
        }
        let loss = SampleLoss {
            dice: seg.dice,
            ce: seg.ce,
            kl: cons.kl,
            mse: cons.mse,
            objective: w.dice * seg.dice + w.ce * seg.ce + w.kl * cons.kl + w.mse * cons.mse,
        };
        Ok((grads, loss))
    }

    fn sgd_step(&mut self, grads: &mut Grads<f32>, lr: f64) {
        let o = self.config.optimizer;
        let cw = self.model.controller_weight_id();
        if let Some(c) = o.grad_clip {
            // the controller weight and everything else are clipped separately
            let sq = |b: &Vec<f32>| b.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>();
            let nc = sq(&grads.bufs[cw]).sqrt();
            let nr = (grads.sq_norm() - nc * nc).max(0.0).sqrt();
            for (id, b) in grads.bufs.iter_mut().enumerate() {
                let n = if id == cw { nc } else { nr };
                if n > c {
                    let k = (c / n) as f32;
                    b.iter_mut().for_each(|v| *v *= k);
                }
            }
        }
        let mu = o.momentum as f32;
        for (id, ((p, v), g)) in self
            .model
            .params
            .iter_mut()
            .zip(self.velocity.bufs.iter_mut())
            .zip(&grads.bufs)
            .enumerate()
        {
            let lr = if id == cw {
                (lr * o.controller_lr_scale) as f32
            } else {
                lr as f32
            };
            for ((w, v), g) in p.data.iter_mut().zip(v.iter_mut()).zip(g) {
                *v = mu * *v + g;
                *w -= lr * *v;
            }
        }
    }

    pub fn train_epoch(&mut self, epoch: usize) -> Result<EpochReport> {
        let cfg = self.config.clone();
        let semi = epoch >= cfg.supervised_epochs;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, epoch as u64, 0));
        let mut samples = self.draw_supervised(&mut rng);
        if semi {
            self.refresh_pseudo(epoch)?;
            samples.extend(self.draw_pseudo(&mut rng)?);
        }
        if samples.is_empty() {
            return Err(OmniError::EmptyDataset(format!(
                "no samples drawn at epoch {epoch}"
            )));
        }
        samples.shuffle(&mut rng);
        let consistency = semi && cfg.ablation.consistency_reg;
        let lr = cfg.optimizer.lr_at(epoch);

        let mut sums = [0.0f64; 7];
        let (mut n_sup, mut n_pseudo) = (0usize, 0usize);
        let mut pseudo_by_tissue = BTreeMap::new();
        let mut batches = Vec::new();
        let mut total = self.model.zero_grads();
        let base = samples.len() as u64 * epoch as u64;
        for (b, chunk) in samples.chunks(cfg.batch_size).enumerate() {
            let offset = (b * cfg.batch_size) as u64;
            let results = par::map_range(self.exec, chunk.len(), |k| {
                self.sample_step(
                    &chunk[k],
                    mix(cfg.seed, epoch as u64 + 1, base + offset + k as u64),
                    consistency,
                )
            });
            total.fill_zero();
            let mut log = BatchLog {
                batch: b,
                ..BatchLog::default()
            };
            let mut batch_obj = 0.0;
            for (s, r) in chunk.iter().zip(results) {
                let (grads, l) = r?;
                if ![l.dice, l.ce, l.kl, l.mse].iter().all(|v| v.is_finite()) {
                    return Err(OmniError::NonFinite {
                        epoch,
                        batch: b,
                        detail: format!(
                            "{} {}@{}: {l:?}",
                            if s.pseudo { "pseudo" } else { "supervised" },
                            s.tissue,
                            s.scale
                        ),
                    });
                }
                for g in &grads {
                    self.model.accumulate(&mut total, g);
                }
                batch_obj += l.objective;
                if s.pseudo {
                    n_pseudo += 1;
                    *log.pseudo.entry(s.tissue).or_insert(0) += 1;
                    *pseudo_by_tissue.entry(s.tissue).or_insert(0) += 1;
                    sums[2] += l.dice;
                    sums[3] += l.ce;
                    sums[4] += l.kl;
                    sums[5] += l.mse;
                } else {
                    n_sup += 1;
                    log.supervised += 1;
                    sums[0] += l.dice;
                    sums[1] += l.ce;
                }
                sums[6] += l.objective;
            }
            total.scale(1.0 / chunk.len() as f32);
            if !total.is_finite() {
                return Err(OmniError::NonFinite {
                    epoch,
                    batch: b,
                    detail: "non-finite gradient".into(),
                });
            }
            self.sgd_step(&mut total, lr);
            log.total = batch_obj / chunk.len() as f64;
            batches.push(log);
        }
        let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
        let report = EpochReport {
            epoch,
            phase: if semi {
                Phase::SemiSupervised
            } else {
                Phase::Supervised
            },
            lr,
            dice: mean(sums[0], n_sup),
            ce: mean(sums[1], n_sup),
            pseudo_dice: mean(sums[2], n_pseudo),
            pseudo_ce: mean(sums[3], n_pseudo),
            kl: mean(sums[4], n_pseudo),
            mse: mean(sums[5], n_pseudo),
            total: mean(sums[6], n_sup + n_pseudo),
            supervised_samples: n_sup,
            pseudo_samples: n_pseudo,
            pseudo_by_tissue,
            batches,
        };
        log::info!(
            "epoch {epoch} {:?}: total {:.4} dice {:.4} ce {:.4} kl {:.4} mse {:.4} ({} sup, {} pseudo)",
            report.phase,
            report.total,
            report.dice,
            report.ce,
            report.kl,
            report.mse,
            n_sup,
            n_pseudo
        );
        Ok(report)
    }

    /// Run every epoch, calling `on_epoch` after each one.
    pub fn fit<F>(&mut self, mut on_epoch: F) -> Result<Vec<EpochReport>>
    where
        F: FnMut(&EpochReport, &OmniSeg<f32>) -> Result<()>,
    {
        let mut reports = Vec::with_capacity(self.config.total_epochs);
        for epoch in 0..self.config.total_epochs {
            let r = self.train_epoch(epoch)?;
            on_epoch(&r, &self.model)?;
            reports.push(r);
        }
        Ok(reports)
    }
}

/// `k` distinct indices below `n` when possible, otherwise with repetition.
fn pick<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    if k <= n {
        rand::seq::index::sample(rng, n, k).into_vec()
    } else {
        (0..k).map(|_| rng.random_range(0..n)).collect()
    }
}

/// One evaluation image with dense 40x truth.
pub struct EvalCase<'a> {
    pub image: &'a Array3<f32>,
    pub truth: &'a BTreeMap<TissueClass, Mask>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub per_class: BTreeMap<TissueClass, MetricReport>,
    /// Mean over classes of the per-class mean Dice, in percent.
    pub mean_dice_pct: f64,
}

/// Segment every case for `tissues` at their optimal magnifications and
/// score the 40x masks against the truth.
pub fn evaluate_model(
    model: &OmniSeg<f32>,
    cases: &[EvalCase],
    tissues: &[TissueClass],
    exec: Exec,
) -> Result<EvalSummary> {
    if tissues.is_empty() || cases.is_empty() {
        return Err(OmniError::EmptyDataset("nothing to evaluate".into()));
    }
    let mut per_class = BTreeMap::new();
    for &t in tissues {
        let preds = cases
            .iter()
            .map(|c| {
                segment_tissue(
                    model,
                    c.image,
                    t,
                    t.optimal_scale(),
                    model.config.patch_px,
                    1.0,
                    exec,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let truths = cases
            .iter()
            .map(|c| {
                c.truth
                    .get(&t)
                    .ok_or_else(|| OmniError::MissingCanvas(t.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let pairs: Vec<(&Mask, &Mask)> = preds.iter().zip(truths).collect();
        per_class.insert(
            t,
            evaluate_cases(&pairs, Magnification::X40.pixel_size_um(), exec)?,
        );
    }
    let mean_dice_pct =
        per_class.values().map(|r| r.mean_dice_pct).sum::<f64>() / per_class.len() as f64;
    Ok(EvalSummary {
        per_class,
        mean_dice_pct,
    })
}
