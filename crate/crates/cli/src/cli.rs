//! Flag definitions, the TOML config file and their resolution into concrete
//! per-command settings. Each command section in the file mirrors that
//! command's flags (kebab-case keys); a flag given on the command line wins
//! over the file, which wins over the built-in default.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use omniseg::synth::LabelMode;
use omniseg::train::{Ablation, TrainConfig};
use omniseg::{Magnification, ModelConfig, TissueClass};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "omniseg",
    version,
    about = "Multi-class, multi-scale dynamic segmentation"
)]
pub struct Cli {
    /// TOML file with one section per command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic pyramid dataset.
    Synth(SynthArgs),
    /// Train a model and save checkpoints and loss curves.
    Train(TrainArgs),
    /// Segment a single patch, optionally exporting the head parameters.
    Infer(InferArgs),
    /// Tile, segment and aggregate a full 40x image.
    SegmentWsi(SegmentArgs),
    /// Dice, Hausdorff and mean surface distance per tissue.
    Evaluate(EvaluateArgs),
    /// Spot-percentage correlation between predicted and reference masks.
    Spots(SpotsArgs),
    /// Train and test every ablation variant over several seeds.
    Ablate(AblateArgs),
}

/// `[section]` contents and flags share these structs.
macro_rules! overlay {
    ($flags:expr, $file:expr; $($f:ident),+ $(,)?) => {
        $( if $flags.$f.is_none() { $flags.$f = $file.$f.clone(); } )+
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of images (default 10).
    #[arg(long)]
    pub images: Option<usize>,
    /// Generator seed (default 7).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Image side in 40x pixels (default 1024).
    #[arg(long)]
    pub side: Option<usize>,
    /// Release every class mask as a label instead of one class per image.
    #[arg(long)]
    pub dense: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `desk` (tiny backbone, 64 px) or `full` (256 px, default schedule).
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub supervised_epochs: Option<usize>,
    #[arg(long)]
    pub total_epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated subset of no-sc, no-ms, no-cr.
    #[arg(long, value_delimiter = ',')]
    pub ablate: Option<Vec<String>>,
    /// Exclude CAP and TUFT from pseudo labelling.
    #[arg(long)]
    pub exclude_cap_tuft: Option<bool>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub pseudo_refresh: Option<usize>,
    /// Validate every this many epochs (and after the last one).
    #[arg(long)]
    pub val_every: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// RGB patch; square, with a side that is a multiple of the model input.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub tissue: Option<String>,
    /// Magnification the patch was taken at (default: the tissue's optimum).
    #[arg(long)]
    pub scale: Option<String>,
    /// Output mask PNG.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the 6x4x162 head-parameter table for this patch as NPY.
    #[arg(long)]
    pub omega: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SegmentArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// 40x RGB image.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Comma-separated tissues or `all`.
    #[arg(long, value_delimiter = ',')]
    pub tissues: Option<Vec<String>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tile stride as a fraction of the patch side (default 1.0).
    #[arg(long)]
    pub stride: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvaluateArgs {
    /// Directory of `<id>_<tissue>.png` predictions.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Directory of references with the same file names.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub tissues: Option<Vec<String>>,
    /// Magnification of the masks (default 40x).
    #[arg(long)]
    pub magnification: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SpotsArgs {
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub tissues: Option<Vec<String>>,
    /// Centre-to-centre spot spacing in micrometres (default 100).
    #[arg(long)]
    pub pitch_um: Option<f64>,
    #[arg(long)]
    pub magnification: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct AblateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub profile: Option<String>,
    /// Comma-separated seeds (default 0,1,2).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Comma-separated subset of full, no-sc, no-ms, no-cr (default all four).
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    #[arg(long)]
    pub supervised_epochs: Option<usize>,
    #[arg(long)]
    pub total_epochs: Option<usize>,
    #[arg(long)]
    pub exclude_cap_tuft: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub synth: SynthArgs,
    pub train: TrainArgs,
    pub infer: InferArgs,
    #[serde(rename = "segment-wsi")]
    pub segment_wsi: SegmentArgs,
    pub evaluate: EvaluateArgs,
    pub spots: SpotsArgs,
    pub ablate: AblateArgs,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("missing --{flag}")))
}

pub fn parse_tissue(s: &str) -> CliResult<TissueClass> {
    s.parse()
        .map_err(|_| CliError::Usage(format!("unknown tissue {s:?}")))
}

pub fn parse_tissues(list: Option<Vec<String>>) -> CliResult<Vec<TissueClass>> {
    match list {
        None => Ok(TissueClass::ALL.to_vec()),
        Some(v) if v.iter().any(|s| s.eq_ignore_ascii_case("all")) => Ok(TissueClass::ALL.to_vec()),
        Some(v) if v.is_empty() => Err(CliError::Usage("empty tissue list".into())),
        Some(v) => {
            let mut out = Vec::new();
            for s in &v {
                let t = parse_tissue(s)?;
                if !out.contains(&t) {
                    out.push(t);
                }
            }
            Ok(out)
        }
    }
}

pub fn parse_magnification(s: &str) -> CliResult<Magnification> {
    s.parse()
        .map_err(|_| CliError::Usage(format!("unknown magnification {s:?}")))
}

pub fn parse_variant(s: &str) -> CliResult<Ablation> {
    let mut a = Ablation::default();
    match s {
        "full" => {}
        "no-sc" => a.scale_controller = false,
        "no-ms" => a.matching_selection = false,
        "no-cr" => a.consistency_reg = false,
        _ => {
            return Err(CliError::Usage(format!(
                "unknown ablation {s:?} (full, no-sc, no-ms, no-cr)"
            )))
        }
    }
    Ok(a)
}

fn profile(name: &str) -> CliResult<(ModelConfig, TrainConfig)> {
    match name {
        "desk" => Ok((ModelConfig::desk(), TrainConfig::desk())),
        "full" => Ok((ModelConfig::default(), TrainConfig::default())),
        _ => Err(CliError::Usage(format!(
            "unknown profile {name:?} (desk, full)"
        ))),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthRun {
    pub out: PathBuf,
    pub images: usize,
    pub seed: u64,
    pub side: usize,
    pub label_mode: LabelMode,
}

impl SynthArgs {
    pub fn resolve(mut self, file: &ConfigFile) -> CliResult<SynthRun> {
        overlay!(self, file.synth; out, images, seed, side, dense);
        let images = self.images.unwrap_or(10);
        if images == 0 {
            return Err(CliError::Usage("--images must be at least 1".into()));
        }
        Ok(SynthRun {
            out: required(self.out, "out")?,
            images,
            seed: self.seed.or(file.seed).unwrap_or(7),
            side: self.side.unwrap_or(1024),
            label_mode: if self.dense.unwrap_or(false) {
                LabelMode::Dense
            } else {
                LabelMode::Partial
            },
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainRun {
    pub data: PathBuf,
    pub out: PathBuf,
    pub profile: String,
    pub val_every: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl TrainArgs {
    pub fn resolve(mut self, file: &ConfigFile) -> CliResult<TrainRun> {
        overlay!(self, file.train; data, out, profile, supervised_epochs, total_epochs, seed, ablate, exclude_cap_tuft,
            lr, batch_size, pseudo_refresh, val_every);
        let name = self.profile.unwrap_or_else(|| "desk".into());
        let (model, mut train) = profile(&name)?;
        if let Some(v) = self.supervised_epochs {
            train.supervised_epochs = v;
        }
        if let Some(v) = self.total_epochs {
            train.total_epochs = v;
        }
        train.seed = self.seed.or(file.seed).unwrap_or(0);
        for a in self.ablate.unwrap_or_default() {
            let off = parse_variant(&a)?;
            train.ablation.scale_controller &= off.scale_controller;
            train.ablation.matching_selection &= off.matching_selection;
            train.ablation.consistency_reg &= off.consistency_reg;
        }
        train.exclude_cap_tuft = self.exclude_cap_tuft.unwrap_or(false);
        if let Some(v) = self.lr {
            train.optimizer.lr = v;
        }
        if let Some(v) = self.batch_size {
            train.batch_size = v;
        }
        if let Some(v) = self.pseudo_refresh {
            train.pseudo_refresh_interval = v;
        }
        train
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let val_every = self.val_every.unwrap_or(5);
        if val_every == 0 {
            return Err(CliError::Usage("--val-every must be positive".into()));
        }
        let mut model = model;
        model.scale_controller = train.ablation.scale_controller;
        Ok(TrainRun {
            data: required(self.data, "data")?,
            out: required(self.out, "out")?,
            profile: name,
            val_every,
            model,
            train,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InferRun {
    pub checkpoint: PathBuf,
    pub input: PathBuf,
    pub tissue: TissueClass,
    pub scale: Magnification,
    pub out: PathBuf,
    pub omega: Option<PathBuf>,
}

impl InferArgs {
    pub fn resolve(mut self, file: &ConfigFile) -> CliResult<InferRun> {
        overlay!(self, file.infer; checkpoint, input, tissue, scale, out, omega);
        let tissue = parse_tissue(&required(self.tissue, "tissue")?)?;
        let scale = match self.scale {
            Some(s) => parse_magnification(&s)?,
            None => tissue.optimal_scale(),
        };
        Ok(InferRun {
            checkpoint: required(self.checkpoint, "checkpoint")?,
            input: required(self.input, "input")?,
            tissue,
            scale,
            out: required(self.out, "out")?,
            omega: self.omega,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentRun {
    pub checkpoint: PathBuf,
    pub image: PathBuf,
    pub tissues: Vec<TissueClass>,
    pub out: PathBuf,
    pub stride: f64,
}

impl SegmentArgs {
    pub fn resolve(mut self, file: &ConfigFile) -> CliResult<SegmentRun> {
        overlay!(self, file.segment_wsi; checkpoint, image, tissues, out, stride);
        let stride = self.stride.unwrap_or(1.0);
        if !(stride > 0.0 && stride <= 1.0) {
            return Err(CliError::Usage(format!("--stride {stride} not in (0, 1]")));
        }
        Ok(SegmentRun {
            checkpoint: required(self.checkpoint, "checkpoint")?,
            image: required(self.image, "image")?,
            tissues: parse_tissues(self.tissues)?,
            out: required(self.out, "out")?,
            stride,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateRun {
    pub pred: PathBuf,
    pub truth: PathBuf,
    pub out: PathBuf,
    pub tissues: Vec<TissueClass>,
    pub magnification: Magnification,
}

impl EvaluateArgs {
    pub fn resolve(mut self, file: &ConfigFile) -> CliResult<EvaluateRun> {
        overlay!(self, file.evaluate; pred, truth, out, tissues, magnification);
        Ok(EvaluateRun {
            pred: required(self.pred, "pred")?,
            truth: required(self.truth, "truth")?,
            out: required(self.out, "out")?,
            tissues: parse_tissues(self.tissues)?,
            magnification: parse_magnification(self.magnification.as_deref().unwrap_or("40x"))?,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpotsRun {
    pub pred: PathBuf,
    pub truth: PathBuf,
    pub out: PathBuf,
    pub tissues: Vec<TissueClass>,
    pub pitch_um: f64,
    pub magnification: Magnification,
}

impl SpotsArgs {
    pub fn resolve(mut self, file: &ConfigFile) -> CliResult<SpotsRun> {
        overlay!(self, file.spots; pred, truth, out, tissues, pitch_um, magnification);
        let pitch_um = self.pitch_um.unwrap_or(100.0);
        if !(pitch_um.is_finite() && pitch_um > 0.0) {
            return Err(CliError::Usage(format!(
                "--pitch-um {pitch_um} must be positive"
            )));
        }
        Ok(SpotsRun {
            pred: required(self.pred, "pred")?,
            truth: required(self.truth, "truth")?,
            out: required(self.out, "out")?,
            tissues: parse_tissues(self.tissues)?,
            pitch_um,
            magnification: parse_magnification(self.magnification.as_deref().unwrap_or("40x"))?,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblateRun {
    pub data: PathBuf,
    pub out: PathBuf,
    pub profile: String,
    pub seeds: Vec<u64>,
    pub variants: Vec<String>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl AblateArgs {
    pub fn resolve(mut self, file: &ConfigFile) -> CliResult<AblateRun> {
        overlay!(self, file.ablate; data, out, profile, seeds, variants, supervised_epochs, total_epochs, exclude_cap_tuft);
        let name = self.profile.unwrap_or_else(|| "desk".into());
        let (model, mut train) = profile(&name)?;
        if let Some(v) = self.supervised_epochs {
            train.supervised_epochs = v;
        }
        if let Some(v) = self.total_epochs {
            train.total_epochs = v;
        }
        train.exclude_cap_tuft = self.exclude_cap_tuft.unwrap_or(false);
        train
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let variants = self.variants.unwrap_or_else(|| {
            ["full", "no-sc", "no-ms", "no-cr"]
                .map(String::from)
                .to_vec()
        });
        for v in &variants {
            parse_variant(v)?;
        }
        let seeds = self.seeds.unwrap_or_else(|| vec![0, 1, 2]);
        if seeds.is_empty() || variants.is_empty() {
            return Err(CliError::Usage(
                "need at least one seed and one variant".into(),
            ));
        }
        Ok(AblateRun {
            data: required(self.data, "data")?,
            out: required(self.out, "out")?,
            profile: name,
            seeds,
            variants,
            model,
            train,
        })
    }
}
