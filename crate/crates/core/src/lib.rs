//! Class- and scale-aware dynamic segmentation for multi-magnification
//! pathology images.
//!
//! A single residual U-Net backbone is shared by every tissue class and
//! magnification. A controller conditioned on a class one-hot and a scale
//! one-hot generates the 162 weights of a tiny per-sample convolution head,
//! so one network serves all (tissue, scale) tasks. Around the network the
//! crate provides the 40x-space patch pipeline, semi-supervised pseudo-label
//! training, micron-unit metrics and a synthetic data generator.

pub mod augment;
pub mod backbone;
pub mod checkpoint;
pub mod error;
pub mod fusion;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod par;
pub mod plot;
pub mod pyramid;
pub mod real;
pub mod synth;
pub mod task;
pub mod train;

pub use error::{OmniError, Result};
pub use model::{ModelConfig, OmniSeg};
pub use par::Exec;
pub use pyramid::{BBox, Mask, PatchRecord};
pub use task::{Magnification, TaskSpec, TissueClass};
