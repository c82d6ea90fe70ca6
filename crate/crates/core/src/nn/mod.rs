//! Minimal layer library with hand-written backward passes. Feature maps are
//! per-sample `C×H×W` arrays; batches are processed sample by sample, which is
//! exact because every normalisation here is per-instance.

mod layers;
mod params;

pub use layers::{
    concat_channels, relu, relu_backward, split_channels, upsample2, upsample2_backward, Conv2d,
    ConvCache, InstanceNorm, NormCache,
};
pub use params::{Grads, Param, ParamId, ParamStore};
