mod ablate;
mod evaluate;
mod infer;
mod segment;
mod synth;
mod train;

pub use ablate::ablate;
pub use evaluate::{evaluate, spots};
pub use infer::infer;
pub use segment::segment_wsi;
pub use synth::synth;
pub use train::train;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use omniseg::TissueClass;

use crate::error::{CliError, CliResult};

/// `<id>_<tissue>.png` files in `dir`, keyed by (id, tissue).
pub(crate) fn list_masks(dir: &Path) -> CliResult<BTreeMap<(String, TissueClass), PathBuf>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let Some((id, tissue)) = stem.rsplit_once('_') else {
            continue;
        };
        if let Ok(t) = tissue.parse::<TissueClass>() {
            out.insert((id.to_string(), t), path);
        }
    }
    Ok(out)
}
