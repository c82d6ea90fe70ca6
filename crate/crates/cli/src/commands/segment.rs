use std::collections::BTreeMap;

use ndarray::Array3;
use omniseg::pyramid::{default_composite, segment_tissue};
use omniseg::synth::class_rgb;
use omniseg::{checkpoint, io, Exec, TissueClass};

use crate::cli::SegmentRun;
use crate::error::CliResult;
use crate::output::{write_frozen, OutputLock, FROZEN_CONFIG};

/// Blend class colours over the image where the composite is set.
fn overlay(image: &Array3<f32>, label: &ndarray::Array2<u8>) -> Array3<u8> {
    let (_, h, w) = image.dim();
    let mut out = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let tint = match label[[y, x]] {
                0 => None,
                v => TissueClass::from_index(v as usize - 1).map(class_rgb),
            };
            for c in 0..3 {
                let base = image[[c, y, x]];
                let v = tint.map_or(base, |rgb| 0.5 * base + 0.5 * rgb[c]);
                out[[y, x, c]] = io::quantize(v);
            }
        }
    }
    out
}

pub fn segment_wsi(run: &SegmentRun, exec: Exec) -> CliResult<()> {
    let (model, _) = checkpoint::load(&run.checkpoint)?;
    let image = io::read_rgb_png(&run.image)?;
    let _lock = OutputLock::acquire(&run.out)?;
    let mut masks = BTreeMap::new();
    for &t in &run.tissues {
        let m = segment_tissue(
            &model,
            &image,
            t,
            t.optimal_scale(),
            model.config.patch_px,
            run.stride,
            exec,
        )?;
        io::write_mask_png(&run.out.join(format!("{t}.png")), &m)?;
        log::info!("{t}: {} foreground px", m.iter().filter(|v| **v).count());
        masks.insert(t, m);
    }
    if let Some(label) = default_composite(&masks) {
        io::write_rgb8_png(&run.out.join("overlay.png"), &overlay(&image, &label))?;
    }
    write_frozen(&run.out.join(FROZEN_CONFIG), run)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn overlay_tints_only_labelled_pixels() {
        let image = Array3::from_elem((3, 2, 2), 1.0f32);
        let mut label = Array2::zeros((2, 2));
        label[[0, 1]] = TissueClass::Ves.index() as u8 + 1;
        let o = overlay(&image, &label);
        assert_eq!(o[[0, 0, 0]], 255);
        let expect = io::quantize(0.5 + 0.5 * class_rgb(TissueClass::Ves)[1]);
        assert_eq!(o[[0, 1, 1]], expect);
    }
}
