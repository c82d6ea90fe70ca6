use omniseg::checkpoint;
use omniseg::io;
use omniseg::pyramid::{extract_patch, resize_mask, PatchSegmenter};
use omniseg::{BBox, Exec};

use crate::cli::InferRun;
use crate::error::{CliError, CliResult};
use crate::output::write_frozen;

pub fn infer(run: &InferRun, exec: Exec) -> CliResult<()> {
    let (model, _) = checkpoint::load(&run.checkpoint)?;
    let image = io::read_rgb_png(&run.input)?;
    let (_, h, w) = image.dim();
    let px = model.config.patch_px;
    if h != w || h % px != 0 {
        return Err(CliError::Data(format!(
            "input is {w}x{h}; expected a square patch whose side is a multiple of {px}"
        )));
    }
    let patch = extract_patch(
        &image,
        BBox {
            x: 0,
            y: 0,
            side: h,
        },
        px,
    )?;
    let mask = model
        .segment(std::slice::from_ref(&patch), run.tissue, run.scale, exec)?
        .pop()
        .expect("one mask per patch");
    io::write_mask_png(&run.out, &resize_mask(&mask, h, w))?;
    if let Some(path) = &run.omega {
        let table = model.omega_table(&patch)?;
        let shape = table.shape().to_vec();
        io::write_npy_f32(path, &shape, &table.iter().copied().collect::<Vec<_>>())?;
    }
    let frozen = run.out.with_extension("config.toml");
    write_frozen(&frozen, run)?;
    log::info!(
        "wrote {} ({} foreground px)",
        run.out.display(),
        mask.iter().filter(|v| **v).count()
    );
    Ok(())
}
