use omniseg::synth::{generate_dataset, SynthSpec};
use omniseg::Exec;

use crate::cli::SynthRun;
use crate::error::CliResult;
use crate::output::{write_frozen, OutputLock, FROZEN_CONFIG};

pub fn synth(run: &SynthRun, exec: Exec) -> CliResult<()> {
    let _lock = OutputLock::acquire(&run.out)?;
    let spec = SynthSpec {
        image_side_40x: run.side,
        label_mode: run.label_mode,
        ..SynthSpec::default()
    };
    let ds = generate_dataset(&spec, run.images, run.seed, exec)?;
    ds.write(&run.out, exec)?;
    write_frozen(&run.out.join(FROZEN_CONFIG), run)?;
    log::info!(
        "wrote {} images to {} (train {}, val {}, test {})",
        ds.images.len(),
        run.out.display(),
        ds.split.train.len(),
        ds.split.val.len(),
        ds.split.test.len()
    );
    Ok(())
}
