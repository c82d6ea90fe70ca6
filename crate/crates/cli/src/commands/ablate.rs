use omniseg::plot;
use omniseg::synth::SynthDataset;
use omniseg::train::evaluate_model;
use omniseg::{Exec, TissueClass};
use serde::Serialize;

use super::train::{eval_cases, run_training};
use crate::cli::{parse_variant, AblateRun};
use crate::error::{CliError, CliResult};
use crate::output::{write_csv, write_frozen, OutputLock, FROZEN_CONFIG};

#[derive(Debug, Serialize)]
struct RunRow<'a> {
    variant: &'a str,
    seed: u64,
    mean_dice_pct: f64,
    cap: f64,
    tuft: f64,
    pt: f64,
    dt: f64,
    ptc: f64,
    ves: f64,
}

#[derive(Debug, Serialize)]
struct VariantRow<'a> {
    variant: &'a str,
    runs: usize,
    mean_dice_pct: f64,
    std_dice_pct: f64,
}

pub fn ablate(run: &AblateRun, exec: Exec) -> CliResult<()> {
    let ds = SynthDataset::load(&run.data, exec)?;
    let test = eval_cases(&ds, &ds.split.test);
    if test.is_empty() {
        return Err(CliError::Data("dataset has no test images".into()));
    }
    let _lock = OutputLock::acquire(&run.out)?;
    write_frozen(&run.out.join(FROZEN_CONFIG), run)?;
    let mut rows = Vec::new();
    for variant in &run.variants {
        let ablation = parse_variant(variant)?;
        for &seed in &run.seeds {
            let mut cfg = run.train.clone();
            cfg.seed = seed;
            cfg.ablation = ablation;
            let mut model = run.model.clone();
            model.scale_controller = ablation.scale_controller;
            let dir = run.out.join(format!("{variant}-s{seed}"));
            let outcome =
                run_training(&ds, &model, &cfg, cfg.total_epochs.max(1), Some(&dir), exec)?;
            let s = evaluate_model(&outcome.best, &test, &TissueClass::ALL, exec)?;
            let d = |t: TissueClass| s.per_class[&t].mean_dice_pct;
            log::info!("{variant} seed {seed}: test dice {:.2}", s.mean_dice_pct);
            rows.push(RunRow {
                variant,
                seed,
                mean_dice_pct: s.mean_dice_pct,
                cap: d(TissueClass::Cap),
                tuft: d(TissueClass::Tuft),
                pt: d(TissueClass::Pt),
                dt: d(TissueClass::Dt),
                ptc: d(TissueClass::Ptc),
                ves: d(TissueClass::Ves),
            });
        }
    }
    let summary: Vec<VariantRow> = run
        .variants
        .iter()
        .map(|v| {
            let xs: Vec<f64> = rows
                .iter()
                .filter(|r| r.variant == v)
                .map(|r| r.mean_dice_pct)
                .collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            VariantRow {
                variant: v,
                runs: xs.len(),
                mean_dice_pct: mean,
                std_dice_pct: var.sqrt(),
            }
        })
        .collect();
    write_csv(&run.out.join("ablation_runs.csv"), &rows)?;
    write_csv(&run.out.join("ablation.csv"), &summary)?;
    let bars: Vec<Vec<f64>> = summary.iter().map(|s| vec![s.mean_dice_pct]).collect();
    plot::save(
        &plot::bar_chart(&bars, 480, 320)?,
        &run.out.join("ablation.png"),
    )?;
    Ok(())
}
