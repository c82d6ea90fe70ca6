use std::path::Path;

use omniseg::checkpoint;
use omniseg::plot;
use omniseg::synth::SynthDataset;
use omniseg::train::{
    evaluate_model, EpochReport, EvalCase, EvalSummary, Phase, TrainConfig, TrainImage, Trainer,
};
use omniseg::{Exec, ModelConfig, OmniError, OmniSeg, TissueClass};
use serde::Serialize;

use crate::cli::TrainRun;
use crate::error::{CliError, CliResult};
use crate::output::{write_csv, write_frozen, OutputLock, FROZEN_CONFIG};

#[derive(Debug, Serialize)]
struct CurveRow {
    epoch: usize,
    phase: Phase,
    lr: f64,
    dice: f64,
    ce: f64,
    pseudo_dice: f64,
    pseudo_ce: f64,
    kl: f64,
    mse: f64,
    total: f64,
    supervised_samples: usize,
    pseudo_samples: usize,
    val_dice_pct: Option<f64>,
}

#[derive(Debug, Serialize)]
pub(crate) struct ClassRow {
    pub tissue: TissueClass,
    pub cases: usize,
    pub dice_pct: f64,
    pub hd_um: Option<f64>,
    pub msd_um: Option<f64>,
    pub undefined_cases: usize,
}

pub(crate) fn class_rows(s: &EvalSummary) -> Vec<ClassRow> {
    s.per_class
        .iter()
        .map(|(t, r)| ClassRow {
            tissue: *t,
            cases: r.per_case.len(),
            dice_pct: r.mean_dice_pct,
            hd_um: r.mean_hd_um,
            msd_um: r.mean_msd_um,
            undefined_cases: r.undefined_cases,
        })
        .collect()
}

pub(crate) struct Outcome {
    /// Best-on-validation model, or the final one when nothing was validated.
    pub best: OmniSeg<f32>,
    pub reports: Vec<EpochReport>,
    pub val_dice: Vec<Option<f64>>,
}

pub(crate) fn train_images(ds: &SynthDataset) -> Vec<TrainImage> {
    ds.partition(&ds.split.train)
        .into_iter()
        .map(|i| TrainImage {
            id: i.id.clone(),
            image: i.image.clone(),
            labels: i.labels(),
        })
        .collect()
}

pub(crate) fn eval_cases<'a>(ds: &'a SynthDataset, ids: &[String]) -> Vec<EvalCase<'a>> {
    ds.partition(ids)
        .into_iter()
        .map(|i| EvalCase {
            image: &i.image,
            truth: &i.masks,
        })
        .collect()
}

/// Train on the dataset's train split, validating every `val_every` epochs.
/// With `out`, writes `best.ckpt`, `last.ckpt`, `curves.csv` and
/// `curves.png`; on a non-finite loss writes `diagnostics.json` first.
pub(crate) fn run_training(
    ds: &SynthDataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    val_every: usize,
    out: Option<&Path>,
    exec: Exec,
) -> CliResult<Outcome> {
    let val = eval_cases(ds, &ds.split.val);
    let model = OmniSeg::<f32>::new(model_cfg.clone(), cfg.seed)?;
    let mut trainer = Trainer::new(model, cfg.clone(), train_images(ds), exec)?;
    let meta = serde_json::json!({ "train": cfg });
    let total = cfg.total_epochs;
    let mut reports = Vec::new();
    let mut val_dice = Vec::new();
    let mut best: Option<(f64, OmniSeg<f32>)> = None;
    let fitted = trainer.fit(|r, m| {
        let mut light = r.clone();
        light.batches.clear();
        reports.push(light);
        let due = (r.epoch + 1) % val_every == 0 || r.epoch + 1 == total;
        let score = if due && !val.is_empty() {
            let s = evaluate_model(m, &val, &TissueClass::ALL, exec)?.mean_dice_pct;
            log::info!("epoch {} validation dice {s:.2}", r.epoch);
            if best.as_ref().is_none_or(|(b, _)| s > *b) {
                best = Some((s, m.clone()));
                if let Some(dir) = out {
                    checkpoint::save(&dir.join("best.ckpt"), m, meta.clone())?;
                }
            }
            Some(s)
        } else {
            None
        };
        val_dice.push(score);
        log::info!(
            "epoch {} {:?} total {:.4} dice {:.4} ce {:.4} kl {:.5} mse {:.5}",
            r.epoch,
            r.phase,
            r.total,
            r.dice,
            r.ce,
            r.kl,
            r.mse
        );
        Ok(())
    });
    if let Err(e) = fitted {
        if let (Some(dir), OmniError::NonFinite { .. }) = (out, &e) {
            let diag = serde_json::json!({ "error": e.to_string(), "epochs": reports });
            std::fs::create_dir_all(dir)?;
            std::fs::write(
                dir.join("diagnostics.json"),
                serde_json::to_string_pretty(&diag).unwrap_or_default(),
            )?;
        }
        return Err(e.into());
    }
    if let Some(dir) = out {
        checkpoint::save(&dir.join("last.ckpt"), &trainer.model, meta)?;
        write_curves(dir, &reports, &val_dice)?;
    }
    let best = best
        .map(|(_, m)| m)
        .unwrap_or_else(|| trainer.model.clone());
    Ok(Outcome {
        best,
        reports,
        val_dice,
    })
}

fn write_curves(dir: &Path, reports: &[EpochReport], val: &[Option<f64>]) -> CliResult<()> {
    let rows: Vec<CurveRow> = reports
        .iter()
        .zip(val)
        .map(|(r, v)| CurveRow {
            epoch: r.epoch,
            phase: r.phase,
            lr: r.lr,
            dice: r.dice,
            ce: r.ce,
            pseudo_dice: r.pseudo_dice,
            pseudo_ce: r.pseudo_ce,
            kl: r.kl,
            mse: r.mse,
            total: r.total,
            supervised_samples: r.supervised_samples,
            pseudo_samples: r.pseudo_samples,
            val_dice_pct: *v,
        })
        .collect();
    write_csv(&dir.join("curves.csv"), &rows)?;
    let series = vec![
        reports.iter().map(|r| r.total).collect(),
        reports.iter().map(|r| r.dice + r.ce).collect(),
        reports
            .iter()
            .map(|r| r.pseudo_dice + r.pseudo_ce)
            .collect(),
        reports.iter().map(|r| r.kl + r.mse).collect(),
        val.iter()
            .map(|v| v.map_or(f64::NAN, |d| d / 100.0))
            .collect(),
    ];
    plot::save(
        &plot::line_chart(&series, 640, 360)?,
        &dir.join("curves.png"),
    )?;
    Ok(())
}

pub fn train(run: &TrainRun, exec: Exec) -> CliResult<()> {
    let ds = SynthDataset::load(&run.data, exec)?;
    if ds.split.train.is_empty() {
        return Err(CliError::Data("dataset has no training images".into()));
    }
    let _lock = OutputLock::acquire(&run.out)?;
    write_frozen(&run.out.join(FROZEN_CONFIG), run)?;
    let outcome = run_training(
        &ds,
        &run.model,
        &run.train,
        run.val_every,
        Some(&run.out),
        exec,
    )?;
    let test = eval_cases(&ds, &ds.split.test);
    if !test.is_empty() {
        let summary = evaluate_model(&outcome.best, &test, &TissueClass::ALL, exec)?;
        write_csv(&run.out.join("test_metrics.csv"), &class_rows(&summary))?;
        log::info!("test mean dice {:.2}", summary.mean_dice_pct);
    }
    log::info!(
        "trained {} epochs, best validation dice {:?}",
        outcome.reports.len(),
        outcome
            .val_dice
            .iter()
            .flatten()
            .copied()
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
    );
    Ok(())
}
