use std::collections::BTreeMap;

use omniseg::metrics::{evaluate_cases, evaluate_spots};
use omniseg::pyramid::{extract_spots, spot_grid};
use omniseg::{io, plot, Exec, Mask, OmniError, TissueClass};
use serde::Serialize;

use super::list_masks;
use crate::cli::{EvaluateRun, SpotsRun};
use crate::error::{CliError, CliResult};
use crate::output::{write_csv, write_frozen, OutputLock, FROZEN_CONFIG};

type Pairs = BTreeMap<(String, TissueClass), (Mask, Mask)>;
type Canvases = BTreeMap<TissueClass, Mask>;

/// Load every prediction for the selected tissues with its reference.
fn load_pairs(
    pred: &std::path::Path,
    truth: &std::path::Path,
    tissues: &[TissueClass],
) -> CliResult<Pairs> {
    let found = list_masks(pred)?;
    let mut out = BTreeMap::new();
    for ((id, t), path) in found {
        if !tissues.contains(&t) {
            continue;
        }
        let reference = truth.join(path.file_name().expect("listed file"));
        if !reference.exists() {
            return Err(CliError::Data(format!(
                "no reference {} for {}",
                reference.display(),
                path.display()
            )));
        }
        let p = io::read_mask_png(&path)?;
        let g = io::read_mask_png(&reference)?;
        if p.dim() != g.dim() {
            return Err(CliError::Data(format!(
                "{id}_{t}: prediction {:?} vs reference {:?}",
                p.dim(),
                g.dim()
            )));
        }
        out.insert((id, t), (p, g));
    }
    if out.is_empty() {
        return Err(CliError::Data(format!(
            "no <id>_<tissue>.png predictions in {}",
            pred.display()
        )));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct CaseRow<'a> {
    id: &'a str,
    tissue: TissueClass,
    dice_pct: f64,
    hd_um: Option<f64>,
    msd_um: Option<f64>,
    flag: Option<String>,
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    tissue: TissueClass,
    cases: usize,
    dice_pct: f64,
    hd_um: Option<f64>,
    msd_um: Option<f64>,
    undefined_cases: usize,
}

pub fn evaluate(run: &EvaluateRun, exec: Exec) -> CliResult<()> {
    let pairs = load_pairs(&run.pred, &run.truth, &run.tissues)?;
    let _lock = OutputLock::acquire(&run.out)?;
    let px = run.magnification.pixel_size_um();
    let mut cases = Vec::new();
    let mut summary = Vec::new();
    for &t in &run.tissues {
        let ids: Vec<&String> = pairs
            .keys()
            .filter(|(_, k)| *k == t)
            .map(|(id, _)| id)
            .collect();
        if ids.is_empty() {
            continue;
        }
        let refs: Vec<(&Mask, &Mask)> = ids
            .iter()
            .map(|id| {
                let (p, g) = &pairs[&((*id).clone(), t)];
                (p, g)
            })
            .collect();
        let report = evaluate_cases(&refs, px, exec)?;
        for (id, c) in ids.iter().zip(&report.per_case) {
            cases.push(CaseRow {
                id,
                tissue: t,
                dice_pct: c.dice_pct,
                hd_um: c.hd_um,
                msd_um: c.msd_um,
                flag: c.flag.clone(),
            });
        }
        summary.push(SummaryRow {
            tissue: t,
            cases: report.per_case.len(),
            dice_pct: report.mean_dice_pct,
            hd_um: report.mean_hd_um,
            msd_um: report.mean_msd_um,
            undefined_cases: report.undefined_cases,
        });
    }
    write_csv(&run.out.join("per_case.csv"), &cases)?;
    write_csv(&run.out.join("summary.csv"), &summary)?;
    let bars: Vec<Vec<f64>> = summary.iter().map(|s| vec![s.dice_pct]).collect();
    plot::save(
        &plot::bar_chart(&bars, 480, 320)?,
        &run.out.join("dice.png"),
    )?;
    write_frozen(&run.out.join(FROZEN_CONFIG), run)?;
    for s in &summary {
        log::info!(
            "{}: dice {:.2} over {} cases",
            s.tissue,
            s.dice_pct,
            s.cases
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SpotRow<'a> {
    id: &'a str,
    spot: usize,
    cx: f64,
    cy: f64,
    tissue: TissueClass,
    pred_pct: f64,
    truth_pct: f64,
}

#[derive(Debug, Serialize)]
struct CorrelationRow {
    tissue: TissueClass,
    spots: usize,
    r: Option<f64>,
    flag: Option<String>,
}

pub fn spots(run: &SpotsRun, exec: Exec) -> CliResult<()> {
    let pairs = load_pairs(&run.pred, &run.truth, &run.tissues)?;
    let _lock = OutputLock::acquire(&run.out)?;
    let mut by_image: BTreeMap<&str, (Canvases, Canvases)> = BTreeMap::new();
    for ((id, t), (p, g)) in &pairs {
        let e = by_image.entry(id.as_str()).or_default();
        e.0.insert(*t, p.clone());
        e.1.insert(*t, g.clone());
    }
    let mut rows = Vec::new();
    let mut pooled: BTreeMap<TissueClass, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (id, (pred, truth)) in &by_image {
        let (h, w) = pred.values().next().expect("non-empty").dim();
        let centers = spot_grid(h, w, run.magnification, run.pitch_um);
        let ps = extract_spots(pred, &centers, run.magnification, exec);
        let ts = extract_spots(truth, &centers, run.magnification, exec);
        for (k, (a, b)) in ps.iter().zip(&ts).enumerate() {
            for (t, &pp) in &a.tissue_percentages {
                let tp = b.tissue_percentages[t];
                rows.push(SpotRow {
                    id,
                    spot: k,
                    cx: a.center40x.0,
                    cy: a.center40x.1,
                    tissue: *t,
                    pred_pct: pp,
                    truth_pct: tp,
                });
                let e = pooled.entry(*t).or_default();
                e.0.push(pp);
                e.1.push(tp);
            }
        }
    }
    let mut corr = Vec::new();
    for (t, (p, g)) in &pooled {
        let (r, flag) = match evaluate_spots(p, g) {
            Ok(rep) => (Some(rep.r), None),
            Err(OmniError::UndefinedCorrelation(why)) => {
                (None, Some(format!("undefined correlation: {why}")))
            }
            Err(e) => return Err(e.into()),
        };
        corr.push(CorrelationRow {
            tissue: *t,
            spots: p.len(),
            r,
            flag,
        });
        let points: Vec<(f64, f64)> = g.iter().copied().zip(p.iter().copied()).collect();
        plot::save(
            &plot::scatter_identity(&points, 360, 360)?,
            &run.out.join(format!("scatter_{t}.png")),
        )?;
    }
    write_csv(&run.out.join("spots.csv"), &rows)?;
    write_csv(&run.out.join("correlation.csv"), &corr)?;
    write_frozen(&run.out.join(FROZEN_CONFIG), run)?;
    for c in &corr {
        match c.r {
            Some(r) => log::info!("{}: r = {r:.4} over {} spots", c.tissue, c.spots),
            None => log::warn!("{}: {}", c.tissue, c.flag.as_deref().unwrap_or("undefined")),
        }
    }
    Ok(())
}
