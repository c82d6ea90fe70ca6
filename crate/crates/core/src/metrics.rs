//! Overlap and surface-distance metrics in physical units, plus the spot
//! correlation used for transcriptomics comparisons.
//!
//! A boundary pixel is a foreground pixel with at least one background
//! 4-neighbour; pixels outside the mask count as background. Distances are
//! measured between pixel centres.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{OmniError, Result};
use crate::par::{self, Exec};
use crate::pyramid::Mask;

fn check_shapes(ctx: &'static str, a: &Mask, b: &Mask) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(OmniError::shape(
            ctx,
            format!("{:?}", a.dim()),
            format!("{:?}", b.dim()),
        ));
    }
    Ok(())
}

/// `100 · 2|P∩G| / (|P| + |G|)`; two empty masks agree perfectly.
pub fn dice_pct(pred: &Mask, gt: &Mask) -> Result<f64> {
    check_shapes("dice_pct", pred, gt)?;
    let (mut inter, mut np, mut ng) = (0usize, 0usize, 0usize);
    Zip::from(pred).and(gt).for_each(|&p, &g| {
        np += p as usize;
        ng += g as usize;
        inter += (p && g) as usize;
    });
    if np + ng == 0 {
        return Ok(100.0);
    }
    Ok(100.0 * 2.0 * inter as f64 / (np + ng) as f64)
}

pub fn boundary(mask: &Mask) -> Mask {
    let (h, w) = mask.dim();
    let bg = |y: isize, x: isize| {
        y < 0 || x < 0 || y >= h as isize || x >= w as isize || !mask[[y as usize, x as usize]]
    };
    Array2::from_shape_fn((h, w), |(y, x)| {
        if !mask[[y, x]] {
            return false;
        }
        let (y, x) = (y as isize, x as isize);
        bg(y - 1, x) || bg(y + 1, x) || bg(y, x - 1) || bg(y, x + 1)
    })
}

/// Squared Euclidean distance from every pixel to the nearest `true` pixel
/// of `sites` (exact, separable lower-envelope algorithm). Pixels have
/// `f64::INFINITY` when `sites` is empty.
pub fn squared_distance_transform(sites: &Mask) -> Array2<f64> {
    let (h, w) = sites.dim();
    let mut d = sites.mapv(|s| if s { 0.0 } else { f64::INFINITY });
    let mut buf = Vec::new();
    for x in 0..w {
        buf.clear();
        buf.extend((0..h).map(|y| d[[y, x]]));
        let out = edt_1d(&buf);
        for y in 0..h {
            d[[y, x]] = out[y];
        }
    }
    for y in 0..h {
        buf.clear();
        buf.extend((0..w).map(|x| d[[y, x]]));
        let out = edt_1d(&buf);
        for x in 0..w {
            d[[y, x]] = out[x];
        }
    }
    d
}

fn edt_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let finite: Vec<usize> = (0..n).filter(|&i| f[i].is_finite()).collect();
    if finite.is_empty() {
        return vec![f64::INFINITY; n];
    }
    // parabola vertices and the boundaries between them
    let mut v: Vec<usize> = Vec::with_capacity(finite.len());
    let mut z: Vec<f64> = Vec::with_capacity(finite.len() + 1);
    for &q in &finite {
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.clear();
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64))
                        / (2.0 * (q as f64 - p as f64));
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                        continue;
                    }
                    v.push(q);
                    z.push(s);
                    break;
                }
            }
        }
    }
    z.push(f64::INFINITY);
    let mut out = vec![0.0; n];
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        *o = dq * dq + f[v[k]];
    }
    out
}

/// Distances from each boundary pixel of `a` to the boundary of `b`, in pixels.
fn directed(ba: &Mask, db: &Array2<f64>) -> Vec<f64> {
    ba.indexed_iter()
        .filter(|(_, &v)| v)
        .map(|(i, _)| db[i].sqrt())
        .collect()
}

fn surface_distances(pred: &Mask, gt: &Mask) -> Result<(Vec<f64>, Vec<f64>)> {
    check_shapes("surface distance", pred, gt)?;
    if !pred.iter().any(|&v| v) {
        return Err(OmniError::EmptyMask("prediction"));
    }
    if !gt.iter().any(|&v| v) {
        return Err(OmniError::EmptyMask("ground truth"));
    }
    let (bp, bg) = (boundary(pred), boundary(gt));
    Ok((
        directed(&bp, &squared_distance_transform(&bg)),
        directed(&bg, &squared_distance_transform(&bp)),
    ))
}

pub fn hausdorff_um(pred: &Mask, gt: &Mask, pixel_size_um: f64) -> Result<f64> {
    let (a, b) = surface_distances(pred, gt)?;
    Ok(a.iter().chain(&b).fold(0.0f64, |m, &v| m.max(v)) * pixel_size_um)
}

pub fn msd_um(pred: &Mask, gt: &Mask, pixel_size_um: f64) -> Result<f64> {
    let (a, b) = surface_distances(pred, gt)?;
    let n = (a.len() + b.len()) as f64;
    Ok(a.iter().chain(&b).sum::<f64>() / n * pixel_size_um)
}

/// Sample Pearson correlation. Constant input is an error rather than NaN.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(OmniError::Length {
            context: "pearson",
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(OmniError::UndefinedCorrelation("fewer than two samples"));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(OmniError::UndefinedCorrelation(
            "first vector has zero variance",
        ));
    }
    if syy == 0.0 {
        return Err(OmniError::UndefinedCorrelation(
            "second vector has zero variance",
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpotReport {
    pub r: f64,
    /// `pred − ref` per spot.
    pub residuals: Vec<f64>,
}

pub fn evaluate_spots(pred: &[f64], reference: &[f64]) -> Result<SpotReport> {
    let r = pearson(pred, reference)?;
    Ok(SpotReport {
        r,
        residuals: pred.iter().zip(reference).map(|(p, q)| p - q).collect(),
    })
}

/// Metrics for one (prediction, reference) pair. Surface distances are
/// `None` when either mask is empty; `flag` says why.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub dice_pct: f64,
    pub hd_um: Option<f64>,
    pub msd_um: Option<f64>,
    pub flag: Option<String>,
}

pub fn evaluate_case(pred: &Mask, gt: &Mask, pixel_size_um: f64) -> Result<CaseMetrics> {
    let dice = dice_pct(pred, gt)?;
    match surface_distances(pred, gt) {
        Ok((a, b)) => {
            let hd = a.iter().chain(&b).fold(0.0f64, |m, &v| m.max(v)) * pixel_size_um;
            let msd = a.iter().chain(&b).sum::<f64>() / (a.len() + b.len()) as f64 * pixel_size_um;
            Ok(CaseMetrics {
                dice_pct: dice,
                hd_um: Some(hd),
                msd_um: Some(msd),
                flag: None,
            })
        }
        Err(OmniError::EmptyMask(which)) => Ok(CaseMetrics {
            dice_pct: dice,
            hd_um: None,
            msd_um: None,
            flag: Some(format!("empty {which}")),
        }),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pixel_size_um: f64,
    pub per_case: Vec<CaseMetrics>,
    pub mean_dice_pct: f64,
    /// Means over cases where the distance is defined; `None` if none are.
    pub mean_hd_um: Option<f64>,
    pub mean_msd_um: Option<f64>,
    pub undefined_cases: usize,
}

pub fn evaluate_cases(
    pairs: &[(&Mask, &Mask)],
    pixel_size_um: f64,
    exec: Exec,
) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(OmniError::EmptyDataset("no cases to evaluate".into()));
    }
    let per_case = par::map(exec, pairs, |(p, g)| evaluate_case(p, g, pixel_size_um))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mean =
        |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    Ok(MetricReport {
        pixel_size_um,
        mean_dice_pct: per_case.iter().map(|c| c.dice_pct).sum::<f64>() / per_case.len() as f64,
        mean_hd_um: mean(per_case.iter().filter_map(|c| c.hd_um).collect()),
        mean_msd_um: mean(per_case.iter().filter_map(|c| c.msd_um).collect()),
        undefined_cases: per_case.iter().filter(|c| c.flag.is_some()).count(),
        per_case,
    })
}
