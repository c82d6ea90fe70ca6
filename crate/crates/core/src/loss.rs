//! Segmentation and consistency losses on two-channel logits.
//!
//! Channel 0 is background and channel 1 foreground. Every loss returns its
//! value together with the gradient with respect to the logits it consumed.

use ndarray::{Array2, Array3, Zip};

use crate::augment::D4;
use crate::error::{OmniError, Result};
use crate::pyramid::Mask;
use crate::real::Real;

pub const DICE_EPS: f64 = 1e-5;

fn check_pair<T>(ctx: &'static str, logits: &Array3<T>, target: &Mask) -> Result<()> {
    let (c, h, w) = logits.dim();
    if c != 2 || (h, w) != target.dim() {
        return Err(OmniError::shape(
            ctx,
            format!("2x{:?}", target.dim()),
            format!("{:?}", logits.dim()),
        ));
    }
    Ok(())
}

/// Channel-wise softmax of `2×H×W` logits.
pub fn softmax2<T: Real>(logits: &Array3<T>) -> Array3<T> {
    let mut out = logits.clone();
    let (_, h, w) = logits.dim();
    for y in 0..h {
        for x in 0..w {
            let (a, b) = (logits[[0, y, x]], logits[[1, y, x]]);
            let m = a.max(b);
            let (ea, eb) = ((a - m).exp(), (b - m).exp());
            let z = ea + eb;
            out[[0, y, x]] = ea / z;
            out[[1, y, x]] = eb / z;
        }
    }
    out
}

fn log_softmax2<T: Real>(logits: &Array3<T>) -> Array3<T> {
    let mut out = logits.clone();
    let (_, h, w) = logits.dim();
    for y in 0..h {
        for x in 0..w {
            let (a, b) = (logits[[0, y, x]], logits[[1, y, x]]);
            let m = a.max(b);
            let lse = m + ((a - m).exp() + (b - m).exp()).ln();
            out[[0, y, x]] = a - lse;
            out[[1, y, x]] = b - lse;
        }
    }
    out
}

/// `1 − (2·Σ p·t + ε) / (Σ p + Σ t + ε)`.
pub fn dice_loss<T: Real>(probs: &Array2<T>, target: &Mask) -> Result<f64> {
    dice_loss_grad(probs, target).map(|(l, _)| l)
}

pub fn dice_loss_grad<T: Real>(probs: &Array2<T>, target: &Mask) -> Result<(f64, Array2<T>)> {
    if probs.dim() != target.dim() {
        return Err(OmniError::shape(
            "dice_loss",
            format!("{:?}", target.dim()),
            format!("{:?}", probs.dim()),
        ));
    }
    let (mut inter, mut sp, mut st) = (0.0f64, 0.0f64, 0.0f64);
    Zip::from(probs).and(target).for_each(|&p, &t| {
        let p = p.as_f64();
        sp += p;
        if t {
            inter += p;
            st += 1.0;
        }
    });
    let num = 2.0 * inter + DICE_EPS;
    let den = sp + st + DICE_EPS;
    let loss = 1.0 - num / den;
    let mut grad = Array2::zeros(probs.dim());
    Zip::from(&mut grad).and(target).for_each(|g, &t| {
        let dnum = if t { 2.0 } else { 0.0 };
        *g = T::of(-(dnum * den - num) / (den * den));
    });
    Ok((loss, grad))
}

/// Mean over pixels of `−log softmax(logits)[target]`.
pub fn cross_entropy_loss<T: Real>(logits: &Array3<T>, target: &Mask) -> Result<f64> {
    cross_entropy_grad(logits, target).map(|(l, _)| l)
}

pub fn cross_entropy_grad<T: Real>(logits: &Array3<T>, target: &Mask) -> Result<(f64, Array3<T>)> {
    check_pair("cross_entropy_loss", logits, target)?;
    let ls = log_softmax2(logits);
    let (_, h, w) = logits.dim();
    let n = (h * w) as f64;
    let inv = T::of(1.0 / n);
    let mut loss = 0.0;
    let mut grad = Array3::zeros(logits.dim());
    for y in 0..h {
        for x in 0..w {
            let c = target[[y, x]] as usize;
            loss -= ls[[c, y, x]].as_f64();
            for k in 0..2 {
                let p = ls[[k, y, x]].exp();
                let onehot = if k == c { T::one() } else { T::zero() };
                grad[[k, y, x]] = (p - onehot) * inv;
            }
        }
    }
    Ok((loss / n, grad))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegLoss {
    pub dice: f64,
    pub ce: f64,
}

/// Weighted dice (on the foreground probability) plus cross entropy, with
/// the gradient of `w_dice·dice + w_ce·ce` with respect to the logits.
pub fn segmentation_loss<T: Real>(
    logits: &Array3<T>,
    target: &Mask,
    w_dice: f64,
    w_ce: f64,
) -> Result<(SegLoss, Array3<T>)> {
    check_pair("segmentation_loss", logits, target)?;
    let probs = softmax2(logits);
    let fg = probs.index_axis(ndarray::Axis(0), 1).to_owned();
    let (dice, dfg) = dice_loss_grad(&fg, target)?;
    let (ce, dce) = cross_entropy_grad(logits, target)?;
    let (wd, wc) = (T::of(w_dice), T::of(w_ce));
    let mut grad = dce.mapv(|v| v * wc);
    let (_, h, w) = logits.dim();
    for y in 0..h {
        for x in 0..w {
            // d p1 / d l1 = p1·p0, d p1 / d l0 = −p1·p0
            let s = wd * dfg[[y, x]] * probs[[0, y, x]] * probs[[1, y, x]];
            grad[[1, y, x]] += s;
            grad[[0, y, x]] -= s;
        }
    }
    Ok((SegLoss { dice, ce }, grad))
}

/// How each view was derived from the shared source patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Alignment {
    pub a: D4,
    pub b: D4,
}

#[derive(Clone, Debug)]
pub struct ConsistencyOut<T> {
    pub kl: f64,
    pub mse: f64,
    /// Gradient of `w_kl·kl + w_mse·mse` with respect to `pred_a`.
    pub grad_a: Array3<T>,
    /// Only populated for the symmetric variant.
    pub grad_b: Option<Array3<T>>,
}

/// KL(softmax(a) ‖ softmax(b)) averaged over pixels, plus the mean squared
/// difference of the two probability maps, both after mapping each view back
/// to the source frame. `b` is a fixed target unless `symmetric` is set, in
/// which case the mirrored KL is added and gradients flow into both.
pub fn consistency_loss<T: Real>(
    pred_a: &Array3<T>,
    pred_b: &Array3<T>,
    align: Alignment,
    w_kl: f64,
    w_mse: f64,
    symmetric: bool,
) -> Result<ConsistencyOut<T>> {
    let (c, h, w) = pred_a.dim();
    if c != 2
        || pred_b.dim() != (c, h, w)
        || (h != w && (!align.a.preserves_shape() || !align.b.preserves_shape()))
    {
        return Err(OmniError::shape(
            "consistency_loss",
            format!("{:?}", pred_a.dim()),
            format!("{:?}", pred_b.dim()),
        ));
    }
    let a = align.a.inverse().apply3(pred_a);
    let b = align.b.inverse().apply3(pred_b);
    let (ga, gb, kl, mse) = consistency_aligned(&a, &b, w_kl, w_mse, symmetric);
    Ok(ConsistencyOut {
        kl,
        mse,
        // the adjoint of a permutation is its inverse
        grad_a: align.a.apply3(&ga),
        grad_b: gb.map(|g| align.b.apply3(&g)),
    })
}

fn consistency_aligned<T: Real>(
    a: &Array3<T>,
    b: &Array3<T>,
    w_kl: f64,
    w_mse: f64,
    symmetric: bool,
) -> (Array3<T>, Option<Array3<T>>, f64, f64) {
    let (_, h, w) = a.dim();
    let n = (h * w) as f64;
    let (la, lb) = (log_softmax2(a), log_softmax2(b));
    let (mut kl, mut mse) = (0.0, 0.0);
    let mut ga = Array3::zeros(a.dim());
    let mut gb = if symmetric {
        Some(Array3::zeros(a.dim()))
    } else {
        None
    };
    let (kw, mw) = (w_kl / n, w_mse / (2.0 * n));
    for y in 0..h {
        for x in 0..w {
            let pa = [la[[0, y, x]].as_f64().exp(), la[[1, y, x]].as_f64().exp()];
            let pb = [lb[[0, y, x]].as_f64().exp(), lb[[1, y, x]].as_f64().exp()];
            let d = [
                la[[0, y, x]].as_f64() - lb[[0, y, x]].as_f64(),
                la[[1, y, x]].as_f64() - lb[[1, y, x]].as_f64(),
            ];
            let kl_ab = pa[0] * d[0] + pa[1] * d[1];
            kl += kl_ab;
            let diff = [pa[0] - pb[0], pa[1] - pb[1]];
            mse += diff[0] * diff[0] + diff[1] * diff[1];
            // mse term: g_k = 2·diff_k, pushed through the softmax Jacobian
            let ma = diff[0] * pa[0] + diff[1] * pa[1];
            for k in 0..2 {
                let g = kw * pa[k] * (d[k] - kl_ab) + mw * 2.0 * pa[k] * (diff[k] - ma);
                ga[[k, y, x]] = T::of(g);
            }
            if let Some(gb) = gb.as_mut() {
                let kl_ba = -(pb[0] * d[0] + pb[1] * d[1]);
                kl += kl_ba;
                // d KL(a‖b)/d lb_k = pb_k − pa_k; d KL(b‖a)/d lb_k = pb_k(−d_k − kl_ba)
                let mb = diff[0] * pb[0] + diff[1] * pb[1];
                for k in 0..2 {
                    ga[[k, y, x]] += T::of(kw * (pa[k] - pb[k]));
                    let g = kw * (pb[k] - pa[k]) + kw * pb[k] * (-d[k] - kl_ba)
                        - mw * 2.0 * pb[k] * (diff[k] - mb);
                    gb[[k, y, x]] = T::of(g);
                }
            }
        }
    }
    (ga, gb, kl / n, mse / (2.0 * n))
}
