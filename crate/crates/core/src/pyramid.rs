//! Patch geometry between 40x space and the lower pyramid levels.
//!
//! All provenance is kept in 40x pixel coordinates. A patch of `patch_px`
//! pixels at magnification `m` covers `patch_px · ratio(m)` pixels of 40x
//! space. Images are downsampled by block averaging; masks by nearest
//! neighbour (block-centre sampling) so labels never bleed.

use std::collections::BTreeMap;

use ndarray::{s, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{OmniError, Result};
use crate::par::{self, Exec};
use crate::task::{Magnification, TissueClass, COMPOSITE_PRIORITY};

pub type Mask = Array2<bool>;

/// Square region in 40x pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub side: usize,
}

impl BBox {
    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x + self.side <= width && self.y + self.side <= height
    }

    fn check(&self, width: usize, height: usize) -> Result<()> {
        if self.fits(width, height) {
            Ok(())
        } else {
            Err(OmniError::OutOfBounds {
                x: self.x,
                y: self.y,
                side: self.side,
                width,
                height,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Supervised,
    Pseudo,
    None,
}

#[derive(Clone, Debug)]
pub struct PatchRecord {
    pub image_id: String,
    pub bbox: BBox,
    pub magnification: Magnification,
    /// `3 × patch_px × patch_px`, values in `[0, 1]`.
    pub pixels: Array3<f32>,
    pub label: Option<Mask>,
    pub label_kind: LabelKind,
    pub tissue: Option<TissueClass>,
}

/// 40x side length covered by a patch of `patch_px` at `mag`.
pub fn patch_side_40x(patch_px: usize, mag: Magnification) -> usize {
    patch_px * mag.ratio_to_40x()
}

/// Start offsets of windows of `side` along an axis of `len`, stepping by
/// `step`, with the last window clamped to the boundary.
pub fn tile_positions(len: usize, side: usize, step: usize) -> Vec<usize> {
    assert!(side > 0 && step > 0);
    if len < side {
        return Vec::new();
    }
    let last = len - side;
    let mut out = Vec::new();
    let mut x = 0;
    loop {
        out.push(x.min(last));
        if x >= last {
            break;
        }
        x += step;
    }
    out.dedup();
    out
}

/// Block-average a `C×H×W` region of `image` at `bbox` down to `out_px` square.
pub fn extract_patch(image: &Array3<f32>, bbox: BBox, out_px: usize) -> Result<Array3<f32>> {
    let (c, h, w) = image.dim();
    bbox.check(w, h)?;
    if out_px == 0 || !bbox.side.is_multiple_of(out_px) {
        return Err(OmniError::shape(
            "extract_patch",
            format!("side divisible by {out_px}"),
            bbox.side,
        ));
    }
    let f = bbox.side / out_px;
    let inv = 1.0 / (f * f) as f32;
    let mut out = Array3::zeros((c, out_px, out_px));
    for ch in 0..c {
        for oy in 0..out_px {
            for ox in 0..out_px {
                let mut acc = 0.0f32;
                for dy in 0..f {
                    for dx in 0..f {
                        acc += image[[ch, bbox.y + oy * f + dy, bbox.x + ox * f + dx]];
                    }
                }
                out[[ch, oy, ox]] = acc * inv;
            }
        }
    }
    Ok(out)
}

/// Nearest-neighbour mask resize sampling block centres (or replicating pixels).
pub fn resize_mask(mask: &Mask, out_h: usize, out_w: usize) -> Mask {
    let (h, w) = mask.dim();
    Array2::from_shape_fn((out_h, out_w), |(y, x)| {
        // centre of the output pixel mapped back: floor((y + 0.5) · h / out_h)
        let sy = ((2 * y + 1) * h) / (2 * out_h);
        let sx = ((2 * x + 1) * w) / (2 * out_w);
        mask[[sy.min(h - 1), sx.min(w - 1)]]
    })
}

/// Resample a mask between magnifications by the ratio of their pixel sizes.
pub fn rescale_mask(mask: &Mask, from: Magnification, to: Magnification) -> Mask {
    let (h, w) = mask.dim();
    let (rf, rt) = (from.ratio_to_40x(), to.ratio_to_40x());
    resize_mask(mask, h * rf / rt, w * rf / rt)
}

/// Tile a 40x image into patches at `target` magnification.
pub fn tile_image(
    image: &Array3<f32>,
    image_id: &str,
    target: Magnification,
    stride_fraction: f64,
    patch_px: usize,
    exec: Exec,
) -> Result<Vec<PatchRecord>> {
    let boxes = tile_boxes(
        image.dim().2,
        image.dim().1,
        target,
        stride_fraction,
        patch_px,
    )?;
    par::map(exec, &boxes, |&bbox| {
        Ok(PatchRecord {
            image_id: image_id.to_string(),
            bbox,
            magnification: target,
            pixels: extract_patch(image, bbox, patch_px)?,
            label: None,
            label_kind: LabelKind::None,
            tissue: None,
        })
    })
    .into_iter()
    .collect()
}

/// The bounding boxes [`tile_image`] would produce, without extracting pixels.
pub fn tile_boxes(
    width: usize,
    height: usize,
    target: Magnification,
    stride_fraction: f64,
    patch_px: usize,
) -> Result<Vec<BBox>> {
    if !(stride_fraction > 0.0 && stride_fraction <= 1.0) {
        return Err(OmniError::Config(format!(
            "stride fraction {stride_fraction} not in (0, 1]"
        )));
    }
    let side = patch_side_40x(patch_px, target);
    if width < side || height < side {
        return Err(OmniError::ImageTooSmall {
            width,
            height,
            side,
        });
    }
    let step = ((side as f64 * stride_fraction).round() as usize).max(1);
    let ys = tile_positions(height, side, step);
    let xs = tile_positions(width, side, step);
    Ok(ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| BBox { x, y, side }))
        .collect())
}

/// OR each patch mask, upsampled to 40x, into a blank canvas.
pub fn aggregate_predictions(
    patches: &[(BBox, Magnification, &Mask)],
    canvas_shape: (usize, usize),
) -> Result<Mask> {
    let (h, w) = canvas_shape;
    let mut canvas = Array2::from_elem((h, w), false);
    for (bbox, mag, mask) in patches {
        bbox.check(w, h)?;
        let (mh, mw) = mask.dim();
        if mh * mag.ratio_to_40x() != bbox.side || mw * mag.ratio_to_40x() != bbox.side {
            return Err(OmniError::shape(
                "aggregate_predictions mask",
                format!("{0}x{0} at {mag}", bbox.side / mag.ratio_to_40x()),
                format!("{mh}x{mw}"),
            ));
        }
        let up = rescale_mask(mask, *mag, Magnification::X40);
        let mut view = canvas.slice_mut(s![bbox.y..bbox.y + bbox.side, bbox.x..bbox.x + bbox.side]);
        view.zip_mut_with(&up, |c, &m| *c |= m);
    }
    Ok(canvas)
}

/// Crop each requested tissue canvas at a patch's 40x footprint and resample
/// it to the patch's own resolution.
pub fn match_select(
    supervised: &PatchRecord,
    pseudo_canvas: &BTreeMap<TissueClass, Mask>,
    tissues: &[TissueClass],
) -> Result<Vec<(TissueClass, Mask)>> {
    let (_, ph, pw) = supervised.pixels.dim();
    tissues
        .iter()
        .map(|&t| {
            let canvas = pseudo_canvas
                .get(&t)
                .ok_or_else(|| OmniError::MissingCanvas(t.to_string()))?;
            let crop = crop_mask(canvas, supervised.bbox)?;
            Ok((t, resize_mask(&crop, ph, pw)))
        })
        .collect()
}

pub fn crop_mask(canvas: &Mask, bbox: BBox) -> Result<Mask> {
    let (h, w) = canvas.dim();
    bbox.check(w, h)?;
    Ok(canvas
        .slice(s![bbox.y..bbox.y + bbox.side, bbox.x..bbox.x + bbox.side])
        .to_owned())
}

/// Locate a patch without provenance by normalised cross-correlation against
/// the source image, scanning candidate offsets every `step` 40x pixels.
pub fn locate_by_ncc(
    patch: &Array3<f32>,
    mag: Magnification,
    image: &Array3<f32>,
    step: usize,
    exec: Exec,
) -> Result<(BBox, f64)> {
    let (_, ph, _) = patch.dim();
    let (_, h, w) = image.dim();
    let side = patch_side_40x(ph, mag);
    if w < side || h < side {
        return Err(OmniError::ImageTooSmall {
            width: w,
            height: h,
            side,
        });
    }
    let step = step.max(1);
    let mut cands = Vec::new();
    for y in (0..=h - side).step_by(step) {
        for x in (0..=w - side).step_by(step) {
            cands.push(BBox { x, y, side });
        }
    }
    let target: Vec<f64> = patch.iter().map(|&v| v as f64).collect();
    let scores = par::map(exec, &cands, |&b| {
        let cand = extract_patch(image, b, ph).expect("candidate inside image");
        ncc(&target, &cand.iter().map(|&v| v as f64).collect::<Vec<_>>())
    });
    let (best, score) = scores
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc },
        );
    Ok((cands[best], score))
}

fn ncc(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut num, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    num / (va * vb).sqrt()
}

/// Single-label map: 0 background, `index + 1` for the winning tissue.
pub fn composite(
    canvases: &BTreeMap<TissueClass, Mask>,
    priority: &[TissueClass],
) -> Option<Array2<u8>> {
    let (h, w) = canvases.values().next()?.dim();
    let mut out = Array2::zeros((h, w));
    for t in priority.iter().rev() {
        if let Some(m) = canvases.get(t) {
            out.zip_mut_with(m, |o, &v| {
                if v {
                    *o = t.index() as u8 + 1;
                }
            });
        }
    }
    Some(out)
}

pub fn default_composite(canvases: &BTreeMap<TissueClass, Mask>) -> Option<Array2<u8>> {
    composite(canvases, &COMPOSITE_PRIORITY)
}

/// Something that can turn patches into binary masks for a task.
pub trait PatchSegmenter: Sync {
    fn segment(
        &self,
        patches: &[Array3<f32>],
        tissue: TissueClass,
        scale: Magnification,
        exec: Exec,
    ) -> Result<Vec<Mask>>;
}

/// Tile at the tissue's magnification, segment every patch and aggregate back
/// into a 40x canvas.
pub fn segment_tissue<S: PatchSegmenter + ?Sized>(
    segmenter: &S,
    image: &Array3<f32>,
    tissue: TissueClass,
    scale: Magnification,
    patch_px: usize,
    stride_fraction: f64,
    exec: Exec,
) -> Result<Mask> {
    let (_, h, w) = image.dim();
    let boxes = tile_boxes(w, h, scale, stride_fraction, patch_px)?;
    let pixels = par::map(exec, &boxes, |&b| extract_patch(image, b, patch_px))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let masks = segmenter.segment(&pixels, tissue, scale, exec)?;
    let placed: Vec<_> = boxes
        .iter()
        .zip(&masks)
        .map(|(b, m)| (*b, scale, m))
        .collect();
    aggregate_predictions(&placed, (h, w))
}

pub const SPOT_DIAMETER_UM: f64 = 55.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spot {
    /// Centre in 40x pixel coordinates.
    pub center40x: (f64, f64),
    pub diameter_um: f64,
    pub tissue_percentages: BTreeMap<TissueClass, f64>,
    /// The disk extended past the mask and was clipped.
    pub clipped: bool,
}

pub fn spot_diameter_px(mag: Magnification) -> f64 {
    SPOT_DIAMETER_UM / mag.pixel_size_um()
}

/// Foreground percentage inside the disk of `radius` around `center` (x, y),
/// in the mask's pixel index coordinates. Returns `(percentage, clipped)`.
pub fn spot_percentage(mask: &Mask, center: (f64, f64), radius: f64) -> (f64, bool) {
    let (h, w) = mask.dim();
    let (cx, cy) = center;
    let r2 = radius * radius;
    let y0 = (cy - radius).floor() as i64;
    let y1 = (cy + radius).ceil() as i64;
    let x0 = (cx - radius).floor() as i64;
    let x1 = (cx + radius).ceil() as i64;
    let (mut inside, mut fg, mut clipped) = (0u64, 0u64, false);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if dx * dx + dy * dy > r2 {
                continue;
            }
            if y < 0 || x < 0 || y >= h as i64 || x >= w as i64 {
                clipped = true;
                continue;
            }
            inside += 1;
            if mask[[y as usize, x as usize]] {
                fg += 1;
            }
        }
    }
    let pct = if inside == 0 {
        0.0
    } else {
        100.0 * fg as f64 / inside as f64
    };
    (pct, clipped)
}

/// Per-tissue percentages for 55 µm spots; masks are at `mag`, centres in
/// that mask's pixel coordinates.
pub fn extract_spots(
    masks: &BTreeMap<TissueClass, Mask>,
    centers: &[(f64, f64)],
    mag: Magnification,
    exec: Exec,
) -> Vec<Spot> {
    let radius = spot_diameter_px(mag) / 2.0;
    let ratio = mag.ratio_to_40x() as f64;
    par::map(exec, centers, |&c| {
        let mut clipped = false;
        let tissue_percentages = masks
            .iter()
            .map(|(&t, m)| {
                let (p, cl) = spot_percentage(m, c, radius);
                clipped |= cl;
                (t, p)
            })
            .collect();
        Spot {
            center40x: (c.0 * ratio, c.1 * ratio),
            diameter_um: SPOT_DIAMETER_UM,
            tissue_percentages,
            clipped,
        }
    })
}

/// Square grid of spot centres at `pitch_um` spacing that keeps whole disks
/// inside a `height × width` mask at `mag`.
pub fn spot_grid(
    height: usize,
    width: usize,
    mag: Magnification,
    pitch_um: f64,
) -> Vec<(f64, f64)> {
    let r = spot_diameter_px(mag) / 2.0;
    let pitch = pitch_um / mag.pixel_size_um();
    let mut out = Vec::new();
    let mut y = r;
    while y + r <= height as f64 - 1.0 {
        let mut x = r;
        while x + r <= width as f64 - 1.0 {
            out.push((x, y));
            x += pitch;
        }
        y += pitch;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Mask {
        Array2::from_shape_fn((h, w), |_| rng.random_bool(0.5))
    }

    #[test]
    fn tiling_counts() {
        // 3000 px at 40x with 256 px patches: ceil(3000 / 256) = 12 per axis.
        let xs = tile_positions(3000, 256, 256);
        assert_eq!(xs.len(), 12);
        assert_eq!(*xs.last().unwrap(), 3000 - 256);
        assert_eq!(
            tile_boxes(3000, 3000, Magnification::X40, 1.0, 256)
                .unwrap()
                .len(),
            144
        );
        assert_eq!(
            tile_boxes(1024, 1024, Magnification::X10, 1.0, 256)
                .unwrap()
                .len(),
            1
        );
        assert_eq!(
            tile_boxes(512, 512, Magnification::X40, 0.5, 256)
                .unwrap()
                .len(),
            9
        );
        assert!(matches!(
            tile_boxes(1024, 1024, Magnification::X5, 1.0, 256),
            Err(OmniError::ImageTooSmall { side: 2048, .. })
        ));
        assert!(tile_boxes(1024, 1024, Magnification::X40, 0.0, 256).is_err());
    }

    #[test]
    fn tiling_covers_every_pixel() {
        for &(len, side, step) in &[(100, 16, 16), (100, 16, 7), (64, 64, 64), (65, 64, 32)] {
            let pos = tile_positions(len, side, step);
            let mut covered = vec![false; len];
            for p in pos {
                assert!(p + side <= len);
                covered[p..p + side].iter_mut().for_each(|c| *c = true);
            }
            assert!(covered.iter().all(|&c| c), "{len} {side} {step}");
        }
    }

    #[test]
    fn tile_image_downsamples_by_block_average() {
        let img = Array3::from_shape_fn((3, 16, 16), |(c, y, x)| (c * 100 + y * 16 + x) as f32);
        let patches = tile_image(&img, "a", Magnification::X10, 1.0, 4, Exec::Sequential).unwrap();
        assert_eq!(patches.len(), 1);
        let p = &patches[0];
        assert_eq!(
            p.bbox,
            BBox {
                x: 0,
                y: 0,
                side: 16
            }
        );
        // block (0,0) spans rows 0..4, cols 0..4: mean = 1.5·16 + 1.5
        assert!((p.pixels[[0, 0, 0]] - 25.5).abs() < 1e-4);
        assert!((p.pixels[[1, 0, 0]] - 125.5).abs() < 1e-4);
    }

    #[test]
    fn rescale_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_mask(&mut rng, 16, 16);
        let up = rescale_mask(&m, Magnification::X10, Magnification::X40);
        assert_eq!(up.dim(), (64, 64));
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(up[[y, x]], m[[y / 4, x / 4]]);
            }
        }
        assert_eq!(rescale_mask(&m, Magnification::X40, Magnification::X40), m);
        let back = rescale_mask(
            &rescale_mask(&m, Magnification::X5, Magnification::X40),
            Magnification::X40,
            Magnification::X5,
        );
        assert_eq!(back, m);
    }

    #[test]
    fn aggregation_examples() {
        let full = Array2::from_elem((4, 4), true);
        let c = aggregate_predictions(
            &[(
                BBox {
                    x: 0,
                    y: 0,
                    side: 16,
                },
                Magnification::X10,
                &full,
            )],
            (16, 16),
        )
        .unwrap();
        assert!(c.iter().all(|&v| v));

        let a = Array2::from_elem((2, 2), true);
        let c = aggregate_predictions(
            &[
                (
                    BBox {
                        x: 0,
                        y: 0,
                        side: 2,
                    },
                    Magnification::X40,
                    &a,
                ),
                (
                    BBox {
                        x: 4,
                        y: 4,
                        side: 2,
                    },
                    Magnification::X40,
                    &a,
                ),
            ],
            (6, 6),
        )
        .unwrap();
        assert_eq!(c.iter().filter(|&&v| v).count(), 8);
        assert!(c[[0, 0]] && c[[5, 5]] && !c[[3, 3]]);

        assert!(aggregate_predictions(
            &[(
                BBox {
                    x: 5,
                    y: 0,
                    side: 2
                },
                Magnification::X40,
                &a
            )],
            (6, 6)
        )
        .is_err());
    }

    #[test]
    fn aggregation_matches_per_pixel_or() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let (h, w) = (32, 32);
            let patches: Vec<(BBox, Mask)> = (0..5)
                .map(|_| {
                    let side = 16;
                    let b = BBox {
                        x: rng.random_range(0..=w - side),
                        y: rng.random_range(0..=h - side),
                        side,
                    };
                    (b, random_mask(&mut rng, 8, 8))
                })
                .collect();
            let refs: Vec<_> = patches
                .iter()
                .map(|(b, m)| (*b, Magnification::X20, m))
                .collect();
            let got = aggregate_predictions(&refs, (h, w)).unwrap();
            for y in 0..h {
                for x in 0..w {
                    let want = patches.iter().any(|(b, m)| {
                        y >= b.y
                            && y < b.y + b.side
                            && x >= b.x
                            && x < b.x + b.side
                            && m[[(y - b.y) / 2, (x - b.x) / 2]]
                    });
                    assert_eq!(got[[y, x]], want);
                }
            }
        }
    }

    fn record(bbox: BBox, mag: Magnification, px: usize) -> PatchRecord {
        PatchRecord {
            image_id: "img".into(),
            bbox,
            magnification: mag,
            pixels: Array3::zeros((3, px, px)),
            label: None,
            label_kind: LabelKind::Supervised,
            tissue: Some(TissueClass::Pt),
        }
    }

    #[test]
    fn match_select_examples() {
        let mut canv = BTreeMap::new();
        canv.insert(TissueClass::Ptc, Array2::from_elem((64, 64), true));
        canv.insert(TissueClass::Dt, Array2::from_elem((64, 64), false));
        let rec = record(
            BBox {
                x: 16,
                y: 8,
                side: 32,
            },
            Magnification::X10,
            8,
        );
        let out = match_select(&rec, &canv, &[TissueClass::Ptc, TissueClass::Dt]).unwrap();
        assert!(out[0].1.iter().all(|&v| v));
        assert!(out[1].1.iter().all(|&v| !v));
        assert_eq!(out[0].1.dim(), (8, 8));
        assert!(matches!(
            match_select(&rec, &canv, &[TissueClass::Cap]),
            Err(OmniError::MissingCanvas(_))
        ));

        // rectangle canvas vs brute-force intersection at 40x
        let mut rect = Array2::from_elem((64, 64), false);
        rect.slice_mut(s![10..30, 20..50]).fill(true);
        canv.insert(TissueClass::Ves, rect.clone());
        let rec = record(
            BBox {
                x: 8,
                y: 4,
                side: 32,
            },
            Magnification::X40,
            32,
        );
        let out = match_select(&rec, &canv, &[TissueClass::Ves]).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                let (gy, gx) = (y + 4, x + 8);
                let want = (10..30).contains(&gy) && (20..50).contains(&gx);
                assert_eq!(out[0].1[[y, x]], want);
            }
        }
    }

    #[test]
    fn match_select_is_translation_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let canvas = random_mask(&mut rng, 64, 64);
        let mut canv = BTreeMap::new();
        canv.insert(TissueClass::Pt, canvas);
        let a = match_select(
            &record(
                BBox {
                    x: 0,
                    y: 0,
                    side: 32,
                },
                Magnification::X20,
                16,
            ),
            &canv,
            &[TissueClass::Pt],
        )
        .unwrap();
        let b = match_select(
            &record(
                BBox {
                    x: 4,
                    y: 8,
                    side: 32,
                },
                Magnification::X20,
                16,
            ),
            &canv,
            &[TissueClass::Pt],
        )
        .unwrap();
        // shift by (4, 8) in 40x space is (2, 4) patch pixels
        for y in 0..12 {
            for x in 0..14 {
                assert_eq!(b[0].1[[y, x]], a[0].1[[y + 4, x + 2]]);
            }
        }
    }

    #[test]
    fn ncc_fallback_finds_the_source_location() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = Array3::from_shape_fn((3, 64, 64), |_| rng.random_range(0.0f32..1.0));
        let truth = BBox {
            x: 24,
            y: 16,
            side: 16,
        };
        let patch = extract_patch(&img, truth, 8).unwrap();
        let (found, score) =
            locate_by_ncc(&patch, Magnification::X20, &img, 8, Exec::Sequential).unwrap();
        assert_eq!(found, truth);
        assert!(score > 0.999);
    }

    #[test]
    fn spot_conversion_and_percentages() {
        assert_eq!(spot_diameter_px(Magnification::X20), 110.0);
        assert_eq!(spot_diameter_px(Magnification::X40), 220.0);
        let full = Array2::from_elem((200, 200), true);
        let empty = Array2::from_elem((200, 200), false);
        assert_eq!(spot_percentage(&full, (100.0, 100.0), 55.0), (100.0, false));
        assert_eq!(spot_percentage(&empty, (100.0, 100.0), 55.0), (0.0, false));

        let half = Array2::from_shape_fn((200, 200), |(_, x)| x < 100);
        let (p, _) = spot_percentage(&half, (100.0, 100.0), 55.0);
        let (mut inside, mut fg) = (0, 0);
        for y in 0..200i64 {
            for x in 0..200i64 {
                let d2 = ((x - 100) * (x - 100) + (y - 100) * (y - 100)) as f64;
                if d2 <= 55.0 * 55.0 {
                    inside += 1;
                    if x < 100 {
                        fg += 1;
                    }
                }
            }
        }
        assert_eq!(p, 100.0 * fg as f64 / inside as f64);
        assert!((p - 50.0).abs() < 1.0);

        let (_, clipped) = spot_percentage(&full, (10.0, 10.0), 55.0);
        assert!(clipped);
    }

    #[test]
    fn composite_priority() {
        let mut c = BTreeMap::new();
        c.insert(TissueClass::Cap, Array2::from_elem((2, 2), true));
        c.insert(
            TissueClass::Tuft,
            Array2::from_shape_fn((2, 2), |(y, _)| y == 0),
        );
        c.insert(
            TissueClass::Ptc,
            Array2::from_shape_fn((2, 2), |(y, x)| y == 0 && x == 0),
        );
        let out = default_composite(&c).unwrap();
        assert_eq!(out[[0, 0]], TissueClass::Ptc.index() as u8 + 1);
        assert_eq!(out[[0, 1]], TissueClass::Tuft.index() as u8 + 1);
        assert_eq!(out[[1, 1]], TissueClass::Cap.index() as u8 + 1);
    }
}
