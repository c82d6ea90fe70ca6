//! Toy pathology generator: colour-coded tissue shapes spanning two orders of
//! magnitude in size, with dense truth and a partial-label manifest.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{OmniError, Result};
use crate::io;
use crate::par::{self, Exec};
use crate::pyramid::Mask;
use crate::task::{class_order, scale_order, TissueClass};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeFamily {
    pub count: usize,
    pub radius_min: f64,
    pub radius_max: f64,
}

impl ShapeFamily {
    fn mean_radius(&self) -> f64 {
        0.5 * (self.radius_min + self.radius_max)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// One labelled class per image, assigned round-robin.
    #[default]
    Partial,
    Dense,
}

/// Radii are in 40x pixels. TUFT has no family of its own: each CAP disk
/// carries a concentric tuft at `tuft_ratio` of its radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub image_side_40x: usize,
    pub cap: ShapeFamily,
    pub tuft_ratio: f64,
    pub pt: ShapeFamily,
    /// Outer radius; the lumen has `dt_lumen_ratio` of it.
    pub dt: ShapeFamily,
    pub dt_lumen_ratio: f64,
    /// Semi-major axis; semi-minor is `ves_aspect` of it.
    pub ves: ShapeFamily,
    pub ves_aspect: f64,
    pub ptc: ShapeFamily,
    /// Standard deviation of per-pixel Gaussian noise.
    pub noise: f32,
    /// Half-range of the per-image, per-channel stain gain.
    pub stain_jitter: f32,
    pub label_mode: LabelMode,
    pub max_attempts: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            image_side_40x: 1024,
            cap: ShapeFamily {
                count: 2,
                radius_min: 120.0,
                radius_max: 180.0,
            },
            tuft_ratio: 0.8,
            pt: ShapeFamily {
                count: 14,
                radius_min: 30.0,
                radius_max: 50.0,
            },
            dt: ShapeFamily {
                count: 10,
                radius_min: 28.0,
                radius_max: 40.0,
            },
            dt_lumen_ratio: 0.5,
            ves: ShapeFamily {
                count: 4,
                radius_min: 45.0,
                radius_max: 70.0,
            },
            ves_aspect: 0.35,
            ptc: ShapeFamily {
                count: 250,
                radius_min: 3.0,
                radius_max: 6.0,
            },
            noise: 0.03,
            stain_jitter: 0.04,
            label_mode: LabelMode::Partial,
            max_attempts: 2000,
        }
    }
}

impl SynthSpec {
    pub fn family(&self, t: TissueClass) -> Option<&ShapeFamily> {
        match t {
            TissueClass::Cap => Some(&self.cap),
            TissueClass::Tuft => None,
            TissueClass::Pt => Some(&self.pt),
            TissueClass::Dt => Some(&self.dt),
            TissueClass::Ves => Some(&self.ves),
            TissueClass::Ptc => Some(&self.ptc),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fams = [&self.cap, &self.pt, &self.dt, &self.ves, &self.ptc];
        if fams
            .iter()
            .any(|f| !(f.radius_min > 0.0 && f.radius_min <= f.radius_max))
        {
            return Err(OmniError::Config(
                "shape radii must satisfy 0 < min <= max".into(),
            ));
        }
        if !(self.ptc.radius_max < self.pt.radius_min && self.pt.radius_max < self.cap.radius_min) {
            return Err(OmniError::Config("radii must order PTC < PT < CAP".into()));
        }
        for (name, r) in [
            ("tuft_ratio", self.tuft_ratio),
            ("dt_lumen_ratio", self.dt_lumen_ratio),
            ("ves_aspect", self.ves_aspect),
        ] {
            if !(r > 0.0 && r < 1.0) {
                return Err(OmniError::Config(format!("{name} must lie in (0, 1)")));
            }
        }
        if self.image_side_40x == 0 || 2.0 * self.cap.radius_max >= self.image_side_40x as f64 {
            return Err(OmniError::Config(
                "image too small for the largest shape".into(),
            ));
        }
        Ok(())
    }

    /// Mean CAP area over mean PTC area.
    pub fn cap_ptc_area_ratio(&self) -> f64 {
        (self.cap.mean_radius() / self.ptc.mean_radius()).powi(2)
    }
}

pub const BACKGROUND_RGB: [f32; 3] = [0.94, 0.86, 0.90];

/// Base colour of each rendered structure.
pub fn class_rgb(t: TissueClass) -> [f32; 3] {
    match t {
        TissueClass::Cap => [0.76, 0.50, 0.74],
        TissueClass::Tuft => [0.42, 0.18, 0.55],
        TissueClass::Pt => [0.88, 0.52, 0.50],
        TissueClass::Dt => [0.50, 0.52, 0.86],
        TissueClass::Ves => [0.80, 0.24, 0.20],
        TissueClass::Ptc => [0.25, 0.10, 0.22],
    }
}

pub const DT_LUMEN_RGB: [f32; 3] = [0.80, 0.84, 0.97];

#[derive(Clone, Copy, Debug, PartialEq)]
enum Shape {
    Disk {
        cy: f64,
        cx: f64,
        r: f64,
    },
    Ellipse {
        cy: f64,
        cx: f64,
        a: f64,
        b: f64,
        theta: f64,
    },
}

impl Shape {
    fn center(&self) -> (f64, f64) {
        match *self {
            Shape::Disk { cy, cx, .. } | Shape::Ellipse { cy, cx, .. } => (cy, cx),
        }
    }

    fn bound(&self) -> f64 {
        match *self {
            Shape::Disk { r, .. } => r,
            Shape::Ellipse { a, .. } => a,
        }
    }

    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Disk { cy, cx, r } => (y - cy).powi(2) + (x - cx).powi(2) <= r * r,
            Shape::Ellipse {
                cy,
                cx,
                a,
                b,
                theta,
            } => {
                let (dy, dx) = (y - cy, x - cx);
                let (s, c) = theta.sin_cos();
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthImage {
    pub id: String,
    /// `3×S×S` at 40x, quantised to 8-bit levels.
    pub image: Array3<f32>,
    pub masks: BTreeMap<TissueClass, Mask>,
    /// Classes whose masks are released as labels.
    pub labeled: Vec<TissueClass>,
}

impl SynthImage {
    pub fn labels(&self) -> BTreeMap<TissueClass, Mask> {
        self.labeled
            .iter()
            .map(|t| (*t, self.masks[t].clone()))
            .collect()
    }
}

fn place(
    spec: &SynthSpec,
    rng: &mut ChaCha8Rng,
    placed: &mut Vec<Shape>,
    t: TissueClass,
    fam: &ShapeFamily,
) -> Result<Vec<Shape>> {
    let side = spec.image_side_40x as f64;
    let margin = 3.0;
    let mut out = Vec::with_capacity(fam.count);
    for _ in 0..fam.count {
        let mut ok = None;
        for _ in 0..spec.max_attempts {
            let r = if fam.radius_max > fam.radius_min {
                rng.random_range(fam.radius_min..=fam.radius_max)
            } else {
                fam.radius_min
            };
            let lo = r + 1.0;
            let hi = side - r - 1.0;
            if hi <= lo {
                break;
            }
            let (cy, cx) = (rng.random_range(lo..hi), rng.random_range(lo..hi));
            let shape = if t == TissueClass::Ves {
                Shape::Ellipse {
                    cy,
                    cx,
                    a: r,
                    b: r * spec.ves_aspect,
                    theta: rng.random_range(0.0..std::f64::consts::PI),
                }
            } else {
                Shape::Disk { cy, cx, r }
            };
            let clear = placed.iter().all(|o| {
                let (oy, ox) = o.center();
                ((oy - cy).powi(2) + (ox - cx).powi(2)).sqrt() > o.bound() + r + margin
            });
            if clear {
                ok = Some(shape);
                break;
            }
        }
        let shape = ok.ok_or_else(|| OmniError::Placement {
            class: t.to_string(),
            attempts: spec.max_attempts,
        })?;
        placed.push(shape);
        out.push(shape);
    }
    Ok(out)
}

fn raster(side: usize, shapes: &[Shape]) -> Mask {
    let mut m = Array2::from_elem((side, side), false);
    for s in shapes {
        let (cy, cx) = s.center();
        let b = s.bound();
        let y0 = (cy - b).floor().max(0.0) as usize;
        let y1 = ((cy + b).ceil() as usize).min(side - 1);
        let x0 = (cx - b).floor().max(0.0) as usize;
        let x1 = ((cx + b).ceil() as usize).min(side - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if s.contains(y as f64, x as f64) {
                    m[[y, x]] = true;
                }
            }
        }
    }
    m
}

/// Render image `index` of a dataset. Deterministic in `(spec, seed, index)`.
pub fn generate_image(spec: &SynthSpec, seed: u64, index: usize) -> Result<SynthImage> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let side = spec.image_side_40x;
    let mut placed = Vec::new();
    // largest first so rejection sampling stays cheap
    let mut shapes: BTreeMap<TissueClass, Vec<Shape>> = BTreeMap::new();
    for t in [
        TissueClass::Cap,
        TissueClass::Ves,
        TissueClass::Pt,
        TissueClass::Dt,
        TissueClass::Ptc,
    ] {
        let fam = *spec.family(t).expect("placed classes have a family");
        shapes.insert(t, place(spec, &mut rng, &mut placed, t, &fam)?);
    }
    let shrink = |v: &[Shape], k: f64| -> Vec<Shape> {
        v.iter()
            .map(|s| match *s {
                Shape::Disk { cy, cx, r } => Shape::Disk { cy, cx, r: r * k },
                e => e,
            })
            .collect()
    };
    let tuft = shrink(&shapes[&TissueClass::Cap], spec.tuft_ratio);
    let lumen = raster(
        side,
        &shrink(&shapes[&TissueClass::Dt], spec.dt_lumen_ratio),
    );

    let mut masks = BTreeMap::new();
    for (t, v) in &shapes {
        masks.insert(*t, raster(side, v));
    }
    masks.insert(TissueClass::Tuft, raster(side, &tuft));

    let gains: Vec<f32> = (0..3)
        .map(|_| {
            if spec.stain_jitter > 0.0 {
                1.0 + rng.random_range(-spec.stain_jitter..spec.stain_jitter)
            } else {
                1.0
            }
        })
        .collect();
    let mut image = Array3::zeros((3, side, side));
    // paint order: later entries win
    let layers: [(&Mask, [f32; 3]); 6] = [
        (&masks[&TissueClass::Cap], class_rgb(TissueClass::Cap)),
        (&masks[&TissueClass::Tuft], class_rgb(TissueClass::Tuft)),
        (&masks[&TissueClass::Pt], class_rgb(TissueClass::Pt)),
        (&masks[&TissueClass::Dt], class_rgb(TissueClass::Dt)),
        (&lumen, DT_LUMEN_RGB),
        (&masks[&TissueClass::Ves], class_rgb(TissueClass::Ves)),
    ];
    let ptc = &masks[&TissueClass::Ptc];
    let noise = Normal::new(0.0f32, spec.noise.max(0.0)).expect("finite noise");
    for y in 0..side {
        for x in 0..side {
            let mut rgb = BACKGROUND_RGB;
            for (m, c) in &layers {
                if m[[y, x]] {
                    rgb = *c;
                }
            }
            if ptc[[y, x]] {
                rgb = class_rgb(TissueClass::Ptc);
            }
            for c in 0..3 {
                let n = if spec.noise > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                let v = (rgb[c] * gains[c] + n).clamp(0.0, 1.0);
                image[[c, y, x]] = io::quantize(v) as f32 / 255.0;
            }
        }
    }
    let labeled = match spec.label_mode {
        LabelMode::Partial => vec![TissueClass::ALL[index % TissueClass::COUNT]],
        LabelMode::Dense => TissueClass::ALL.to_vec(),
    };
    Ok(SynthImage {
        id: format!("img_{index:03}"),
        image,
        masks,
        labeled,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    pub fn partition_of(&self, id: &str) -> Option<&'static str> {
        if self.train.iter().any(|i| i == id) {
            Some("train")
        } else if self.val.iter().any(|i| i == id) {
            Some("val")
        } else if self.test.iter().any(|i| i == id) {
            Some("test")
        } else {
            None
        }
    }
}

/// Image-level split in `ratios` proportions. Images are shuffled, then
/// ordered by how many earlier images share their first labelled class, so
/// every class reaches the training partition before any repeats.
pub fn split_dataset(
    ids: &[(String, TissueClass)],
    ratios: (u32, u32, u32),
    seed: u64,
) -> Result<Split> {
    let (a, b, c) = ratios;
    if a == 0 || b == 0 || c == 0 {
        return Err(OmniError::Config("split ratios must be positive".into()));
    }
    let n = ids.len();
    let total = (a + b + c) as f64;
    if n < 3 {
        return Err(OmniError::EmptyDataset(format!(
            "{n} images cannot fill a {a}:{b}:{c} split"
        )));
    }
    let n_val = ((n as f64 * b as f64 / total).round() as usize).max(1);
    let n_train = ((n as f64 * a as f64 / total).round() as usize).clamp(1, n - n_val - 1);
    if n_train + n_val >= n {
        return Err(OmniError::EmptyDataset(format!(
            "{n} images cannot fill a {a}:{b}:{c} split"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let mut seen: BTreeMap<TissueClass, usize> = BTreeMap::new();
    let mut ranked: Vec<(usize, usize)> = order
        .iter()
        .map(|&i| {
            let k = seen.entry(ids[i].1).or_insert(0);
            *k += 1;
            (*k - 1, i)
        })
        .collect();
    ranked.sort_by_key(|&(rank, _)| rank);
    let names: Vec<String> = ranked.iter().map(|&(_, i)| ids[i].0.clone()).collect();
    Ok(Split {
        train: names[..n_train].to_vec(),
        val: names[n_train..n_train + n_val].to_vec(),
        test: names[n_train + n_val..].to_vec(),
    })
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub spec: SynthSpec,
    pub seed: u64,
    pub images: Vec<SynthImage>,
    pub split: Split,
}

impl SynthDataset {
    pub fn get(&self, id: &str) -> Option<&SynthImage> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn partition(&self, ids: &[String]) -> Vec<&SynthImage> {
        ids.iter().filter_map(|id| self.get(id)).collect()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            seed: self.seed,
            class_order: class_order().iter().map(|s| s.to_string()).collect(),
            scale_order: scale_order().iter().map(|s| s.to_string()).collect(),
            spec: self.spec.clone(),
            images: self
                .images
                .iter()
                .map(|img| ManifestEntry {
                    id: img.id.clone(),
                    image: format!("images/{}.png", img.id),
                    masks: img
                        .masks
                        .keys()
                        .map(|t| (*t, format!("masks/{}_{}.png", img.id, t)))
                        .collect(),
                    labeled: img.labeled.clone(),
                    split: self
                        .split
                        .partition_of(&img.id)
                        .unwrap_or("unused")
                        .to_string(),
                })
                .collect(),
            split: self.split.clone(),
        }
    }

    /// Writes `images/`, `masks/` and `manifest.json` under `dir`.
    pub fn write(&self, dir: &Path, exec: Exec) -> Result<()> {
        let manifest = self.manifest();
        par::map(exec, &self.images, |img| -> Result<()> {
            io::write_rgb_png(
                &dir.join("images").join(format!("{}.png", img.id)),
                &img.image,
            )?;
            for (t, m) in &img.masks {
                io::write_mask_png(&dir.join("masks").join(format!("{}_{}.png", img.id, t)), m)?;
            }
            Ok(())
        })
        .into_iter()
        .collect::<Result<()>>()?;
        let json =
            serde_json::to_string_pretty(&manifest).map_err(|e| OmniError::Parse(e.to_string()))?;
        io::write_string(&dir.join("manifest.json"), &json)
    }

    pub fn load(dir: &Path, exec: Exec) -> Result<Self> {
        let manifest: Manifest =
            serde_json::from_str(&io::read_string(&dir.join("manifest.json"))?)
                .map_err(|e| OmniError::Parse(format!("manifest: {e}")))?;
        manifest.check_orders()?;
        let images = par::map(exec, &manifest.images, |e| -> Result<SynthImage> {
            let image = io::read_rgb_png(&dir.join(&e.image))?;
            let masks = e
                .masks
                .iter()
                .map(|(t, p)| Ok((*t, io::read_mask_png(&dir.join(p))?)))
                .collect::<Result<_>>()?;
            Ok(SynthImage {
                id: e.id.clone(),
                image,
                masks,
                labeled: e.labeled.clone(),
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(SynthDataset {
            spec: manifest.spec,
            seed: manifest.seed,
            images,
            split: manifest.split,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: String,
    pub masks: BTreeMap<TissueClass, String>,
    pub labeled: Vec<TissueClass>,
    pub split: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub class_order: Vec<String>,
    pub scale_order: Vec<String>,
    pub spec: SynthSpec,
    pub images: Vec<ManifestEntry>,
    pub split: Split,
}

impl Manifest {
    pub fn check_orders(&self) -> Result<()> {
        let co: Vec<String> = class_order().iter().map(|s| s.to_string()).collect();
        let so: Vec<String> = scale_order().iter().map(|s| s.to_string()).collect();
        if self.class_order != co || self.scale_order != so {
            return Err(OmniError::Parse(format!(
                "class/scale order {:?}/{:?} does not match {:?}/{:?}",
                self.class_order, self.scale_order, co, so
            )));
        }
        Ok(())
    }
}

/// Generate `n_images`, split them 6:1:3 and keep everything in memory.
pub fn generate_dataset(
    spec: &SynthSpec,
    n_images: usize,
    seed: u64,
    exec: Exec,
) -> Result<SynthDataset> {
    if n_images == 0 {
        return Err(OmniError::EmptyDataset(
            "n_images must be at least 1".into(),
        ));
    }
    spec.validate()?;
    let images = par::map_range(exec, n_images, |i| generate_image(spec, seed, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<(String, TissueClass)> = images
        .iter()
        .map(|i| (i.id.clone(), i.labeled[0]))
        .collect();
    let split = if n_images >= 3 {
        split_dataset(&ids, (6, 1, 3), seed)?
    } else {
        Split {
            train: ids.iter().map(|(i, _)| i.clone()).collect(),
            ..Split::default()
        }
    };
    Ok(SynthDataset {
        spec: spec.clone(),
        seed,
        images,
        split,
    })
}
