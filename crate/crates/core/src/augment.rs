//! Geometric (dihedral) and photometric augmentation.

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::loss::Alignment;

/// An element of the dihedral group of the square: an optional horizontal
/// flip followed by `rot` quarter turns counter-clockwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct D4 {
    pub rot: u8,
    pub flip: bool,
}

impl D4 {
    pub const IDENTITY: D4 = D4 {
        rot: 0,
        flip: false,
    };

    pub const ALL: [D4; 8] = [
        D4 {
            rot: 0,
            flip: false,
        },
        D4 {
            rot: 1,
            flip: false,
        },
        D4 {
            rot: 2,
            flip: false,
        },
        D4 {
            rot: 3,
            flip: false,
        },
        D4 { rot: 0, flip: true },
        D4 { rot: 1, flip: true },
        D4 { rot: 2, flip: true },
        D4 { rot: 3, flip: true },
    ];

    pub fn random<R: Rng>(rng: &mut R) -> D4 {
        D4::ALL[rng.random_range(0..8)]
    }

    pub fn inverse(self) -> D4 {
        if self.flip {
            // F·R^k·F = R^-k, so every reflection is its own inverse
            self
        } else {
            D4 {
                rot: (4 - self.rot) % 4,
                flip: false,
            }
        }
    }

    /// Odd quarter turns swap height and width.
    pub fn preserves_shape(self) -> bool {
        self.rot.is_multiple_of(2)
    }

    pub fn apply3<T: Clone>(self, x: &Array3<T>) -> Array3<T> {
        let mut v: ArrayView3<T> = x.view();
        if self.flip {
            v.invert_axis(Axis(2));
        }
        for _ in 0..self.rot {
            v = v.permuted_axes([0, 2, 1]);
            v.invert_axis(Axis(1));
        }
        v.as_standard_layout().into_owned()
    }

    pub fn apply2<T: Clone>(self, x: &Array2<T>) -> Array2<T> {
        let mut v: ArrayView2<T> = x.view();
        if self.flip {
            v.invert_axis(Axis(1));
        }
        for _ in 0..self.rot {
            v = v.reversed_axes();
            v.invert_axis(Axis(0));
        }
        v.as_standard_layout().into_owned()
    }
}

/// Stain-like photometric jitter. Touches pixels only, never labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorJitter {
    pub brightness: f32,
    pub contrast: f32,
    pub channel_gain: f32,
}

impl Default for ColorJitter {
    fn default() -> Self {
        ColorJitter {
            brightness: 0.05,
            contrast: 0.1,
            channel_gain: 0.05,
        }
    }
}

impl ColorJitter {
    pub const NONE: ColorJitter = ColorJitter {
        brightness: 0.0,
        contrast: 0.0,
        channel_gain: 0.0,
    };

    pub fn apply<R: Rng>(&self, x: &mut Array3<f32>, rng: &mut R) {
        if *self == ColorJitter::NONE {
            return;
        }
        let mut sym = |a: f32| {
            if a > 0.0 {
                rng.random_range(-a..a)
            } else {
                0.0
            }
        };
        let b = sym(self.brightness);
        let c = 1.0 + sym(self.contrast);
        let gains: Vec<f32> = (0..x.dim().0)
            .map(|_| 1.0 + sym(self.channel_gain))
            .collect();
        let mean = x.mean().unwrap_or(0.0);
        for (ch, mut plane) in x.axis_iter_mut(Axis(0)).enumerate() {
            plane.mapv_inplace(|v| (((v - mean) * c + mean) * gains[ch] + b).clamp(0.0, 1.0));
        }
    }
}

/// Two augmented views of one patch and the transforms that produced them.
#[derive(Clone, Debug)]
pub struct AugmentationPair {
    pub view_a: Array3<f32>,
    pub view_b: Array3<f32>,
    pub align: Alignment,
}

pub fn augment_pair<R: Rng>(
    x: &Array3<f32>,
    jitter: &ColorJitter,
    rng: &mut R,
) -> AugmentationPair {
    let (a, b) = (D4::random(rng), D4::random(rng));
    let mut view_a = a.apply3(x);
    let mut view_b = b.apply3(x);
    jitter.apply(&mut view_a, rng);
    jitter.apply(&mut view_b, rng);
    AugmentationPair {
        view_a,
        view_b,
        align: Alignment { a, b },
    }
}

/// Apply the same random dihedral transform to a patch and its label.
pub fn augment_labeled<R: Rng>(
    x: &Array3<f32>,
    label: &Array2<bool>,
    jitter: &ColorJitter,
    rng: &mut R,
) -> (Array3<f32>, Array2<bool>) {
    let t = D4::random(rng);
    let mut xa = t.apply3(x);
    jitter.apply(&mut xa, rng);
    (xa, t.apply2(label))
}

/// Channel-first view of a 2-D slice; used to reuse `apply3` on masks.
pub fn as_single_channel<T: Clone>(m: &Array2<T>) -> Array3<T> {
    m.clone().insert_axis(Axis(0))
}

pub fn center_crop<T: Clone>(x: &Array3<T>, side: usize) -> Array3<T> {
    let (_, h, w) = x.dim();
    let (y0, x0) = ((h - side) / 2, (w - side) / 2);
    x.slice(s![.., y0..y0 + side, x0..x0 + side]).to_owned()
}
