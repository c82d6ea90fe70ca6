use std::collections::BTreeMap;

use ndarray::Array2;
use omniseg::augment::D4;
use omniseg::fusion::{slice_head_params, triple_outer_fuse};
use omniseg::metrics::{dice_pct, hausdorff_um, msd_um, pearson};
use omniseg::pyramid::{composite, default_composite, rescale_mask};
use omniseg::task::COMPOSITE_PRIORITY;
use omniseg::{Magnification, Mask, TissueClass};
use proptest::prelude::*;

fn mask(max: usize) -> impl Strategy<Value = Mask> {
    (1..=max, 1..=max).prop_flat_map(|(h, w)| {
        prop::collection::vec(any::<bool>(), h * w)
            .prop_map(move |v| Array2::from_shape_vec((h, w), v).unwrap())
    })
}

fn mask_pair(max: usize) -> impl Strategy<Value = (Mask, Mask)> {
    (1..=max, 1..=max).prop_flat_map(|(h, w)| {
        (
            prop::collection::vec(any::<bool>(), h * w),
            prop::collection::vec(any::<bool>(), h * w),
        )
            .prop_map(move |(a, b)| {
                (
                    Array2::from_shape_vec((h, w), a).unwrap(),
                    Array2::from_shape_vec((h, w), b).unwrap(),
                )
            })
    })
}

fn magnification() -> impl Strategy<Value = Magnification> {
    prop::sample::select(Magnification::ALL.to_vec())
}

proptest! {
    #[test]
    fn dice_is_symmetric_and_bounded((a, b) in mask_pair(12)) {
        let ab = dice_pct(&a, &b).unwrap();
        prop_assert_eq!(ab, dice_pct(&b, &a).unwrap());
        prop_assert!((0.0..=100.0).contains(&ab));
        prop_assert_eq!(dice_pct(&a, &a).unwrap(), 100.0);
    }

    #[test]
    fn surface_distances_are_symmetric_and_ordered((a, b) in mask_pair(12)) {
        if let (Ok(hd), Ok(msd)) = (hausdorff_um(&a, &b, 0.5), msd_um(&a, &b, 0.5)) {
            prop_assert!(hd >= msd - 1e-12);
            prop_assert!((hd - hausdorff_um(&b, &a, 0.5).unwrap()).abs() < 1e-12);
            prop_assert!((msd - msd_um(&b, &a, 0.5).unwrap()).abs() < 1e-12);
            prop_assert_eq!(hausdorff_um(&a, &a, 0.5).unwrap(), 0.0);
        }
    }

    #[test]
    fn rescaling_up_then_down_is_identity(m in mask(10), lo in magnification(), hi in magnification()) {
        let (lo, hi) = if lo.ratio_to_40x() >= hi.ratio_to_40x() { (lo, hi) } else { (hi, lo) };
        prop_assert_eq!(rescale_mask(&rescale_mask(&m, lo, hi), hi, lo), m);
    }

    #[test]
    fn dihedral_inverse_restores(m in mask(9), k in 0usize..8) {
        let g = D4::ALL[k];
        prop_assert_eq!(g.inverse().apply2(&g.apply2(&m)), m);
    }

    #[test]
    fn head_params_round_trip(v in prop::collection::vec(-10.0f64..10.0, 162)) {
        prop_assert_eq!(slice_head_params(&v).unwrap().to_vec(), v);
    }

    #[test]
    fn fusion_is_linear_in_each_factor(
        g in prop::collection::vec(-2.0f64..2.0, 256),
        t in prop::collection::vec(-2.0f64..2.0, 6),
        s in prop::collection::vec(-2.0f64..2.0, 64),
        k in -3.0f64..3.0,
    ) {
        let base = triple_outer_fuse(&g, &t, &s).unwrap();
        let scaled_t: Vec<f64> = t.iter().map(|v| v * k).collect();
        let scaled = triple_outer_fuse(&g, &scaled_t, &s).unwrap();
        prop_assert_eq!(base.len(), g.len() * t.len() * s.len());
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((a * k - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn pearson_is_bounded_and_affine_invariant(
        x in prop::collection::vec(-5.0f64..5.0, 3..30),
        a in 0.1f64..4.0,
        b in -3.0f64..3.0,
    ) {
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + (i % 3) as f64).collect();
        if let Ok(r) = pearson(&x, &y) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            let ay: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            prop_assert!((pearson(&x, &ay).unwrap() - r).abs() < 1e-9);
        }
    }

    #[test]
    fn composite_labels_follow_priority(masks in prop::collection::vec(mask(1), 6)) {
        let canvases: BTreeMap<TissueClass, Mask> = TissueClass::ALL.iter().copied().zip(masks).collect();
        let label = default_composite(&canvases).unwrap()[[0, 0]];
        let winner = COMPOSITE_PRIORITY.iter().find(|t| canvases[t][[0, 0]]);
        prop_assert_eq!(label, winner.map_or(0, |t| t.index() as u8 + 1));
        let reversed: Vec<TissueClass> = COMPOSITE_PRIORITY.iter().rev().copied().collect();
        let last = reversed.iter().find(|t| canvases[t][[0, 0]]);
        prop_assert_eq!(composite(&canvases, &reversed).unwrap()[[0, 0]], last.map_or(0, |t| t.index() as u8 + 1));
    }
}
