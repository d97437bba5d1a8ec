use proptest::prelude::*;

use synthdefect::augment::{
    augment_online_traced, elastic_transform, flip_h, flip_v, grid_distortion, rotate180, AugmentPolicy, ElasticParams,
    GridParams, Interp,
};
use synthdefect::image::{binarize, ImageBuf, MaskBuf, PairSample, Provenance};
use synthdefect::labelgen::{sample_trig_params, TrigBounds};
use synthdefect::metrics::{compute_metrics, confusion, evaluate_set, Aggregation, Confusion};
use synthdefect::SeededRng;

fn mask_strategy(w: usize, h: usize) -> impl Strategy<Value = MaskBuf> {
    prop::collection::vec(0u8..=1, w * h).prop_map(move |d| MaskBuf::new(w, h, d).unwrap())
}

fn pair_strategy(size: usize) -> impl Strategy<Value = PairSample> {
    (
        prop::collection::vec(0.0f64..=1.0, size * size),
        mask_strategy(size, size),
    )
        .prop_map(move |(img, mask)| {
            PairSample::new(ImageBuf::new(size, size, 1, img).unwrap(), mask, Provenance::Real).unwrap()
        })
}

fn swap(c: Confusion) -> Confusion {
    Confusion {
        tp: c.tp,
        fp: c.fn_,
        fn_: c.fp,
        tn: c.tn,
    }
}

proptest! {
    #[test]
    fn metric_identities(pred in mask_strategy(8, 8), gt in mask_strategy(8, 8)) {
        let c = confusion(&pred, &gt).unwrap();
        prop_assert_eq!(c.total(), 64);
        let m = compute_metrics(&c);
        for v in m.values() {
            prop_assert!(v.is_finite());
        }
        for v in [m.ppv, m.tpr, m.iou, m.acc, m.f1, m.f2] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((-1.0..=1.0).contains(&m.mcc));
        prop_assert!(m.iou <= m.f1 + 1e-12);
        if m.ppv + m.tpr > 0.0 {
            prop_assert!((m.f1 - 2.0 * m.ppv * m.tpr / (m.ppv + m.tpr)).abs() < 1e-12);
        }
        if c.tp + c.fp + c.fn_ > 0 {
            prop_assert!((m.f1 - 2.0 * m.iou / (1.0 + m.iou)).abs() < 1e-12);
        }
    }

    #[test]
    fn mcc_is_symmetric_and_complement_invariant(pred in mask_strategy(8, 8), gt in mask_strategy(8, 8)) {
        let c = confusion(&pred, &gt).unwrap();
        let m = compute_metrics(&c);
        prop_assert!((compute_metrics(&swap(c)).mcc - m.mcc).abs() < 1e-12);
        let inv = compute_metrics(&confusion(&pred.complement(), &gt.complement()).unwrap());
        prop_assert!((inv.mcc - m.mcc).abs() < 1e-12);
        prop_assert!((inv.acc - m.acc).abs() < 1e-12);
    }

    #[test]
    fn micro_aggregate_ignores_duplication(pred in mask_strategy(6, 6), gt in mask_strategy(6, 6)) {
        let once = evaluate_set(std::slice::from_ref(&pred), std::slice::from_ref(&gt), Aggregation::Micro).unwrap();
        let twice = evaluate_set(&[pred.clone(), pred], &[gt.clone(), gt], Aggregation::Micro).unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn binarize_is_idempotent(data in prop::collection::vec(0.0f64..=1.0, 49), t in 0.01f64..0.99) {
        let img = ImageBuf::new(7, 7, 1, data).unwrap();
        let once = binarize(&img, t).unwrap();
        prop_assert!(once.is_binary());
        prop_assert_eq!(binarize(&once.to_image(), t).unwrap(), once);
    }

    #[test]
    fn flips_and_rotation_are_involutions(pair in pair_strategy(9)) {
        prop_assert_eq!(&flip_h(&flip_h(&pair)), &pair);
        prop_assert_eq!(&flip_v(&flip_v(&pair)), &pair);
        prop_assert_eq!(&rotate180(&rotate180(&pair)), &pair);
        prop_assert_eq!(&flip_h(&flip_v(&pair)), &rotate180(&pair));
    }

    #[test]
    fn augmentation_preserves_shape_range_and_binarity(pair in pair_strategy(16), seed in any::<u64>()) {
        let policy = AugmentPolicy::scaled_to(16);
        let mut rng = SeededRng::new(seed);
        let (out, _) = augment_online_traced(&mut rng, &pair, &policy).unwrap();
        prop_assert_eq!(out.image().dims(), (16, 16));
        prop_assert!(out.mask().is_binary());
        prop_assert!(out.image().data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(out.provenance(), pair.provenance());
    }

    #[test]
    fn warps_keep_masks_binary(pair in pair_strategy(12), seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let e = elastic_transform(&mut rng, &pair, &ElasticParams { alpha_affine: 1.0, ..ElasticParams::default() }, Interp::Bilinear).unwrap();
        prop_assert!(e.mask().is_binary());
        let g = grid_distortion(&mut rng, &pair, &GridParams::default(), Interp::Bilinear).unwrap();
        prop_assert!(g.mask().is_binary());
    }

    #[test]
    fn sampled_parameters_stay_in_bounds(seed in any::<u64>()) {
        let bounds = TrigBounds::default();
        let mut rng = SeededRng::new(seed);
        for _ in 0..8 {
            prop_assert!(bounds.contains(&sample_trig_params(&mut rng, &bounds)));
        }
    }
}
