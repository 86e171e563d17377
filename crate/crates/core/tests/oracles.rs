mod common;

use proptest::prelude::*;

use sjbench::faithfulness::{deletion_curve, insertion_curve, BaselineKind, CurveConfig, Granularity};
use sjbench::harness::synthetic::{random_image, random_map};
use sjbench::image::{ColorSpace, ImageTensor};
use sjbench::model::{RegionMeanModel, Scorer};
use sjbench::road::{impute, ImputationConfig, PixelMask};
use sjbench::saliency::{postprocess, rise_mask, weighted_mask_sum, RiseConfig};
use sjbench::sanity::{point_biserial, spearman};

#[test]
fn rise_exhaustive_masks_single_pixel_region() {
    // Every binary 4x4 mask, each bit one pixel: the weighted sum is
    // P(score | pixel kept), which is 1 on the region pixel and 1/2 elsewhere.
    let img = ImageTensor::filled(4, 4, 3, 1.0, ColorSpace::Raw01).unwrap();
    for target_pixel in [(0, 0), (1, 2), (3, 3)] {
        let model = RegionMeanModel::new(vec![target_pixel], 2).unwrap();
        let scorer = Scorer::new(&model).with_batch_size(4096);
        let masks = (0u32..1 << 16).map(|bits| (0..16).map(|i| ((bits >> i) & 1) as f32).collect());
        let raw = weighted_mask_sum(&scorer, &img, masks, (1u32 << 16) as f64 * 0.5, 0).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let expected = if (r, c) == target_pixel { 1.0 } else { 0.5 };
                assert_eq!(raw.get(r, c), expected);
            }
        }
        let map = postprocess(&raw).unwrap();
        let peak = map.data().iter().position(|v| *v == 1.0).unwrap();
        assert_eq!((peak / 4, peak % 4), target_pixel);
    }
}

#[test]
fn rise_mask_statistics() {
    let cfg = RiseConfig { n_masks: 2000, grid_h: 7, grid_w: 7, keep_prob: 0.5, seed: 3 };
    let mut mean = 0.0f64;
    for i in 0..cfg.n_masks {
        let m = rise_mask(&cfg, i, 32, 32);
        assert!(m.iter().all(|v| (0.0..=1.0).contains(v)));
        mean += m.iter().map(|v| *v as f64).sum::<f64>() / m.len() as f64;
    }
    mean /= cfg.n_masks as f64;
    assert!((mean - 0.5).abs() < 0.02, "{mean}");
    assert_eq!(rise_mask(&cfg, 17, 32, 32), rise_mask(&cfg, 17, 32, 32));
    assert_ne!(rise_mask(&cfg, 17, 32, 32), rise_mask(&cfg, 18, 32, 32));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn curves_match_brute_force(
        h in 2usize..7, w in 2usize..7, seed in any::<u64>(), k in 1usize..6,
        step_inv in 1usize..5,
    ) {
        let n = h * w;
        let mut cells: Vec<usize> = (0..k.min(n)).map(|i| (i * 7 + seed as usize) % n).collect();
        cells.sort_unstable();
        cells.dedup();
        let region: Vec<(usize, usize)> = cells.into_iter().map(|p| (p / w, p % w)).collect();
        let model = RegionMeanModel::new(region.clone(), 2).unwrap();
        let scorer = Scorer::new(&model).with_batch_size(5);
        let img = random_image(h, w, seed);
        let map = random_map(h, w, seed ^ 0x55);
        let cfg = CurveConfig::new(BaselineKind::DatasetMean, Granularity::Pixel)
            .with_step(1.0 / (n as f32 / step_inv as f32));
        let order = common::descending_order(map.data());
        let zeros = vec![0.0f32; n * 3];
        let ins = insertion_curve(&scorer, &img, &map, &cfg, 0).unwrap();
        let del = deletion_curve(&scorer, &img, &map, &cfg, 0).unwrap();
        let bi = common::brute_curve(&zeros, img.data(), &order, w, 3, &region);
        let bd = common::brute_curve(img.data(), &zeros, &order, w, 3, &region);
        for (curve, brute) in [(&ins, &bi), (&del, &bd)] {
            prop_assert_eq!(curve.xs.last().copied(), Some(1.0));
            for (x, y) in curve.xs.iter().zip(&curve.ys) {
                let k = (*x as f64 * n as f64).round() as usize;
                prop_assert!((*y as f64 - brute[k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn imputation_matches_dense_solve(
        h in 2usize..9, w in 2usize..9, seed in any::<u64>(), frac in 0.05f64..0.95,
        diagonal in prop_oneof![Just(0.0f32), Just(1.0f32), 0.1f32..3.0],
    ) {
        let n = h * w;
        let img = random_image(h, w, seed);
        let count = ((frac * n as f64) as usize).clamp(1, n - 1);
        let offset = (seed % 97) as usize;
        let masked: Vec<bool> = (0..n).map(|i| (i * 31 + offset) % n < count).collect();
        let cfg = ImputationConfig { diagonal, solver_tol: 1e-12, ..ImputationConfig::noiseless() };
        let out = impute(&img, &PixelMask::new(h, w, masked.clone()).unwrap(), &cfg, 0).unwrap();
        for c in 0..3 {
            let plane: Vec<f64> = (0..n).map(|p| img.data()[p * 3 + c] as f64).collect();
            let dense = common::dense_impute(&plane, h, w, &masked, 2.0, diagonal as f64);
            let known: Vec<f64> = (0..n).filter(|p| !masked[*p]).map(|p| plane[p]).collect();
            let lo = known.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = known.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for p in 0..n {
                let got = out.data()[p * 3 + c] as f64;
                prop_assert!((got - dense[p]).abs() < 1e-6, "{} vs {}", got, dense[p]);
                prop_assert!(dense[p] >= lo - 1e-12 && dense[p] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn spearman_matches_rank_oracle(
        x in prop::collection::vec(0u8..6, 3..40), seed in any::<u64>(),
    ) {
        let xs: Vec<f64> = x.iter().map(|v| *v as f64).collect();
        let ys: Vec<f64> = x.iter().enumerate().map(|(i, v)| ((i as u64 ^ seed) % 5) as f64 + *v as f64 * 0.3).collect();
        let oracle = common::spearman(&xs, &ys);
        match spearman(&xs, &ys) {
            Ok(r) => prop_assert!((r - oracle).abs() < 1e-9),
            Err(_) => prop_assert!(oracle.is_nan()),
        }
    }

    #[test]
    fn point_biserial_is_pearson(
        b in prop::collection::vec(0u8..2, 3..40), y in prop::collection::vec(-5.0f64..5.0, 40),
    ) {
        let bs: Vec<f64> = b.iter().map(|v| *v as f64).collect();
        let ys = &y[..bs.len()];
        let oracle = common::pearson(&bs, ys);
        match point_biserial(&bs, ys) {
            Ok(r) => prop_assert!((r - oracle).abs() < 1e-9),
            Err(_) => prop_assert!(oracle.is_nan()),
        }
    }
}
