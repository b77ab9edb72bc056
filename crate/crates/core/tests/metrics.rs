mod common;

use common::oracles;
use fmdl::maskgen::BinaryMask;
use fmdl::metrics::{average_precision, confusion_rates, eer, iinc, iou, pbca, roc_auc, roc_curve, ScoredSample};
use fmdl::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scores on a coarse grid so ties are common.
fn instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u8>) {
    let n = rng.random_range(2..40);
    let levels = rng.random_range(2..12);
    let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
    labels[0] = 0;
    labels[1] = 1;
    let scores = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
    (scores, labels)
}

fn scored(scores: &[f64], labels: &[u8]) -> Vec<ScoredSample<f64>> {
    scores.iter().zip(labels).map(|(&s, &l)| ScoredSample::new(s, l)).collect()
}

#[test]
fn detection_metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..300 {
        let (s, l) = instance(&mut rng);
        let samples = scored(&s, &l);
        let auc = roc_auc(&samples).unwrap();
        assert!((auc - oracles::auc(&s, &l)).abs() < 1e-12);

        let curve = roc_curve(&samples).unwrap();
        let want = oracles::roc_points(&s, &l);
        assert_eq!(curve.len(), want.len());
        for (p, (f, t)) in curve.iter().zip(&want) {
            assert!((p.fpr - f).abs() < 1e-12 && (p.tpr - t).abs() < 1e-12);
        }

        let e = eer(&samples).unwrap();
        assert!((e - oracles::eer(&s, &l)).abs() < 1e-12, "{e} vs {}", oracles::eer(&s, &l));

        let ap = average_precision(&samples).unwrap();
        assert!((ap - oracles::average_precision(&s, &l)).abs() < 1e-12);

        let thr = rng.random_range(0.0..1.0);
        let rates = confusion_rates(&samples, thr).unwrap();
        let (acc, fpr, fnr) = oracles::confusion(&s, &l, thr);
        assert!((rates.acc - acc).abs() < 1e-12);
        assert_eq!(rates.fpr.is_some(), fpr.is_some());
        assert_eq!(rates.fnr.is_some(), fnr.is_some());
        assert!((rates.fpr.unwrap() - fpr.unwrap()).abs() < 1e-12);
        assert!((rates.fnr.unwrap() - fnr.unwrap()).abs() < 1e-12);
    }
}

#[test]
fn confusion_without_a_class_leaves_rate_undefined() {
    let samples = scored(&[0.2, 0.9], &[1, 1]);
    let r = confusion_rates(&samples, 0.5).unwrap();
    assert_eq!(r.fpr, None);
    assert_eq!(r.fnr, Some(0.5));
    assert!(roc_auc(&samples).is_err());
}

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, density: f64) -> Vec<f64> {
    (0..h * w).map(|_| f64::from(u8::from(rng.random_bool(density)))).collect()
}

#[test]
fn localization_metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..300 {
        let (h, w) = (rng.random_range(1..12), rng.random_range(1..12));
        let dp = [0.0, 0.1, 0.5, 1.0][rng.random_range(0..4)];
        let dg = [0.0, 0.1, 0.5, 1.0][rng.random_range(0..4)];
        let (p, g) = (random_mask(&mut rng, h, w, dp), random_mask(&mut rng, h, w, dg));
        let pm = BinaryMask::new(Tensor::from_vec(1, h, w, p.clone()).unwrap()).unwrap();
        let gm = BinaryMask::new(Tensor::from_vec(1, h, w, g.clone()).unwrap()).unwrap();
        assert!((iou(&pm, &gm).unwrap() - oracles::iou(&p, &g, w)).abs() < 1e-12);
        assert!((pbca(&pm, &gm).unwrap() - oracles::pbca(&p, &g)).abs() < 1e-12);
        assert!((iinc(&pm, &gm).unwrap() - oracles::iinc(&p, &g, w)).abs() < 1e-12);
    }
}

#[test]
fn empty_mask_edge_cases() {
    let z = BinaryMask::<f64>::zeros(4, 4);
    let one = BinaryMask::new(Tensor::from_fn(1, 4, 4, |_, y, x| f64::from(u8::from(y == 0 && x == 0)))).unwrap();
    assert_eq!(iou(&z, &z).unwrap(), 1.0);
    assert_eq!(iinc(&z, &z).unwrap(), 0.0);
    assert_eq!(iou(&one, &z).unwrap(), 0.0);
    assert_eq!(iinc(&one, &z).unwrap(), 1.0);
    assert_eq!(iinc(&z, &one).unwrap(), 1.0);
    assert_eq!(pbca(&one, &z).unwrap(), 15.0 / 16.0);
}

fn labelled_scores() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..1.0, n),
            prop::collection::vec(0u8..2, n).prop_map(|mut l| {
                l[0] = 0;
                l[1] = 1;
                l
            }),
        )
    })
}

proptest! {
    #[test]
    fn auc_is_invariant_to_monotone_transforms((s, l) in labelled_scores()) {
        let a = roc_auc(&scored(&s, &l)).unwrap();
        let t: Vec<f64> = s.iter().map(|v| v.powi(3) * 0.5 + 0.1).collect();
        let b = roc_auc(&scored(&t, &l)).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn reversing_scores_complements_auc((s, l) in labelled_scores()) {
        let a = roc_auc(&scored(&s, &l)).unwrap();
        let r: Vec<f64> = s.iter().map(|v| 1.0 - v).collect();
        let b = roc_auc(&scored(&r, &l)).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detection_metrics_stay_in_unit_interval((s, l) in labelled_scores()) {
        let samples = scored(&s, &l);
        for v in [roc_auc(&samples).unwrap(), eer(&samples).unwrap(), average_precision(&samples).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn iou_is_symmetric_and_bounded(bits in prop::collection::vec((any::<bool>(), any::<bool>()), 1..64)) {
        let w = bits.len();
        let p = Tensor::from_vec(1, 1, w, bits.iter().map(|b| f64::from(u8::from(b.0))).collect()).unwrap();
        let g = Tensor::from_vec(1, 1, w, bits.iter().map(|b| f64::from(u8::from(b.1))).collect()).unwrap();
        let (p, g) = (BinaryMask::new(p).unwrap(), BinaryMask::new(g).unwrap());
        let a = iou(&p, &g).unwrap();
        prop_assert_eq!(a, iou(&g, &p).unwrap());
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(iou(&p, &p).unwrap(), 1.0);
    }
}
