mod common;

use approx::assert_abs_diff_eq;
use detsim::eval::{average_precision, evaluate_map, iou, DEFAULT_IOU_THRESHOLD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn evaluator_matches_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..3000 {
        let (results, gt) = common::micro_instance(&mut rng);
        let got = evaluate_map(&results, &gt, DEFAULT_IOU_THRESHOLD).unwrap();
        let (classes, aps, map) = common::brute_map(&results, &gt, DEFAULT_IOU_THRESHOLD);
        let got_classes: Vec<&String> = got.per_class_ap.keys().collect();
        assert_eq!(
            got_classes,
            classes.iter().collect::<Vec<_>>(),
            "case {case}"
        );
        for (c, ap) in classes.iter().zip(&aps) {
            assert_abs_diff_eq!(got.per_class_ap[c], *ap, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(got.map_score, map, epsilon = 1e-9);
    }
}

#[test]
fn oracle_agrees_on_hand_computed_ap() {
    assert_abs_diff_eq!(
        common::brute_ap(&[true, false, true], 2),
        5.0 / 6.0,
        epsilon = 1e-12
    );
    assert_abs_diff_eq!(
        average_precision(&[true, false, true], 2),
        5.0 / 6.0,
        epsilon = 1e-12
    );
}

#[test]
fn oracle_iou_matches_library() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let (_, gt) = common::micro_instance(&mut rng);
        let boxes: Vec<_> = gt
            .iter()
            .flat_map(|(_, o)| o.iter().map(|g| g.bbox))
            .collect();
        for a in &boxes {
            for b in &boxes {
                assert_abs_diff_eq!(
                    iou(a, b).unwrap(),
                    common::corner_iou(a, b),
                    epsilon = 1e-12
                );
            }
        }
    }
}
