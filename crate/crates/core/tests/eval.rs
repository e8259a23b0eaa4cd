mod common;

use std::collections::HashSet;

use rand::Rng;
use stseg::eval::{aggregate_scores, bpr, vpr, GroundTruth};
use stseg::synth::{synth_video, SyntheticSpec};
use stseg::ucm::SegmentationVolume;
use stseg::video::Dims;

fn seg(dims: Dims, labels: Vec<u32>) -> SegmentationVolume {
    SegmentationVolume::from_labels(dims, labels, 0.0)
}

/// Volume precision and recall by explicit set intersection.
fn vpr_oracle(pred: &[u32], truth: &[u32]) -> (f64, f64) {
    let n = pred.len() as f64;
    let sets = |labels: &[u32]| -> Vec<HashSet<usize>> {
        let ids: HashSet<u32> = labels.iter().copied().collect();
        ids.into_iter()
            .map(|id| (0..labels.len()).filter(|&i| labels[i] == id).collect())
            .collect()
    };
    let (s, g) = (sets(pred), sets(truth));
    let best = |from: &[HashSet<usize>], to: &[HashSet<usize>]| -> f64 {
        from.iter()
            .map(|a| to.iter().map(|b| a.intersection(b).count()).max().unwrap_or(0) as f64)
            .sum()
    };
    (best(&s, &g) / n, best(&g, &s) / n)
}

#[test]
fn vpr_matches_set_intersection_oracle() {
    let mut rng = common::rng(31);
    for _ in 0..40 {
        let dims = Dims::new(rng.random_range(1..4), rng.random_range(2..7), rng.random_range(2..7));
        let pred: Vec<u32> = (0..dims.len()).map(|_| rng.random_range(0..4)).collect();
        let truth: Vec<u32> = (0..dims.len()).map(|_| rng.random_range(0..3)).collect();
        let frames: Vec<Vec<u32>> = truth.chunks(dims.frame_len()).map(<[u32]>::to_vec).collect();
        let gt = GroundTruth::new(dims.height, dims.width, (0..dims.frames).collect(), vec![frames]).unwrap();
        let curve = vpr(&[seg(dims, pred.clone())], &gt).unwrap();
        let (p, r) = vpr_oracle(&pred, &truth);
        assert!((curve.precision[0] - p).abs() < 1e-12);
        assert!((curve.recall[0] - r).abs() < 1e-12);
    }
}

#[test]
fn self_evaluation_and_degenerate_inputs() {
    let (_, gt) = synth_video(&SyntheticSpec::moving_rectangle(4, 16, 16, 1.0, 0.0, 0)).unwrap();
    let dims = Dims::new(4, 16, 16);
    let exact = seg(dims, gt.annotators()[0].concat());
    let single = seg(dims, vec![0; dims.len()]);

    let b = bpr(&[exact.clone(), single.clone()], &gt, None).unwrap();
    assert_eq!((b.precision[0], b.recall[0], b.f_measure[0]), (1.0, 1.0, 1.0));
    assert_eq!((b.precision[1], b.recall[1]), (1.0, 0.0));

    let v = vpr(&[exact, single], &gt).unwrap();
    assert_eq!((v.precision[0], v.recall[0], v.f_measure[0]), (1.0, 1.0, 1.0));
    let background = gt.annotators()[0].concat().iter().filter(|&&l| l == 0).count();
    assert_eq!(v.recall[1], 1.0);
    assert_eq!(v.precision[1], background as f64 / dims.len() as f64);

    let scores = aggregate_scores(&[v]).unwrap();
    assert_eq!(scores.ods, 1.0);
    assert_eq!(scores.oss, 1.0);
}

#[test]
fn unlinked_labels_score_lower_recall_than_linked_ones() {
    let (_, gt) = synth_video(&SyntheticSpec::moving_rectangle(6, 20, 20, 1.0, 0.0, 0)).unwrap();
    let dims = Dims::new(6, 20, 20);
    let linked = gt.annotators()[0].concat();
    // same per-frame shapes, fresh labels in every frame
    let unlinked: Vec<u32> = linked
        .iter()
        .enumerate()
        .map(|(i, &l)| l + 2 * (i / dims.frame_len()) as u32)
        .collect();
    let a = vpr(&[seg(dims, linked)], &gt).unwrap();
    let b = vpr(&[seg(dims, unlinked)], &gt).unwrap();
    assert!(b.recall[0] < a.recall[0]);
    assert_eq!(b.precision[0], 1.0);
}

#[test]
fn one_pixel_shift_is_matched_within_tolerance() {
    let (h, w) = (20, 20);
    let stripe = |x0: usize| -> Vec<u32> { (0..h * w).map(|i| u32::from(i % w >= x0)).collect() };
    let gt = GroundTruth::new(h, w, vec![0], vec![vec![stripe(10)]]).unwrap();
    let shifted = seg(Dims::new(1, h, w), stripe(11));
    let curve = bpr(&[shifted], &gt, Some(2.0)).unwrap();
    assert_eq!((curve.precision[0], curve.recall[0]), (1.0, 1.0));
    let strict = bpr(&[seg(Dims::new(1, h, w), stripe(11))], &gt, Some(0.5)).unwrap();
    assert_eq!(strict.recall[0], 0.0);
}
