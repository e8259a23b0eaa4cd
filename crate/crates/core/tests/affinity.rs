mod common;

use std::collections::HashMap;

use rand::Rng;
use stseg::affinity::{
    boundary_prior, build_affinity_matrix, reduce_graph, AffinityParams, Grouping, PreGrouper,
};
use stseg::pipeline::fit_models;
use stseg::sparse::SparseSymMatrix;
use stseg::synth::{synth_video, MovingShape, ShapeKind, SyntheticSpec};
use stseg::PipelineConfig;

#[test]
fn ncut_of_group_respecting_bipartitions_is_preserved() {
    let mut rng = common::rng(11);
    for _ in 0..20 {
        let w = common::random_graph(&mut rng, 12, 2);
        let grouping = common::random_grouping(&mut rng, 12, 4);
        let err = common::max_reduction_ncut_error(&w, &grouping);
        assert!(err <= 1e-12, "{err}");
    }
}

#[test]
fn reduction_preserves_total_volume_and_symmetry() {
    let mut rng = common::rng(5);
    for groups in [1, 3, 17, 60] {
        let w = common::random_graph(&mut rng, 60, 3);
        let red = reduce_graph(&w, &common::random_grouping(&mut rng, 60, groups)).unwrap();
        let before: f64 = w.degrees().iter().sum();
        let after: f64 = red.volumes().iter().sum();
        assert!((before - after).abs() <= 1e-12 * before);
        assert_eq!(red.sizes.iter().sum::<usize>(), 60);
        for i in 0..red.n() {
            for (j, v) in red.weights.row(i) {
                assert_eq!(red.weights.get(j, i), Some(v));
            }
        }
    }
}

#[test]
fn reduced_weights_are_sums_of_member_weights() {
    let w = SparseSymMatrix::from_pairs(4, &[(0, 1, 1.0), (1, 2, 2.0), (2, 3, 3.0), (0, 3, 0.5)]).unwrap();
    let red = reduce_graph(
        &w,
        &Grouping {
            groups: vec![0, 0, 1, 1],
            group_count: 2,
        },
    )
    .unwrap();
    assert_eq!(red.weights.get(0, 1), Some(2.5));
    assert_eq!(red.self_loops, vec![2.0, 6.0]);
}

#[test]
fn video_affinity_is_symmetric_and_within_the_sparsity_bound() {
    let spec = SyntheticSpec::moving_rectangle(3, 16, 16, 1.0, 0.05, 3);
    let (video, _) = synth_video(&spec).unwrap();
    let models = fit_models(&video, &PipelineConfig::default(), 0).unwrap();
    let (w, nodes) = build_affinity_matrix(&video, &models, &AffinityParams::default()).unwrap();
    assert_eq!(nodes.len(), 3 * 16 * 16);
    assert!(w.nnz() <= w.n() * (80 + 2 * 29));
    for i in 0..w.n() {
        for (j, v) in w.row(i) {
            assert_eq!(w.get(j, i).map(f64::to_bits), Some(v.to_bits()));
            assert!((stseg::affinity::MIN_WEIGHT..=stseg::affinity::MAX_WEIGHT).contains(&v));
        }
    }
}

fn natural_like_video() -> stseg::video::VideoVolume {
    let mut rng = common::rng(21);
    let mut shapes = Vec::new();
    for _ in 0..14 {
        let color = [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
        let (kind, start) = if rng.random_bool(0.5) {
            let r: f64 = rng.random_range(4.0..12.0);
            let c = (rng.random_range(r + 1.0..63.0 - r), rng.random_range(r + 1.0..63.0 - r));
            (ShapeKind::Disk { radius: r }, c)
        } else {
            let (h, w) = (rng.random_range(6..24), rng.random_range(6..24));
            let c = (rng.random_range(0..64 - h) as f64, rng.random_range(0..64 - w) as f64);
            (ShapeKind::Rectangle { height: h, width: w }, c)
        };
        shapes.push(MovingShape {
            kind,
            start,
            velocity: (0.0, 0.0),
            color,
        });
    }
    let spec = SyntheticSpec {
        frames: 2,
        height: 64,
        width: 64,
        shapes,
        background: [0.45, 0.5, 0.35],
        noise_sigma: 0.01,
        seed: 4,
    };
    synth_video(&spec).unwrap().0
}

#[test]
fn tuned_pre_grouping_reaches_the_target_factor() {
    let video = natural_like_video();
    let prior = boundary_prior(&video, PipelineConfig::default().prior_sigma);
    let (theta, grouping) = PreGrouper::new(&prior).tune(13.0);
    let factor = grouping.reduction_factor();
    assert!((12.0..=15.0).contains(&factor), "factor {factor} at theta {theta}");

    // groups never span frames
    let fl = 64 * 64;
    let mut frame_of: HashMap<u32, usize> = HashMap::new();
    for (i, &g) in grouping.groups.iter().enumerate() {
        assert_eq!(*frame_of.entry(g).or_insert(i / fl), i / fl);
    }
}
