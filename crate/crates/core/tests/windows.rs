mod common;

use stseg::affinity::{build_affinity_matrix, AffinityParams};
use stseg::pipeline::fit_models;
use stseg::spectral::{solve_windows, window_schedule, EigenParams};
use stseg::synth::{synth_video, MovingShape, ShapeKind, SyntheticSpec};
use stseg::PipelineConfig;

fn params(k: usize) -> EigenParams {
    EigenParams {
        k,
        tol: 1e-8,
        ..EigenParams::default()
    }
}

#[test]
fn static_video_gives_identical_windows() {
    let spec = SyntheticSpec {
        frames: 7,
        height: 16,
        width: 16,
        shapes: vec![MovingShape {
            kind: ShapeKind::Rectangle { height: 6, width: 7 },
            start: (4.0, 5.0),
            velocity: (0.0, 0.0),
            color: [0.9, 0.2, 0.1],
        }],
        background: [0.2, 0.4, 0.7],
        noise_sigma: 0.0,
        seed: 0,
    };
    let (video, _) = synth_video(&spec).unwrap();
    // one model shared by every frame, so every window is the same problem
    let model = fit_models(&video, &PipelineConfig::default(), 0).unwrap().swap_remove(0);
    let models = vec![model; video.frames()];
    let (w, nodes) = build_affinity_matrix(&video, &models, &AffinityParams::default()).unwrap();
    let stack = solve_windows(&w, &nodes, 1.0, None, &window_schedule(7, 5), &params(4)).unwrap();
    let windows = stack.windows();
    assert_eq!(windows.len(), 3);
    for win in &windows[1..] {
        assert_eq!(win.eigenvalues, windows[0].eigenvalues);
        for (a, b) in win.volumes.iter().zip(&windows[0].volumes) {
            assert_eq!(a.data, b.data);
        }
        assert_eq!(win.signs, windows[0].signs);
        assert!(win.matched_to.iter().enumerate().all(|(b, a)| *a == Some(b)));
    }
}

#[test]
fn second_eigenvector_separates_a_moving_rectangle_in_every_frame() {
    let spec = SyntheticSpec::moving_rectangle(8, 24, 24, 1.0, 0.02, 2);
    let (video, gt) = synth_video(&spec).unwrap();
    let models = fit_models(&video, &PipelineConfig::default(), 0).unwrap();
    let (w, nodes) = build_affinity_matrix(&video, &models, &AffinityParams::default()).unwrap();
    let stack = solve_windows(&w, &nodes, 1.0, None, &window_schedule(8, 5), &params(3)).unwrap();
    let masks = &gt.annotators()[0];
    let mut rect_side = None;
    for win in stack.windows() {
        let v = &win.volumes[1];
        for f in 0..win.window.len {
            let t = win.window.first + f;
            let positive: Vec<bool> = v.frame(f).iter().map(|&x| x > 0.0).collect();
            let iou_for = |side: bool| {
                let (mut inter, mut union) = (0, 0);
                for (&p, &g) in positive.iter().zip(&masks[t]) {
                    let (a, b) = (p == side, g == 1);
                    inter += (a && b) as usize;
                    union += (a || b) as usize;
                }
                inter as f64 / union as f64
            };
            let side = *rect_side.get_or_insert_with(|| iou_for(true) > iou_for(false));
            let iou = iou_for(side);
            assert!(iou > 0.8, "window {:?} frame {t}: IoU {iou}", win.window);
        }
    }
}

#[test]
fn grouped_windows_lift_to_voxel_volumes() {
    let spec = SyntheticSpec::moving_rectangle(6, 20, 20, 1.0, 0.02, 5);
    let (video, _) = synth_video(&spec).unwrap();
    let models = fit_models(&video, &PipelineConfig::default(), 0).unwrap();
    let (w, nodes) = build_affinity_matrix(&video, &models, &AffinityParams::default()).unwrap();
    let prior = stseg::affinity::boundary_prior(&video, 1.5);
    let (_, grouping) = stseg::affinity::PreGrouper::new(&prior).tune(4.0);
    let schedule = window_schedule(6, 3);
    let grouped = solve_windows(&w, &nodes, 1.0, Some(&grouping), &schedule, &params(4)).unwrap();
    let exact = solve_windows(&w, &nodes, 1.0, None, &schedule, &params(4)).unwrap();
    for (win, full) in grouped.windows().iter().zip(exact.windows()) {
        let diag = win.diagnostics.as_ref().unwrap();
        assert_eq!(diag.nodes, 3 * 400);
        assert!(diag.solved_nodes < diag.nodes);
        for vol in &win.volumes {
            assert_eq!(vol.data.len(), 3 * 400);
            let norm: f64 = vol.data.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        // Ritz values of any subspace bound the exact eigenvalues from above
        for (approx, exact) in win.eigenvalues.iter().zip(&full.eigenvalues) {
            assert!(*approx >= exact - 1e-6, "{approx} below {exact}");
        }
    }
}
