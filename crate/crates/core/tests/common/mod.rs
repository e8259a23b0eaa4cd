#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stseg::sparse::SparseSymMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Connected random sparse graph: a spanning path plus `extra` random edges per node.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> SparseSymMatrix {
    let mut pairs = std::collections::BTreeMap::new();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    for w in order.windows(2) {
        pairs.insert((w[0].min(w[1]), w[0].max(w[1])), rng.random_range(0.05..1.0));
    }
    for i in 0..n {
        for _ in 0..extra {
            let j = rng.random_range(0..n);
            if j != i {
                pairs.insert((i.min(j), i.max(j)), rng.random_range(0.05..1.0));
            }
        }
    }
    let list: Vec<(usize, usize, f64)> = pairs.into_iter().map(|((i, j), w)| (i, j, w)).collect();
    SparseSymMatrix::from_pairs(n, &list).unwrap()
}

/// Largest principal angle between the spans of two sets of orthonormal vectors.
pub fn max_principal_angle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let n = a[0].len();
    let ma = DMatrix::from_fn(n, a.len(), |i, j| a[j][i]);
    let mb = DMatrix::from_fn(n, b.len(), |i, j| b[j][i]);
    let s = (ma.transpose() * mb).singular_values();
    let min = s.iter().copied().fold(f64::INFINITY, f64::min).min(1.0);
    min.acos()
}

/// Minimal NCut over all bipartitions of a small graph, by enumeration.
pub fn brute_force_min_ncut(w: &SparseSymMatrix) -> (f64, Vec<bool>) {
    let n = w.n();
    let mut best = (f64::INFINITY, vec![]);
    for mask in 1u64..(1u64 << (n - 1)) {
        let side: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        if let Some(v) = stseg::spectral::ncut(w, None, &side) {
            if v < best.0 {
                best = (v, side);
            }
        }
    }
    best
}

/// Random basin labelling: nearest of up to `max_basins` distinct seed voxels
/// (city-block distance, lowest seed index on ties) in a small volume.
pub fn random_basins(rng: &mut ChaCha8Rng, max_basins: usize) -> stseg::watershed::BasinLabeling {
    use stseg::video::Dims;
    let dims = Dims::new(rng.random_range(1..=3), rng.random_range(3..=8), rng.random_range(3..=8));
    let want = rng.random_range(2..=max_basins).min(dims.len());
    let mut seeds: Vec<usize> = Vec::new();
    while seeds.len() < want {
        let s = rng.random_range(0..dims.len());
        if !seeds.contains(&s) {
            seeds.push(s);
        }
    }
    let labels = (0..dims.len())
        .map(|i| {
            let v = dims.voxel(i);
            let dist = |s: usize| {
                let u = dims.voxel(s);
                v.t.abs_diff(u.t) + v.y.abs_diff(u.y) + v.x.abs_diff(u.x)
            };
            (0..seeds.len()).min_by_key(|&k| (dist(seeds[k]), k)).unwrap() as u32
        })
        .collect();
    stseg::watershed::BasinLabeling::from_labels(dims, labels)
}

/// Arc weights in [0, 1), quantised to tenths half of the time to provoke ties.
pub fn random_arc_weights(rng: &mut ChaCha8Rng, arcs: usize) -> Vec<f64> {
    let quantise = rng.random_bool(0.5);
    (0..arcs)
        .map(|_| {
            let w: f64 = rng.random_range(0.0..1.0);
            if quantise {
                (w * 10.0).floor() / 10.0
            } else {
                w
            }
        })
        .collect()
}

/// Nesting of all cuts, the ultrametric inequality over every leaf triple,
/// and agreement of the contour raster with every thresholded segmentation.
pub fn check_ucm_instance(
    basins: &stseg::watershed::BasinLabeling,
    tree: &stseg::ucm::MergeTree,
) -> Result<(), String> {
    use stseg::ucm::{rasterize_ucm, threshold_segmentation};
    use stseg::watershed::Axis;

    let mut levels: Vec<f64> = tree.merges.iter().map(|m| m.saliency).collect();
    levels.push(-1.0);
    levels.sort_by(f64::total_cmp);
    levels.dedup();

    // nesting: every finer region lies in exactly one coarser region
    let cuts: Vec<Vec<u32>> = levels.iter().map(|&l| tree.cut(l)).collect();
    for pair in cuts.windows(2) {
        let mut up = std::collections::HashMap::new();
        for (fine, coarse) in pair[0].iter().zip(&pair[1]) {
            if *up.entry(*fine).or_insert(*coarse) != *coarse {
                return Err(format!("region {fine} split between coarser regions"));
            }
        }
    }

    let n = tree.leaves as u32;
    let d = |a: u32, b: u32| tree.merge_level(a, b).unwrap_or(f64::INFINITY);
    for a in 0..n {
        for b in 0..n {
            if a != b && d(a, b) != d(b, a) {
                return Err(format!("asymmetric level between {a} and {b}"));
            }
            for c in 0..n {
                if a != b && b != c && a != c && d(a, c) > d(a, b).max(d(b, c)) {
                    return Err(format!("ultrametric inequality fails on ({a}, {b}, {c})"));
                }
            }
        }
    }

    // contours: a face carries a level above lambda iff it separates two regions
    let raster = rasterize_ucm(basins, tree);
    let dims = basins.dims();
    let face_level = |voxel: usize, axis: Axis| {
        let v = dims.voxel(voxel);
        match axis {
            Axis::X => raster.spatial.get(v.t, 2 * v.y, 2 * v.x + 1),
            Axis::Y => raster.spatial.get(v.t, 2 * v.y + 1, 2 * v.x),
            Axis::T => raster.temporal.as_ref().unwrap().get(v.t, v.y, v.x),
        }
    };
    for &lambda in &levels {
        let seg = threshold_segmentation(basins, tree, lambda);
        let labels = seg.labels();
        for i in 0..dims.len() {
            let v = dims.voxel(i);
            let mut neighbours = Vec::new();
            if v.x + 1 < dims.width {
                neighbours.push((i + 1, Axis::X));
            }
            if v.y + 1 < dims.height {
                neighbours.push((i + dims.width, Axis::Y));
            }
            if v.t + 1 < dims.frames {
                neighbours.push((i + dims.frame_len(), Axis::T));
            }
            for (j, axis) in neighbours {
                let separates = labels[i] != labels[j];
                let level = face_level(i, axis);
                let on_contour = basins.labels()[i] != basins.labels()[j] && level > lambda;
                if separates != on_contour {
                    return Err(format!(
                        "face {i}->{j} at lambda {lambda}: level {level}, separates {separates}"
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Boundary volume that is 0.1 everywhere except ridge planes of strength 1:
/// columns `xs` and rows `ys` on the spatial channels, frames `ts` on the
/// temporal channel.
pub fn plane_volume(
    dims: stseg::video::Dims,
    xs: &[usize],
    ys: &[usize],
    ts: &[usize],
) -> stseg::boundary::OrientedBoundaryVolume {
    use stseg::boundary::{OrientedBoundaryVolume, CHANNEL_COUNT, TEMPORAL_CHANNEL};
    use stseg::video::ScalarVolume;
    let channels = (0..CHANNEL_COUNT)
        .map(|c| {
            let data = (0..dims.len())
                .map(|i| {
                    let v = dims.voxel(i);
                    let ridge = if c == TEMPORAL_CHANNEL {
                        ts.contains(&v.t)
                    } else {
                        xs.contains(&v.x) || ys.contains(&v.y)
                    };
                    if ridge {
                        1.0
                    } else {
                        0.1
                    }
                })
                .collect();
            ScalarVolume::from_vec(dims, data).unwrap()
        })
        .collect();
    OrientedBoundaryVolume::new(channels, 1.0).unwrap()
}

/// Up to `max` pairwise non-adjacent interior positions in `1..len - 1`.
pub fn random_planes(rng: &mut ChaCha8Rng, len: usize, max: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for _ in 0..rng.random_range(0..=max) {
        let p = rng.random_range(1..len - 1);
        if out.iter().all(|&q| q.abs_diff(p) > 1) {
            out.push(p);
        }
    }
    out.sort_unstable();
    out
}

/// Random assignment of `n` nodes to `groups` non-empty groups.
pub fn random_grouping(rng: &mut ChaCha8Rng, n: usize, groups: usize) -> stseg::affinity::Grouping {
    // seed one node per group, assign the rest, then shuffle
    let mut ids: Vec<u32> = (0..n)
        .map(|i| if i < groups { i as u32 } else { rng.random_range(0..groups as u32) })
        .collect();
    for i in (1..n).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    stseg::affinity::Grouping {
        groups: ids,
        group_count: groups,
    }
}

/// `cut(A, B) / vol(A) + cut(A, B) / vol(B)` straight from dense weights and self loops.
pub fn dense_ncut(w: &[Vec<f64>], loops: &[f64], side: &[bool]) -> f64 {
    let (mut cut, mut va, mut vb) = (0.0, 0.0, 0.0);
    for i in 0..w.len() {
        let d: f64 = w[i].iter().sum::<f64>() + loops[i];
        if side[i] {
            va += d;
        } else {
            vb += d;
        }
        for j in 0..w.len() {
            if side[i] && !side[j] {
                cut += w[i][j];
            }
        }
    }
    cut / va + cut / vb
}

/// Largest NCut discrepancy over every group-respecting bipartition.
pub fn max_reduction_ncut_error(w: &SparseSymMatrix, grouping: &stseg::affinity::Grouping) -> f64 {
    let red = stseg::affinity::reduce_graph(w, grouping).unwrap();
    let dense = w.to_dense();
    let reduced = red.weights.to_dense();
    let g = grouping.group_count;
    let mut worst = 0.0f64;
    for mask in 1u64..(1u64 << g) - 1 {
        let group_side: Vec<bool> = (0..g).map(|k| mask >> k & 1 == 1).collect();
        let side: Vec<bool> = grouping.groups.iter().map(|&k| group_side[k as usize]).collect();
        let before = dense_ncut(&dense, &vec![0.0; w.n()], &side);
        let after = dense_ncut(&reduced, &red.self_loops, &group_side);
        worst = worst.max((before - after).abs());
    }
    worst
}

/// Dense `I - D^-1/2 W D^-1/2` built from the weights alone.
pub fn dense_sym_laplacian(w: &SparseSymMatrix) -> DMatrix<f64> {
    let dense = w.to_dense();
    let n = dense.len();
    let d: Vec<f64> = dense.iter().map(|row| row.iter().sum()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let identity = if i == j { 1.0 } else { 0.0 };
        identity - dense[i][j] / (d[i] * d[j]).sqrt()
    })
}

fn uniform_group() -> stseg::pmi::GroupDensity {
    stseg::pmi::GroupDensity::Grid(stseg::pmi::JointGrid::from_masses(1, vec![1.0]).unwrap())
}

/// Model whose luminance group is the given table on evenly spaced symbols.
pub fn luminance_model(rho: f64, size: usize, table: Vec<f64>) -> stseg::pmi::PmiModel {
    use stseg::pmi::{ChromaAxis, GroupDensity, JointGrid, PmiModel};
    PmiModel::from_groups(
        rho,
        ChromaAxis::NEUTRAL,
        [GroupDensity::Grid(JointGrid::from_masses(size, table).unwrap()), uniform_group(), uniform_group()],
    )
}

/// Feature vector of luminance symbol `i` out of `size`.
pub fn symbol(i: usize, size: usize) -> [f64; 4] {
    [i as f64 / (size - 1) as f64, 0.5, 0.5, 0.0]
}

/// `P(a, b)^rho / (P(a) P(b))` on a normalised, symmetrised discrete table.
pub fn pmi_closed_form(table: &[f64], size: usize, rho: f64, i: usize, j: usize) -> f64 {
    let total: f64 = table.iter().sum();
    let p = |i: usize, j: usize| 0.5 * (table[i * size + j] + table[j * size + i]) / total;
    let marginal = |i: usize| (0..size).map(|j| p(i, j)).sum::<f64>();
    p(i, j).powf(rho) / (marginal(i) * marginal(j))
}
