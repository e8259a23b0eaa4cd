//! Spatio-temporal affinity matrix and vertex pre-grouping.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{compute_features, Feature, FeatureField};
use crate::filters::{gradients, orientation_angle, ORIENTATIONS};
use crate::pmi::{pmi_affinity, PmiModel};
use crate::sparse::{NodeMap, SparseSymMatrix};
use crate::video::{Dims, ScalarVolume, VideoVolume};
use crate::watershed::flood;

pub const MIN_WEIGHT: f64 = 4.539_992_976_248_485e-5;
pub const MAX_WEIGHT: f64 = 22_026.465_794_806_718;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinityParams {
    /// Intra-frame neighbourhood radius in pixels.
    pub intra_radius: f64,
    /// Spatial radius of the links to the next and previous frame.
    pub inter_radius: f64,
}

impl Default for AffinityParams {
    fn default() -> Self {
        Self {
            intra_radius: 5.0,
            inter_radius: 3.0,
        }
    }
}

/// Lattice offsets `(dy, dx)` with `0 < |d| <= r` (or `<= r` including the origin).
fn disk_offsets(radius: f64, include_origin: bool) -> Vec<(isize, isize)> {
    let r = radius.floor() as isize;
    let r2 = radius * radius;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = (dy * dy + dx * dx) as f64;
            if d2 <= r2 && (include_origin || d2 > 0.0) {
                out.push((dy, dx));
            }
        }
    }
    out
}

#[inline]
fn clamp_weight(w: f64) -> f64 {
    w.clamp(MIN_WEIGHT, MAX_WEIGHT)
}

/// Weight between a pixel of frame `t` and one of frame `t + 1`: the mean of
/// both frame models, evaluated with the earlier frame's feature first.
#[inline]
fn inter_weight(m0: &PmiModel, m1: &PmiModel, earlier: &Feature, later: &Feature) -> f64 {
    clamp_weight(0.5 * (pmi_affinity(m0, earlier, later) + pmi_affinity(m1, earlier, later)))
}

/// Assembles `W` over all voxels of `video`, one PMI model per frame.
pub fn build_affinity_matrix(
    video: &VideoVolume,
    models: &[PmiModel],
    params: &AffinityParams,
) -> Result<(SparseSymMatrix, NodeMap)> {
    let dims = video.dims();
    if models.len() < dims.frames {
        return Err(Error::MissingModel(models.len()));
    }
    let features: Vec<FeatureField> = (0..dims.frames)
        .into_par_iter()
        .map(|t| compute_features(video, t))
        .collect();
    build_from_features(dims, &features, models, params)
}

/// As [`build_affinity_matrix`] with precomputed per-frame features.
pub fn build_from_features(
    dims: Dims,
    features: &[FeatureField],
    models: &[PmiModel],
    params: &AffinityParams,
) -> Result<(SparseSymMatrix, NodeMap)> {
    if models.len() < dims.frames {
        return Err(Error::MissingModel(models.len()));
    }
    let nodes = NodeMap::new(dims);
    let intra = disk_offsets(params.intra_radius, false);
    let inter = disk_offsets(params.inter_radius, true);
    let (h, w) = (dims.height as isize, dims.width as isize);
    let rows: Vec<Vec<(usize, f64)>> = (0..dims.len())
        .into_par_iter()
        .map(|i| {
            let v = dims.voxel(i);
            let (y, x) = (v.y as isize, v.x as isize);
            let fi = features[v.t].at(v.y, v.x);
            let mut row = Vec::with_capacity(intra.len() + 2 * inter.len());
            let mut visit = |offsets: &[(isize, isize)], t: usize, mut weight: Box<dyn FnMut(&Feature) -> f64 + '_>| {
                for &(dy, dx) in offsets {
                    let (yy, xx) = (y + dy, x + dx);
                    if yy < 0 || xx < 0 || yy >= h || xx >= w {
                        continue;
                    }
                    let (yy, xx) = (yy as usize, xx as usize);
                    row.push((dims.index(t, yy, xx), weight(features[t].at(yy, xx))));
                }
            };
            let model = &models[v.t];
            if v.t > 0 {
                let prev = &models[v.t - 1];
                visit(&inter, v.t - 1, Box::new(move |fj| inter_weight(prev, model, fj, fi)));
            }
            visit(
                &intra,
                v.t,
                Box::new(move |fj| {
                    // canonical argument order keeps the transpose bit-identical
                    let (a, b) = if fi <= fj { (fi, fj) } else { (fj, fi) };
                    clamp_weight(pmi_affinity(model, a, b))
                }),
            );
            if v.t + 1 < dims.frames {
                let next = &models[v.t + 1];
                visit(&inter, v.t + 1, Box::new(move |fj| inter_weight(model, next, fi, fj)));
            }
            row
        })
        .collect();
    Ok((SparseSymMatrix::from_rows(rows)?, nodes))
}

/// Per-pixel boundary prior in `[0, 1]`.
///
/// The summed magnitude of the Lab directional derivatives, maximised over
/// the in-frame orientations, divided by its maximum over the video.
pub fn boundary_prior(video: &VideoVolume, sigma: f64) -> ScalarVolume {
    let dims = video.dims();
    let (h, w) = (dims.height, dims.width);
    let frames: Vec<Vec<f64>> = (0..dims.frames)
        .into_par_iter()
        .map(|t| {
            let ff = compute_features(video, t);
            let grads: Vec<(Vec<f64>, Vec<f64>)> = (0..3)
                .map(|c| {
                    let plane: Vec<f64> = ff.data.iter().map(|f| f[c]).collect();
                    gradients(&plane, h, w, sigma)
                })
                .collect();
            let mut best = vec![0.0f64; h * w];
            for o in 0..ORIENTATIONS {
                let (s, c) = orientation_angle(o).sin_cos();
                for (p, b) in best.iter_mut().enumerate() {
                    let m: f64 = grads.iter().map(|(gx, gy)| (c * gx[p] + s * gy[p]).abs()).sum();
                    *b = b.max(m);
                }
            }
            best
        })
        .collect();
    let mut vol = ScalarVolume::from_vec(dims, frames.concat()).expect("frame sizes match");
    let max = vol.max_value();
    if max > 0.0 {
        vol.data.iter_mut().for_each(|v| *v = (*v / max).min(1.0));
    }
    vol
}

/// Node-to-group assignment; group ids are contiguous and numbered frame by frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grouping {
    pub groups: Vec<u32>,
    pub group_count: usize,
}

impl Grouping {
    pub fn singletons(n: usize) -> Self {
        Self {
            groups: (0..n as u32).collect(),
            group_count: n,
        }
    }

    pub fn reduction_factor(&self) -> f64 {
        self.groups.len() as f64 / self.group_count.max(1) as f64
    }
}

/// Watershed basins of the boundary prior, from which groupings at any
/// threshold are derived cheaply.
#[derive(Debug, Clone)]
pub struct PreGrouper {
    prior: ScalarVolume,
    basins: Vec<u32>,
}

impl PreGrouper {
    pub fn new(prior: &ScalarVolume) -> Self {
        let (basins, _) = flood(&prior.data, prior.dims, false);
        Self {
            prior: prior.clone(),
            basins,
        }
    }

    /// Pixels with prior above `theta` stay singletons; the others are
    /// grouped by basin, split into 4-connected pieces.
    pub fn group(&self, theta: f64) -> Grouping {
        let dims = self.prior.dims;
        let (h, w) = (dims.height, dims.width);
        let n = dims.len();
        const NONE: u32 = u32::MAX;
        let mut groups = vec![NONE; n];
        let mut next = 0u32;
        let mut stack = Vec::new();
        for start in 0..n {
            if groups[start] != NONE {
                continue;
            }
            let id = next;
            next += 1;
            groups[start] = id;
            if self.prior.data[start] > theta {
                continue;
            }
            let basin = self.basins[start];
            stack.push(start);
            while let Some(i) = stack.pop() {
                let v = dims.voxel(i);
                let mut try_push = |j: usize| {
                    if groups[j] == NONE && self.basins[j] == basin && self.prior.data[j] <= theta {
                        groups[j] = id;
                        stack.push(j);
                    }
                };
                if v.y > 0 {
                    try_push(i - w);
                }
                if v.y + 1 < h {
                    try_push(i + w);
                }
                if v.x > 0 {
                    try_push(i - 1);
                }
                if v.x + 1 < w {
                    try_push(i + 1);
                }
            }
        }
        Grouping {
            groups,
            group_count: next as usize,
        }
    }

    /// Smallest threshold (a prior value) whose grouping reaches `target`
    /// reduction, or the most reducing grouping when none does.
    pub fn tune(&self, target: f64) -> (f64, Grouping) {
        let mut levels = self.prior.data.clone();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        if levels.is_empty() {
            return (0.0, self.group(0.0));
        }
        let (mut lo, mut hi) = (0usize, levels.len() - 1);
        let top = self.group(levels[hi]);
        if top.reduction_factor() < target {
            return (levels[hi], top);
        }
        let mut best = (levels[hi], top);
        while lo < hi {
            let mid = (lo + hi) / 2;
            let g = self.group(levels[mid]);
            if g.reduction_factor() >= target {
                hi = mid;
                best = (levels[mid], g);
            } else {
                lo = mid + 1;
            }
        }
        if best.0 != levels[lo] {
            best = (levels[lo], self.group(levels[lo]));
        }
        best
    }
}

/// Pre-grouping of every frame of a video with a fixed threshold.
pub fn pre_group(prior: &ScalarVolume, theta: f64) -> Grouping {
    PreGrouper::new(prior).group(theta)
}

/// A graph over vertex groups whose normalized cuts equal those of the
/// original graph for every partition that respects the groups.
///
/// Intra-group weight is kept as a self loop on the group node, so group
/// volumes equal the summed degrees of their members.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphReduction {
    pub grouping: Grouping,
    pub sizes: Vec<usize>,
    pub weights: SparseSymMatrix,
    pub self_loops: Vec<f64>,
}

impl GraphReduction {
    pub fn n(&self) -> usize {
        self.grouping.group_count
    }

    /// Group volumes `vol(I) = sum_J w'_IJ + S_I`.
    pub fn volumes(&self) -> Vec<f64> {
        self.weights
            .degrees()
            .iter()
            .zip(&self.self_loops)
            .map(|(d, s)| d + s)
            .collect()
    }
}

pub fn reduce_graph(w: &SparseSymMatrix, grouping: &Grouping) -> Result<GraphReduction> {
    let n = w.n();
    let g = grouping.group_count;
    if grouping.groups.len() != n {
        return Err(Error::NotAPartition(format!(
            "{} assignments for {n} nodes",
            grouping.groups.len()
        )));
    }
    let mut sizes = vec![0usize; g];
    for &id in &grouping.groups {
        if id as usize >= g {
            return Err(Error::NotAPartition(format!("group id {id} >= group count {g}")));
        }
        sizes[id as usize] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::NotAPartition(format!("group {empty} is empty")));
    }
    let mut self_loops = vec![0.0; g];
    let mut pairs: Vec<(u32, u32, f64)> = Vec::new();
    for i in 0..n {
        let gi = grouping.groups[i];
        for (j, v) in w.row(i) {
            if j <= i {
                continue;
            }
            let gj = grouping.groups[j];
            if gi == gj {
                self_loops[gi as usize] += 2.0 * v;
            } else {
                pairs.push((gi.min(gj), gi.max(gj), v));
            }
        }
    }
    pairs.sort_by_key(|&(a, b, _)| (a, b));
    let mut merged: Vec<(usize, usize, f64)> = Vec::new();
    for (a, b, v) in pairs {
        match merged.last_mut() {
            Some(last) if last.0 == a as usize && last.1 == b as usize => last.2 += v,
            _ => merged.push((a as usize, b as usize, v)),
        }
    }
    Ok(GraphReduction {
        grouping: grouping.clone(),
        sizes,
        weights: SparseSymMatrix::from_pairs(g, &merged)?,
        self_loops,
    })
}
