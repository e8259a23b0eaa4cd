//! Agglomerative merging of watershed basins into an ultrametric contour map.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{Dims, ScalarVolume};
use crate::watershed::{Axis, BasinLabeling};

/// One internal node of the merge tree: regions `a` and `b` join into `parent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: u32,
    pub b: u32,
    pub parent: u32,
    pub saliency: f64,
}

/// Binary merge hierarchy over `leaves` basins.
///
/// Leaves are `0..leaves`; the `m`-th merge creates node `leaves + m`.
/// Saliencies are non-decreasing in merge order. A region graph with several
/// connected components yields a forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeTree {
    pub leaves: usize,
    pub merges: Vec<Merge>,
    /// Saliency at which each input arc disappears.
    pub arc_levels: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key {
    weight: f64,
    lo: u32,
    hi: u32,
}

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(self.lo.cmp(&other.lo))
            .then(self.hi.cmp(&other.hi))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Default)]
struct Edge {
    weighted: f64,
    faces: f64,
    arcs: Vec<usize>,
}

impl Edge {
    fn mean(&self) -> f64 {
        self.weighted / self.faces
    }
}

fn key(a: u32, b: u32, edge: &Edge) -> Key {
    Key {
        weight: edge.mean(),
        lo: a.min(b),
        hi: a.max(b),
    }
}

/// Greedy merging over an explicit region graph.
///
/// `arcs` holds `(a, b, face_count)` with `a != b`; the weight of a merged
/// boundary is the face-weighted mean of its constituents. The pair with the
/// smallest `(weight, lower id, higher id)` merges first.
pub fn merge_regions(leaves: usize, arcs: &[(u32, u32, usize)], weights: &[f64]) -> Result<MergeTree> {
    if arcs.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} arcs but {} weights",
            arcs.len(),
            weights.len()
        )));
    }
    let mut adjacency: Vec<HashMap<u32, Edge>> = vec![HashMap::new(); leaves];
    for (idx, (&(a, b, faces), &w)) in arcs.iter().zip(weights).enumerate() {
        if a == b || a as usize >= leaves || b as usize >= leaves || !w.is_finite() {
            return Err(Error::DimensionMismatch(format!("invalid arc {idx}: ({a}, {b}, {w})")));
        }
        let faces = faces.max(1) as f64;
        for (x, y) in [(a, b), (b, a)] {
            let e = adjacency[x as usize].entry(y).or_default();
            e.weighted += w * faces;
            e.faces += faces;
            e.arcs.push(idx);
        }
    }
    let mut heap = BinaryHeap::new();
    for (a, nbrs) in adjacency.iter().enumerate() {
        for (&b, e) in nbrs {
            if (a as u32) < b {
                heap.push(Reverse(key(a as u32, b, e)));
            }
        }
    }
    let mut alive = vec![true; leaves];
    let mut merges = Vec::with_capacity(leaves.saturating_sub(1));
    let mut arc_levels = vec![f64::NAN; arcs.len()];
    let mut level = f64::NEG_INFINITY;
    while let Some(Reverse(k)) = heap.pop() {
        let (lo, hi) = (k.lo as usize, k.hi as usize);
        if !alive[lo] || !alive[hi] {
            continue;
        }
        let Some(edge) = adjacency[lo].get(&k.hi) else {
            continue;
        };
        if edge.mean().to_bits() != k.weight.to_bits() {
            continue;
        }
        level = level.max(k.weight);
        let parent = adjacency.len() as u32;
        let shared = adjacency[lo].remove(&k.hi).expect("edge present");
        adjacency[hi].remove(&k.lo);
        for &arc in &shared.arcs {
            arc_levels[arc] = level;
        }
        merges.push(Merge {
            a: k.lo,
            b: k.hi,
            parent,
            saliency: level,
        });
        alive[lo] = false;
        alive[hi] = false;
        let a_map = std::mem::take(&mut adjacency[lo]);
        let b_map = std::mem::take(&mut adjacency[hi]);
        let mut merged: HashMap<u32, Edge> = a_map;
        for (c, e) in b_map {
            let slot = merged.entry(c).or_default();
            slot.weighted += e.weighted;
            slot.faces += e.faces;
            slot.arcs.extend(e.arcs);
        }
        let mut neighbours: Vec<u32> = merged.keys().copied().collect();
        neighbours.sort_unstable();
        for c in neighbours {
            let nb = &mut adjacency[c as usize];
            nb.remove(&k.lo);
            nb.remove(&k.hi);
            let e = merged[&c].clone();
            heap.push(Reverse(key(parent, c, &e)));
            nb.insert(parent, e);
        }
        adjacency.push(merged);
        alive.push(true);
    }
    Ok(MergeTree {
        leaves,
        merges,
        arc_levels,
    })
}

/// Builds the merge tree of a basin labelling with per-arc weights.
pub fn build_ucm(basins: &BasinLabeling, weights: &[f64]) -> Result<MergeTree> {
    let arcs: Vec<(u32, u32, usize)> = basins.arcs().iter().map(|a| (a.a, a.b, a.face_count)).collect();
    merge_regions(basins.basin_count(), &arcs, weights)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

impl MergeTree {
    pub fn max_saliency(&self) -> f64 {
        self.merges.last().map_or(0.0, |m| m.saliency)
    }

    /// Leaf-to-region map after applying every merge with saliency `<= lambda`.
    pub fn cut(&self, lambda: f64) -> Vec<u32> {
        let total = self.leaves + self.merges.len();
        let mut uf = UnionFind::new(total);
        for m in self.merges.iter().take_while(|m| m.saliency <= lambda) {
            uf.union(m.a as usize, m.parent as usize);
            uf.union(m.b as usize, m.parent as usize);
        }
        (0..self.leaves).map(|l| uf.find(l) as u32).collect()
    }

    /// Saliency of the lowest common ancestor of two leaves.
    pub fn merge_level(&self, a: u32, b: u32) -> Option<f64> {
        if a == b {
            return Some(f64::NEG_INFINITY);
        }
        let total = self.leaves + self.merges.len();
        let mut up = vec![usize::MAX; total];
        for m in &self.merges {
            up[m.a as usize] = m.parent as usize;
            up[m.b as usize] = m.parent as usize;
        }
        let mut seen = vec![false; total];
        let mut x = a as usize;
        loop {
            seen[x] = true;
            if up[x] == usize::MAX {
                break;
            }
            x = up[x];
        }
        let mut y = b as usize;
        loop {
            if seen[y] {
                return Some(self.merges[y - self.leaves].saliency);
            }
            if up[y] == usize::MAX {
                return None;
            }
            y = up[y];
        }
    }
}

/// A labelled spatio-temporal partition at one hierarchy level.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationVolume {
    dims: Dims,
    labels: Vec<u32>,
    threshold: f64,
    region_count: usize,
}

impl SegmentationVolume {
    /// Relabels `labels` to `0..R` in order of first appearance.
    pub fn from_labels(dims: Dims, labels: Vec<u32>, threshold: f64) -> Self {
        assert_eq!(labels.len(), dims.len(), "label count must match dims");
        let mut map: HashMap<u32, u32> = HashMap::new();
        let labels: Vec<u32> = labels
            .into_iter()
            .map(|l| {
                let next = map.len() as u32;
                *map.entry(l).or_insert(next)
            })
            .collect();
        Self {
            dims,
            labels,
            threshold,
            region_count: map.len(),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn frame(&self, t: usize) -> &[u32] {
        let n = self.dims.frame_len();
        &self.labels[t * n..(t + 1) * n]
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn region_count(&self) -> usize {
        self.region_count
    }
}

/// The partition of the basins obtained by merging every arc with saliency `<= lambda`.
pub fn threshold_segmentation(basins: &BasinLabeling, tree: &MergeTree, lambda: f64) -> SegmentationVolume {
    let region = tree.cut(lambda);
    let labels = basins.labels().iter().map(|&b| region[b as usize]).collect();
    SegmentationVolume::from_labels(basins.dims(), labels, lambda)
}

/// Ultrametric contour map rasters.
///
/// `spatial` has shape `T x 2H x 2W`: pixel `(y, x)` sits at `(2y, 2x)`, the
/// face to its right at `(2y, 2x + 1)`, the face below at `(2y + 1, 2x)`, and
/// `(2y + 1, 2x + 1)` holds the maximum of the faces meeting there.
/// `temporal` has shape `(T - 1) x H x W` with the level of the face between
/// `(t, y, x)` and `(t + 1, y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UcmRaster {
    pub spatial: ScalarVolume,
    pub temporal: Option<ScalarVolume>,
}

pub fn rasterize_ucm(basins: &BasinLabeling, tree: &MergeTree) -> UcmRaster {
    let dims = basins.dims();
    let (h, w) = (dims.height, dims.width);
    let sdims = Dims::new(dims.frames, 2 * h, 2 * w);
    let mut spatial = ScalarVolume::zeros(sdims);
    let mut temporal = (dims.frames > 1).then(|| ScalarVolume::zeros(Dims::new(dims.frames - 1, h, w)));
    for face in basins.faces() {
        let level = tree.arc_levels[face.arc];
        let level = if level.is_nan() { tree.max_saliency() } else { level };
        let v = dims.voxel(face.voxel);
        match face.axis {
            Axis::X => spatial.set(v.t, 2 * v.y, 2 * v.x + 1, level),
            Axis::Y => spatial.set(v.t, 2 * v.y + 1, 2 * v.x, level),
            Axis::T => {
                if let Some(tv) = temporal.as_mut() {
                    tv.set(v.t, v.y, v.x, level);
                }
            }
        }
    }
    for t in 0..dims.frames {
        for y in 0..h {
            for x in 0..w {
                let (cy, cx) = (2 * y + 1, 2 * x + 1);
                let mut m = spatial.get(t, cy - 1, cx);
                m = m.max(spatial.get(t, cy, cx - 1));
                if cy + 1 < 2 * h {
                    m = m.max(spatial.get(t, cy + 1, cx));
                }
                if cx + 1 < 2 * w {
                    m = m.max(spatial.get(t, cy, cx + 1));
                }
                spatial.set(t, cy, cx, m);
            }
        }
    }
    UcmRaster { spatial, temporal }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> MergeTree {
        // 0 -0.3- 1 -0.1- 2 -0.5- 3
        merge_regions(4, &[(0, 1, 1), (1, 2, 1), (2, 3, 1)], &[0.3, 0.1, 0.5]).unwrap()
    }

    #[test]
    fn chain_merge_order() {
        let t = chain();
        assert_eq!(t.merges.len(), 3);
        assert_eq!((t.merges[0].a, t.merges[0].b, t.merges[0].parent), (1, 2, 4));
        assert_eq!(t.merges[0].saliency, 0.1);
        assert_eq!((t.merges[1].a, t.merges[1].b), (0, 4));
        assert_eq!(t.merges[2].saliency, 0.5);
        assert_eq!(t.arc_levels, vec![0.3, 0.1, 0.5]);
    }

    #[test]
    fn recombined_weight_is_face_weighted() {
        // after 0+1 merge, the boundary to 2 is (0.2*1 + 0.8*3)/4 = 0.65
        let t = merge_regions(3, &[(0, 1, 1), (0, 2, 1), (1, 2, 3)], &[0.1, 0.2, 0.8]).unwrap();
        assert!((t.merges[1].saliency - 0.65).abs() < 1e-15);
    }

    #[test]
    fn saliencies_are_monotone() {
        let t = merge_regions(4, &[(0, 1, 2), (1, 2, 1), (0, 2, 5), (2, 3, 1)], &[0.3, 0.2, 0.1, 0.7]).unwrap();
        assert_eq!(t.merges.len(), 3);
        assert!(t.merges.windows(2).all(|p| p[0].saliency <= p[1].saliency));
    }

    #[test]
    fn cuts_nest() {
        let t = chain();
        assert_eq!(t.cut(0.0), vec![0, 1, 2, 3]);
        let c = t.cut(0.1);
        assert_eq!(c[1], c[2]);
        assert_ne!(c[0], c[1]);
        let c = t.cut(0.5);
        assert!(c.iter().all(|&r| r == c[0]));
    }

    #[test]
    fn lca_levels() {
        let t = chain();
        assert_eq!(t.merge_level(1, 2), Some(0.1));
        assert_eq!(t.merge_level(0, 2), Some(0.3));
        assert_eq!(t.merge_level(0, 3), Some(0.5));
    }

    #[test]
    fn forest_when_disconnected() {
        let t = merge_regions(4, &[(0, 1, 1), (2, 3, 1)], &[0.2, 0.4]).unwrap();
        assert_eq!(t.merges.len(), 2);
        assert_eq!(t.merge_level(0, 3), None);
    }

    #[test]
    fn relabelling_is_contiguous() {
        let s = SegmentationVolume::from_labels(Dims::new(1, 1, 4), vec![7, 7, 3, 9], 0.0);
        assert_eq!(s.labels(), &[0, 0, 1, 2]);
        assert_eq!(s.region_count(), 3);
    }

    #[test]
    fn raster_layout() {
        let dims = Dims::new(2, 2, 2);
        // left column basin 0, right column basin 1, second frame all basin 2
        let b = BasinLabeling::from_labels(dims, vec![0, 1, 0, 1, 2, 2, 2, 2]);
        let weights = vec![0.5; b.arcs().len()];
        let tree = build_ucm(&b, &weights).unwrap();
        let r = rasterize_ucm(&b, &tree);
        assert!(r.spatial.get(0, 0, 1) > 0.0);
        assert!(r.spatial.get(0, 2, 1) > 0.0);
        assert_eq!(r.spatial.get(0, 1, 0), 0.0);
        assert_eq!(r.spatial.get(1, 0, 1), 0.0);
        assert!(r.temporal.unwrap().data.iter().all(|&v| v > 0.0));
    }
}
