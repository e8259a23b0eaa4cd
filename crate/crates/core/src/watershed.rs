//! Flooding watershed on 2-D frames and 3-D volumes, plus oriented arc weights.
//!
//! Boundaries have zero thickness: every voxel belongs to a basin and the
//! contours live on the faces between 6-adjacent voxels of different basins.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use crate::boundary::{OrientedBoundaryVolume, TEMPORAL_CHANNEL};
use crate::filters::ORIENTATIONS;
use crate::video::{Dims, ScalarVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    T,
    Y,
    X,
}

/// Neighbours of `i` along the spatial axes and, if `temporal`, along time.
#[inline]
fn for_each_neighbor(dims: &Dims, i: usize, temporal: bool, mut f: impl FnMut(usize)) {
    let v = dims.voxel(i);
    let fl = dims.frame_len();
    if temporal && v.t > 0 {
        f(i - fl);
    }
    if v.y > 0 {
        f(i - dims.width);
    }
    if v.x > 0 {
        f(i - 1);
    }
    if v.x + 1 < dims.width {
        f(i + 1);
    }
    if v.y + 1 < dims.height {
        f(i + dims.width);
    }
    if temporal && v.t + 1 < dims.frames {
        f(i + fl);
    }
}

struct Entry {
    value: f64,
    seq: u64,
    index: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // reversed: BinaryHeap pops the lowest (value, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .value
            .total_cmp(&self.value)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Meyer flooding from the regional minima of `values`.
///
/// Minima are flat connected plateaus with no strictly lower neighbour,
/// numbered in order of their first voxel. Flooding pops the lowest
/// `(value, insertion order)` first, so plateaus are split by geodesic
/// distance to the nearest minimum and ties go to the earlier-seeded basin.
/// With `temporal == false` frames are flooded independently.
pub fn flood(values: &[f64], dims: Dims, temporal: bool) -> (Vec<u32>, usize) {
    const NONE: u32 = u32::MAX;
    let n = dims.len();
    let mut labels = vec![NONE; n];
    let mut plateau = vec![NONE; n];
    let mut count = 0u32;
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut queue = VecDeque::new();
    let mut members = Vec::new();
    let mut next_plateau = 0u32;
    for start in 0..n {
        if plateau[start] != NONE {
            continue;
        }
        let level = values[start];
        let pid = next_plateau;
        next_plateau += 1;
        plateau[start] = pid;
        queue.push_back(start);
        members.clear();
        let mut is_minimum = true;
        while let Some(i) = queue.pop_front() {
            members.push(i);
            for_each_neighbor(&dims, i, temporal, |j| {
                if values[j] < level {
                    is_minimum = false;
                } else if values[j] == level && plateau[j] == NONE {
                    plateau[j] = pid;
                    queue.push_back(j);
                }
            });
        }
        if is_minimum {
            members.sort_unstable();
            for &i in &members {
                labels[i] = count;
                heap.push(Entry {
                    value: level,
                    seq,
                    index: i,
                });
                seq += 1;
            }
            count += 1;
        }
    }
    while let Some(Entry { index, .. }) = heap.pop() {
        let label = labels[index];
        for_each_neighbor(&dims, index, temporal, |j| {
            if labels[j] == NONE {
                labels[j] = label;
                heap.push(Entry {
                    value: values[j],
                    seq,
                    index: j,
                });
                seq += 1;
            }
        });
    }
    (labels, count as usize)
}

/// Face between voxel `voxel` and its successor along `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub voxel: usize,
    pub axis: Axis,
    pub arc: usize,
}

/// Boundary surface between two adjacent basins `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub a: u32,
    pub b: u32,
    pub face_count: usize,
}

/// 3-D watershed basins with their inter-basin faces grouped into arcs.
#[derive(Debug, Clone, PartialEq)]
pub struct BasinLabeling {
    dims: Dims,
    labels: Vec<u32>,
    count: usize,
    arcs: Vec<Arc>,
    faces: Vec<Face>,
}

impl BasinLabeling {
    /// Wraps a labelling whose labels are `0..count`, collecting arcs and faces.
    pub fn from_labels(dims: Dims, labels: Vec<u32>) -> Self {
        assert_eq!(labels.len(), dims.len());
        let count = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut raw: Vec<(u32, u32, usize, Axis)> = Vec::new();
        let fl = dims.frame_len();
        for i in 0..dims.len() {
            let v = dims.voxel(i);
            let l = labels[i];
            let mut check = |j: usize, axis: Axis| {
                let m = labels[j];
                if m != l {
                    raw.push((l.min(m), l.max(m), i, axis));
                }
            };
            if v.t + 1 < dims.frames {
                check(i + fl, Axis::T);
            }
            if v.y + 1 < dims.height {
                check(i + dims.width, Axis::Y);
            }
            if v.x + 1 < dims.width {
                check(i + 1, Axis::X);
            }
        }
        let mut pairs: Vec<(u32, u32)> = raw.iter().map(|r| (r.0, r.1)).collect();
        pairs.sort_unstable();
        pairs.dedup();
        let arc_of: HashMap<(u32, u32), usize> =
            pairs.iter().enumerate().map(|(k, &p)| (p, k)).collect();
        let mut arcs: Vec<Arc> = pairs
            .iter()
            .map(|&(a, b)| Arc {
                a,
                b,
                face_count: 0,
            })
            .collect();
        let faces = raw
            .into_iter()
            .map(|(a, b, voxel, axis)| {
                let arc = arc_of[&(a, b)];
                arcs[arc].face_count += 1;
                Face { voxel, axis, arc }
            })
            .collect();
        Self {
            dims,
            labels,
            count,
            arcs,
            faces,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn basin_count(&self) -> usize {
        self.count
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// The voxel on the far side of a face.
    #[inline]
    pub fn face_neighbor(&self, face: &Face) -> usize {
        match face.axis {
            Axis::T => face.voxel + self.dims.frame_len(),
            Axis::Y => face.voxel + self.dims.width,
            Axis::X => face.voxel + 1,
        }
    }
}

/// Topographic surface for the 3-D watershed: per voxel, the maximum of the
/// spatial channels and `temporal_weight` times the temporal channel.
pub fn topographic_surface(obv: &OrientedBoundaryVolume, temporal_weight: f64) -> ScalarVolume {
    let dims = obv.dims();
    let mut out = ScalarVolume::zeros(dims);
    for (i, v) in out.data.iter_mut().enumerate() {
        let spatial = (0..ORIENTATIONS)
            .map(|o| obv.channel(o).data[i])
            .fold(0.0, f64::max);
        *v = spatial.max(temporal_weight * obv.channel(TEMPORAL_CHANNEL).data[i]);
    }
    out
}

/// Watershed basins of the oriented boundary volume over space and time.
pub fn watershed3d(obv: &OrientedBoundaryVolume, temporal_weight: f64) -> BasinLabeling {
    let surface = topographic_surface(obv, temporal_weight);
    let (labels, _) = flood(&surface.data, surface.dims, true);
    BasinLabeling::from_labels(surface.dims, labels)
}

/// Orientation channel whose angle is closest to the in-frame normal of a face.
///
/// The normal is the sum of the oriented unit normals (pointing from basin `a`
/// to basin `b`) of all faces of the same arc within two pixels in the same frame.
pub fn face_channel(basins: &BasinLabeling, face: &Face, index: &FaceIndex) -> usize {
    let dims = basins.dims;
    let v = dims.voxel(face.voxel);
    let arc = basins.arcs[face.arc];
    let (mut nx, mut ny) = (0.0f64, 0.0f64);
    let r = 2isize;
    for dy in -r..=r {
        for dx in -r..=r {
            let (y, x) = (v.y as isize + dy, v.x as isize + dx);
            if y < 0 || x < 0 || y >= dims.height as isize || x >= dims.width as isize {
                continue;
            }
            let i = dims.index(v.t, y as usize, x as usize);
            if index.x_arc[i] == face.arc {
                nx += if basins.labels[i] == arc.a { 1.0 } else { -1.0 };
            }
            if index.y_arc[i] == face.arc {
                ny += if basins.labels[i] == arc.a { 1.0 } else { -1.0 };
            }
        }
    }
    if nx == 0.0 && ny == 0.0 {
        match face.axis {
            Axis::X => nx = 1.0,
            _ => ny = 1.0,
        }
    }
    let step = std::f64::consts::PI / ORIENTATIONS as f64;
    let theta = ny.atan2(nx).rem_euclid(std::f64::consts::PI);
    (theta / step).round() as usize % ORIENTATIONS
}

/// Per-voxel arc ids of the in-frame faces (`usize::MAX` where none).
pub struct FaceIndex {
    x_arc: Vec<usize>,
    y_arc: Vec<usize>,
}

impl FaceIndex {
    pub fn new(basins: &BasinLabeling) -> Self {
        let n = basins.dims.len();
        let mut x_arc = vec![usize::MAX; n];
        let mut y_arc = vec![usize::MAX; n];
        for f in &basins.faces {
            match f.axis {
                Axis::X => x_arc[f.voxel] = f.arc,
                Axis::Y => y_arc[f.voxel] = f.arc,
                Axis::T => {}
            }
        }
        Self { x_arc, y_arc }
    }
}

/// Mean orientation-matched boundary strength over the faces of every arc.
///
/// Faces normal to time read the temporal channel; in-frame faces read the
/// spatial channel selected by [`face_channel`]. A face's value is the mean
/// over its two voxels.
pub fn arc_weights(basins: &BasinLabeling, obv: &OrientedBoundaryVolume) -> Vec<f64> {
    let index = FaceIndex::new(basins);
    let mut sums = vec![0.0; basins.arcs.len()];
    for face in &basins.faces {
        let channel = match face.axis {
            Axis::T => TEMPORAL_CHANNEL,
            Axis::X | Axis::Y => face_channel(basins, face, &index),
        };
        let data = &obv.channel(channel).data;
        sums[face.arc] += 0.5 * (data[face.voxel] + data[basins.face_neighbor(face)]);
    }
    sums.iter()
        .zip(&basins.arcs)
        .map(|(s, a)| s / a.face_count as f64)
        .collect()
}
