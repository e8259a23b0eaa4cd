//! Boundary precision-recall (BPR) and volume precision-recall (VPR).
//!
//! Both metrics score every level of a segmentation hierarchy against the
//! annotated frames of a [`GroundTruth`], giving one [`PrCurve`] per sequence.
//! [`aggregate_scores`] folds curves of several sequences into ODS, OSS and AP.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ucm::SegmentationVolume;

/// Fraction of the image diagonal used as the default boundary matching radius.
pub const DEFAULT_TOLERANCE_FRACTION: f64 = 0.0075;

/// Human annotations at a subset of frames.
///
/// `annotators[a][k]` is the label map of annotator `a` at frame `frames[k]`.
/// Labels are shared across frames, so equal labels in different frames
/// denote the same spatio-temporal region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    height: usize,
    width: usize,
    frames: Vec<usize>,
    annotators: Vec<Vec<Vec<u32>>>,
}

impl GroundTruth {
    pub fn new(
        height: usize,
        width: usize,
        frames: Vec<usize>,
        annotators: Vec<Vec<Vec<u32>>>,
    ) -> Result<Self> {
        if frames.is_empty() || annotators.is_empty() {
            return Err(Error::EmptyGroundTruth);
        }
        for maps in &annotators {
            if maps.len() != frames.len() {
                return Err(Error::DimensionMismatch(format!(
                    "annotator has {} maps for {} annotated frames",
                    maps.len(),
                    frames.len()
                )));
            }
            if let Some(m) = maps.iter().find(|m| m.len() != height * width) {
                return Err(Error::DimensionMismatch(format!(
                    "label map with {} pixels, expected {}x{}",
                    m.len(),
                    height,
                    width
                )));
            }
        }
        Ok(Self {
            height,
            width,
            frames,
            annotators,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn frames(&self) -> &[usize] {
        &self.frames
    }

    pub fn annotators(&self) -> &[Vec<Vec<u32>>] {
        &self.annotators
    }
}

/// Precision, recall and F-measure per hierarchy level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub thresholds: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f_measure: Vec<f64>,
}

impl PrCurve {
    fn from_points(points: Vec<(f64, f64, f64)>) -> Self {
        let mut curve = PrCurve {
            thresholds: Vec::with_capacity(points.len()),
            precision: Vec::with_capacity(points.len()),
            recall: Vec::with_capacity(points.len()),
            f_measure: Vec::with_capacity(points.len()),
        };
        for (threshold, p, r) in points {
            curve.thresholds.push(threshold);
            curve.precision.push(p);
            curve.recall.push(r);
            curve.f_measure.push(f_measure(p, r));
        }
        curve
    }

    pub fn len(&self) -> usize {
        self.precision.len()
    }

    pub fn is_empty(&self) -> bool {
        self.precision.is_empty()
    }

    /// Best F-measure over the levels.
    pub fn best_f(&self) -> f64 {
        self.f_measure.iter().copied().fold(0.0, f64::max)
    }
}

/// Optimal dataset scale, optimal segmentation scale and average precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub ods: f64,
    pub oss: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchScores {
    pub bpr: Scores,
    pub vpr: Scores,
}

pub fn f_measure(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Thin boundary map: a pixel is on a boundary when its label differs from its
/// right or lower neighbour.
pub fn boundary_map(labels: &[u32], height: usize, width: usize) -> Vec<bool> {
    let mut out = vec![false; height * width];
    for y in 0..height {
        for x in 0..width {
            let l = labels[y * width + x];
            let right = x + 1 < width && labels[y * width + x + 1] != l;
            let down = y + 1 < height && labels[(y + 1) * width + x] != l;
            out[y * width + x] = right || down;
        }
    }
    out
}

/// One-to-one matching between boundary pixels within `radius` (Hopcroft-Karp).
///
/// Returns the matched flags of the predicted and ground-truth pixels.
fn match_boundaries(
    pred: &[bool],
    gt: &[bool],
    height: usize,
    width: usize,
    radius: f64,
) -> (Vec<bool>, Vec<bool>) {
    let reach = radius.floor() as i64;
    let mut offsets: Vec<(i64, i64, i64)> = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let d2 = dy * dy + dx * dx;
            if (d2 as f64) <= radius * radius {
                offsets.push((d2, dy, dx));
            }
        }
    }
    // nearest candidates first
    offsets.sort();

    let left: Vec<usize> = (0..pred.len()).filter(|&i| pred[i]).collect();
    let mut right_id = vec![usize::MAX; gt.len()];
    let mut right: Vec<usize> = Vec::new();
    for (i, &g) in gt.iter().enumerate() {
        if g {
            right_id[i] = right.len();
            right.push(i);
        }
    }
    let adj: Vec<Vec<usize>> = left
        .iter()
        .map(|&p| {
            let (py, px) = ((p / width) as i64, (p % width) as i64);
            offsets
                .iter()
                .filter_map(|&(_, dy, dx)| {
                    let (y, x) = (py + dy, px + dx);
                    if y < 0 || x < 0 || y >= height as i64 || x >= width as i64 {
                        return None;
                    }
                    let id = right_id[(y as usize) * width + x as usize];
                    (id != usize::MAX).then_some(id)
                })
                .collect()
        })
        .collect();

    let (match_l, match_r) = hopcroft_karp(&adj, right.len());
    let mut pred_matched = vec![false; pred.len()];
    for (li, m) in match_l.iter().enumerate() {
        if m.is_some() {
            pred_matched[left[li]] = true;
        }
    }
    let mut gt_matched = vec![false; gt.len()];
    for (ri, m) in match_r.iter().enumerate() {
        if m.is_some() {
            gt_matched[right[ri]] = true;
        }
    }
    (pred_matched, gt_matched)
}

fn hopcroft_karp(adj: &[Vec<usize>], n_right: usize) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
    const INF: usize = usize::MAX;
    let n_left = adj.len();
    let mut match_l: Vec<Option<usize>> = vec![None; n_left];
    let mut match_r: Vec<Option<usize>> = vec![None; n_right];
    let mut dist = vec![INF; n_left];
    loop {
        // layered BFS from free left vertices
        let mut queue = VecDeque::new();
        for u in 0..n_left {
            if match_l[u].is_none() {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = INF;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                match match_r[v] {
                    None => found = true,
                    Some(w) if dist[w] == INF => {
                        dist[w] = dist[u] + 1;
                        queue.push_back(w);
                    }
                    _ => {}
                }
            }
        }
        if !found {
            break;
        }
        // iterative DFS along the layers
        let mut next_edge = vec![0usize; n_left];
        for root in 0..n_left {
            if match_l[root].is_some() {
                continue;
            }
            let mut stack = vec![root];
            let mut augmented = false;
            while let Some(&u) = stack.last() {
                if next_edge[u] >= adj[u].len() {
                    dist[u] = INF;
                    stack.pop();
                    continue;
                }
                let v = adj[u][next_edge[u]];
                next_edge[u] += 1;
                match match_r[v] {
                    None => {
                        // flip the path
                        let mut v = v;
                        for &w in stack.iter().rev() {
                            let prev = match_l[w];
                            match_l[w] = Some(v);
                            match_r[v] = Some(w);
                            match prev {
                                Some(p) => v = p,
                                None => break,
                            }
                        }
                        augmented = true;
                        break;
                    }
                    Some(w) if dist[w] == dist[u] + 1 => stack.push(w),
                    _ => {}
                }
            }
            if augmented {
                for &w in &stack {
                    dist[w] = INF;
                }
            }
        }
    }
    (match_l, match_r)
}

fn check_levels(levels: &[SegmentationVolume], gt: &GroundTruth) -> Result<()> {
    if gt.frames.is_empty() || gt.annotators.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    for seg in levels {
        let d = seg.dims();
        if d.height != gt.height || d.width != gt.width {
            return Err(Error::DimensionMismatch(format!(
                "segmentation is {}x{}, ground truth {}x{}",
                d.height, d.width, gt.height, gt.width
            )));
        }
        if let Some(&t) = gt.frames.iter().find(|&&t| t >= d.frames) {
            return Err(Error::DimensionMismatch(format!(
                "annotated frame {t} beyond segmentation length {}",
                d.frames
            )));
        }
    }
    Ok(())
}

/// Boundary precision-recall per level.
///
/// `tolerance_px` defaults to [`DEFAULT_TOLERANCE_FRACTION`] of the image
/// diagonal. Precision counts a predicted boundary pixel as correct if any
/// annotator matches it; recall takes, per frame, the best annotator. Counts
/// are pooled over frames. An empty prediction has precision 1.
pub fn bpr(
    levels: &[SegmentationVolume],
    gt: &GroundTruth,
    tolerance_px: Option<f64>,
) -> Result<PrCurve> {
    check_levels(levels, gt)?;
    let (h, w) = (gt.height, gt.width);
    let radius = tolerance_px
        .unwrap_or_else(|| DEFAULT_TOLERANCE_FRACTION * ((h * h + w * w) as f64).sqrt());
    let gt_maps: Vec<Vec<Vec<bool>>> = gt
        .annotators
        .iter()
        .map(|maps| maps.iter().map(|m| boundary_map(m, h, w)).collect())
        .collect();

    let points = levels
        .iter()
        .map(|seg| {
            let (mut cnt_p, mut sum_p, mut cnt_r, mut sum_r) = (0usize, 0usize, 0usize, 0usize);
            for (k, &t) in gt.frames.iter().enumerate() {
                let pred = boundary_map(seg.frame(t), h, w);
                let mut pred_any = vec![false; pred.len()];
                let mut best: Option<(usize, usize)> = None;
                for annot in &gt_maps {
                    let gmap = &annot[k];
                    let (pm, gm) = match_boundaries(&pred, gmap, h, w, radius);
                    for (a, b) in pred_any.iter_mut().zip(&pm) {
                        *a |= *b;
                    }
                    let hit = gm.iter().filter(|&&m| m).count();
                    let total = gmap.iter().filter(|&&m| m).count();
                    let better = match best {
                        None => true,
                        Some((bh, bt)) => ratio(hit, total) > ratio(bh, bt),
                    };
                    if better {
                        best = Some((hit, total));
                    }
                }
                let (hit, total) = best.unwrap_or((0, 0));
                cnt_r += hit;
                sum_r += total;
                cnt_p += pred_any.iter().filter(|&&m| m).count();
                sum_p += pred.iter().filter(|&&m| m).count();
            }
            (seg.threshold(), ratio(cnt_p, sum_p), ratio(cnt_r, sum_r))
        })
        .collect();
    Ok(PrCurve::from_points(points))
}

/// Per-annotator volume precision and recall of one segmentation.
fn vpr_single(seg: &SegmentationVolume, gt: &GroundTruth, annotator: usize) -> (f64, f64) {
    let mut overlap: HashMap<(u32, u32), usize> = HashMap::new();
    let mut n = 0usize;
    for (k, &t) in gt.frames.iter().enumerate() {
        let s = seg.frame(t);
        for (&sl, &gl) in s.iter().zip(&gt.annotators[annotator][k]) {
            *overlap.entry((sl, gl)).or_default() += 1;
            n += 1;
        }
    }
    let mut best_for_seg: HashMap<u32, usize> = HashMap::new();
    let mut best_for_gt: HashMap<u32, usize> = HashMap::new();
    for (&(sl, gl), &c) in &overlap {
        let e = best_for_seg.entry(sl).or_default();
        *e = (*e).max(c);
        let e = best_for_gt.entry(gl).or_default();
        *e = (*e).max(c);
    }
    let p = best_for_seg.values().sum::<usize>() as f64 / n as f64;
    let r = best_for_gt.values().sum::<usize>() as f64 / n as f64;
    (p, r)
}

/// Volume precision-recall per level, averaged over annotators.
///
/// Precision is `(1/N) sum_s max_g |s & g|`, recall `(1/N) sum_g max_s |g & s|`,
/// both over the annotated frames only, with `N` the annotated voxel count.
pub fn vpr(levels: &[SegmentationVolume], gt: &GroundTruth) -> Result<PrCurve> {
    check_levels(levels, gt)?;
    let na = gt.annotators.len() as f64;
    let points = levels
        .iter()
        .map(|seg| {
            let (p, r) = (0..gt.annotators.len())
                .map(|a| vpr_single(seg, gt, a))
                .fold((0.0, 0.0), |acc, (p, r)| (acc.0 + p, acc.1 + r));
            (seg.threshold(), p / na, r / na)
        })
        .collect();
    Ok(PrCurve::from_points(points))
}

/// Folds per-sequence curves (all with the same levels) into ODS, OSS and AP.
///
/// ODS is the best level-wise mean F over sequences; OSS the mean of each
/// sequence's best F; AP the trapezoidal area under the mean precision-recall
/// curve, extended flat to recall 0.
pub fn aggregate_scores(curves: &[PrCurve]) -> Result<Scores> {
    let first = curves.first().ok_or(Error::EmptyGroundTruth)?;
    let levels = first.len();
    if curves.iter().any(|c| c.len() != levels) {
        return Err(Error::DimensionMismatch(
            "curves have different level counts".into(),
        ));
    }
    if levels == 0 {
        return Ok(Scores {
            ods: 0.0,
            oss: 0.0,
            ap: 0.0,
        });
    }
    let ns = curves.len() as f64;
    let mean_at = |f: &dyn Fn(&PrCurve) -> f64| curves.iter().map(f).sum::<f64>() / ns;
    let ods = (0..levels)
        .map(|l| mean_at(&|c| c.f_measure[l]))
        .fold(0.0, f64::max);
    let oss = curves.iter().map(PrCurve::best_f).sum::<f64>() / ns;

    let mut pts: Vec<(f64, f64)> = (0..levels)
        .map(|l| (mean_at(&|c| c.recall[l]), mean_at(&|c| c.precision[l])))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut ap = pts[0].0 * pts[0].1;
    for w in pts.windows(2) {
        ap += (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1);
    }
    Ok(Scores {
        ods,
        oss,
        ap: ap.clamp(0.0, 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::Dims;

    fn seg(dims: Dims, labels: Vec<u32>) -> SegmentationVolume {
        SegmentationVolume::from_labels(dims, labels, 0.0)
    }

    fn split_columns(h: usize, w: usize, at: usize) -> Vec<u32> {
        (0..h * w).map(|i| u32::from(i % w >= at)).collect()
    }

    #[test]
    fn bpr_self_is_perfect() {
        let labels = split_columns(16, 16, 7);
        let gt = GroundTruth::new(16, 16, vec![0], vec![vec![labels.clone()]]).unwrap();
        let c = bpr(&[seg(Dims::new(1, 16, 16), labels)], &gt, None).unwrap();
        assert_eq!((c.precision[0], c.recall[0], c.f_measure[0]), (1.0, 1.0, 1.0));
    }

    #[test]
    fn bpr_empty_prediction() {
        let gt = GroundTruth::new(16, 16, vec![0], vec![vec![split_columns(16, 16, 7)]]).unwrap();
        let c = bpr(&[seg(Dims::new(1, 16, 16), vec![0; 256])], &gt, None).unwrap();
        assert_eq!((c.precision[0], c.recall[0]), (1.0, 0.0));
    }

    #[test]
    fn bpr_shift_within_tolerance() {
        let gt = GroundTruth::new(16, 16, vec![0], vec![vec![split_columns(16, 16, 7)]]).unwrap();
        let shifted = seg(Dims::new(1, 16, 16), split_columns(16, 16, 8));
        let c = bpr(std::slice::from_ref(&shifted), &gt, Some(2.0)).unwrap();
        assert_eq!((c.precision[0], c.recall[0]), (1.0, 1.0));
        let strict = bpr(&[shifted], &gt, Some(0.5)).unwrap();
        assert_eq!((strict.precision[0], strict.recall[0]), (0.0, 0.0));
    }

    #[test]
    fn matching_is_one_to_one() {
        // two predicted columns compete for one ground-truth column
        let (h, w) = (4, 8);
        let mut pred = vec![false; h * w];
        let mut gt = vec![false; h * w];
        for y in 0..h {
            pred[y * w + 3] = true;
            pred[y * w + 4] = true;
            gt[y * w + 3] = true;
        }
        let (pm, gm) = match_boundaries(&pred, &gt, h, w, 1.5);
        assert_eq!(gm.iter().filter(|&&m| m).count(), 4);
        assert_eq!(pm.iter().filter(|&&m| m).count(), 4);
    }

    #[test]
    fn vpr_endpoints() {
        let dims = Dims::new(2, 8, 8);
        let mut labels = vec![0u32; dims.len()];
        for (i, l) in labels.iter_mut().enumerate() {
            if i % 8 < 3 {
                *l = 5;
            }
        }
        let maps: Vec<Vec<u32>> = (0..2).map(|t| labels[t * 64..(t + 1) * 64].to_vec()).collect();
        let gt = GroundTruth::new(8, 8, vec![0, 1], vec![maps]).unwrap();
        let c = vpr(&[seg(dims, labels.clone())], &gt).unwrap();
        assert_eq!((c.precision[0], c.recall[0]), (1.0, 1.0));

        let single = vpr(&[seg(dims, vec![0; dims.len()])], &gt).unwrap();
        assert_eq!(single.recall[0], 1.0);
        assert_eq!(single.precision[0], 80.0 / 128.0);
    }

    #[test]
    fn vpr_swaps_under_exchange() {
        let dims = Dims::new(1, 6, 6);
        let a: Vec<u32> = (0..36).map(|i| (i % 6 / 2) as u32).collect();
        let b: Vec<u32> = (0..36).map(|i| (i / 12) as u32 * 7 + (i % 6 >= 4) as u32).collect();
        let gt_a = GroundTruth::new(6, 6, vec![0], vec![vec![a.clone()]]).unwrap();
        let gt_b = GroundTruth::new(6, 6, vec![0], vec![vec![b.clone()]]).unwrap();
        let ab = vpr(&[seg(dims, b)], &gt_a).unwrap();
        let ba = vpr(&[seg(dims, a)], &gt_b).unwrap();
        assert_eq!(ab.precision[0], ba.recall[0]);
        assert_eq!(ab.recall[0], ba.precision[0]);
    }

    #[test]
    fn aggregate_endpoints() {
        let perfect = PrCurve::from_points(vec![(0.0, 1.0, 1.0); 51]);
        let s = aggregate_scores(&[perfect.clone(), perfect]).unwrap();
        assert_eq!((s.ods, s.oss, s.ap), (1.0, 1.0, 1.0));

        let single = PrCurve::from_points(vec![(0.0, 0.9, 0.2), (0.5, 0.6, 0.7), (1.0, 0.3, 0.9)]);
        let s = aggregate_scores(std::slice::from_ref(&single)).unwrap();
        assert_eq!(s.ods, s.oss);
    }

    #[test]
    fn oss_exceeds_ods_when_best_levels_differ() {
        let a = PrCurve::from_points(vec![(0.0, 0.9, 0.9), (1.0, 0.3, 0.3)]);
        let b = PrCurve::from_points(vec![(0.0, 0.3, 0.3), (1.0, 0.9, 0.9)]);
        let s = aggregate_scores(&[a, b]).unwrap();
        assert!((s.oss - 0.9).abs() < 1e-12);
        assert!((s.ods - 0.6).abs() < 1e-12);
        assert!(s.oss > s.ods);
    }

    #[test]
    fn empty_ground_truth_is_an_error() {
        assert!(matches!(
            GroundTruth::new(4, 4, vec![], vec![]),
            Err(Error::EmptyGroundTruth)
        ));
    }
}
