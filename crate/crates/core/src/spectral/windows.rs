use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eigensolver::{refine_smallest_k, solve_smallest_k, EigenParams};
use super::laplacian::NormalizedLaplacian;
use crate::affinity::{reduce_graph, Grouping};
use crate::error::{Error, Result};
use crate::sparse::{NodeMap, SparseSymMatrix};
use crate::video::{Dims, ScalarVolume};

/// Frames `[first, first + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalWindow {
    pub first: usize,
    pub len: usize,
}

impl TemporalWindow {
    pub fn end(&self) -> usize {
        self.first + self.len
    }
}

/// Window length used at a scale: 5 at full resolution, 3 below.
pub fn default_window_len(scale: f64) -> usize {
    if scale >= 1.0 {
        5
    } else {
        3
    }
}

/// Stride-1 windows of length `len`, or a single clamped window when `frames <= len`.
pub fn window_schedule(frames: usize, len: usize) -> Vec<TemporalWindow> {
    let len = len.max(1);
    if frames <= len {
        return vec![TemporalWindow {
            first: 0,
            len: frames,
        }];
    }
    (0..=frames - len)
        .map(|first| TemporalWindow { first, len })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowDiagnostics {
    pub nodes: usize,
    pub solved_nodes: usize,
    pub applications: usize,
    pub cycles: usize,
    pub residuals: Vec<f64>,
}

/// Eigenpairs of one window, lifted to voxel volumes over the window's frames.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowEigen {
    pub window: TemporalWindow,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub volumes: Vec<ScalarVolume>,
    /// Sign applied to each volume during alignment.
    pub signs: Vec<f64>,
    /// Index of the matched eigenvector of the previous window.
    pub matched_to: Vec<Option<usize>>,
    pub diagnostics: Option<WindowDiagnostics>,
}

impl WindowEigen {
    pub fn from_volumes(window: TemporalWindow, pairs: Vec<(f64, ScalarVolume)>) -> Self {
        let k = pairs.len();
        let (eigenvalues, volumes) = pairs.into_iter().unzip();
        Self {
            window,
            eigenvalues,
            volumes,
            signs: vec![1.0; k],
            matched_to: vec![None; k],
            diagnostics: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenStack {
    dims: Dims,
    scale: f64,
    windows: Vec<WindowEigen>,
}

impl EigenStack {
    pub fn new(dims: Dims, scale: f64, windows: Vec<WindowEigen>) -> Self {
        Self {
            dims,
            scale,
            windows,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn windows(&self) -> &[WindowEigen] {
        &self.windows
    }
}

fn solve_window(
    w: &SparseSymMatrix,
    nodes: &NodeMap,
    grouping: Option<&Grouping>,
    window: TemporalWindow,
    params: &EigenParams,
) -> Result<WindowEigen> {
    let dims = nodes.dims();
    let (start, end) = nodes.frame_range(window.first, window.end());
    let sub = w.restrict(start, end);
    let wdims = Dims::new(window.len, dims.height, dims.width);
    let local_nodes = NodeMap::new(wdims);

    let lap = NormalizedLaplacian::build(&sub, None, Some(&local_nodes))?;
    let k = params.k.min(lap.n());
    let params = EigenParams { k, ..*params };
    let (solved, solved_nodes) = match grouping {
        Some(g) => {
            let first = g.groups[start];
            let local: Vec<u32> = g.groups[start..end].iter().map(|&id| id - first).collect();
            let count = local.iter().copied().max().map_or(0, |m| m as usize + 1);
            let local = Grouping {
                groups: local,
                group_count: count,
            };
            let reduced = reduce_graph(&sub, &local)?;
            let rlap = NormalizedLaplacian::with_self_loops(&reduced.weights, &reduced.self_loops)?;
            let coarse = solve_smallest_k(&rlap, &EigenParams { k: k.min(rlap.n()), ..params })?;
            // u_G D_G^-1/2 broadcast to members is the indicator form; D^1/2 maps it back
            let group_scale = rlap.inv_sqrt_degrees();
            let voxel_scale = lap.inv_sqrt_degrees();
            let start: Vec<Vec<f64>> = coarse
                .vectors
                .iter()
                .map(|u| {
                    local
                        .groups
                        .iter()
                        .zip(voxel_scale)
                        .map(|(&g, &s)| if s > 0.0 { u[g as usize] * group_scale[g as usize] / s } else { 0.0 })
                        .collect()
                })
                .collect();
            let mut refined = refine_smallest_k(&lap, &params, start, REFINE_CYCLES)?;
            refined.applications += coarse.applications;
            refined.cycles += coarse.cycles;
            (refined, count)
        }
        None => (solve_smallest_k(&lap, &params)?, sub.n()),
    };
    let scaling = lap.inv_sqrt_degrees();
    let lifted: Vec<Vec<f64>> = solved
        .vectors
        .iter()
        .map(|u| u.iter().zip(scaling).map(|(v, s)| v * s).collect())
        .collect();
    let volumes: Vec<ScalarVolume> = lifted
        .into_par_iter()
        .map(|mut data| {
            let norm = data.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                data.iter_mut().for_each(|v| *v /= norm);
            }
            ScalarVolume::from_vec(wdims, data).expect("window dims")
        })
        .collect();
    let k = volumes.len();
    Ok(WindowEigen {
        window,
        eigenvalues: solved.values.clone(),
        volumes,
        signs: vec![1.0; k],
        matched_to: vec![None; k],
        diagnostics: Some(WindowDiagnostics {
            nodes: sub.n(),
            solved_nodes,
            applications: solved.applications,
            cycles: solved.cycles,
            residuals: solved.residuals,
        }),
    })
}

/// Restart cycles spent refining vectors lifted from a reduced graph.
const REFINE_CYCLES: usize = 1;

/// Solves every window of `schedule` on the window-restricted graph.
///
/// Edges leaving a window are dropped. With a grouping, the reduced graph is
/// solved, its eigenvectors are broadcast back to the member voxels and then
/// refined on the window's voxel graph, which removes the steps at group
/// borders. Windows run in parallel and are sign-aligned
/// afterwards.
pub fn solve_windows(
    w: &SparseSymMatrix,
    nodes: &NodeMap,
    scale: f64,
    grouping: Option<&Grouping>,
    schedule: &[TemporalWindow],
    params: &EigenParams,
) -> Result<EigenStack> {
    let mut windows: Vec<WindowEigen> = schedule
        .par_iter()
        .enumerate()
        .map(|(i, &win)| {
            solve_window(w, nodes, grouping, win, params).map_err(|e| Error::Window {
                window: i,
                first: win.first,
                end: win.end(),
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    align_windows(&mut windows);
    Ok(EigenStack::new(nodes.dims(), scale, windows))
}

fn overlap_slice(vol: &ScalarVolume, window: TemporalWindow, first: usize, end: usize) -> &[f64] {
    let fl = vol.dims.frame_len();
    &vol.data[(first - window.first) * fl..(end - window.first) * fl]
}

/// Greedy index matching by absolute overlap correlation, then sign fixing.
///
/// The first window's vectors are oriented so that their largest-magnitude
/// entry is positive.
pub fn align_windows(windows: &mut [WindowEigen]) {
    if let Some(first) = windows.first_mut() {
        for (vol, sign) in first.volumes.iter_mut().zip(first.signs.iter_mut()) {
            let peak = vol
                .data
                .iter()
                .copied()
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            if peak < 0.0 {
                vol.data.iter_mut().for_each(|v| *v = -*v);
                *sign = -1.0;
            }
        }
    }
    for i in 1..windows.len() {
        let (done, rest) = windows.split_at_mut(i);
        let prev = &done[i - 1];
        let cur = &mut rest[0];
        let lo = cur.window.first.max(prev.window.first);
        let hi = cur.window.end().min(prev.window.end());
        if lo >= hi {
            continue;
        }
        let mut candidates = Vec::new();
        for (a, pv) in prev.volumes.iter().enumerate() {
            let ps = overlap_slice(pv, prev.window, lo, hi);
            let pn = ps.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (b, cv) in cur.volumes.iter().enumerate() {
                let cs = overlap_slice(cv, cur.window, lo, hi);
                let cn = cs.iter().map(|v| v * v).sum::<f64>().sqrt();
                let dot: f64 = ps.iter().zip(cs).map(|(x, y)| x * y).sum();
                let corr = if pn > 0.0 && cn > 0.0 { dot / (pn * cn) } else { 0.0 };
                candidates.push((corr, a, b));
            }
        }
        candidates.sort_by(|x, y| {
            y.0.abs()
                .total_cmp(&x.0.abs())
                .then(x.1.cmp(&y.1))
                .then(x.2.cmp(&y.2))
        });
        let mut prev_used = vec![false; prev.volumes.len()];
        for (corr, a, b) in candidates {
            if prev_used[a] || cur.matched_to[b].is_some() {
                continue;
            }
            prev_used[a] = true;
            cur.matched_to[b] = Some(a);
            if corr < 0.0 {
                cur.signs[b] = -1.0;
                cur.volumes[b].data.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }
}

/// Cosine correlation of two windows' volumes over their common frames.
pub fn overlap_correlation(a: &WindowEigen, ia: usize, b: &WindowEigen, ib: usize) -> Option<f64> {
    let lo = a.window.first.max(b.window.first);
    let hi = a.window.end().min(b.window.end());
    if lo >= hi {
        return None;
    }
    let xs = overlap_slice(&a.volumes[ia], a.window, lo, hi);
    let ys = overlap_slice(&b.volumes[ib], b.window, lo, hi);
    let dot: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let nx = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = ys.iter().map(|v| v * v).sum::<f64>().sqrt();
    Some(if nx > 0.0 && ny > 0.0 { dot / (nx * ny) } else { 0.0 })
}
