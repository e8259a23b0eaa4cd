//! Point-wise mutual information affinities learned from a frame's own statistics.
//!
//! For every frame, feature pairs are sampled at short random distances and a
//! kernel density estimate of their joint distribution is cached on a regular
//! grid. The affinity of two features `A`, `B` is
//!
//! ```text
//! exp(PMI_rho(A, B)) = P(A, B)^rho / (P(A) P(B))
//! ```
//!
//! The joint is factorised into three independent channel groups (luminance,
//! dominant chroma axis, local variance), each with its own 2-D density on a
//! `G x G` grid; the PMI of a pair is the sum of the per-group PMIs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Feature, FeatureField};

pub const DEFAULT_RHO: f64 = 1.25;
pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_GRID: usize = 64;
/// Densities are floored here before the PMI ratio is formed.
pub const DENSITY_FLOOR: f64 = 1e-10;
/// Per-group PMI returned by a degenerate (single-valued) group.
pub const DELTA_PMI: f64 = 4.0;
const DELTA_EPS: f64 = 1e-9;

/// Truncated Gaussian law of the sampling distance between pair members.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub count: usize,
    pub mean_distance: f64,
    pub sigma_distance: f64,
    pub min_distance: f64,
    pub max_distance: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            count: DEFAULT_SAMPLES,
            mean_distance: 2.0,
            sigma_distance: 1.5,
            min_distance: 1.0,
            max_distance: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample {
    pub a: Feature,
    pub b: Feature,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSampleSet {
    pub frame: usize,
    pub seed: u64,
    pub samples: Vec<PairSample>,
}

/// Draws `params.count` feature pairs from one frame.
///
/// Locations are uniform, distances follow the truncated Gaussian of `params`
/// and directions are uniform; endpoints are rounded to pixels and any pair
/// whose rounded distance leaves `[min, max]` or whose endpoint leaves the
/// frame is redrawn.
pub fn sample_pairs(ff: &FeatureField, params: &SamplingParams, seed: u64) -> Result<PairSampleSet> {
    let (h, w) = (ff.height, ff.width);
    if h < 8 || w < 8 {
        return Err(Error::FrameTooSmall {
            height: h,
            width: w,
        });
    }
    if !(params.min_distance > 0.0 && params.min_distance <= params.max_distance)
        || params.sigma_distance <= 0.0
    {
        return Err(Error::Config(format!("invalid sampling distance law {params:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(params.mean_distance, params.sigma_distance)
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut samples = Vec::with_capacity(params.count);
    let budget = params.count.saturating_mul(1000).max(100_000);
    let mut attempts = 0usize;
    while samples.len() < params.count {
        attempts += 1;
        if attempts > budget {
            return Err(Error::FrameTooSmall {
                height: h,
                width: w,
            });
        }
        let d: f64 = normal.sample(&mut rng);
        if d < params.min_distance || d > params.max_distance {
            continue;
        }
        let y0 = rng.random_range(0..h) as i64;
        let x0 = rng.random_range(0..w) as i64;
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let dy = (d * angle.sin()).round() as i64;
        let dx = (d * angle.cos()).round() as i64;
        let (y1, x1) = (y0 + dy, x0 + dx);
        if y1 < 0 || x1 < 0 || y1 >= h as i64 || x1 >= w as i64 {
            continue;
        }
        let dist = ((dy * dy + dx * dx) as f64).sqrt();
        if dist < params.min_distance || dist > params.max_distance {
            continue;
        }
        samples.push(PairSample {
            a: *ff.at(y0 as usize, x0 as usize),
            b: *ff.at(y1 as usize, x1 as usize),
            distance: dist,
        });
    }
    Ok(PairSampleSet {
        frame: ff.frame,
        seed,
        samples,
    })
}

/// Symmetric joint probability masses on a `size x size` grid over `[0, 1]^2`,
/// with their row sums as the marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointGrid {
    size: usize,
    mass: Vec<f64>,
    marginal: Vec<f64>,
}

impl JointGrid {
    /// Wraps an explicit table; it is symmetrised and normalised to unit mass.
    pub fn from_masses(size: usize, mass: Vec<f64>) -> Result<Self> {
        if size == 0 || mass.len() != size * size {
            return Err(Error::DimensionMismatch(format!(
                "{} masses for a {size}x{size} grid",
                mass.len()
            )));
        }
        if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::Config("grid masses must be finite and >= 0".into()));
        }
        let mut grid = Self {
            size,
            mass,
            marginal: Vec::new(),
        };
        grid.finish()?;
        Ok(grid)
    }

    fn finish(&mut self) -> Result<()> {
        let g = self.size;
        for i in 0..g {
            for j in i + 1..g {
                let m = 0.5 * (self.mass[i * g + j] + self.mass[j * g + i]);
                self.mass[i * g + j] = m;
                self.mass[j * g + i] = m;
            }
        }
        let total: f64 = self.mass.iter().sum();
        if total <= 0.0 {
            return Err(Error::EmptySamples);
        }
        for m in &mut self.mass {
            *m /= total;
        }
        self.marginal = self.mass.chunks_exact(g).map(|row| row.iter().sum()).collect();
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }

    #[inline]
    fn coord(&self, v: f64) -> (usize, usize, f64) {
        if self.size == 1 {
            return (0, 0, 0.0);
        }
        let u = v.clamp(0.0, 1.0) * (self.size - 1) as f64;
        let lo = (u.floor() as usize).min(self.size - 2);
        (lo, lo + 1, u - lo as f64)
    }

    /// Bilinearly interpolated joint mass.
    pub fn joint(&self, a: f64, b: f64) -> f64 {
        let g = self.size;
        let (i0, i1, fa) = self.coord(a);
        let (j0, j1, fb) = self.coord(b);
        let m = |i: usize, j: usize| self.mass[i * g + j];
        (1.0 - fa) * ((1.0 - fb) * m(i0, j0) + fb * m(i0, j1))
            + fa * ((1.0 - fb) * m(i1, j0) + fb * m(i1, j1))
    }

    /// Linearly interpolated marginal mass.
    pub fn marginal_at(&self, a: f64) -> f64 {
        let (i0, i1, f) = self.coord(a);
        (1.0 - f) * self.marginal[i0] + f * self.marginal[i1]
    }

    /// Binned Gaussian KDE of the symmetrised pairs, bandwidth from Scott's rule.
    fn estimate(pairs: &[(f64, f64)], size: usize) -> Result<Self> {
        let n = 2 * pairs.len();
        let mean = pairs.iter().map(|&(a, b)| a + b).sum::<f64>() / n as f64;
        let var = pairs
            .iter()
            .map(|&(a, b)| (a - mean).powi(2) + (b - mean).powi(2))
            .sum::<f64>()
            / (n as f64 - 1.0).max(1.0);
        // Scott's rule in two dimensions: h = sigma * n^(-1/6)
        let bandwidth = var.sqrt() * (n as f64).powf(-1.0 / 6.0);
        let spacing = (size.max(2) - 1) as f64;
        let sigma_cells = (bandwidth * spacing).max(0.5);

        let g = size;
        let mut hist = vec![0.0; g * g];
        let grid = Self {
            size,
            mass: Vec::new(),
            marginal: Vec::new(),
        };
        for &(a, b) in pairs {
            for (u, v) in [(a, b), (b, a)] {
                let (i0, i1, fu) = grid.coord(u);
                let (j0, j1, fv) = grid.coord(v);
                hist[i0 * g + j0] += (1.0 - fu) * (1.0 - fv);
                hist[i0 * g + j1] += (1.0 - fu) * fv;
                hist[i1 * g + j0] += fu * (1.0 - fv);
                hist[i1 * g + j1] += fu * fv;
            }
        }
        let radius = (4.0 * sigma_cells).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius)
            .map(|k| (-0.5 * (k as f64 / sigma_cells).powi(2)).exp())
            .collect();
        let ksum: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|k| k / ksum).collect();
        let blur_rows = |src: &[f64], transpose: bool| -> Vec<f64> {
            let mut out = vec![0.0; g * g];
            for r in 0..g {
                for c in 0..g {
                    let mut acc = 0.0;
                    for (ki, &kv) in kernel.iter().enumerate() {
                        let cc = c as isize + ki as isize - radius;
                        if cc < 0 || cc >= g as isize {
                            continue;
                        }
                        let idx = if transpose {
                            cc as usize * g + r
                        } else {
                            r * g + cc as usize
                        };
                        acc += kv * src[idx];
                    }
                    if transpose {
                        out[c * g + r] = acc;
                    } else {
                        out[r * g + c] = acc;
                    }
                }
            }
            out
        };
        let smoothed = blur_rows(&blur_rows(&hist, false), true);
        let mut grid = Self {
            size,
            mass: smoothed,
            marginal: Vec::new(),
        };
        grid.finish()?;
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupDensity {
    Grid(JointGrid),
    /// Every sample carried the same value; equal features get a high PMI,
    /// different features a low one.
    Delta { value: f64 },
}

impl GroupDensity {
    #[inline]
    fn pmi(&self, rho: f64, a: f64, b: f64) -> f64 {
        match self {
            GroupDensity::Delta { .. } => {
                if (a - b).abs() <= DELTA_EPS {
                    DELTA_PMI
                } else {
                    -DELTA_PMI
                }
            }
            GroupDensity::Grid(grid) => {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let joint = grid.joint(lo, hi).max(DENSITY_FLOOR);
                let m_lo = grid.marginal_at(lo).max(DENSITY_FLOOR);
                let m_hi = grid.marginal_at(hi).max(DENSITY_FLOOR);
                rho * joint.ln() - (m_lo.ln() + m_hi.ln())
            }
        }
    }
}

/// Principal axis of the `(a, b)` chroma plane of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChromaAxis {
    pub mean: [f64; 2],
    pub direction: [f64; 2],
}

impl ChromaAxis {
    pub const NEUTRAL: ChromaAxis = ChromaAxis {
        mean: [0.5, 0.5],
        direction: [1.0, 0.0],
    };

    fn fit(features: impl Iterator<Item = Feature> + Clone) -> Self {
        let n = features.clone().count().max(1) as f64;
        let (sa, sb) = features
            .clone()
            .fold((0.0, 0.0), |acc, f| (acc.0 + f[1], acc.1 + f[2]));
        let mean = [sa / n, sb / n];
        let (mut caa, mut cab, mut cbb) = (0.0, 0.0, 0.0);
        for f in features {
            let (da, db) = (f[1] - mean[0], f[2] - mean[1]);
            caa += da * da;
            cab += da * db;
            cbb += db * db;
        }
        // leading eigenvector of [[caa, cab], [cab, cbb]]
        let half_diff = 0.5 * (caa - cbb);
        let lead = 0.5 * (caa + cbb) + (half_diff * half_diff + cab * cab).sqrt();
        let mut dir = if cab.abs() > 1e-300 {
            [lead - cbb, cab]
        } else if caa >= cbb {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        };
        let norm = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        dir = [dir[0] / norm, dir[1] / norm];
        if dir[0] < 0.0 || (dir[0] == 0.0 && dir[1] < 0.0) {
            dir = [-dir[0], -dir[1]];
        }
        Self {
            mean,
            direction: dir,
        }
    }

    #[inline]
    pub fn project(&self, f: &Feature) -> f64 {
        let p = (f[1] - self.mean[0]) * self.direction[0] + (f[2] - self.mean[1]) * self.direction[1];
        (0.5 + p).clamp(0.0, 1.0)
    }
}

/// Channel groups whose PMIs are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureGroup {
    Luminance,
    Chroma,
    Variance,
}

pub const GROUPS: [FeatureGroup; 3] = [
    FeatureGroup::Luminance,
    FeatureGroup::Chroma,
    FeatureGroup::Variance,
];

/// Fitted PMI model of one frame. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmiModel {
    rho: f64,
    chroma: ChromaAxis,
    groups: [GroupDensity; 3],
}

impl PmiModel {
    /// Assembles a model from explicit per-group densities (luminance, chroma, variance).
    pub fn from_groups(rho: f64, chroma: ChromaAxis, groups: [GroupDensity; 3]) -> Self {
        Self { rho, chroma, groups }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        Self {
            rho,
            ..self.clone()
        }
    }

    pub fn groups(&self) -> &[GroupDensity; 3] {
        &self.groups
    }

    pub fn chroma_axis(&self) -> &ChromaAxis {
        &self.chroma
    }

    /// True when every group is degenerate.
    pub fn is_delta(&self) -> bool {
        self.groups
            .iter()
            .all(|g| matches!(g, GroupDensity::Delta { .. }))
    }

    #[inline]
    pub fn project(&self, group: FeatureGroup, f: &Feature) -> f64 {
        match group {
            FeatureGroup::Luminance => f[0],
            FeatureGroup::Chroma => self.chroma.project(f),
            FeatureGroup::Variance => f[3],
        }
    }

    /// `PMI_rho(f1, f2)`, symmetric in its arguments bit for bit.
    pub fn pmi(&self, f1: &Feature, f2: &Feature) -> f64 {
        GROUPS
            .iter()
            .zip(&self.groups)
            .map(|(&g, density)| density.pmi(self.rho, self.project(g, f1), self.project(g, f2)))
            .sum()
    }
}

/// Fits the per-group grid densities to a sample set.
pub fn fit_density(ps: &PairSampleSet, rho: f64, grid_size: usize) -> Result<PmiModel> {
    if ps.samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if grid_size < 2 {
        return Err(Error::Config(format!("grid size must be >= 2, got {grid_size}")));
    }
    let chroma = ChromaAxis::fit(ps.samples.iter().flat_map(|s| [s.a, s.b]));
    let mut model = PmiModel {
        rho,
        chroma,
        groups: [
            GroupDensity::Delta { value: 0.0 },
            GroupDensity::Delta { value: 0.0 },
            GroupDensity::Delta { value: 0.0 },
        ],
    };
    for (slot, &group) in GROUPS.iter().enumerate() {
        let pairs: Vec<(f64, f64)> = ps
            .samples
            .iter()
            .map(|s| (model.project(group, &s.a), model.project(group, &s.b)))
            .collect();
        let (lo, hi) = pairs
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        model.groups[slot] = if hi - lo <= DELTA_EPS {
            GroupDensity::Delta { value: lo }
        } else {
            GroupDensity::Grid(JointGrid::estimate(&pairs, grid_size)?)
        };
    }
    Ok(model)
}

/// `exp(PMI_rho(f1, f2)) = P(f1, f2)^rho / (P(f1) P(f2))`.
#[inline]
pub fn pmi_affinity(model: &PmiModel, f1: &Feature, f2: &Feature) -> f64 {
    model.pmi(f1, f2).exp()
}
