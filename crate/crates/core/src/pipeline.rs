//! End-to-end orchestration: video in, boundaries and segmentation hierarchy out.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::{boundary_prior, build_from_features, Grouping, PreGrouper};
use crate::boundary::{
    motion_boundaries, multiscale_aggregate, oriented_gradients, OrientedBoundaryVolume,
    TEMPORAL_CHANNEL,
};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::features::compute_features;
use crate::io::{load_frames, write_json, write_outputs, Raster};
use crate::pmi::{fit_density, sample_pairs, PmiModel};
use crate::spectral::{solve_windows, window_schedule, EigenStack, TemporalWindow, WindowDiagnostics};
use crate::ucm::{build_ucm, rasterize_ucm, threshold_segmentation, MergeTree, SegmentationVolume, UcmRaster};
use crate::video::{ScalarVolume, VideoVolume};
use crate::watershed::{arc_weights, watershed3d, BasinLabeling};

pub const RUN_MANIFEST: &str = "run.json";
pub const CONFIG_ECHO: &str = "config.txt";
pub const MERGE_TREE: &str = "merge_tree.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window: TemporalWindow,
    pub eigenvalues: Vec<f64>,
    pub signs: Vec<f64>,
    pub matched_to: Vec<Option<usize>>,
    pub solver: Option<WindowDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    pub scale: f64,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub nodes: usize,
    pub edges: usize,
    pub groups: Option<usize>,
    pub reduction_factor: Option<f64>,
    pub prior_threshold: Option<f64>,
    pub windows: Vec<WindowReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyReport {
    pub basins: usize,
    pub arcs: usize,
    pub merges: usize,
    pub max_saliency: f64,
    pub region_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub input: Option<PathBuf>,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub scales: Vec<ScaleReport>,
    pub hierarchy: Option<HierarchyReport>,
    /// Normalised level thresholds (fractions of the largest saliency).
    pub thresholds: Vec<f64>,
    /// Wall-clock seconds per stage, in execution order.
    pub timings: Vec<(String, f64)>,
}

/// Everything computed up to and including the boundary stage.
#[derive(Debug, Clone)]
pub struct BoundaryResult {
    pub boundaries: OrientedBoundaryVolume,
    pub motion: Option<ScalarVolume>,
    pub scales: Vec<ScaleReport>,
    /// Eigenvector stacks, kept only when requested.
    pub stacks: Vec<EigenStack>,
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub boundary: BoundaryResult,
    pub basins: BasinLabeling,
    pub arc_weights: Vec<f64>,
    pub tree: MergeTree,
    pub thresholds: Vec<f64>,
    pub levels: Vec<SegmentationVolume>,
    pub ucm: UcmRaster,
    pub hierarchy: HierarchyReport,
}

struct Timer(Vec<(String, f64)>);

impl Timer {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        });
        let secs = start.elapsed().as_secs_f64();
        log::info!("{stage}: {secs:.2}s");
        self.0.push((stage.to_string(), secs));
        out
    }
}

fn frame_seed(seed: u64, scale_index: usize, t: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((scale_index as u64) << 32)
        .wrapping_add(t as u64)
}

/// For every frame, the first frame of the run of bit-identical frames it belongs to.
fn repeat_sources(video: &VideoVolume) -> Vec<usize> {
    let mut source: Vec<usize> = Vec::with_capacity(video.frames());
    for t in 0..video.frames() {
        let same = t > 0 && video.frame(t) == video.frame(t - 1);
        source.push(if same { source[t - 1] } else { t });
    }
    source
}

/// Fits one PMI model per frame.
///
/// A frame identical to its predecessor reuses the predecessor's model.
pub fn fit_models(video: &VideoVolume, config: &PipelineConfig, scale_index: usize) -> Result<Vec<PmiModel>> {
    let sampling = config.sampling();
    let source = repeat_sources(video);
    let fitted: Vec<Option<PmiModel>> = (0..video.frames())
        .into_par_iter()
        .map(|t| {
            if source[t] != t {
                return Ok(None);
            }
            let ff = compute_features(video, t);
            let ps = sample_pairs(&ff, &sampling, frame_seed(config.seed, scale_index, t))?;
            fit_density(&ps, config.rho, config.grid).map(Some)
        })
        .collect::<Result<_>>()?;
    Ok(source
        .iter()
        .map(|&s| fitted[s].clone().expect("source frames are fitted"))
        .collect())
}

fn scale_video(video: &VideoVolume, scale: f64) -> Result<VideoVolume> {
    if scale >= 1.0 {
        Ok(video.clone())
    } else {
        video.downsample((1.0 / scale).round() as usize)
    }
}

fn grouping_for(video: &VideoVolume, config: &PipelineConfig) -> (f64, Grouping) {
    let prior = boundary_prior(video, config.prior_sigma);
    let grouper = PreGrouper::new(&prior);
    match config.prior_threshold {
        Some(theta) => (theta, grouper.group(theta)),
        None => grouper.tune(config.target_reduction),
    }
}

fn solve_scale(
    video: &VideoVolume,
    config: &PipelineConfig,
    scale_index: usize,
    out_dir: Option<&Path>,
    timer: &mut Timer,
) -> Result<(OrientedBoundaryVolume, ScaleReport, EigenStack)> {
    let scale = config.scales[scale_index];
    let sv = timer.run("downsample", || scale_video(video, scale))?;
    let dims = sv.dims();
    let models = timer.run("pmi", || fit_models(&sv, config, scale_index))?;
    let (w, nodes) = timer.run("affinity", || {
        let features: Vec<_> = (0..dims.frames)
            .into_par_iter()
            .map(|t| compute_features(&sv, t))
            .collect();
        build_from_features(dims, &features, &models, &config.affinity())
    })?;
    if config.dump_affinity {
        if let Some(dir) = out_dir {
            let path = dir.join(format!("affinity_scale_{scale}.txt"));
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            w.write_triplets(std::io::BufWriter::new(file))
                .map_err(|e| Error::io(&path, e))?;
        }
    }
    let grouping = if config.reduction && scale >= 1.0 {
        Some(timer.run("pre_group", || Ok(grouping_for(&sv, config)))?)
    } else {
        None
    };
    let schedule = if config.full_video {
        window_schedule(dims.frames, dims.frames)
    } else {
        window_schedule(dims.frames, config.window[scale_index])
    };
    let stack = timer.run("eigen", || {
        solve_windows(
            &w,
            &nodes,
            scale,
            grouping.as_ref().map(|g| &g.1),
            &schedule,
            &config.eigen(),
        )
    })?;
    let obv = timer.run("gradients", || Ok(oriented_gradients(&stack, &config.gradient())))?;
    let report = ScaleReport {
        scale,
        frames: dims.frames,
        height: dims.height,
        width: dims.width,
        nodes: w.n(),
        edges: w.nnz() / 2,
        groups: grouping.as_ref().map(|g| g.1.group_count),
        reduction_factor: grouping.as_ref().map(|g| g.1.reduction_factor()),
        prior_threshold: grouping.as_ref().map(|g| g.0),
        windows: stack
            .windows()
            .iter()
            .map(|we| WindowReport {
                window: we.window,
                eigenvalues: we.eigenvalues.clone(),
                signs: we.signs.clone(),
                matched_to: we.matched_to.clone(),
                solver: we.diagnostics.clone(),
            })
            .collect(),
    };
    Ok((obv, report, stack))
}

fn boundaries_with_timer(
    video: &VideoVolume,
    config: &PipelineConfig,
    out_dir: Option<&Path>,
    timer: &mut Timer,
) -> Result<BoundaryResult> {
    config.validate()?;
    let mut volumes = Vec::new();
    let mut weights = Vec::new();
    let mut scales = Vec::new();
    let mut stacks = Vec::new();
    for idx in 0..config.scales.len() {
        match solve_scale(video, config, idx, out_dir, timer) {
            Ok((obv, report, stack)) => {
                volumes.push(obv);
                weights.push(config.scale_weights[idx]);
                scales.push(report);
                if config.dump_eigenvectors {
                    stacks.push(stack);
                }
            }
            Err(Error::Stage { source, .. })
                if config.scales[idx] < 1.0
                    && matches!(*source, Error::TooSmall { .. } | Error::FrameTooSmall { .. }) =>
            {
                log::warn!("skipping scale {}: {source}", config.scales[idx]);
            }
            Err(e) => return Err(e),
        }
    }
    let mut boundaries = timer.run("multiscale", || {
        multiscale_aggregate(&volumes, &weights, video.height(), video.width())
    })?;
    for t in 1..video.frames() {
        if video.frame(t) == video.frame(t - 1) {
            boundaries.clear_temporal(t - 1);
        }
    }
    let motion = if video.frames() >= 2 {
        Some(timer.run("motion", || motion_boundaries(&boundaries))?)
    } else {
        None
    };
    Ok(BoundaryResult {
        boundaries,
        motion,
        scales,
        stacks,
    })
}

/// Runs every stage up to the multiscale boundary volume.
pub fn compute_boundaries(video: &VideoVolume, config: &PipelineConfig) -> Result<BoundaryResult> {
    with_pool(config, || boundaries_with_timer(video, config, None, &mut Timer(Vec::new())))
}

fn hierarchy(
    boundary: BoundaryResult,
    config: &PipelineConfig,
    timer: &mut Timer,
) -> Result<SegmentationResult> {
    let obv = &boundary.boundaries;
    let basins = timer.run("watershed", || Ok(watershed3d(obv, config.temporal_weight)))?;
    let weights = timer.run("arc_weights", || Ok(arc_weights(&basins, obv)))?;
    let tree = timer.run("ucm", || build_ucm(&basins, &weights))?;
    let thresholds = config.thresholds();
    let smax = tree.max_saliency();
    let levels: Vec<SegmentationVolume> = timer.run("levels", || {
        Ok(thresholds
            .par_iter()
            .map(|&l| threshold_segmentation(&basins, &tree, l * smax))
            .collect())
    })?;
    let ucm = rasterize_ucm(&basins, &tree);
    let hierarchy = HierarchyReport {
        basins: basins.basin_count(),
        arcs: basins.arcs().len(),
        merges: tree.merges.len(),
        max_saliency: smax,
        region_counts: levels.iter().map(SegmentationVolume::region_count).collect(),
    };
    Ok(SegmentationResult {
        boundary,
        basins,
        arc_weights: weights,
        tree,
        thresholds,
        levels,
        ucm,
        hierarchy,
    })
}

/// The full pipeline in memory.
pub fn segment(video: &VideoVolume, config: &PipelineConfig) -> Result<SegmentationResult> {
    with_pool(config, || {
        let mut timer = Timer(Vec::new());
        let b = boundaries_with_timer(video, config, None, &mut timer)?;
        hierarchy(b, config, &mut timer)
    })
}

fn with_pool<T: Send>(config: &PipelineConfig, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if config.jobs == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} worker threads: {e}", config.jobs)))?;
    pool.install(f)
}

fn write_boundaries(b: &BoundaryResult, out: &Path) -> Result<()> {
    write_outputs(&Raster::Scalar(b.boundaries.spatial_max()), &out.join("boundaries"), 1.0, &[])?;
    write_outputs(
        &Raster::Scalar(b.boundaries.channel(TEMPORAL_CHANNEL).clone()),
        &out.join("temporal_boundaries"),
        1.0,
        &[],
    )?;
    if let Some(m) = &b.motion {
        write_outputs(&Raster::Scalar(m.clone()), &out.join("motion_boundaries"), 1.0, &[])?;
    }
    for stack in &b.stacks {
        for (wi, we) in stack.windows().iter().enumerate() {
            for (vi, vol) in we.volumes.iter().enumerate() {
                let (lo, hi) = vol
                    .data
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                let span = if hi > lo { hi - lo } else { 1.0 };
                let data = vol.data.iter().map(|v| (v - lo) / span).collect();
                let shown = ScalarVolume::from_vec(vol.dims, data)?;
                let dir = out
                    .join("eigenvectors")
                    .join(format!("scale_{}", stack.scale()))
                    .join(format!("window_{wi:03}"))
                    .join(format!("vector_{vi:02}"));
                write_outputs(&Raster::Scalar(shown), &dir, stack.scale(), &[])?;
            }
        }
    }
    Ok(())
}

/// Directory of hierarchy level `l`.
pub fn level_dir(out: &Path, l: usize) -> PathBuf {
    out.join("levels").join(format!("level_{l:03}"))
}

fn write_hierarchy(s: &SegmentationResult, out: &Path) -> Result<()> {
    for (l, seg) in s.levels.iter().enumerate() {
        let raster = Raster::Labels {
            dims: seg.dims(),
            labels: seg.labels().to_vec(),
        };
        write_outputs(&raster, &level_dir(out, l), 1.0, &[s.thresholds[l]])?;
    }
    write_outputs(&Raster::Scalar(s.ucm.spatial.clone()), &out.join("ucm"), 1.0, &s.thresholds)?;
    if let Some(t) = &s.ucm.temporal {
        write_outputs(&Raster::Scalar(t.clone()), &out.join("ucm_temporal"), 1.0, &s.thresholds)?;
    }
    write_json(&out.join(MERGE_TREE), &s.tree)
}

fn prepare(config: &PipelineConfig, input: &Path, output: &Path) -> Result<VideoVolume> {
    config.validate()?;
    let video = load_frames(input, &config.pattern)?;
    std::fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
    std::fs::write(output.join(CONFIG_ECHO), config.to_text())
        .map_err(|e| Error::io(output.join(CONFIG_ECHO), e))?;
    Ok(video)
}

fn manifest(
    config: &PipelineConfig,
    input: &Path,
    video: &VideoVolume,
    scales: Vec<ScaleReport>,
    hierarchy: Option<HierarchyReport>,
    timer: Timer,
) -> RunManifest {
    RunManifest {
        config: config.clone(),
        input: Some(input.to_path_buf()),
        frames: video.frames(),
        height: video.height(),
        width: video.width(),
        scales,
        thresholds: if hierarchy.is_some() { config.thresholds() } else { Vec::new() },
        hierarchy,
        timings: timer.0,
    }
}

/// Full pipeline from an input frame directory to an output directory.
pub fn run_pipeline(config: &PipelineConfig, input: &Path, output: &Path) -> Result<RunManifest> {
    let video = prepare(config, input, output)?;
    with_pool(config, || {
        let mut timer = Timer(Vec::new());
        let b = boundaries_with_timer(&video, config, Some(output), &mut timer)?;
        let s = hierarchy(b, config, &mut timer)?;
        timer.run("write", || {
            write_boundaries(&s.boundary, output)?;
            write_hierarchy(&s, output)
        })?;
        let m = manifest(
            config,
            input,
            &video,
            s.boundary.scales.clone(),
            Some(s.hierarchy.clone()),
            timer,
        );
        write_json(&output.join(RUN_MANIFEST), &m)?;
        Ok(m)
    })
}

/// Pipeline up to the boundary stage, writing boundary and motion rasters.
pub fn run_boundaries(config: &PipelineConfig, input: &Path, output: &Path) -> Result<RunManifest> {
    let video = prepare(config, input, output)?;
    with_pool(config, || {
        let mut timer = Timer(Vec::new());
        let b = boundaries_with_timer(&video, config, Some(output), &mut timer)?;
        timer.run("write", || write_boundaries(&b, output))?;
        let m = manifest(config, input, &video, b.scales, None, timer);
        write_json(&output.join(RUN_MANIFEST), &m)?;
        Ok(m)
    })
}

/// Benchmark results of one segmentation hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bpr: crate::eval::PrCurve,
    pub vpr: crate::eval::PrCurve,
    pub scores: crate::eval::BenchScores,
}

/// Scores `levels` against `gt`; the boundary tolerance is `tolerance_fraction` of the diagonal.
pub fn evaluate(
    levels: &[SegmentationVolume],
    gt: &crate::eval::GroundTruth,
    tolerance_fraction: f64,
) -> Result<EvalReport> {
    let diag = ((gt.height() * gt.height() + gt.width() * gt.width()) as f64).sqrt();
    let bpr = crate::eval::bpr(levels, gt, Some(tolerance_fraction * diag))?;
    let vpr = crate::eval::vpr(levels, gt)?;
    let scores = crate::eval::BenchScores {
        bpr: crate::eval::aggregate_scores(std::slice::from_ref(&bpr))?,
        vpr: crate::eval::aggregate_scores(std::slice::from_ref(&vpr))?,
    };
    Ok(EvalReport { bpr, vpr, scores })
}

/// Reads the hierarchy levels written by [`run_pipeline`].
pub fn read_levels(output: &Path) -> Result<Vec<SegmentationVolume>> {
    let mut levels = Vec::new();
    loop {
        let dir = level_dir(output, levels.len());
        if !dir.is_dir() {
            break;
        }
        let (m, raster) = crate::io::read_outputs(&dir)?;
        let Raster::Labels { dims, labels } = raster else {
            return Err(Error::InvalidVolume(format!("{} does not hold labels", dir.display())));
        };
        let threshold = m.thresholds.first().copied().unwrap_or(0.0);
        levels.push(SegmentationVolume::from_labels(dims, labels, threshold));
    }
    if levels.is_empty() {
        return Err(Error::MissingDirectory(output.join("levels")));
    }
    Ok(levels)
}
