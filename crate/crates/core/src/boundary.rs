//! Oriented spatio-temporal boundaries from eigenvector volumes.
//!
//! Nine channels per voxel: eight in-frame orientations `pi * o / 8` (the
//! direction of the gradient, i.e. the edge normal) and one temporal channel
//! holding the change between frame `t` and `t + 1`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::{gradients, orientation_angle, smooth, ORIENTATIONS};
use crate::spectral::EigenStack;
use crate::video::{upsample_field, Dims, ScalarVolume};

pub const TEMPORAL_CHANNEL: usize = ORIENTATIONS;
pub const CHANNEL_COUNT: usize = ORIENTATIONS + 1;

/// Eigenvalues at or below this carry no boundary information and are skipped.
const NULL_EIGENVALUE: f64 = 1e-9;
const RESPONSE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientParams {
    /// Standard deviation of the Gaussian derivative filters, in pixels.
    pub sigma: f64,
    /// Percentile of all responses mapped to 1.
    pub normalize_percentile: f64,
}

impl Default for GradientParams {
    fn default() -> Self {
        Self {
            sigma: 1.5,
            normalize_percentile: 99.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrientedBoundaryVolume {
    channels: Vec<ScalarVolume>,
    scale: f64,
}

impl OrientedBoundaryVolume {
    pub fn new(channels: Vec<ScalarVolume>, scale: f64) -> Result<Self> {
        if channels.len() != CHANNEL_COUNT {
            return Err(Error::DimensionMismatch(format!(
                "{} channels, expected {CHANNEL_COUNT}",
                channels.len()
            )));
        }
        let dims = channels[0].dims;
        if channels.iter().any(|c| c.dims != dims) {
            return Err(Error::DimensionMismatch("channel dims differ".into()));
        }
        Ok(Self { channels, scale })
    }

    pub fn zeros(dims: Dims, scale: f64) -> Self {
        Self {
            channels: vec![ScalarVolume::zeros(dims); CHANNEL_COUNT],
            scale,
        }
    }

    pub fn dims(&self) -> Dims {
        self.channels[0].dims
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn channel(&self, c: usize) -> &ScalarVolume {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[ScalarVolume] {
        &self.channels
    }

    /// Zeroes the temporal response between frames `t` and `t + 1`.
    pub fn clear_temporal(&mut self, t: usize) {
        self.channels[TEMPORAL_CHANNEL].frame_mut(t).fill(0.0);
    }

    /// Maximum over the eight spatial channels.
    pub fn spatial_max(&self) -> ScalarVolume {
        let mut out = ScalarVolume::zeros(self.dims());
        for c in &self.channels[..ORIENTATIONS] {
            for (o, &v) in out.data.iter_mut().zip(&c.data) {
                *o = o.max(v);
            }
        }
        out
    }

    /// Maximum over all nine channels.
    pub fn strength(&self) -> ScalarVolume {
        let mut out = self.spatial_max();
        for (o, &v) in out.data.iter_mut().zip(&self.channels[TEMPORAL_CHANNEL].data) {
            *o = o.max(v);
        }
        out
    }
}

/// Change of the spatial pattern between two frames of one eigenvector.
///
/// Both frames are scaled to unit RMS and sign-aligned before differencing,
/// and the difference is rescaled by the geometric mean of the two RMS
/// values. A mode that only changes amplitude or sign over time therefore
/// has no temporal response, while a translated pattern of constant
/// amplitude keeps its full difference.
fn pattern_change(a: &[f64], b: &[f64]) -> Vec<f64> {
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let (ra, rb) = (rms(a), rms(b));
    if ra == 0.0 || rb == 0.0 {
        return a.iter().zip(b).map(|(x, y)| (y - x).abs()).collect();
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let sign = if dot < 0.0 { -1.0 } else { 1.0 };
    let scale = (ra * rb).sqrt();
    a.iter()
        .zip(b)
        .map(|(x, y)| scale * (y / rb - sign * x / ra).abs())
        .collect()
}

fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

/// Oriented gradient magnitudes of all eigenvector volumes of one scale.
///
/// Every non-null eigenvector is weighted by `1 / sqrt(lambda)`. Windows
/// covering a frame are averaged uniformly. The result is divided by the
/// requested percentile of all responses and clamped to `[0, 1]`.
pub fn oriented_gradients(es: &EigenStack, params: &GradientParams) -> OrientedBoundaryVolume {
    let dims = es.dims();
    let (h, w) = (dims.height, dims.width);
    let fl = dims.frame_len();
    let mut acc = vec![ScalarVolume::zeros(dims); CHANNEL_COUNT];
    let mut spatial_count = vec![0usize; dims.frames];
    let mut temporal_count = vec![0usize; dims.frames];

    for win in es.windows() {
        let t0 = win.window.first;
        let len = win.window.len;
        for t in t0..t0 + len {
            spatial_count[t] += 1;
            if t + 1 < t0 + len {
                temporal_count[t] += 1;
            }
        }
        // (frame offset, channel responses) computed in parallel, summed in order
        let per_frame: Vec<Vec<Vec<f64>>> = (0..len)
            .into_par_iter()
            .map(|f| {
                let mut out = vec![vec![0.0; fl]; CHANNEL_COUNT];
                for (vol, &lambda) in win.volumes.iter().zip(&win.eigenvalues) {
                    if lambda <= NULL_EIGENVALUE {
                        continue;
                    }
                    let weight = 1.0 / lambda.sqrt();
                    let frame = vol.frame(f);
                    let (gx, gy) = gradients(frame, h, w, params.sigma);
                    for (o, chan) in out.iter_mut().take(ORIENTATIONS).enumerate() {
                        let (s, c) = orientation_angle(o).sin_cos();
                        for ((dst, &x), &y) in chan.iter_mut().zip(&gx).zip(&gy) {
                            *dst += weight * (c * x + s * y).abs();
                        }
                    }
                    if f + 1 < len {
                        let diff = pattern_change(frame, vol.frame(f + 1));
                        let smoothed = smooth(&diff, h, w, params.sigma);
                        for (dst, v) in out[TEMPORAL_CHANNEL].iter_mut().zip(smoothed) {
                            *dst += weight * v;
                        }
                    }
                }
                out
            })
            .collect();
        for (f, chans) in per_frame.into_iter().enumerate() {
            for (c, values) in chans.into_iter().enumerate() {
                for (dst, v) in acc[c].frame_mut(t0 + f).iter_mut().zip(values) {
                    *dst += v;
                }
            }
        }
    }

    for (c, vol) in acc.iter_mut().enumerate() {
        let counts = if c == TEMPORAL_CHANNEL {
            &temporal_count
        } else {
            &spatial_count
        };
        for (t, &n) in counts.iter().enumerate() {
            let frame = vol.frame_mut(t);
            if n == 0 {
                frame.fill(0.0);
            } else {
                frame.iter_mut().for_each(|v| *v /= n as f64);
            }
        }
    }

    // rounding residue of filtering constant regions
    for c in acc.iter_mut() {
        c.data.iter_mut().filter(|v| **v < RESPONSE_FLOOR).for_each(|v| *v = 0.0);
    }
    let all: Vec<f64> = acc.iter().flat_map(|c| c.data.iter().copied()).collect();
    let mut norm = percentile(&all, params.normalize_percentile);
    if norm <= 0.0 {
        norm = all.iter().copied().fold(0.0, f64::max);
    }
    if norm > 0.0 {
        for c in acc.iter_mut() {
            c.data.iter_mut().for_each(|v| *v = (*v / norm).min(1.0));
        }
    }
    OrientedBoundaryVolume {
        channels: acc,
        scale: es.scale(),
    }
}

/// Default weight of a scale in the multiscale sum.
pub fn default_scale_weight(scale: f64) -> f64 {
    if (scale - 1.0).abs() < 1e-9 {
        0.5
    } else if (scale - 0.5).abs() < 1e-9 {
        0.3
    } else if (scale - 0.25).abs() < 1e-9 {
        0.2
    } else {
        0.0
    }
}

/// Upsamples each scale to `target_h x target_w` and takes the weighted sum.
///
/// `weights[k]` goes with `volumes[k]`; weights are renormalised over the
/// scales that are present.
pub fn multiscale_aggregate(
    volumes: &[OrientedBoundaryVolume],
    weights: &[f64],
    target_h: usize,
    target_w: usize,
) -> Result<OrientedBoundaryVolume> {
    if volumes.is_empty() || volumes.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} boundary volumes with {} weights",
            volumes.len(),
            weights.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config("scale weights must sum to a positive value".into()));
    }
    let frames = volumes[0].dims().frames;
    let mut out = OrientedBoundaryVolume::zeros(Dims::new(frames, target_h, target_w), 1.0);
    for (vol, &wgt) in volumes.iter().zip(weights) {
        let w = wgt / total;
        let ups: Vec<ScalarVolume> = vol
            .channels
            .par_iter()
            .map(|c| upsample_field(c, vol.scale, target_h, target_w))
            .collect::<Result<_>>()?;
        for (dst, src) in out.channels.iter_mut().zip(ups) {
            for (d, s) in dst.data.iter_mut().zip(src.data) {
                *d += w * s;
            }
        }
    }
    for c in out.channels.iter_mut() {
        c.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Spatial boundaries gated by temporal change on either side of the frame.
pub fn motion_boundaries(obv: &OrientedBoundaryVolume) -> Result<ScalarVolume> {
    let dims = obv.dims();
    if dims.frames < 2 {
        return Err(Error::InvalidVolume(
            "motion boundaries need at least two frames".into(),
        ));
    }
    let spatial = obv.spatial_max();
    let temporal = obv.channel(TEMPORAL_CHANNEL);
    let mut out = ScalarVolume::zeros(dims);
    for t in 0..dims.frames {
        let after = temporal.frame(t);
        let before = (t > 0).then(|| temporal.frame(t - 1));
        let s = spatial.frame(t);
        for (i, dst) in out.frame_mut(t).iter_mut().enumerate() {
            let tm = before.map_or(0.0, |b| b[i]);
            *dst = s[i] * tm.max(after[i]);
        }
    }
    // the last frame's own temporal channel is zero by construction
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{EigenStack, TemporalWindow, WindowEigen};

    fn stack(dims: Dims, vols: Vec<(f64, ScalarVolume)>, window_len: usize) -> EigenStack {
        let windows = (0..=dims.frames - window_len)
            .map(|t0| WindowEigen::from_volumes(
                TemporalWindow { first: t0, len: window_len },
                vols.iter()
                    .map(|(l, v)| {
                        let frames = (t0..t0 + window_len).flat_map(|t| v.frame(t).to_vec()).collect();
                        (*l, ScalarVolume::from_vec(Dims::new(window_len, dims.height, dims.width), frames).unwrap())
                    })
                    .collect(),
            ))
            .collect();
        EigenStack::new(dims, 1.0, windows)
    }

    fn vertical_step(dims: Dims, at: impl Fn(usize) -> usize) -> ScalarVolume {
        let data = (0..dims.len())
            .map(|i| {
                let v = dims.voxel(i);
                if v.x >= at(v.t) { 1.0 } else { -1.0 }
            })
            .collect();
        ScalarVolume::from_vec(dims, data).unwrap()
    }

    #[test]
    fn constant_eigenvectors_give_zero() {
        let dims = Dims::new(3, 8, 8);
        let es = stack(dims, vec![(0.0, ScalarVolume::filled(dims, 0.1)), (0.3, ScalarVolume::filled(dims, 0.2))], 3);
        let obv = oriented_gradients(&es, &GradientParams::default());
        assert!(obv.channels().iter().all(|c| c.data.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn static_vertical_step_responds_in_horizontal_gradient_channel() {
        let dims = Dims::new(3, 10, 12);
        let es = stack(dims, vec![(0.2, vertical_step(dims, |_| 6))], 3);
        let obv = oriented_gradients(&es, &GradientParams::default());
        assert!(obv.channel(TEMPORAL_CHANNEL).data.iter().all(|&v| v == 0.0));
        for t in 0..3 {
            let best = (0..ORIENTATIONS)
                .max_by(|&a, &b| obv.channel(a).get(t, 5, 6).total_cmp(&obv.channel(b).get(t, 5, 6)))
                .unwrap();
            assert_eq!(best, 0);
            assert!(obv.channel(4).get(t, 5, 6).abs() < 1e-12);
        }
    }

    #[test]
    fn moving_step_fills_temporal_channel_around_the_strip() {
        let dims = Dims::new(2, 8, 16);
        let es = stack(dims, vec![(0.2, vertical_step(dims, |t| if t == 0 { 6 } else { 9 }))], 2);
        let obv = oriented_gradients(&es, &GradientParams::default());
        let temporal = obv.channel(TEMPORAL_CHANNEL);
        for y in 0..8 {
            for x in 6..9 {
                assert!(temporal.get(0, y, x) > 0.5, "x={x}");
            }
            // decays away from the strip; last frame has no successor
            assert!(temporal.get(0, y, 0) < 1e-3 && temporal.get(0, y, 15) < 1e-3);
            assert!((0..16).all(|x| temporal.get(1, y, x) == 0.0));
            let argmax = (0..16).max_by(|&a, &b| temporal.get(0, y, a).total_cmp(&temporal.get(0, y, b))).unwrap();
            assert!((6..9).contains(&argmax));
        }
    }

    #[test]
    fn mirroring_permutes_orientations() {
        let dims = Dims::new(3, 9, 11);
        let data: Vec<f64> = (0..dims.len()).map(|i| ((i * 7919) % 97) as f64 / 97.0).collect();
        let vol = ScalarVolume::from_vec(dims, data).unwrap();
        let mirrored = ScalarVolume::from_vec(
            dims,
            (0..dims.len())
                .map(|i| {
                    let v = dims.voxel(i);
                    vol.get(v.t, v.y, dims.width - 1 - v.x)
                })
                .collect(),
        )
        .unwrap();
        let a = oriented_gradients(&stack(dims, vec![(0.4, vol)], 2), &GradientParams::default());
        let b = oriented_gradients(&stack(dims, vec![(0.4, mirrored)], 2), &GradientParams::default());
        for o in 0..CHANNEL_COUNT {
            let m = if o == TEMPORAL_CHANNEL { o } else { (ORIENTATIONS - o) % ORIENTATIONS };
            for i in 0..dims.len() {
                let v = dims.voxel(i);
                let x = a.channel(o).get(v.t, v.y, v.x);
                let y = b.channel(m).get(v.t, v.y, dims.width - 1 - v.x);
                assert!((x - y).abs() < 1e-12, "o={o}");
            }
        }
    }

    #[test]
    fn static_input_has_identical_spatial_frames() {
        let dims = Dims::new(4, 8, 8);
        let es = stack(dims, vec![(0.5, vertical_step(dims, |_| 3))], 3);
        let obv = oriented_gradients(&es, &GradientParams::default());
        for c in 0..ORIENTATIONS {
            for t in 1..4 {
                assert_eq!(obv.channel(c).frame(t), obv.channel(c).frame(0));
            }
        }
        assert!(obv.channel(TEMPORAL_CHANNEL).data.iter().all(|&v| v == 0.0));
    }

    fn filled(dims: Dims, scale: f64, v: f64) -> OrientedBoundaryVolume {
        OrientedBoundaryVolume::new(vec![ScalarVolume::filled(dims, v); CHANNEL_COUNT], scale).unwrap()
    }

    #[test]
    fn multiscale_endpoints() {
        let full = Dims::new(2, 8, 8);
        let fine = OrientedBoundaryVolume::new(
            (0..CHANNEL_COUNT)
                .map(|c| ScalarVolume::from_vec(full, (0..full.len()).map(|i| ((i + c) % 5) as f64 / 4.0).collect()).unwrap())
                .collect(),
            1.0,
        )
        .unwrap();
        let only = multiscale_aggregate(std::slice::from_ref(&fine), &[0.5], 8, 8).unwrap();
        assert_eq!(only, fine);

        let zeros_half = filled(Dims::new(2, 4, 4), 0.5, 0.0);
        let zeros_quarter = filled(Dims::new(2, 2, 2), 0.25, 0.0);
        let agg = multiscale_aggregate(&[fine.clone(), zeros_half, zeros_quarter], &[0.5, 0.3, 0.2], 8, 8).unwrap();
        for (a, b) in agg.channels().iter().zip(fine.channels()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - 0.5 * y).abs() < 1e-15);
            }
        }

        let ones = multiscale_aggregate(
            &[filled(full, 1.0, 1.0), filled(Dims::new(2, 4, 4), 0.5, 1.0), filled(Dims::new(2, 2, 2), 0.25, 1.0)],
            &[0.5, 0.3, 0.2],
            8,
            8,
        )
        .unwrap();
        assert!(ones.channels().iter().all(|c| c.data.iter().all(|&v| (v - 1.0).abs() < 1e-15)));
    }

    #[test]
    fn motion_boundary_products() {
        let dims = Dims::new(3, 4, 4);
        let mut channels = vec![ScalarVolume::filled(dims, 0.6); CHANNEL_COUNT];
        channels[TEMPORAL_CHANNEL] = ScalarVolume::zeros(dims);
        let static_obv = OrientedBoundaryVolume::new(channels.clone(), 1.0).unwrap();
        assert!(motion_boundaries(&static_obv).unwrap().data.iter().all(|&v| v == 0.0));

        let mut no_spatial = vec![ScalarVolume::zeros(dims); CHANNEL_COUNT];
        no_spatial[TEMPORAL_CHANNEL] = ScalarVolume::filled(dims, 0.9);
        let obv = OrientedBoundaryVolume::new(no_spatial, 1.0).unwrap();
        assert!(motion_boundaries(&obv).unwrap().data.iter().all(|&v| v == 0.0));

        channels[TEMPORAL_CHANNEL].set(0, 1, 1, 0.5);
        let obv = OrientedBoundaryVolume::new(channels, 1.0).unwrap();
        let m = motion_boundaries(&obv).unwrap();
        assert!((m.get(0, 1, 1) - 0.3).abs() < 1e-15);
        assert!((m.get(1, 1, 1) - 0.3).abs() < 1e-15);
        assert_eq!(m.get(2, 1, 1), 0.0);
    }
}
