//! Per-pixel colour and texture features.

use crate::video::VideoVolume;

/// Number of feature components per pixel: `L`, `a`, `b`, local variance.
pub const FEATURE_DIM: usize = 4;

/// Local luminance variance is multiplied by this before clamping to 1.
/// The variance of nine values in `[0, 1]` never exceeds 0.25.
pub const VARIANCE_GAIN: f64 = 4.0;

const A_OFFSET: f64 = 110.0;
const AB_RANGE: f64 = 220.0;

pub type Feature = [f64; FEATURE_DIM];

/// CIELAB colour plus local luminance variance for every pixel of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureField {
    pub frame: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<Feature>,
}

impl FeatureField {
    #[inline]
    pub fn at(&self, y: usize, x: usize) -> &Feature {
        &self.data[y * self.width + x]
    }
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// sRGB in `[0, 1]` to CIELAB (D65), each component rescaled to `[0, 1]`.
pub fn rgb_to_lab_unit(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(srgb_to_linear);
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let fx = lab_f(x / 0.950_47);
    let fy = lab_f(y);
    let fz = lab_f(z / 1.088_83);
    let l = 116.0 * fy - 16.0;
    let a = 500.0 * (fx - fy);
    let bb = 200.0 * (fy - fz);
    [
        (l / 100.0).clamp(0.0, 1.0),
        ((a + A_OFFSET) / AB_RANGE).clamp(0.0, 1.0),
        ((bb + A_OFFSET) / AB_RANGE).clamp(0.0, 1.0),
    ]
}

/// Variance over the 3x3 neighbourhood with replicated borders.
pub fn local_variance(values: &[f64], height: usize, width: usize) -> Vec<f64> {
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let v = values[clamp(y as isize + dy, height) * width
                        + clamp(x as isize + dx, width)];
                    sum += v;
                    sum_sq += v * v;
                }
            }
            let mean = sum / 9.0;
            out[y * width + x] = (sum_sq / 9.0 - mean * mean).max(0.0);
        }
    }
    out
}

pub fn compute_features(video: &VideoVolume, t: usize) -> FeatureField {
    let (h, w) = (video.height(), video.width());
    let lab: Vec<[f64; 3]> = video
        .frame(t)
        .chunks_exact(3)
        .map(|p| rgb_to_lab_unit([p[0], p[1], p[2]]))
        .collect();
    let luminance: Vec<f64> = lab.iter().map(|p| p[0]).collect();
    let variance = local_variance(&luminance, h, w);
    let data = lab
        .iter()
        .zip(&variance)
        .map(|(p, &v)| [p[0], p[1], p[2], (v * VARIANCE_GAIN).min(1.0)])
        .collect();
    FeatureField {
        frame: t,
        height: h,
        width: w,
        data,
    }
}
