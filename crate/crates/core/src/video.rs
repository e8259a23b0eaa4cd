//! Spatio-temporal voxel grids and spatial rescaling.
//!
//! All volumes are stored frame-major, then row-major: voxel `(t, y, x)` lives
//! at `(t * height + y) * width + x`. Colour volumes interleave their channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of colour channels carried by a [`VideoVolume`].
pub const CHANNELS: usize = 3;

/// Position of a voxel in a `T x H x W` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoxelIndex {
    pub t: usize,
    pub y: usize,
    pub x: usize,
}

impl VoxelIndex {
    pub fn new(t: usize, y: usize, x: usize) -> Self {
        Self { t, y, x }
    }
}

/// Shape of a `T x H x W` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub fn new(frames: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            height,
            width,
        }
    }

    #[inline]
    pub fn frame_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.frames * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, t: usize, y: usize, x: usize) -> usize {
        (t * self.height + y) * self.width + x
    }

    #[inline]
    pub fn voxel(&self, index: usize) -> VoxelIndex {
        let x = index % self.width;
        let rest = index / self.width;
        VoxelIndex {
            t: rest / self.height,
            y: rest % self.height,
            x,
        }
    }
}

/// Colour video stored as a `T x H x W x 3` grid of values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoVolume {
    dims: Dims,
    scale: f64,
    data: Vec<f64>,
}

impl VideoVolume {
    /// Wraps interleaved RGB data at full resolution.
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::with_scale(Dims::new(frames, height, width), 1.0, data)
    }

    pub fn with_scale(dims: Dims, scale: f64, data: Vec<f64>) -> Result<Self> {
        if dims.frames == 0 || dims.height < 2 || dims.width < 2 {
            return Err(Error::InvalidVolume(format!(
                "need T>=1, H>=2, W>=2, got {}x{}x{}",
                dims.frames, dims.height, dims.width
            )));
        }
        if data.len() != dims.len() * CHANNELS {
            return Err(Error::InvalidVolume(format!(
                "expected {} values, got {}",
                dims.len() * CHANNELS,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidVolume(format!(
                "value {bad} outside [0, 1]"
            )));
        }
        Ok(Self { dims, scale, data })
    }

    /// Builds a volume from one grey value per voxel, replicated over the channels.
    pub fn from_gray(frames: usize, height: usize, width: usize, gray: &[f64]) -> Result<Self> {
        let data = gray
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g, CHANNELS))
            .collect();
        Self::new(frames, height, width, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn frames(&self) -> usize {
        self.dims.frames
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    /// Spatial scale relative to the input resolution (1, 1/2 or 1/4).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, t: usize, y: usize, x: usize) -> [f64; CHANNELS] {
        let i = self.dims.index(t, y, x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// The interleaved RGB values of frame `t`.
    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.dims.frame_len() * CHANNELS;
        &self.data[t * n..(t + 1) * n]
    }

    /// Spatial box-filter downsampling by `factor` (2 or 4); time is untouched.
    ///
    /// Output dimensions are `ceil(H / factor) x ceil(W / factor)`. Blocks that
    /// hang over the border average only the pixels that exist.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor != 2 && factor != 4 {
            return Err(Error::InvalidVolume(format!(
                "downsampling factor must be 2 or 4, got {factor}"
            )));
        }
        let Dims {
            frames,
            height,
            width,
        } = self.dims;
        let oh = height.div_ceil(factor);
        let ow = width.div_ceil(factor);
        if oh < 2 || ow < 2 {
            return Err(Error::TooSmall {
                h: height,
                w: width,
                factor,
            });
        }
        let out_dims = Dims::new(frames, oh, ow);
        let mut out = vec![0.0; out_dims.len() * CHANNELS];
        for t in 0..frames {
            for oy in 0..oh {
                let y_end = ((oy + 1) * factor).min(height);
                for ox in 0..ow {
                    let x_end = ((ox + 1) * factor).min(width);
                    let mut acc = [0.0; CHANNELS];
                    let mut count = 0usize;
                    for y in oy * factor..y_end {
                        for x in ox * factor..x_end {
                            let p = self.pixel(t, y, x);
                            for c in 0..CHANNELS {
                                acc[c] += p[c];
                            }
                            count += 1;
                        }
                    }
                    let o = out_dims.index(t, oy, ox) * CHANNELS;
                    for c in 0..CHANNELS {
                        out[o + c] = (acc[c] / count as f64).clamp(0.0, 1.0);
                    }
                }
            }
        }
        Ok(Self {
            dims: out_dims,
            scale: self.scale / factor as f64,
            data: out,
        })
    }
}

/// Scalar field over a `T x H x W` grid (eigenvectors, boundary maps, priors).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    pub dims: Dims,
    pub data: Vec<f64>,
}

impl ScalarVolume {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.len()],
        }
    }

    pub fn filled(dims: Dims, value: f64) -> Self {
        Self {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {}x{}x{} volume",
                data.len(),
                dims.frames,
                dims.height,
                dims.width
            )));
        }
        Ok(Self { dims, data })
    }

    #[inline]
    pub fn get(&self, t: usize, y: usize, x: usize) -> f64 {
        self.data[self.dims.index(t, y, x)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, y: usize, x: usize, v: f64) {
        let i = self.dims.index(t, y, x);
        self.data[i] = v;
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.dims.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.dims.frame_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// Bilinear spatial upsampling of a field computed at `scale` to `target_h x target_w`.
///
/// Pixel centres are aligned: destination pixel `d` samples the source at
/// `(d + 0.5) * scale - 0.5`, clamped to the source extent. Time is untouched.
pub fn upsample_field(
    field: &ScalarVolume,
    scale: f64,
    target_h: usize,
    target_w: usize,
) -> Result<ScalarVolume> {
    let want_h = (target_h as f64 * scale).ceil() as usize;
    let want_w = (target_w as f64 * scale).ceil() as usize;
    if field.dims.height != want_h || field.dims.width != want_w {
        return Err(Error::DimensionMismatch(format!(
            "field is {}x{}, expected {}x{} for scale {} of {}x{}",
            field.dims.height, field.dims.width, want_h, want_w, scale, target_h, target_w
        )));
    }
    if field.dims.height == target_h && field.dims.width == target_w {
        return Ok(field.clone());
    }
    let sh = field.dims.height;
    let sw = field.dims.width;
    let taps = |dst: usize, src_len: usize| -> (usize, usize, f64) {
        let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(src_len - 1);
        (lo, hi, s - lo as f64)
    };
    let ytaps: Vec<_> = (0..target_h).map(|y| taps(y, sh)).collect();
    let xtaps: Vec<_> = (0..target_w).map(|x| taps(x, sw)).collect();
    let dims = Dims::new(field.dims.frames, target_h, target_w);
    let mut out = ScalarVolume::zeros(dims);
    for t in 0..dims.frames {
        for (y, &(y0, y1, fy)) in ytaps.iter().enumerate() {
            for (x, &(x0, x1, fx)) in xtaps.iter().enumerate() {
                let top = field.get(t, y0, x0) * (1.0 - fx) + field.get(t, y0, x1) * fx;
                let bottom = field.get(t, y1, x0) * (1.0 - fx) + field.get(t, y1, x1) * fx;
                out.set(t, y, x, top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(frames: usize, h: usize, w: usize, v: f64) -> VideoVolume {
        VideoVolume::new(frames, h, w, vec![v; frames * h * w * CHANNELS]).unwrap()
    }

    #[test]
    fn rejects_bad_dims_and_values() {
        assert!(VideoVolume::new(0, 4, 4, vec![]).is_err());
        assert!(VideoVolume::new(1, 1, 4, vec![0.0; 12]).is_err());
        assert!(VideoVolume::new(1, 2, 2, vec![1.5; 12]).is_err());
        assert!(VideoVolume::new(1, 2, 2, vec![f64::NAN; 12]).is_err());
    }

    #[test]
    fn downsample_constant() {
        let v = constant(3, 16, 16, 0.25);
        let d2 = v.downsample(2).unwrap();
        assert_eq!((d2.frames(), d2.height(), d2.width()), (3, 8, 8));
        assert!(d2.data().iter().all(|&x| x == 0.25));
        assert_eq!(d2.scale(), 0.5);
        let d4 = v.downsample(4).unwrap();
        assert_eq!((d4.height(), d4.width()), (4, 4));
        assert_eq!(d4.scale(), 0.25);
    }

    #[test]
    fn downsample_box_mean() {
        // 2x2 frame {0,0,1,1}; output needs a 2x2 result, so tile it into a 4x4 frame.
        let gray = [
            0.0, 0.0, 0.0, 0.0, //
            1.0, 1.0, 1.0, 1.0, //
            0.0, 0.0, 0.0, 0.0, //
            1.0, 1.0, 1.0, 1.0,
        ];
        let v = VideoVolume::from_gray(1, 4, 4, &gray).unwrap();
        let d = v.downsample(2).unwrap();
        assert!(d.data().iter().all(|&x| x == 0.5));
    }

    #[test]
    fn downsample_keeps_time_and_ceil_dims() {
        let v = constant(7, 10, 9, 0.1);
        let d = v.downsample(4).unwrap();
        assert_eq!((d.frames(), d.height(), d.width()), (7, 3, 3));
        assert!(matches!(
            constant(1, 4, 4, 0.0).downsample(4),
            Err(Error::TooSmall { .. })
        ));
    }

    #[test]
    fn upsample_identity_and_constant() {
        let dims = Dims::new(2, 5, 6);
        let f = ScalarVolume::from_vec(dims, (0..60).map(|i| i as f64).collect()).unwrap();
        assert_eq!(upsample_field(&f, 1.0, 5, 6).unwrap(), f);
        let c = ScalarVolume::filled(Dims::new(2, 3, 3), 0.7);
        let up = upsample_field(&c, 0.25, 10, 12).unwrap();
        assert_eq!(up.dims, Dims::new(2, 10, 12));
        assert!(up.data.iter().all(|&v| (v - 0.7).abs() < 1e-15));
        assert!(upsample_field(&c, 0.5, 10, 10).is_err());
    }

    #[test]
    fn upsample_ramp_is_monotone() {
        let f = ScalarVolume::from_vec(Dims::new(1, 2, 2), vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let up = upsample_field(&f, 0.5, 4, 4).unwrap();
        for y in 0..4 {
            let row: Vec<f64> = (0..4).map(|x| up.get(0, y, x)).collect();
            assert!(row.windows(2).all(|w| w[0] <= w[1]), "{row:?}");
            assert_eq!(row[0], 0.0);
            assert_eq!(row[3], 1.0);
        }
    }

    #[test]
    fn voxel_index_round_trip() {
        let d = Dims::new(3, 4, 5);
        for i in 0..d.len() {
            let v = d.voxel(i);
            assert_eq!(d.index(v.t, v.y, v.x), i);
        }
    }
}
