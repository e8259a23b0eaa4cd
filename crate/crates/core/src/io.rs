//! Frame loading, 16-bit raster output and ground-truth files.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::GroundTruth;
use crate::video::{Dims, ScalarVolume, VideoVolume, CHANNELS};

/// Loads the frames in `dir` whose names match `pattern`.
///
/// `pattern` contains a single `*`, e.g. `frame_*.png` or `*.png`. The text
/// matched by `*` must end in digits, which give the frame number; frames are
/// ordered by that number, not lexicographically.
pub fn load_frames(dir: &Path, pattern: &str) -> Result<VideoVolume> {
    if !dir.is_dir() {
        return Err(Error::MissingDirectory(dir.to_path_buf()));
    }
    let (prefix, suffix) = pattern.split_once('*').ok_or_else(|| {
        Error::Config(format!("frame pattern `{pattern}` must contain one `*`"))
    })?;
    let mut numbered: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(middle) = name
            .strip_prefix(prefix)
            .and_then(|rest| rest.strip_suffix(suffix))
        else {
            continue;
        };
        let digits = middle.len() - middle.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        if digits == 0 {
            continue;
        }
        if let Ok(n) = middle[middle.len() - digits..].parse::<u64>() {
            numbered.push((n, entry.path()));
        }
    }
    if numbered.is_empty() {
        return Err(Error::NoMatchingFrames {
            dir: dir.to_path_buf(),
            pattern: pattern.to_string(),
        });
    }
    numbered.sort();

    let decoded: Vec<(usize, usize, Vec<f64>)> = numbered
        .par_iter()
        .map(|(_, path)| decode_rgb(path))
        .collect::<Result<_>>()?;
    let (w, h) = (decoded[0].0, decoded[0].1);
    let mut data = Vec::with_capacity(decoded.len() * w * h * CHANNELS);
    for ((gw, gh, pixels), (_, path)) in decoded.into_iter().zip(&numbered) {
        if gw != w || gh != h {
            return Err(Error::InconsistentDimensions {
                path: path.clone(),
                want_w: w,
                want_h: h,
                got_w: gw,
                got_h: gh,
            });
        }
        data.extend(pixels);
    }
    VideoVolume::new(numbered.len(), h, w, data)
}

fn decode_rgb(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let wide = matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    );
    let pixels = if wide {
        img.to_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 65535.0)
            .collect()
    } else {
        img.to_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 255.0)
            .collect()
    };
    Ok((w, h, pixels))
}

/// Writes 8-bit RGB frames (`frame_0000.png`, ...), mainly for synthetic inputs.
pub fn write_frames(video: &VideoVolume, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..video.frames()).into_par_iter().try_for_each(|t| {
        let raw: Vec<u8> = video
            .frame(t)
            .iter()
            .map(|&v| (v * 255.0).round() as u8)
            .collect();
        let img: ImageBuffer<image::Rgb<u8>, _> =
            ImageBuffer::from_raw(video.width() as u32, video.height() as u32, raw)
                .expect("buffer sized from the volume");
        let path = dir.join(frame_name(t));
        img.save(&path).map_err(|e| Error::Decode {
            path,
            message: e.to_string(),
        })
    })
}

pub fn frame_name(t: usize) -> String {
    format!("frame_{t:04}.png")
}

/// A stack of per-frame rasters to be written as 16-bit images.
#[derive(Debug, Clone, PartialEq)]
pub enum Raster {
    /// Integer labels, written verbatim.
    Labels { dims: Dims, labels: Vec<u32> },
    /// Non-negative values, quantised to `round(v / step)` with `step = max(1, max v) / 65535`.
    Scalar(ScalarVolume),
}

impl Raster {
    pub fn dims(&self) -> Dims {
        match self {
            Raster::Labels { dims, .. } => *dims,
            Raster::Scalar(v) => v.dims,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueEncoding {
    Labels,
    Quantized,
}

/// Sidecar `manifest.json` describing a written raster stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterManifest {
    #[serde(rename = "T")]
    pub frames: usize,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    pub scale: f64,
    pub encoding: ValueEncoding,
    /// Value of one 16-bit code step (1 for labels).
    pub encoding_scale: f64,
    pub thresholds: Vec<f64>,
    pub files: Vec<String>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Writes `raster` as one 16-bit grayscale PNG per frame plus a manifest.
pub fn write_outputs(
    raster: &Raster,
    dir: &Path,
    scale: f64,
    thresholds: &[f64],
) -> Result<RasterManifest> {
    let dims = raster.dims();
    let (codes, encoding, step): (Vec<u16>, _, _) = match raster {
        Raster::Labels { labels, .. } => {
            let codes = labels
                .iter()
                .map(|&l| {
                    u16::try_from(l).map_err(|_| Error::ValueOverflow { value: f64::from(l) })
                })
                .collect::<Result<_>>()?;
            (codes, ValueEncoding::Labels, 1.0)
        }
        Raster::Scalar(v) => {
            if let Some(&bad) = v.data.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(Error::ValueOverflow { value: bad });
            }
            let step = v.max_value().max(1.0) / 65535.0;
            let codes = v
                .data
                .iter()
                .map(|&x| (x / step).round().min(65535.0) as u16)
                .collect();
            (codes, ValueEncoding::Quantized, step)
        }
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = dims.frame_len();
    let files: Vec<String> = (0..dims.frames).map(frame_name).collect();
    files.par_iter().enumerate().try_for_each(|(t, name)| {
        let img: ImageBuffer<Luma<u16>, _> = ImageBuffer::from_raw(
            dims.width as u32,
            dims.height as u32,
            codes[t * n..(t + 1) * n].to_vec(),
        )
        .expect("buffer sized from dims");
        let path = dir.join(name);
        img.save(&path).map_err(|e| Error::Decode {
            path,
            message: e.to_string(),
        })
    })?;
    let manifest = RasterManifest {
        frames: dims.frames,
        height: dims.height,
        width: dims.width,
        scale,
        encoding,
        encoding_scale: step,
        thresholds: thresholds.to_vec(),
        files,
    };
    write_json(&dir.join(MANIFEST_NAME), &manifest)?;
    Ok(manifest)
}

/// Reads a raster stack written by [`write_outputs`].
pub fn read_outputs(dir: &Path) -> Result<(RasterManifest, Raster)> {
    let manifest: RasterManifest = read_json(&dir.join(MANIFEST_NAME))?;
    let dims = Dims::new(manifest.frames, manifest.height, manifest.width);
    let mut codes = Vec::with_capacity(dims.len());
    for name in &manifest.files {
        codes.extend(read_u16_image(&dir.join(name), dims.height, dims.width)?);
    }
    let raster = match manifest.encoding {
        ValueEncoding::Labels => Raster::Labels {
            dims,
            labels: codes.into_iter().map(u32::from).collect(),
        },
        ValueEncoding::Quantized => Raster::Scalar(ScalarVolume::from_vec(
            dims,
            codes
                .into_iter()
                .map(|c| f64::from(c) * manifest.encoding_scale)
                .collect(),
        )?),
    };
    Ok((manifest, raster))
}

fn read_u16_image(path: &Path, height: usize, width: usize) -> Result<Vec<u16>> {
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if img.width() as usize != width || img.height() as usize != height {
        return Err(Error::InconsistentDimensions {
            path: path.to_path_buf(),
            want_w: width,
            want_h: height,
            got_w: img.width() as usize,
            got_h: img.height() as usize,
        });
    }
    Ok(img.to_luma16().into_raw())
}

/// Ground-truth index file: annotated frames and annotator ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthIndex {
    pub height: usize,
    pub width: usize,
    pub frames: Vec<usize>,
    pub annotators: Vec<String>,
}

pub const GT_INDEX_NAME: &str = "gt.json";

/// Writes `gt` as `gt.json` plus `<annotator>/frame_NNNN.png` 16-bit label images.
pub fn write_ground_truth(gt: &GroundTruth, dir: &Path) -> Result<()> {
    let ids: Vec<String> = (0..gt.annotators().len()).map(|a| format!("annotator_{a}")).collect();
    for (maps, id) in gt.annotators().iter().zip(&ids) {
        let sub = dir.join(id);
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for (map, &t) in maps.iter().zip(gt.frames()) {
            let codes = map
                .iter()
                .map(|&l| u16::try_from(l).map_err(|_| Error::ValueOverflow { value: f64::from(l) }))
                .collect::<Result<Vec<u16>>>()?;
            let img: ImageBuffer<Luma<u16>, _> =
                ImageBuffer::from_raw(gt.width() as u32, gt.height() as u32, codes)
                    .expect("buffer sized from gt");
            let path = sub.join(frame_name(t));
            img.save(&path).map_err(|e| Error::Decode {
                path,
                message: e.to_string(),
            })?;
        }
    }
    let index = GroundTruthIndex {
        height: gt.height(),
        width: gt.width(),
        frames: gt.frames().to_vec(),
        annotators: ids,
    };
    write_json(&dir.join(GT_INDEX_NAME), &index)
}

pub fn read_ground_truth(dir: &Path) -> Result<GroundTruth> {
    if !dir.is_dir() {
        return Err(Error::MissingDirectory(dir.to_path_buf()));
    }
    let index: GroundTruthIndex = read_json(&dir.join(GT_INDEX_NAME))?;
    let annotators = index
        .annotators
        .iter()
        .map(|id| {
            index
                .frames
                .iter()
                .map(|&t| {
                    let codes =
                        read_u16_image(&dir.join(id).join(frame_name(t)), index.height, index.width)?;
                    Ok(codes.into_iter().map(u32::from).collect())
                })
                .collect::<Result<Vec<Vec<u32>>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    GroundTruth::new(index.height, index.width, index.frames, annotators)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
