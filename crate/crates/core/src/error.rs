use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the segmentation pipeline and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input directory does not exist: {0}")]
    MissingDirectory(PathBuf),

    #[error("no files in {dir} match pattern `{pattern}`")]
    NoMatchingFrames { dir: PathBuf, pattern: String },

    #[error("frame {path} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    InconsistentDimensions {
        path: PathBuf,
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },

    #[error("failed to decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("downsampling {h}x{w} by {factor} leaves less than 2x2 pixels")]
    TooSmall { h: usize, w: usize, factor: usize },

    #[error("shape {index} leaves the canvas at frame {frame}")]
    ShapeOutsideCanvas { index: usize, frame: usize },

    #[error("invalid synthetic spec: {0}")]
    InvalidSynthetic(String),

    #[error("value {value} does not fit the 16-bit output range")]
    ValueOverflow { value: f64 },

    #[error("frame {height}x{width} is too small to sample pairs (need at least 8x8)")]
    FrameTooSmall { height: usize, width: usize },

    #[error("cannot fit a density from an empty sample set")]
    EmptySamples,

    #[error("no PMI model for frame {0}")]
    MissingModel(usize),

    #[error("groups do not partition the node set: {0}")]
    NotAPartition(String),

    #[error("node {node} (t={t}, y={y}, x={x}) has no edges")]
    IsolatedNode {
        node: usize,
        t: usize,
        y: usize,
        x: usize,
    },

    #[error("eigensolver needs n >= k (n={n}, k={k})")]
    TooFewNodes { n: usize, k: usize },

    #[error(
        "eigensolver did not converge after {operator_applications} operator applications \
         (worst residual {worst_residual:.3e}, tol {tol:.1e})"
    )]
    NoConvergence {
        operator_applications: usize,
        worst_residual: f64,
        tol: f64,
        residuals: Vec<f64>,
    },

    #[error("window {window} (frames {first}..{end}): {source}")]
    Window {
        window: usize,
        first: usize,
        end: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("ground truth is empty")]
    EmptyGroundTruth,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("JSON error on {path}: {message}")]
    Json { path: PathBuf, message: String },
}

/// Broad error classes, used by the command line front end to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Input,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::IsolatedNode { .. }
            | Error::TooFewNodes { .. }
            | Error::NoConvergence { .. } => ErrorClass::Numerical,
            Error::Window { source, .. } | Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Input,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
