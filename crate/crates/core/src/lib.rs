//! Spatio-temporal video segmentation from spectral boundaries.
//!
//! Affinities between voxels come from point-wise mutual information of
//! colour and texture statistics. The smallest eigenvectors of the normalized
//! Laplacian are computed over short overlapping temporal windows, turned into
//! oriented spatio-temporal boundaries, and closed into a hierarchy of
//! segmentations by a 3-D oriented watershed and an ultrametric contour map.

pub mod affinity;
pub mod boundary;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod filters;
pub mod io;
pub mod pipeline;
pub mod pmi;
pub mod sparse;
pub mod spectral;
pub mod synth;
pub mod ucm;
pub mod video;
pub mod watershed;

pub use error::{Error, ErrorClass, Result};
pub use config::PipelineConfig;
