//! Raster primitives, the Canny edge pipeline and label-region compositing.

mod canny;
mod compose;
mod raster;

use std::path::PathBuf;

pub use canny::{
    canny, direction_step, gaussian_blur, gaussian_kernel, hysteresis, non_maximum_suppression,
    sobel_gradients, CannyParams, Gradients, MIN_GRADIENT, NMS_RELATIVE_TOLERANCE,
};
pub use compose::{build_text_mask, composite_regions, CompositeMode, FEATHER_BAND};
pub use raster::{Bitmap, EdgeMap, GrayImage, RasterImage, RegionMask};

#[derive(Debug, thiserror::Error)]
pub enum ImagingError {
    #[error("raster must have positive width and height")]
    EmptyRaster,
    #[error("pixel buffer has {actual} elements, expected {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("image is {width}x{height}, needs at least {min}x{min}")]
    TooSmall { width: u32, height: u32, min: u32 },
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("thresholds must satisfy 0 < low < high <= 1, got low={low} high={high}")]
    InvalidThresholds { low: f64, high: f64 },
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("PNG decode failed: {0}")]
    Decode(String),
    #[error("cannot decode {path}: {message}")]
    DecodeFile { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
