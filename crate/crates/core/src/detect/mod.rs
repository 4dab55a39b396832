//! From-scratch Haar cascade face detection.

mod cascade;
mod eval;
mod group;
mod integral;
mod multiscale;

use thiserror::Error;

use crate::geom::Rect;

pub use cascade::{
    load_cascade, parse_cascade, CascadeModel, HaarFeature, Stage, WeakClassifier, WeightedRect,
};
pub use eval::{evaluate_window, ScaledCascade, WindowVerdict, VARIANCE_EPSILON};
pub use group::{group_rectangles, similar, Detection};
pub use integral::{integral_images, rect_sqsum, rect_sum, IntegralPair};
pub use multiscale::{detect_multiscale, detect_raw, scan_scales, DetectParams, Detector};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("malformed cascade xml at {line}:{column}: {message}")]
    Xml {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("cascade schema error at {line}:{column}: {message}")]
    Schema {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("feature {index} is tilted; only upright features are supported")]
    UnsupportedFeature { index: usize },
    #[error("stage {stage} weak classifier {weak} has {nodes} split nodes; only stumps are supported")]
    UnsupportedStructure {
        stage: usize,
        weak: usize,
        nodes: usize,
    },
    #[error("stage {stage} weak classifier {weak} references feature {index} of {count}")]
    DanglingFeature {
        stage: usize,
        weak: usize,
        index: usize,
        count: usize,
    },
    #[error("invalid cascade: {0}")]
    InvalidModel(String),
    #[error("invalid detection parameters: {0}")]
    InvalidParams(String),
    #[error("rect {rect:?} exceeds the {width}x{height} image")]
    OutOfBounds { rect: Rect, width: u32, height: u32 },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
