use std::path::PathBuf;

use thiserror::Error;

use crate::features::Stage1Diagnostics;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transform is singular (|det| = {det:e})")]
    SingularTransform { det: f64 },

    #[error("at least 3 point pairs are required, got {got}")]
    InsufficientPoints { got: usize },

    #[error("point configuration is degenerate (collinear or ill-conditioned, condition ~{condition:e})")]
    DegenerateConfiguration { condition: f64 },

    #[error("point lists differ in length ({src} vs {dst})")]
    PointCountMismatch { src: usize, dst: usize },

    #[error("descriptor lengths differ ({a} vs {b})")]
    DescriptorLengthMismatch { a: usize, b: usize },

    #[error("at least 3 matches are required, got {got}")]
    InsufficientMatches { got: usize },

    #[error("no consensus: best inlier count {best} below required {required}")]
    NoConsensus { best: usize, required: usize },

    #[error("stage-1 registration failed: {reason} ({diagnostics})")]
    Stage1Failure {
        reason: String,
        diagnostics: Stage1Diagnostics,
    },

    #[error("image shapes differ: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize), b: (usize, usize) },

    #[error("overlap region is empty")]
    EmptyOverlap,

    #[error("intensity variance is zero over the overlap")]
    DegenerateVariance,

    #[error("series is empty")]
    EmptySeries,

    #[error("length mismatch: {what}")]
    LengthMismatch { what: String },

    #[error("index {index} out of range for series of {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("pair {pair} failed in both stages: {reason}")]
    PairRegistrationFailure { pair: usize, reason: String },

    #[error("no track has an annotation on the middle section")]
    NoMiddleAnnotation,

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("parse error in {source_name} at {location}: {message}")]
    Parse {
        source_name: String,
        location: String,
        message: String,
    },

    #[error("image not found: {0}")]
    MissingImage(PathBuf),

    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
