//! Stage-2 refinement: multi-resolution maximization of an intensity
//! similarity (mutual information by default, or global cross-correlation),
//! starting from the stage-1 estimate.

mod pyramid;
mod refine;
mod similarity;

pub use pyramid::{build_pyramid, MIN_LEVEL_SIDE};
pub use refine::{refine_affine, write_trace_csv, RefineConfig, Refinement, TracePoint};
pub use similarity::{cross_correlation, entropy, mutual_information, SimilarityMetric};
