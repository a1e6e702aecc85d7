//! Serial-section registration for histology slides.
//!
//! Consecutive sections are aligned pairwise with a keypoint affine refined by
//! intensity optimization, then every section is chained into the frame of the
//! middle section.

pub mod error;
pub mod features;
pub mod geometry;
pub mod intensity;
pub mod metrics;
pub mod pipeline;
pub mod propagation;
pub mod scalar;
pub mod synthetic;

pub use error::{Error, Result};
pub use geometry::{Affine2, ImageGrid, Point2};
pub use metrics::{BoundingBox, BoundingCircle};
pub use scalar::Scalar;

pub type Affine2D = Affine2<f64>;
pub type Affine2F = Affine2<f32>;
pub type Point2D = Point2<f64>;
pub type BoundingBoxD = BoundingBox<f64>;
pub type BoundingCircleD = BoundingCircle<f64>;
