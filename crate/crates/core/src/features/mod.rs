//! Stage-1 global registration: keypoint detection, descriptor matching and
//! robust affine estimation.
//!
//! The default detector is a Harris corner response on a smoothed image
//! with an intensity-patch descriptor. Everything downstream consumes only
//! [`Keypoint`] and [`MatchSet`], so another detector can be swapped in.

mod detect;
mod matching;
mod ransac;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Affine2, ImageGrid, Point2};

pub use detect::{detect_keypoints, DESCRIPTOR_LEN};
pub use matching::match_keypoints;
pub use ransac::estimate_affine_ransac;

#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub position: Point2<f64>,
    pub response: f64,
    /// L2-normalized.
    pub descriptor: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    /// `1 - d/2` for descriptor distance `d`, so in `[0, 1]`.
    pub score: f64,
}

/// One-to-one keypoint correspondences.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchSet {
    pub pairs: Vec<Match>,
    pub inlier_mask: Option<Vec<bool>>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn inlier_count(&self) -> usize {
        self.inlier_mask
            .as_ref()
            .map_or(0, |m| m.iter().filter(|&&b| b).count())
    }

    pub fn inliers(&self) -> impl Iterator<Item = &Match> {
        let mask = self.inlier_mask.as_deref();
        self.pairs
            .iter()
            .enumerate()
            .filter(move |(i, _)| mask.is_some_and(|m| m[*i]))
            .map(|(_, m)| m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub max_keypoints: usize,
    /// Fraction of the strongest corner response a keypoint must reach.
    pub detection_threshold: f64,
    pub ratio_test: f64,
    pub ransac_iterations: usize,
    pub inlier_tolerance_px: f64,
    pub min_inliers: usize,
    pub seed: u64,
    pub nms_radius: usize,
    /// Pre-smoothing before gradient computation.
    pub smoothing_sigma: f64,
    /// Gaussian window for the structure tensor.
    pub integration_sigma: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            max_keypoints: 2048,
            detection_threshold: 0.01,
            ratio_test: 0.8,
            ransac_iterations: 2000,
            inlier_tolerance_px: 3.0,
            min_inliers: 12,
            seed: 0,
            nms_radius: 5,
            smoothing_sigma: 0.8,
            integration_sigma: 1.2,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidValue(format!("feature config: {m}")));
        if self.max_keypoints == 0 {
            return bad("max_keypoints must be positive");
        }
        if !(self.ratio_test > 0.0 && self.ratio_test <= 1.0) {
            return bad("ratio_test must lie in (0, 1]");
        }
        if self.ransac_iterations == 0 {
            return bad("ransac_iterations must be positive");
        }
        if !(self.inlier_tolerance_px > 0.0) {
            return bad("inlier_tolerance_px must be positive");
        }
        if self.min_inliers < 3 {
            return bad("min_inliers must be at least 3");
        }
        if !(self.detection_threshold >= 0.0) {
            return bad("detection_threshold must be non-negative");
        }
        Ok(())
    }
}

/// Counts and residuals recorded for one stage-1 attempt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stage1Diagnostics {
    pub keypoints_fixed: usize,
    pub keypoints_moving: usize,
    pub matches: usize,
    pub inliers: usize,
    pub rms_residual_px: Option<f64>,
    pub max_residual_px: Option<f64>,
}

impl fmt::Display for Stage1Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "keypoints fixed={} moving={}, matches={}, inliers={}",
            self.keypoints_fixed, self.keypoints_moving, self.matches, self.inliers
        )
    }
}

/// Everything stage 1 produced for a pair, kept for diagnostics dumps.
#[derive(Debug, Clone)]
pub struct Stage1Output {
    pub transform: Affine2<f64>,
    pub diagnostics: Stage1Diagnostics,
    /// Inlier correspondences as (moving, fixed) positions.
    pub inlier_points: Vec<(Point2<f64>, Point2<f64>)>,
}

/// Stage-1 affine mapping `moving` coordinates into `fixed`'s frame.
pub fn register_pair_features(
    fixed: &ImageGrid,
    moving: &ImageGrid,
    cfg: &FeatureConfig,
) -> Result<Affine2<f64>> {
    register_pair_features_detailed(fixed, moving, cfg).map(|o| o.transform)
}

pub fn register_pair_features_detailed(
    fixed: &ImageGrid,
    moving: &ImageGrid,
    cfg: &FeatureConfig,
) -> Result<Stage1Output> {
    cfg.validate()?;
    let kp_fixed = detect_keypoints(fixed, cfg);
    let kp_moving = detect_keypoints(moving, cfg);
    let mut diagnostics = Stage1Diagnostics {
        keypoints_fixed: kp_fixed.len(),
        keypoints_moving: kp_moving.len(),
        ..Default::default()
    };
    let matches = match_keypoints(&kp_moving, &kp_fixed, cfg)?;
    diagnostics.matches = matches.len();

    match estimate_affine_ransac(&kp_moving, &kp_fixed, &matches, cfg) {
        Ok((transform, flagged)) => {
            let inlier_points: Vec<_> = flagged
                .inliers()
                .map(|m| (kp_moving[m.index_a].position, kp_fixed[m.index_b].position))
                .collect();
            let res: Vec<f64> = inlier_points
                .iter()
                .map(|&(s, d)| transform.apply_point(s).distance(d))
                .collect();
            diagnostics.inliers = inlier_points.len();
            diagnostics.rms_residual_px =
                Some((res.iter().map(|r| r * r).sum::<f64>() / res.len() as f64).sqrt());
            diagnostics.max_residual_px = Some(res.iter().copied().fold(0.0, f64::max));
            Ok(Stage1Output {
                transform,
                diagnostics,
                inlier_points,
            })
        }
        Err(e) => {
            if let Error::NoConsensus { best, .. } = e {
                diagnostics.inliers = best;
            }
            Err(Error::Stage1Failure {
                reason: e.to_string(),
                diagnostics,
            })
        }
    }
}
