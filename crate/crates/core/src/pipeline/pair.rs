use crate::features::{register_pair_features_detailed, FeatureConfig};
use crate::geometry::{Affine2, ImageGrid, Point2};
use crate::intensity::{refine_affine, RefineConfig, TracePoint};
use crate::propagation::PairDiagnostics;

use super::config::StageSelection;

/// Result of registering one consecutive pair.
#[derive(Debug, Clone)]
pub struct PairOutcome {
    /// Maps the moving section (`t + 1`) into the fixed section's frame.
    pub transform: Affine2<f64>,
    pub diagnostics: PairDiagnostics,
    pub trace: Vec<TracePoint>,
    /// Stage-1 inliers as (moving, fixed) positions.
    pub inlier_points: Vec<(Point2<f64>, Point2<f64>)>,
}

impl PairOutcome {
    /// True when every enabled stage failed and the identity was substituted.
    pub fn failed(&self) -> bool {
        self.diagnostics.stage_used == "identity"
    }
}

/// Registers `moving` onto `fixed` with the selected stages.
///
/// Stage 2 starts from the stage-1 affine when available, otherwise from the
/// identity. A failed stage never aborts the pair: the best earlier estimate
/// is kept and the fallback is recorded in the diagnostics.
pub fn register_pair(
    pair: usize,
    fixed: &ImageGrid,
    moving: &ImageGrid,
    stages: StageSelection,
    features: &FeatureConfig,
    refine: &RefineConfig,
) -> PairOutcome {
    let mut diag = PairDiagnostics {
        pair,
        ..Default::default()
    };
    let mut inlier_points = Vec::new();
    let mut stage1_result = None;

    if stages.stage1 {
        match register_pair_features_detailed(fixed, moving, features) {
            Ok(out) => {
                diag.stage1 = Some(out.diagnostics);
                diag.stage1_transform = Some(out.transform);
                inlier_points = out.inlier_points;
                stage1_result = Some(out.transform);
            }
            Err(e) => {
                if let crate::Error::Stage1Failure { diagnostics, .. } = &e {
                    diag.stage1 = Some(diagnostics.clone());
                }
                log::warn!("pair {pair}: stage 1 failed: {e}");
                diag.stage1_error = Some(e.to_string());
                diag.fallback = true;
            }
        }
    }

    let mut transform = stage1_result;
    let mut trace = Vec::new();
    if stages.stage2 {
        let init = stage1_result.unwrap_or_else(Affine2::identity);
        match refine_affine(fixed, moving, &init, refine) {
            Ok(r) => {
                diag.stage2_initial_metric = Some(r.initial_metric);
                diag.final_metric = Some(r.final_metric);
                diag.stage2_iterations = Some(r.iterations);
                trace = r.trace;
                transform = Some(r.transform);
            }
            Err(e) => {
                log::warn!("pair {pair}: stage 2 failed: {e}");
                diag.stage2_error = Some(e.to_string());
                diag.fallback = true;
            }
        }
    }

    diag.stage_used = match (stage1_result.is_some(), diag.final_metric.is_some()) {
        (true, true) => "stage1+stage2",
        (true, false) => "stage1",
        (false, true) => "stage2",
        (false, false) => "identity",
    }
    .to_string();

    PairOutcome {
        transform: transform.unwrap_or_else(Affine2::identity),
        diagnostics: diag,
        trace,
        inlier_points,
    }
}
