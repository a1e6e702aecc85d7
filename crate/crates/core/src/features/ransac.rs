use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{fit_affine_least_squares, Affine2, Point2};

use super::{FeatureConfig, Keypoint, MatchSet};

const CONFIDENCE: f64 = 0.999;
const REFIT_ROUNDS: usize = 5;

/// Robust affine from `a` coordinates into `b`'s frame.
///
/// Seeded RANSAC over 3-point samples followed by least-squares refits on
/// the consensus set. The returned match set carries an inlier mask computed
/// under the returned transform.
pub fn estimate_affine_ransac(
    a: &[Keypoint],
    b: &[Keypoint],
    matches: &MatchSet,
    cfg: &FeatureConfig,
) -> Result<(Affine2<f64>, MatchSet)> {
    let n = matches.len();
    if n < 3 {
        return Err(Error::InsufficientMatches { got: n });
    }
    let src: Vec<Point2<f64>> = matches.pairs.iter().map(|m| a[m.index_a].position).collect();
    let dst: Vec<Point2<f64>> = matches.pairs.iter().map(|m| b[m.index_b].position).collect();
    let tol = cfg.inlier_tolerance_px;

    let score = |t: &Affine2<f64>| -> (usize, f64) {
        src.iter().zip(&dst).fold((0, 0.0), |(c, e), (&s, &d)| {
            let r = t.apply_point(s).distance(d);
            if r <= tol {
                (c + 1, e + r)
            } else {
                (c, e)
            }
        })
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Affine2<f64>, usize, f64)> = None;
    let mut budget = cfg.ransac_iterations;
    let mut iter = 0;
    while iter < budget {
        iter += 1;
        let idx = sample(&mut rng, n, 3);
        let s3: Vec<_> = idx.iter().map(|i| src[i]).collect();
        let d3: Vec<_> = idx.iter().map(|i| dst[i]).collect();
        let Ok(model) = fit_affine_least_squares(&s3, &d3) else {
            continue;
        };
        if model.det().abs() < 1e-6 {
            continue;
        }
        let (count, err) = score(&model);
        let better = match &best {
            None => count >= 3,
            Some((_, bc, be)) => count > *bc || (count == *bc && err < *be),
        };
        if better {
            best = Some((model, count, err));
            let w = count as f64 / n as f64;
            let p_good = w.powi(3);
            if p_good >= 1.0 {
                budget = iter;
            } else if p_good > 0.0 {
                let needed = ((1.0 - CONFIDENCE).ln() / (1.0 - p_good).ln()).ceil();
                if needed.is_finite() && (needed as usize) < budget {
                    budget = (needed as usize).max(iter);
                }
            }
        }
    }

    let Some((mut model, mut count, _)) = best else {
        return Err(Error::NoConsensus {
            best: 0,
            required: cfg.min_inliers,
        });
    };
    if count < cfg.min_inliers {
        return Err(Error::NoConsensus {
            best: count,
            required: cfg.min_inliers,
        });
    }

    let mask_for = |t: &Affine2<f64>| -> Vec<bool> {
        src.iter()
            .zip(&dst)
            .map(|(&s, &d)| t.apply_point(s).distance(d) <= tol)
            .collect()
    };
    let mut mask = mask_for(&model);
    for _ in 0..REFIT_ROUNDS {
        let (s, d): (Vec<_>, Vec<_>) = src
            .iter()
            .zip(&dst)
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|((&s, &d), _)| (s, d))
            .unzip();
        let Ok(refit) = fit_affine_least_squares(&s, &d) else {
            break;
        };
        let refit_mask = mask_for(&refit);
        let refit_count = refit_mask.iter().filter(|&&m| m).count();
        if refit_count < count {
            break;
        }
        let stable = refit_mask == mask;
        model = refit;
        mask = refit_mask;
        count = refit_count;
        if stable {
            break;
        }
    }

    if count < cfg.min_inliers {
        return Err(Error::NoConsensus {
            best: count,
            required: cfg.min_inliers,
        });
    }
    Ok((
        model,
        MatchSet {
            pairs: matches.pairs.clone(),
            inlier_mask: Some(mask),
        },
    ))
}
