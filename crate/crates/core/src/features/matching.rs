use crate::error::{Error, Result};

use super::{FeatureConfig, Keypoint, Match, MatchSet};

/// Mutual nearest neighbours in descriptor space that also pass the ratio test.
pub fn match_keypoints(a: &[Keypoint], b: &[Keypoint], cfg: &FeatureConfig) -> Result<MatchSet> {
    if a.is_empty() || b.is_empty() {
        return Ok(MatchSet::default());
    }
    let len = a[0].descriptor.len();
    for k in a.iter().chain(b) {
        if k.descriptor.len() != len {
            return Err(Error::DescriptorLengthMismatch {
                a: len,
                b: k.descriptor.len(),
            });
        }
    }

    // squared distances
    let n = b.len();
    let mut dist = vec![0f32; a.len() * n];
    for (i, ka) in a.iter().enumerate() {
        let row = &mut dist[i * n..(i + 1) * n];
        for (d, kb) in row.iter_mut().zip(b) {
            *d = ka
                .descriptor
                .iter()
                .zip(&kb.descriptor)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
        }
    }

    let best_in_b: Vec<usize> = (0..n)
        .map(|j| {
            (0..a.len())
                .min_by(|&p, &q| dist[p * n + j].total_cmp(&dist[q * n + j]).then(p.cmp(&q)))
                .unwrap()
        })
        .collect();

    let ratio2 = (cfg.ratio_test * cfg.ratio_test) as f32;
    let mut pairs = Vec::new();
    for i in 0..a.len() {
        let row = &dist[i * n..(i + 1) * n];
        let (mut best, mut d1, mut d2) = (0usize, f32::INFINITY, f32::INFINITY);
        for (j, &d) in row.iter().enumerate() {
            if d < d1 {
                d2 = d1;
                d1 = d;
                best = j;
            } else if d < d2 {
                d2 = d;
            }
        }
        if best_in_b[best] != i {
            continue;
        }
        // d1 < ratio * d2 on unsquared distances; a perfect match always passes
        if d1 > 0.0 && d1 >= ratio2 * d2 {
            continue;
        }
        pairs.push(Match {
            index_a: i,
            index_b: best,
            score: (1.0 - (d1 as f64).sqrt() / 2.0).clamp(0.0, 1.0),
        });
    }
    Ok(MatchSet {
        pairs,
        inlier_mask: None,
    })
}
