use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Affine2, Point2};

/// Default cap on the condition number of the centered normal system.
pub const DEFAULT_CONDITION_CAP: f64 = 1e10;

/// Least-squares affine minimizing `sum |A(src_i) - dst_i|^2`.
pub fn fit_affine_least_squares<T: Scalar>(
    src: &[Point2<T>],
    dst: &[Point2<T>],
) -> Result<Affine2<T>> {
    fit_affine_least_squares_with_cap(src, dst, DEFAULT_CONDITION_CAP)
}

pub fn fit_affine_least_squares_with_cap<T: Scalar>(
    src: &[Point2<T>],
    dst: &[Point2<T>],
    condition_cap: f64,
) -> Result<Affine2<T>> {
    if src.len() != dst.len() {
        return Err(Error::PointCountMismatch {
            src: src.len(),
            dst: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(Error::InsufficientPoints { got: src.len() });
    }

    // Centering decouples translation from the linear block, leaving a 2x2
    // normal system per output coordinate.
    let n = T::from_usize(src.len()).unwrap();
    let mean = |pts: &[Point2<T>]| {
        let (sx, sy) = pts
            .iter()
            .fold((T::zero(), T::zero()), |(ax, ay), p| (ax + p.x, ay + p.y));
        Point2::new(sx / n, sy / n)
    };
    let ms = mean(src);
    let md = mean(dst);

    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    let (mut sxu, mut syu, mut sxv, mut syv) = (T::zero(), T::zero(), T::zero(), T::zero());
    for (s, d) in src.iter().zip(dst) {
        let (x, y) = (s.x - ms.x, s.y - ms.y);
        let (u, v) = (d.x - md.x, d.y - md.y);
        sxx = sxx + x * x;
        sxy = sxy + x * y;
        syy = syy + y * y;
        sxu = sxu + x * u;
        syu = syu + y * u;
        sxv = sxv + x * v;
        syv = syv + y * v;
    }

    // eigenvalues of the symmetric scatter matrix
    let half_tr = (sxx + syy) / T::lit(2.0);
    let disc = (((sxx - syy) / T::lit(2.0)).powi(2) + sxy * sxy).sqrt();
    let (lmax, lmin) = (half_tr + disc, half_tr - disc);
    let condition = if lmin > T::zero() {
        (lmax / lmin).to_f64_lossy()
    } else {
        f64::INFINITY
    };
    if !condition.is_finite() || condition > condition_cap {
        return Err(Error::DegenerateConfiguration { condition });
    }

    let det = sxx * syy - sxy * sxy;
    let a = (sxu * syy - syu * sxy) / det;
    let b = (syu * sxx - sxu * sxy) / det;
    let c = (sxv * syy - syv * sxy) / det;
    let d = (syv * sxx - sxv * sxy) / det;
    let tx = md.x - (a * ms.x + b * ms.y);
    let ty = md.y - (c * ms.x + d * ms.y);
    Ok(Affine2::new(a, b, tx, c, d, ty))
}

/// Per-pair reprojection errors `|A(src_i) - dst_i|`.
pub fn residuals<T: Scalar>(a: &Affine2<T>, src: &[Point2<T>], dst: &[Point2<T>]) -> Vec<T> {
    src.iter()
        .zip(dst)
        .map(|(&s, &d)| a.apply_point(s).distance(d))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type P = Point2<f64>;

    #[test]
    fn identity_from_equal_points() {
        let pts = [P::new(0.0, 0.0), P::new(10.0, 0.0), P::new(3.0, 7.0)];
        let a = fit_affine_least_squares(&pts, &pts).unwrap();
        assert!(a.max_abs_diff(&Affine2::identity()) < 1e-9);
    }

    #[test]
    fn recovers_planted_affine() {
        let g = Affine2::new(1.05, -0.2, 12.5, 0.15, 0.93, -7.25);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let src: Vec<P> = (0..10)
            .map(|_| P::new(rng.random_range(0.0..500.0), rng.random_range(0.0..300.0)))
            .collect();
        let dst: Vec<P> = src.iter().map(|&p| g.apply_point(p)).collect();
        let a = fit_affine_least_squares(&src, &dst).unwrap();
        assert!(a.max_abs_diff(&g) < 1e-8, "{a:?}");
    }

    #[test]
    fn too_few_points() {
        let pts = [P::new(0.0, 0.0), P::new(1.0, 0.0)];
        assert!(matches!(
            fit_affine_least_squares(&pts, &pts),
            Err(Error::InsufficientPoints { got: 2 })
        ));
    }

    #[test]
    fn collinear_is_degenerate() {
        let pts: Vec<P> = (0..5).map(|i| P::new(i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(
            fit_affine_least_squares(&pts, &pts),
            Err(Error::DegenerateConfiguration { .. })
        ));
    }

    #[test]
    fn mismatched_lengths() {
        let a = [P::new(0.0, 0.0), P::new(1.0, 0.0), P::new(0.0, 1.0)];
        assert!(fit_affine_least_squares(&a, &a[..2]).is_err());
    }

    proptest! {
        // zero residual iff dst is an exact affine image of src
        #[test]
        fn residual_zero_iff_affine(seed in 0u64..1000, perturb in proptest::bool::ANY) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = Affine2::new(
                rng.random_range(0.7..1.3), rng.random_range(-0.3..0.3), rng.random_range(-20.0..20.0),
                rng.random_range(-0.3..0.3), rng.random_range(0.7..1.3), rng.random_range(-20.0..20.0),
            );
            let src: Vec<P> = (0..8)
                .map(|_| P::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)))
                .collect();
            let mut dst: Vec<P> = src.iter().map(|&p| g.apply_point(p)).collect();
            if perturb {
                dst[3].x += 0.5;
            }
            let a = fit_affine_least_squares(&src, &dst).unwrap();
            let max_res = residuals(&a, &src, &dst).into_iter().fold(0.0, f64::max);
            prop_assert_eq!(max_res <= 1e-8, !perturb);
        }
    }
}
