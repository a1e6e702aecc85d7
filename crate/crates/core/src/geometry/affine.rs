use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimum |det| of the linear block accepted by [`Affine2::invert`].
pub const DEFAULT_SINGULARITY_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn distance(self, other: Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Homogeneous 2D affine transform.
///
/// Stored as the top two rows of the 3x3 matrix
/// ```text
/// | a  b  tx |
/// | c  d  ty |
/// | 0  0  1  |
/// ```
/// so the bottom row is `(0, 0, 1)` by construction. A point maps to
/// `(a*x + b*y + tx, c*x + d*y + ty)`.
///
/// Serializes as the row-major 9-element array of the full matrix.
#[derive(Clone, Copy, PartialEq)]
pub struct Affine2<T> {
    rows: [[T; 3]; 2],
}

impl<T: Scalar> Affine2<T> {
    #[inline]
    pub fn new(a: T, b: T, tx: T, c: T, d: T, ty: T) -> Self {
        Self {
            rows: [[a, b, tx], [c, d, ty]],
        }
    }

    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self::new(o, z, z, z, o, z)
    }

    pub fn translation(tx: T, ty: T) -> Self {
        let (o, z) = (T::one(), T::zero());
        Self::new(o, z, tx, z, o, ty)
    }

    /// Counter-clockwise rotation about the origin (in a y-up reading;
    /// maps `(1, 0)` to `(cos, sin)`).
    pub fn rotation(theta: T) -> Self {
        let (s, c) = theta.sin_cos();
        let z = T::zero();
        Self::new(c, -s, z, s, c, z)
    }

    pub fn rotation_about(theta: T, cx: T, cy: T) -> Self {
        Self::translation(-cx, -cy)
            .then(&Self::rotation(theta))
            .then(&Self::translation(cx, cy))
    }

    pub fn scale(sx: T, sy: T) -> Self {
        let z = T::zero();
        Self::new(sx, z, z, z, sy, z)
    }

    /// Builds from a full 3x3 matrix, checking every invariant.
    pub fn from_matrix(m: [[T; 3]; 3]) -> Result<Self> {
        let bottom_ok = m[2][0] == T::zero() && m[2][1] == T::zero() && m[2][2] == T::one();
        if !bottom_ok {
            return Err(Error::InvalidValue(format!(
                "affine bottom row must be (0, 0, 1), got {:?}",
                m[2]
            )));
        }
        let out = Self {
            rows: [m[0], m[1]],
        };
        if !out.is_valid() {
            return Err(Error::InvalidValue(format!(
                "affine must be finite with nonzero determinant: {out:?}"
            )));
        }
        Ok(out)
    }

    pub fn from_row_major(v: [T; 9]) -> Result<Self> {
        Self::from_matrix([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn matrix(&self) -> [[T; 3]; 3] {
        let (o, z) = (T::one(), T::zero());
        [self.rows[0], self.rows[1], [z, z, o]]
    }

    pub fn to_row_major(&self) -> [T; 9] {
        let [[a, b, tx], [c, d, ty]] = self.rows;
        let (o, z) = (T::one(), T::zero());
        [a, b, tx, c, d, ty, z, z, o]
    }

    /// Linear block `[[a, b], [c, d]]`.
    #[inline]
    pub fn linear(&self) -> [[T; 2]; 2] {
        [
            [self.rows[0][0], self.rows[0][1]],
            [self.rows[1][0], self.rows[1][1]],
        ]
    }

    #[inline]
    pub fn translation_part(&self) -> (T, T) {
        (self.rows[0][2], self.rows[1][2])
    }

    #[inline]
    pub fn det(&self) -> T {
        self.rows[0][0] * self.rows[1][1] - self.rows[0][1] * self.rows[1][0]
    }

    pub fn is_valid(&self) -> bool {
        let det = self.det();
        self.rows.iter().flatten().all(|v| v.is_finite()) && det.is_finite() && det != T::zero()
    }

    #[inline]
    pub fn apply_point(&self, p: Point2<T>) -> Point2<T> {
        let [[a, b, tx], [c, d, ty]] = self.rows;
        Point2::new(a * p.x + b * p.y + tx, c * p.x + d * p.y + ty)
    }

    /// The transform that applies `self` first and `next` second
    /// (matrix product `next * self`).
    pub fn then(&self, next: &Self) -> Self {
        let l = next.rows;
        let r = self.rows;
        let mut out = [[T::zero(); 3]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = l[i][0] * r[0][j] + l[i][1] * r[1][j];
            }
            row[2] = row[2] + l[i][2];
        }
        Self { rows: out }
    }

    pub fn invert(&self) -> Result<Self> {
        self.invert_with_threshold(T::lit(DEFAULT_SINGULARITY_THRESHOLD))
    }

    pub fn invert_with_threshold(&self, threshold: T) -> Result<Self> {
        let det = self.det();
        if !det.is_finite() || det.abs() <= threshold {
            return Err(Error::SingularTransform {
                det: det.to_f64_lossy(),
            });
        }
        let [[a, b, tx], [c, d, ty]] = self.rows;
        let ia = d / det;
        let ib = -b / det;
        let ic = -c / det;
        let id = a / det;
        Ok(Self::new(
            ia,
            ib,
            -(ia * tx + ib * ty),
            ic,
            id,
            -(ic * tx + id * ty),
        ))
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.rows
            .iter()
            .flatten()
            .zip(other.rows.iter().flatten())
            .map(|(&x, &y)| (x - y).abs())
            .fold(T::zero(), T::max)
    }

    pub fn cast<U: Scalar>(&self) -> Affine2<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        let [[a, b, tx], [cc, d, ty]] = self.rows;
        Affine2::new(c(a), c(b), c(tx), c(cc), c(d), c(ty))
    }
}

/// Applies `first`, then `second`.
#[inline]
pub fn compose<T: Scalar>(first: &Affine2<T>, second: &Affine2<T>) -> Affine2<T> {
    first.then(second)
}

impl<T: Scalar> Default for Affine2<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: fmt::Debug> fmt::Debug for Affine2<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Affine2{:?}", self.rows)
    }
}

impl<T: Scalar + Serialize> Serialize for Affine2<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for Affine2<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = <[T; 9]>::deserialize(d)?;
        Self::from_row_major(v).map_err(D::Error::custom)
    }
}
