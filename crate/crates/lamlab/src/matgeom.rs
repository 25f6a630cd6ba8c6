//! Diagonal 2x2 matrices and their rank-one geometry.
//!
//! Every gradient handled by this crate is a diagonal 2x2 matrix, identified
//! with the plane point `(d1, d2)` of its diagonal. Under that identification
//! the difference of two matrices has rank ≤ 1 exactly when they agree in at
//! least one diagonal entry, i.e. when the two points are axis-aligned, and
//! the Frobenius norm is the Euclidean norm of the point. All the segment
//! geometry downstream (hulls, laminates) is therefore axis-parallel.

use num::{BigRational, ToPrimitive};
use serde::{Deserialize, Serialize};

/// Direction of a rank-one difference between two diagonal matrices.
///
/// `E1` means the matrices differ in the first diagonal entry only
/// (a horizontal move in the plane picture); `E2` in the second only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    E1,
    E2,
}

impl Axis {
    /// The orthogonal direction.
    #[inline]
    pub fn other(self) -> Axis {
        match self {
            Axis::E1 => Axis::E2,
            Axis::E2 => Axis::E1,
        }
    }

    /// Zero-based coordinate index: `E1 → 0`, `E2 → 1`.
    #[inline]
    pub fn idx(self) -> usize {
        match self {
            Axis::E1 => 0,
            Axis::E2 => 1,
        }
    }

    /// One-based label, as used in file formats and reports.
    #[inline]
    pub fn label(self) -> u8 {
        self.idx() as u8 + 1
    }
}

/// Result of the rank-one compatibility test between two diagonal matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankOne {
    /// The matrices are equal.
    Rank0,
    /// They differ in exactly one diagonal entry; the payload says which.
    Dir(Axis),
    /// They differ in both entries: the difference has rank 2.
    Incompatible,
}

/// A diagonal 2x2 matrix stored as its diagonal `(d1, d2)`.
///
/// Generic over the scalar so the hull layer can use exact rationals while
/// the construction layer uses `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiagMat<T> {
    pub d1: T,
    pub d2: T,
}

/// Exact-arithmetic point used by the hull layer.
pub type DiagMatQ = DiagMat<BigRational>;
/// Floating-point matrix used by the construction and FEM layers.
pub type DiagMatF = DiagMat<f64>;

impl<T> DiagMat<T> {
    #[inline]
    pub fn new(d1: T, d2: T) -> Self {
        DiagMat { d1, d2 }
    }

    /// Entry along `axis`: `d1` for `E1`, `d2` for `E2`.
    #[inline]
    pub fn entry(&self, axis: Axis) -> &T {
        match axis {
            Axis::E1 => &self.d1,
            Axis::E2 => &self.d2,
        }
    }

    /// Swap the two diagonal entries. Corresponds to conjugating by the
    /// coordinate transposition, which exchanges the roles of `E1` and `E2`.
    #[inline]
    pub fn transpose_entries(self) -> Self {
        DiagMat { d1: self.d2, d2: self.d1 }
    }
}

impl<T: num::Zero> DiagMat<T> {
    pub fn zero() -> Self {
        DiagMat { d1: T::zero(), d2: T::zero() }
    }
}

/// Rank-one compatibility with exact entry equality.
///
/// Symmetric in its arguments. With rational scalars this is exact; for
/// floating-point inputs see [`rank_one_direction_eps`].
pub fn rank_one_direction<T: PartialEq>(a: &DiagMat<T>, b: &DiagMat<T>) -> RankOne {
    let same1 = a.d1 == b.d1;
    let same2 = a.d2 == b.d2;
    match (same1, same2) {
        (true, true) => RankOne::Rank0,
        (false, true) => RankOne::Dir(Axis::E1),
        (true, false) => RankOne::Dir(Axis::E2),
        (false, false) => RankOne::Incompatible,
    }
}

/// Rank-one compatibility for floating-point matrices with an absolute
/// tolerance on entry equality. `eps = 0` reproduces the exact test.
pub fn rank_one_direction_eps(a: &DiagMatF, b: &DiagMatF, eps: f64) -> RankOne {
    let same1 = (a.d1 - b.d1).abs() <= eps;
    let same2 = (a.d2 - b.d2).abs() <= eps;
    match (same1, same2) {
        (true, true) => RankOne::Rank0,
        (false, true) => RankOne::Dir(Axis::E1),
        (true, false) => RankOne::Dir(Axis::E2),
        (false, false) => RankOne::Incompatible,
    }
}

/// `λ·f + (1−λ)·g`, entrywise.
pub fn convex_combination<T>(f: &DiagMat<T>, g: &DiagMat<T>, lambda: &T) -> DiagMat<T>
where
    T: Clone + num::Num,
{
    let one = T::one();
    let co = one - lambda.clone();
    DiagMat {
        d1: lambda.clone() * f.d1.clone() + co.clone() * g.d1.clone(),
        d2: lambda.clone() * f.d2.clone() + co * g.d2.clone(),
    }
}

impl DiagMatF {
    /// Frobenius norm; for a diagonal matrix this is the Euclidean norm of
    /// the diagonal.
    #[inline]
    pub fn norm(&self) -> f64 {
        self.d1.hypot(self.d2)
    }

    /// Frobenius distance to another diagonal matrix.
    #[inline]
    pub fn dist(&self, other: &DiagMatF) -> f64 {
        (self.d1 - other.d1).hypot(self.d2 - other.d2)
    }
}

impl DiagMatQ {
    /// Squared Frobenius norm, exact.
    pub fn norm_sq(&self) -> BigRational {
        &self.d1 * &self.d1 + &self.d2 * &self.d2
    }

    /// Round to floating point (used when handing hull output to the
    /// construction layer).
    pub fn to_f64(&self) -> DiagMatF {
        DiagMat {
            d1: self.d1.to_f64().expect("rational out of f64 range"),
            d2: self.d2.to_f64().expect("rational out of f64 range"),
        }
    }
}
