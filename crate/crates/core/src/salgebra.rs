//! Arithmetic on the matrix *-algebra `S = C^{s x s}`.
//!
//! Elements of `S` play the role of scalars in the block methods. The
//! positive "reals" of `S` are upper-triangular matrices with a real,
//! nonnegative diagonal ([`UpperTriNonneg`]); the square root of a Hermitian
//! positive semidefinite matrix is its upper Cholesky factor, and the
//! absolute value is `|A| = sqrt(A^* A)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dense::{self, CMat, EPS};
use crate::error::{Error, Result};

/// One element of `S`: a dense `s x s` complex matrix.
pub type BlockScalar = CMat;

/// Upper-triangular `s x s` matrix with a real, nonnegative diagonal.
///
/// Entries below the diagonal are exactly zero and diagonal imaginary parts
/// are exactly zero. When every diagonal entry is strictly positive the value
/// lies in `S+` and is invertible (see [`UpperTriNonneg::is_positive`]).
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "crate::json::ComplexMatrixJson", into = "crate::json::ComplexMatrixJson")]
pub struct UpperTriNonneg(CMat);

impl fmt::Debug for UpperTriNonneg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UpperTriNonneg({})", self.0)
    }
}

impl UpperTriNonneg {
    /// Validates `m`. Lower entries and diagonal imaginary parts must be
    /// exactly zero, the diagonal real parts nonnegative.
    pub fn new(m: CMat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dims(format!("upper-triangular block must be square, got {}x{}", m.nrows(), m.ncols())));
        }
        let s = m.nrows();
        for j in 0..s {
            for i in (j + 1)..s {
                if m[(i, j)].norm() != 0.0 {
                    return Err(Error::Invalid(format!("entry ({i},{j}) below the diagonal is nonzero")));
                }
            }
            let d = m[(j, j)];
            if d.im != 0.0 || d.re < 0.0 || !d.re.is_finite() {
                return Err(Error::Invalid(format!("diagonal entry {j} is not real nonnegative: {d}")));
            }
        }
        Ok(UpperTriNonneg(m))
    }

    /// Forces the structure: zeroes the strictly lower part, drops diagonal
    /// imaginary parts, clamps the diagonal at zero and flushes diagonal
    /// entries at or below `tol` to exactly zero.
    pub(crate) fn from_upper_flushed(mut m: CMat, tol: f64) -> Self {
        let s = m.nrows();
        for j in 0..s {
            for i in (j + 1)..s {
                m[(i, j)] = dense::c(0.0, 0.0);
            }
            let d = m[(j, j)].re;
            m[(j, j)] = dense::c(if d <= tol { 0.0 } else { d }, 0.0);
        }
        UpperTriNonneg(m)
    }

    pub fn identity(s: usize) -> Self {
        UpperTriNonneg(dense::eye(s))
    }

    pub fn zero(s: usize) -> Self {
        UpperTriNonneg(dense::zeros(s, s))
    }

    /// Real diagonal element of `S+` (all entries must be positive).
    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(dense::diag(d))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &CMat {
        &self.0
    }

    pub fn into_mat(self) -> CMat {
        self.0
    }

    /// `true` when the value lies in `S+` (strictly positive diagonal).
    pub fn is_positive(&self) -> bool {
        (0..self.size()).all(|i| self.0[(i, i)].re > 0.0)
    }

    /// `N^* N`.
    pub fn gram(&self) -> CMat {
        self.0.adjoint() * &self.0
    }

    /// Inverse for values in `S+`; `None` when singular.
    pub fn inverse(&self) -> Option<CMat> {
        if !self.is_positive() {
            return None;
        }
        dense::solve_upper(&self.0, &dense::eye(self.size()))
    }

    /// Product of two elements of `S0+`, which stays in `S0+`.
    pub fn mul(&self, rhs: &UpperTriNonneg) -> UpperTriNonneg {
        UpperTriNonneg::from_upper_flushed(&self.0 * &rhs.0, 0.0)
    }
}

/// Block absolute value `|A| = cholU(A^* A)`.
///
/// Computed from a Householder QR of `A` with the diagonal phases of `R`
/// rotated away, so `A^* A` is never formed. Diagonal entries below
/// `eps * s * ||A||_2` are flushed to zero; the result is in `S+` exactly when
/// `A` is numerically nonsingular.
pub fn block_abs(a: &BlockScalar) -> UpperTriNonneg {
    assert!(a.is_square(), "block_abs expects a square block");
    let s = a.nrows();
    let (_, r) = dense::qr_positive(a);
    let tol = EPS * s as f64 * dense::norm2(a);
    UpperTriNonneg::from_upper_flushed(r, tol)
}

/// Upper Cholesky factor `R` with `R^* R = P` of a Hermitian positive
/// semidefinite `P`.
///
/// Fails with [`Error::NotPsd`] if the smallest eigenvalue of the Hermitian
/// part is below `-eps * s * ||P||_2`. Singular `P` is handled through its
/// eigendecomposition.
pub fn chol_upper(p: &BlockScalar) -> Result<UpperTriNonneg> {
    if !p.is_square() {
        return Err(Error::dims("chol_upper expects a square matrix"));
    }
    let s = p.nrows();
    if s == 0 {
        return Ok(UpperTriNonneg(dense::zeros(0, 0)));
    }
    let (vals, vecs) = dense::hermitian_eigen(p);
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = EPS * s as f64 * scale;
    let min_eig = vals[0];
    if min_eig < -tol {
        return Err(Error::NotPsd { min_eig, tol });
    }
    if scale == 0.0 {
        return Ok(UpperTriNonneg::zero(s));
    }
    let h = dense::hermitian_part(p);
    if min_eig > tol {
        if let Some(ch) = h.clone().cholesky() {
            let r = ch.l().adjoint();
            return Ok(UpperTriNonneg::from_upper_flushed(r, 0.0));
        }
    }
    // Semidefinite route: P = W diag(l) W^*, so P = L^* L with
    // L = diag(sqrt(l)) W^*, and |L| is the upper factor.
    let mut l = vecs.adjoint();
    for (i, &v) in vals.iter().enumerate() {
        let root = v.max(0.0).sqrt();
        for j in 0..s {
            l[(i, j)] *= root;
        }
    }
    let (_, r) = dense::qr_positive(&l);
    Ok(UpperTriNonneg::from_upper_flushed(r, EPS * s as f64 * scale.sqrt()))
}

/// Outcome of comparing two elements of `S0+` in the generalized Loewner
/// order `|A| <= |B|  <=>  B^* B - A^* A` positive semidefinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoewnerOrdering {
    Equal,
    /// Difference of squares positive definite.
    Less,
    /// Difference of squares positive semidefinite and nonzero.
    LessEq,
    Greater,
    GreaterEq,
    Incomparable,
}

impl LoewnerOrdering {
    /// `a <= b` in the Loewner sense.
    pub fn is_le(self) -> bool {
        matches!(self, Self::Equal | Self::Less | Self::LessEq)
    }

    pub fn is_ge(self) -> bool {
        matches!(self, Self::Equal | Self::Greater | Self::GreaterEq)
    }
}

/// Compares `na` with `nb` using the default tolerance
/// `4 * eps * s * max(||na^* na||, ||nb^* nb||)` on the eigenvalues of
/// `nb^* nb - na^* na`.
pub fn loewner_cmp(na: &UpperTriNonneg, nb: &UpperTriNonneg) -> LoewnerOrdering {
    let ga = na.gram();
    let gb = nb.gram();
    let scale = dense::norm2(&ga).max(dense::norm2(&gb));
    let tol = 4.0 * EPS * na.size() as f64 * scale;
    loewner_cmp_grams(&ga, &gb, tol)
}

/// Loewner comparison of two Hermitian matrices with an absolute tolerance.
pub fn loewner_cmp_grams(ga: &CMat, gb: &CMat, tol: f64) -> LoewnerOrdering {
    assert_eq!(ga.shape(), gb.shape(), "Loewner comparison of different sizes");
    let (vals, _) = dense::hermitian_eigen(&(gb - ga));
    let (lo, hi) = match (vals.first(), vals.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return LoewnerOrdering::Equal,
    };
    if lo >= -tol && hi <= tol {
        LoewnerOrdering::Equal
    } else if lo > tol {
        LoewnerOrdering::Less
    } else if lo >= -tol {
        LoewnerOrdering::LessEq
    } else if hi < -tol {
        LoewnerOrdering::Greater
    } else if hi <= tol {
        LoewnerOrdering::GreaterEq
    } else {
        LoewnerOrdering::Incomparable
    }
}

/// Smallest eigenvalue of `gb - ga`; nonnegative iff `ga <= gb`.
pub fn loewner_slack(ga: &CMat, gb: &CMat) -> f64 {
    dense::hermitian_eigen(&(gb - ga)).0.first().copied().unwrap_or(0.0)
}
