//! Vectors and matrices over `S`.
//!
//! A [`BlockVector`] of length `n` is stored as an `ns x s` complex matrix and
//! a [`BlockMatrix`] as an `ns x ns` one. Block indices are zero-based
//! throughout the crate: block `0` is the first block entry.

use nalgebra::DMatrixView;
use serde::{Deserialize, Serialize};

use crate::dense::{self, CMat, EPS};
use crate::error::{Error, Result};
use crate::json::{from_row_major, to_row_major, BlockJson};
use crate::salgebra::{BlockScalar, UpperTriNonneg};

/// Relaxation factor applied to `sigma_max * eps * max(ns, s)` when deciding
/// whether a block vector has full column rank.
pub const RANK_SAFETY: f64 = 64.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlockJson", into = "BlockJson")]
pub struct BlockVector {
    n: usize,
    s: usize,
    data: CMat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlockJson", into = "BlockJson")]
pub struct BlockMatrix {
    n: usize,
    s: usize,
    data: CMat,
}

impl BlockVector {
    pub fn new(n: usize, s: usize, data: CMat) -> Result<Self> {
        if s == 0 {
            return Err(Error::dims("block size must be at least 1"));
        }
        if data.shape() != (n * s, s) {
            return Err(Error::dims(format!(
                "block vector with n={n}, s={s} needs a {}x{s} matrix, got {}x{}",
                n * s,
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(BlockVector { n, s, data })
    }

    /// Views an `ns x s` matrix as a block vector.
    pub fn from_matrix(data: CMat) -> Result<Self> {
        let s = data.ncols();
        if s == 0 || !data.nrows().is_multiple_of(s) {
            return Err(Error::dims(format!("a {}x{} matrix is not a block vector", data.nrows(), data.ncols())));
        }
        Self::new(data.nrows() / s, s, data)
    }

    pub fn zeros(n: usize, s: usize) -> Self {
        BlockVector { n, s, data: dense::zeros(n * s, s) }
    }

    /// `E_k`: block column `k` (zero-based) of the block identity.
    pub fn unit(n: usize, s: usize, k: usize) -> Self {
        assert!(k < n, "unit block index {k} out of range for n={n}");
        let mut v = Self::zeros(n, s);
        v.set_block(k, &dense::eye(s));
        v
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn as_mat(&self) -> &CMat {
        &self.data
    }

    pub fn into_mat(self) -> CMat {
        self.data
    }

    pub fn block(&self, i: usize) -> DMatrixView<'_, num_complex::Complex64> {
        self.data.view((i * self.s, 0), (self.s, self.s))
    }

    pub fn set_block(&mut self, i: usize, b: &BlockScalar) {
        assert_eq!(b.shape(), (self.s, self.s));
        self.data.view_mut((i * self.s, 0), (self.s, self.s)).copy_from(b);
    }

    /// `X A` for `A` in `S`.
    pub fn mul_right(&self, a: &BlockScalar) -> BlockVector {
        BlockVector { n: self.n, s: self.s, data: &self.data * a }
    }

    /// First `k` block entries.
    pub fn head(&self, k: usize) -> BlockVector {
        BlockVector { n: k, s: self.s, data: self.data.rows(0, k * self.s).into_owned() }
    }

    /// Block norm `||X|| = cholU(X^* X)` in `S0+`.
    pub fn norm(&self) -> UpperTriNonneg {
        let (_, r) = dense::qr_positive(&self.data);
        let tol = EPS * (self.n * self.s).max(self.s) as f64 * dense::norm2(&self.data);
        UpperTriNonneg::from_upper_flushed(r, tol)
    }

    fn check_same_shape(&self, other: &BlockVector) -> Result<()> {
        if self.n != other.n || self.s != other.s {
            return Err(Error::dims(format!(
                "block vectors of shape (n={}, s={}) and (n={}, s={})",
                self.n, self.s, other.n, other.s
            )));
        }
        Ok(())
    }
}

impl std::ops::Sub for &BlockVector {
    type Output = BlockVector;

    fn sub(self, rhs: &BlockVector) -> BlockVector {
        assert_eq!((self.n, self.s), (rhs.n, rhs.s));
        BlockVector { n: self.n, s: self.s, data: &self.data - &rhs.data }
    }
}

impl std::ops::Add for &BlockVector {
    type Output = BlockVector;

    fn add(self, rhs: &BlockVector) -> BlockVector {
        assert_eq!((self.n, self.s), (rhs.n, rhs.s));
        BlockVector { n: self.n, s: self.s, data: &self.data + &rhs.data }
    }
}

impl BlockMatrix {
    pub fn new(n: usize, s: usize, data: CMat) -> Result<Self> {
        if s == 0 {
            return Err(Error::dims("block size must be at least 1"));
        }
        if data.shape() != (n * s, n * s) {
            return Err(Error::dims(format!(
                "block matrix with n={n}, s={s} needs a {0}x{0} matrix, got {1}x{2}",
                n * s,
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(BlockMatrix { n, s, data })
    }

    pub fn identity(n: usize, s: usize) -> Self {
        BlockMatrix { n, s, data: dense::eye(n * s) }
    }

    pub fn zeros(n: usize, s: usize) -> Self {
        BlockMatrix { n, s, data: dense::zeros(n * s, n * s) }
    }

    /// Block-diagonal matrix with the given `s x s` blocks.
    pub fn block_diag(blocks: &[BlockScalar]) -> Result<Self> {
        let s = blocks.first().map(|b| b.nrows()).ok_or_else(|| Error::dims("no blocks"))?;
        let mut m = Self::zeros(blocks.len(), s);
        for (i, b) in blocks.iter().enumerate() {
            if b.shape() != (s, s) {
                return Err(Error::dims("blocks of different sizes"));
            }
            m.set_block(i, i, b);
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn as_mat(&self) -> &CMat {
        &self.data
    }

    pub fn into_mat(self) -> CMat {
        self.data
    }

    pub fn block(&self, i: usize, j: usize) -> DMatrixView<'_, num_complex::Complex64> {
        self.data.view((i * self.s, j * self.s), (self.s, self.s))
    }

    pub fn set_block(&mut self, i: usize, j: usize, b: &BlockScalar) {
        assert_eq!(b.shape(), (self.s, self.s));
        self.data.view_mut((i * self.s, j * self.s), (self.s, self.s)).copy_from(b);
    }

    /// Leading `k x k` block principal submatrix.
    pub fn principal(&self, k: usize) -> BlockMatrix {
        let m = k * self.s;
        BlockMatrix { n: k, s: self.s, data: self.data.view((0, 0), (m, m)).into_owned() }
    }

    /// `A X`.
    pub fn apply(&self, x: &BlockVector) -> Result<BlockVector> {
        if self.n != x.n || self.s != x.s {
            return Err(Error::dims(format!(
                "cannot apply an (n={}, s={}) block matrix to an (n={}, s={}) block vector",
                self.n, self.s, x.n, x.s
            )));
        }
        Ok(BlockVector { n: self.n, s: self.s, data: &self.data * &x.data })
    }

    pub fn adjoint(&self) -> BlockMatrix {
        BlockMatrix { n: self.n, s: self.s, data: self.data.adjoint() }
    }
}

impl std::ops::Mul for &BlockMatrix {
    type Output = BlockMatrix;

    fn mul(self, rhs: &BlockMatrix) -> BlockMatrix {
        assert_eq!((self.n, self.s), (rhs.n, rhs.s));
        BlockMatrix { n: self.n, s: self.s, data: &self.data * &rhs.data }
    }
}

/// Block inner product `<<X, Y>> = Y^* X`.
pub fn block_inner(x: &BlockVector, y: &BlockVector) -> Result<BlockScalar> {
    x.check_same_shape(y)?;
    Ok(y.data.adjoint() * &x.data)
}

/// Numerical rank of `x` with cutoff `scale * eps * max(ns, s) * 64`.
pub fn numerical_rank(x: &BlockVector, scale: f64) -> usize {
    let tol = rank_tolerance(x, scale);
    dense::rank(&x.data, tol)
}

fn rank_tolerance(x: &BlockVector, scale: f64) -> f64 {
    scale * EPS * (x.n * x.s).max(x.s) as f64 * RANK_SAFETY
}

/// Splits `X = Q N` with `Q` having orthonormal columns and `N = ||X||` in
/// `S+`. The rank cutoff is relative to the largest singular value of `X`.
pub fn block_normalize(x: &BlockVector) -> Result<(BlockVector, UpperTriNonneg)> {
    block_normalize_scaled(x, dense::norm2(&x.data))
}

/// [`block_normalize`] with the rank cutoff measured against `scale`
/// instead of `||X||_2`. Krylov iterations pass the norm of the block before
/// orthogonalization so cancellation is recognized as rank loss.
pub fn block_normalize_scaled(x: &BlockVector, scale: f64) -> Result<(BlockVector, UpperTriNonneg)> {
    let tol = rank_tolerance(x, scale);
    let (q, r) = dense::qr_positive(&x.data);
    let rank = dense::rank(&r, tol);
    if rank < x.s || scale == 0.0 {
        return Err(Error::RankDeficient { rank, s: x.s });
    }
    let n = UpperTriNonneg::from_upper_flushed(r, 0.0);
    Ok((BlockVector { n: x.n, s: x.s, data: q }, n))
}

/// A dense problem padded to a whole number of blocks.
#[derive(Clone, Debug)]
pub struct PaddedProblem {
    pub a: BlockMatrix,
    pub b: BlockVector,
    /// Number of blocks, `ceil(m / s)`.
    pub n: usize,
    /// Original dimension.
    pub m: usize,
}

impl PaddedProblem {
    pub fn padded(&self) -> bool {
        self.n * self.a.s() != self.m
    }

    /// Drops the padding rows of a block vector of the padded problem.
    pub fn truncate(&self, x: &BlockVector) -> CMat {
        x.as_mat().rows(0, self.m).into_owned()
    }
}

/// Pads `A` (`m x m`) and `B` (`m x s`) to `[[A, 0], [0, I]]` and `[B; 0]`
/// with `n = ceil(m / s)` blocks. No padding happens when `s` divides `m`.
pub fn pad_problem(a: &CMat, b: &CMat) -> Result<PaddedProblem> {
    let m = a.nrows();
    let s = b.ncols();
    if m == 0 || s == 0 {
        return Err(Error::dims("empty problem"));
    }
    if !a.is_square() || b.nrows() != m {
        return Err(Error::dims(format!("A is {}x{} but B is {}x{}", a.nrows(), a.ncols(), b.nrows(), b.ncols())));
    }
    let n = m.div_ceil(s);
    let big = n * s;
    let mut ah = dense::eye(big);
    ah.view_mut((0, 0), (m, m)).copy_from(a);
    let mut bh = dense::zeros(big, s);
    bh.view_mut((0, 0), (m, s)).copy_from(b);
    Ok(PaddedProblem { a: BlockMatrix { n, s, data: ah }, b: BlockVector { n, s, data: bh }, n, m })
}

impl TryFrom<BlockJson> for BlockVector {
    type Error = Error;

    fn try_from(j: BlockJson) -> Result<Self> {
        let data = from_row_major(j.n * j.s, j.s, &j.data)?;
        BlockVector::new(j.n, j.s, data)
    }
}

impl From<BlockVector> for BlockJson {
    fn from(v: BlockVector) -> Self {
        BlockJson { n: v.n, s: v.s, data: to_row_major(&v.data) }
    }
}

impl TryFrom<BlockJson> for BlockMatrix {
    type Error = Error;

    fn try_from(j: BlockJson) -> Result<Self> {
        let data = from_row_major(j.n * j.s, j.n * j.s, &j.data)?;
        BlockMatrix::new(j.n, j.s, data)
    }
}

impl From<BlockMatrix> for BlockJson {
    fn from(m: BlockMatrix) -> Self {
        BlockJson { n: m.n, s: m.s, data: to_row_major(&m.data) }
    }
}
