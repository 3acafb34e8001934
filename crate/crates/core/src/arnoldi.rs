//! Block Arnoldi over `S`.
//!
//! Each step multiplies the newest basis block by `A`, orthogonalizes the
//! result against all previous blocks with block modified Gram-Schmidt (one
//! full reorthogonalization pass is always applied) and normalizes it with
//! the block norm, so every subdiagonal block of the Hessenberg matrix lies in
//! `S+`.

use serde::{Deserialize, Serialize};

use crate::blockvec::{block_inner, block_normalize, block_normalize_scaled, BlockMatrix, BlockVector};
use crate::dense::{self, CMat, EPS};
use crate::error::{Error, Result};
use crate::salgebra::UpperTriNonneg;

/// Where and how the iteration lost rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakdownInfo {
    /// One-based Arnoldi step whose normalization failed: `H[step, step-1]`
    /// is singular.
    pub step: usize,
    /// Numerical rank of the candidate block. Zero means the Krylov space is
    /// invariant and the residual vanishes.
    pub rank: usize,
}

/// Incremental block Arnoldi process.
#[derive(Clone, Debug)]
pub struct BlockArnoldi<'a> {
    a: &'a BlockMatrix,
    rhs_norm: UpperTriNonneg,
    basis: Vec<BlockVector>,
    /// `columns[j]` holds the blocks `H[0..=j+1, j]` (the last one is absent
    /// when `j + 1 == n`).
    columns: Vec<Vec<CMat>>,
    breakdown: Option<BreakdownInfo>,
}

impl<'a> BlockArnoldi<'a> {
    pub fn new(a: &'a BlockMatrix, b: &BlockVector) -> Result<Self> {
        if a.n() != b.n() || a.s() != b.s() {
            return Err(Error::dims(format!("A has (n={}, s={}) but B has (n={}, s={})", a.n(), a.s(), b.n(), b.s())));
        }
        let (v1, rhs_norm) = block_normalize(b).map_err(|e| match e {
            Error::RankDeficient { rank, s } => Error::Breakdown { step: 1, rank, s },
            other => other,
        })?;
        Ok(BlockArnoldi { a, rhs_norm, basis: vec![v1], columns: Vec::new(), breakdown: None })
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn s(&self) -> usize {
        self.a.s()
    }

    /// Completed steps, i.e. Hessenberg columns computed.
    pub fn steps(&self) -> usize {
        self.columns.len()
    }

    pub fn breakdown(&self) -> Option<BreakdownInfo> {
        self.breakdown
    }

    pub fn is_complete(&self) -> bool {
        self.steps() == self.n()
    }

    /// `||B||`, the block `H[1, 0]` of the algorithm.
    pub fn rhs_norm(&self) -> &UpperTriNonneg {
        &self.rhs_norm
    }

    /// Runs one step. Fails if the previous step broke down or all `n` steps
    /// are done. A rank-deficient candidate is not an error here: the column
    /// is stored with its singular subdiagonal block and the breakdown is
    /// recorded so the caller can still use the last column.
    pub fn step(&mut self) -> Result<()> {
        if let Some(bd) = self.breakdown {
            return Err(Error::Breakdown { step: bd.step, rank: bd.rank, s: self.s() });
        }
        if self.is_complete() {
            return Err(Error::Invalid("block Arnoldi already ran to completion".into()));
        }
        let j = self.steps();
        let n = self.n();
        let s = self.s();
        let vj = &self.basis[j];
        let mut w = self.a.apply(vj)?;
        let scale = dense::norm2(w.as_mat());

        let mut col: Vec<CMat> = vec![dense::zeros(s, s); j + 1];
        for _pass in 0..2 {
            for (i, vi) in self.basis.iter().enumerate().take(j + 1) {
                let hij = block_inner(&w, vi)?;
                w = &w - &vi.mul_right(&hij);
                col[i] += hij;
            }
        }

        if j + 1 < n {
            match block_normalize_scaled(&w, scale) {
                Ok((v, sub)) => {
                    col.push(sub.into_mat());
                    self.basis.push(v);
                }
                Err(Error::RankDeficient { rank, .. }) => {
                    let sub = if rank == 0 {
                        dense::zeros(s, s)
                    } else {
                        let (_, r) = dense::qr_positive(w.as_mat());
                        let tol = scale * EPS * (n * s) as f64 * crate::blockvec::RANK_SAFETY;
                        UpperTriNonneg::from_upper_flushed(r, tol).into_mat()
                    };
                    col.push(sub);
                    self.breakdown = Some(BreakdownInfo { step: j + 2, rank });
                }
                Err(e) => return Err(e),
            }
        }
        self.columns.push(col);
        Ok(())
    }

    /// Snapshot of the current decomposition.
    pub fn decomposition(&self) -> ArnoldiDecomposition {
        let n = self.n();
        let s = self.s();
        let k = self.steps();
        let rows = if k < n { k + 1 } else { k };
        let mut h = dense::zeros(rows * s, k * s);
        for (j, col) in self.columns.iter().enumerate() {
            for (i, blk) in col.iter().enumerate() {
                h.view_mut((i * s, j * s), (s, s)).copy_from(blk);
            }
        }
        let mut v = dense::zeros(n * s, self.basis.len() * s);
        for (i, b) in self.basis.iter().enumerate() {
            v.view_mut((0, i * s), (n * s, s)).copy_from(b.as_mat());
        }
        ArnoldiDecomposition {
            n,
            s,
            k,
            rhs_norm: self.rhs_norm.clone(),
            basis: v,
            hessenberg: h,
            breakdown: self.breakdown,
        }
    }
}

/// Result of `k` block Arnoldi steps: `A V_k = V_{k+1} H_k` with the
/// `(k+1) x k` block slab `H_k`, or `A V = V H` once `k = n`.
#[derive(Clone, Debug)]
pub struct ArnoldiDecomposition {
    pub n: usize,
    pub s: usize,
    /// Steps completed.
    pub k: usize,
    /// `||B||`.
    pub rhs_norm: UpperTriNonneg,
    /// `ns x js` matrix of basis blocks, `j = k + 1` unless the run completed
    /// or broke down.
    pub basis: CMat,
    /// `(k+1)s x ks` slab, or `ns x ns` when `k = n`.
    pub hessenberg: CMat,
    pub breakdown: Option<BreakdownInfo>,
}

impl ArnoldiDecomposition {
    /// Number of basis blocks available.
    pub fn basis_blocks(&self) -> usize {
        self.basis.ncols() / self.s
    }

    /// Basis block `V_i` (zero-based).
    pub fn v(&self, i: usize) -> BlockVector {
        BlockVector::new(self.n, self.s, self.basis.columns(i * self.s, self.s).into_owned())
            .expect("basis block has block-vector shape")
    }

    /// First `k` basis blocks as an `ns x ks` matrix.
    pub fn basis_head(&self, k: usize) -> CMat {
        self.basis.columns(0, k * self.s).into_owned()
    }

    /// Block `H[i, j]` (zero-based).
    pub fn h(&self, i: usize, j: usize) -> CMat {
        self.hessenberg.view((i * self.s, j * self.s), (self.s, self.s)).into_owned()
    }

    /// Leading `(k+1) x k` slab, `k < n`, `k <= self.k`.
    pub fn slab(&self, k: usize) -> CMat {
        assert!(k <= self.k && k < self.n, "slab({k}) of a {}-step run with n={}", self.k, self.n);
        self.hessenberg.view((0, 0), ((k + 1) * self.s, k * self.s)).into_owned()
    }

    /// Leading `k x k` principal block submatrix `H^(k)`.
    pub fn principal(&self, k: usize) -> BlockMatrix {
        assert!(k <= self.k);
        let m = k * self.s;
        BlockMatrix::new(k, self.s, self.hessenberg.view((0, 0), (m, m)).into_owned()).expect("square principal block")
    }

    /// Full Hessenberg matrix of a completed run.
    pub fn full_hessenberg(&self) -> Option<BlockHessenberg> {
        if self.k != self.n {
            return None;
        }
        BlockHessenberg::new(BlockMatrix::new(self.n, self.s, self.hessenberg.clone()).ok()?).ok()
    }

    /// `||A V_k - V_{k+1} H_k||_F`, or `||A V - V H||_F` for a completed run.
    pub fn relation_residual(&self, a: &BlockMatrix) -> f64 {
        let k = self.k;
        let vk = self.basis_head(k);
        let rows = self.hessenberg.nrows() / self.s;
        let vk1 = self.basis_head(rows.min(self.basis_blocks()));
        let h = self.hessenberg.view((0, 0), (vk1.ncols(), k * self.s)).into_owned();
        dense::fro(&(a.as_mat() * vk - vk1 * h))
    }

    /// `||V^* V - I||_F` over the available basis blocks.
    pub fn orthogonality_loss(&self) -> f64 {
        let m = self.basis.ncols();
        dense::fro(&(self.basis.adjoint() * &self.basis - dense::eye(m)))
    }
}

/// A block upper Hessenberg matrix whose subdiagonal blocks are in `S+`.
///
/// Blocks below the first block subdiagonal are exactly zero and each
/// subdiagonal block is upper triangular with a positive real diagonal, so as
/// a complex matrix it has exactly `s` subdiagonals with a positive outermost
/// one.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockHessenberg(BlockMatrix);

impl BlockHessenberg {
    pub fn new(m: BlockMatrix) -> Result<Self> {
        let s = m.s();
        let data = m.as_mat();
        let size = m.n() * s;
        for j in 0..size {
            let jb = j / s;
            for i in 0..size {
                let ib = i / s;
                let z = data[(i, j)];
                let below_band = ib > jb + 1 || (ib == jb + 1 && i % s > j % s);
                if below_band && z.norm() != 0.0 {
                    return Err(Error::Invalid(format!("entry ({i},{j}) violates block Hessenberg structure")));
                }
                if ib == jb + 1 && i % s == j % s && !(z.im == 0.0 && z.re > 0.0) {
                    return Err(Error::Invalid(format!("subdiagonal block ({ib},{jb}) is not in S+")));
                }
            }
        }
        Ok(BlockHessenberg(m))
    }

    pub fn as_block_matrix(&self) -> &BlockMatrix {
        &self.0
    }

    pub fn into_block_matrix(self) -> BlockMatrix {
        self.0
    }
}

/// Runs `k_max` steps of block Arnoldi (Algorithm "run to completion" when
/// `k_max = n`).
///
/// Fails with [`Error::Breakdown`] when the basis block needed for the
/// returned relation cannot be formed because the candidate block lost rank.
pub fn block_arnoldi(a: &BlockMatrix, b: &BlockVector, k_max: usize) -> Result<ArnoldiDecomposition> {
    if k_max > a.n() {
        return Err(Error::Invalid(format!("k_max = {k_max} exceeds n = {}", a.n())));
    }
    let mut process = BlockArnoldi::new(a, b)?;
    for _ in 0..k_max {
        process.step()?;
    }
    if let Some(bd) = process.breakdown() {
        return Err(Error::Breakdown { step: bd.step, rank: bd.rank, s: a.s() });
    }
    Ok(process.decomposition())
}
