//! Block Givens transformations and the QR factorization of block
//! Hessenberg matrices.
//!
//! For `V1, V2` in `S` with `V2` invertible the transform
//!
//! ```text
//! [ Cbar  Sbar ]   [ X Z^*   X  ]
//! [ -S    C    ] = [ -Y      Y Z ],   Z = V1 V2^{-1}
//! ```
//!
//! with `X = chol_upper(I + Z^*Z)^{-*}` (lower triangular) and
//! `Y = chol_upper((I + Z Z^*)^{-1})` (upper triangular) maps `[V1; V2]` to
//! `[Xi; 0]`. Because `X` is lower and `Y` upper triangular the `2s x 2s`
//! matrix has bandwidth `s` on both sides.

use serde::{Deserialize, Serialize};

use crate::blockvec::BlockMatrix;
use crate::dense::{self, CMat};
use crate::error::{Error, Result};
use crate::json::cmat;
use crate::salgebra::{block_abs, BlockScalar, UpperTriNonneg};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockGivens {
    #[serde(with = "cmat")]
    pub cbar: BlockScalar,
    #[serde(with = "cmat")]
    pub sbar: BlockScalar,
    #[serde(with = "cmat")]
    pub s: BlockScalar,
    #[serde(with = "cmat")]
    pub c: BlockScalar,
    #[serde(with = "cmat")]
    pub z: BlockScalar,
}

fn zero_strict_upper(m: &mut CMat) {
    for j in 0..m.ncols() {
        for i in 0..j.min(m.nrows()) {
            m[(i, j)] = dense::c(0.0, 0.0);
        }
    }
}

/// Upper triangular `R` with positive diagonal and `R^* R = I + W^* W`,
/// computed from the QR factorization of `[I; W]`.
fn stacked_factor(w: &CMat) -> CMat {
    let s = w.ncols();
    let mut stacked = dense::zeros(s + w.nrows(), s);
    stacked.view_mut((0, 0), (s, s)).copy_from(&dense::eye(s));
    stacked.view_mut((s, 0), (w.nrows(), s)).copy_from(w);
    dense::qr_positive(&stacked).1
}

/// Builds the transform eliminating `v2` against `v1`.
pub fn block_givens(v1: &BlockScalar, v2: &BlockScalar) -> Result<BlockGivens> {
    let s = v1.nrows();
    if v1.shape() != (s, s) || v2.shape() != (s, s) {
        return Err(Error::dims(format!(
            "block Givens needs two square blocks of equal size, got {:?} and {:?}",
            v1.shape(),
            v2.shape()
        )));
    }
    let sv = dense::singular_values(v2);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    if smin <= smax * dense::EPS * s as f64 || smin == 0.0 {
        return Err(Error::SingularPivot);
    }
    let z = v2.clone().lu().solve(&dense::eye(s)).map(|inv| v1 * inv).ok_or(Error::SingularPivot)?;

    let r1 = stacked_factor(&z);
    let mut x = dense::solve_lower(&r1.adjoint(), &dense::eye(s)).ok_or(Error::SingularPivot)?;
    zero_strict_upper(&mut x);

    let r2 = stacked_factor(&z.adjoint());
    let r2_inv_adj = dense::solve_lower(&r2.adjoint(), &dense::eye(s)).ok_or(Error::SingularPivot)?;
    let y = block_abs(&r2_inv_adj).into_mat();

    Ok(BlockGivens { cbar: &x * z.adjoint(), sbar: x, c: &y * &z, s: y, z })
}

impl BlockGivens {
    pub fn size(&self) -> usize {
        self.z.nrows()
    }

    /// The `2s x 2s` matrix `[[Cbar, Sbar], [-S, C]]`.
    pub fn matrix(&self) -> CMat {
        let s = self.size();
        let mut m = dense::zeros(2 * s, 2 * s);
        m.view_mut((0, 0), (s, s)).copy_from(&self.cbar);
        m.view_mut((0, s), (s, s)).copy_from(&self.sbar);
        m.view_mut((s, 0), (s, s)).copy_from(&(-&self.s));
        m.view_mut((s, s), (s, s)).copy_from(&self.c);
        m
    }

    /// `G^(k)`: the transform acting on block rows `k, k+1` (zero-based) of
    /// an `n x n` block identity.
    pub fn embedded(&self, n: usize, k: usize) -> BlockMatrix {
        assert!(k + 1 < n, "block rows {k}, {} outside n = {n}", k + 1);
        let s = self.size();
        let mut g = dense::eye(n * s);
        g.view_mut((k * s, k * s), (2 * s, 2 * s)).copy_from(&self.matrix());
        BlockMatrix::new(n, s, g).expect("square block matrix")
    }

    /// Applies the transform to a pair of block rows.
    pub fn apply(&self, top: &CMat, bottom: &CMat) -> (CMat, CMat) {
        (&self.cbar * top + &self.sbar * bottom, &self.c * bottom - &self.s * top)
    }

    /// `S` as an element of `S+` (it always is: `Y` comes out of a
    /// positive-diagonal triangular factorization).
    pub fn sine(&self) -> UpperTriNonneg {
        UpperTriNonneg::from_upper_flushed(self.s.clone(), 0.0)
    }
}

/// Whether every entry with `|i - j| > bandwidth` is exactly zero.
pub fn is_banded(m: &CMat, bandwidth: usize) -> bool {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i.abs_diff(j) > bandwidth && m[(i, j)] != dense::c(0.0, 0.0) {
                return false;
            }
        }
    }
    true
}

/// Output of [`hessenberg_qr`].
#[derive(Clone, Debug)]
pub struct HessenbergQr {
    /// Unitary `Q = G^(last) ... G^(1)` (with the final normalization
    /// folded in for square input).
    pub q: BlockMatrix,
    /// `Q H`, block upper triangular. For a `(k+1) x k` slab the last block
    /// row is zero.
    pub r: CMat,
    /// The transforms in application order.
    pub transforms: Vec<BlockGivens>,
    /// Sines `S_1, S_2, ...`.
    pub sines: Vec<UpperTriNonneg>,
}

/// Reduces a block upper Hessenberg matrix, either square `n x n` or a
/// `(k+1) x k` slab, to block upper triangular form with block Givens
/// transformations.
///
/// For square input the last diagonal block is additionally brought into
/// `S0+` by a unitary factor acting on the last block row, which is folded
/// into `Q`.
pub fn hessenberg_qr(h: &CMat, s: usize) -> Result<HessenbergQr> {
    if s == 0 || !h.nrows().is_multiple_of(s) || !h.ncols().is_multiple_of(s) {
        return Err(Error::dims(format!("{:?} is not a block matrix with s = {s}", h.shape())));
    }
    let rows = h.nrows() / s;
    let cols = h.ncols() / s;
    if rows != cols && rows != cols + 1 {
        return Err(Error::dims(format!("expected n x n or (k+1) x k blocks, got {rows} x {cols}")));
    }
    let width = cols * s;
    let mut r = h.clone();
    let mut q = dense::eye(rows * s);
    let mut transforms = Vec::new();
    let mut sines = Vec::new();
    let steps = rows - 1;
    for k in 0..steps {
        let hkk = r.view((k * s, k * s), (s, s)).into_owned();
        let hsub = r.view(((k + 1) * s, k * s), (s, s)).into_owned();
        let g = block_givens(&hkk, &hsub)?;

        let top = r.view((k * s, 0), (s, width)).into_owned();
        let bottom = r.view(((k + 1) * s, 0), (s, width)).into_owned();
        let (nt, mut nb) = g.apply(&top, &bottom);
        nb.view_mut((0, 0), (s, (k + 1) * s)).fill(dense::c(0.0, 0.0));
        r.view_mut((k * s, 0), (s, width)).copy_from(&nt);
        r.view_mut(((k + 1) * s, 0), (s, width)).copy_from(&nb);

        let qt = q.view((k * s, 0), (s, rows * s)).into_owned();
        let qb = q.view(((k + 1) * s, 0), (s, rows * s)).into_owned();
        let (nqt, nqb) = g.apply(&qt, &qb);
        q.view_mut((k * s, 0), (s, rows * s)).copy_from(&nqt);
        q.view_mut(((k + 1) * s, 0), (s, rows * s)).copy_from(&nqb);

        // the new diagonal block is in S+; drop rounding below its diagonal
        let d = r.view((k * s, k * s), (s, s)).into_owned();
        let d = UpperTriNonneg::from_upper_flushed(d, 0.0).into_mat();
        r.view_mut((k * s, k * s), (s, s)).copy_from(&d);

        sines.push(g.sine());
        transforms.push(g);
    }
    if rows == cols {
        let k = rows - 1;
        let last = r.view((k * s, k * s), (s, s)).into_owned();
        let (u, t) = dense::qr_positive(&last);
        let ua = u.adjoint();
        let row = r.view((k * s, 0), (s, width)).into_owned();
        let mut new_row = &ua * row;
        new_row.view_mut((0, 0), (s, k * s)).fill(dense::c(0.0, 0.0));
        new_row.view_mut((0, k * s), (s, s)).copy_from(&t);
        r.view_mut((k * s, 0), (s, width)).copy_from(&new_row);
        let qrow = q.view((k * s, 0), (s, rows * s)).into_owned();
        q.view_mut((k * s, 0), (s, rows * s)).copy_from(&(ua * qrow));
    }
    Ok(HessenbergQr { q: BlockMatrix::new(rows, s, q)?, r, transforms, sines })
}
