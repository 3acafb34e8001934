//! Small dense complex helpers shared by the block modules.
//!
//! Everything here works on `nalgebra::DMatrix<Complex64>`. The block types
//! wrap these matrices; the helpers do not know about block structure.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CMat = DMatrix<Complex64>;

/// Unit roundoff of `f64`.
pub const EPS: f64 = f64::EPSILON;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Real diagonal matrix.
pub fn diag(d: &[f64]) -> CMat {
    let mut m = zeros(d.len(), d.len());
    for (i, &v) in d.iter().enumerate() {
        m[(i, i)] = c(v, 0.0);
    }
    m
}

/// Builds a matrix from real row-major data.
pub fn from_real_rows(r: usize, cols: usize, data: &[f64]) -> CMat {
    assert_eq!(data.len(), r * cols);
    CMat::from_fn(r, cols, |i, j| c(data[i * cols + j], 0.0))
}

pub fn fro(a: &CMat) -> f64 {
    a.norm()
}

pub fn singular_values(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Spectral norm.
pub fn norm2(a: &CMat) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// 2-norm condition number; infinite for singular input.
pub fn cond2(a: &CMat) -> f64 {
    let sv = singular_values(a);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Number of singular values strictly above `tol`.
pub fn rank(a: &CMat, tol: f64) -> usize {
    singular_values(a).iter().filter(|&&s| s > tol).count()
}

/// Householder QR with the diagonal of `R` rotated onto the nonnegative real
/// axis. Returns the thin factors, so `Q` is `m x min(m, n)`.
pub fn qr_positive(a: &CMat) -> (CMat, CMat) {
    let qr = a.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..r.nrows().min(r.ncols()) {
        let d = r[(i, i)];
        let m = d.norm();
        if m > 0.0 {
            let ph = d / m;
            // R <- diag(conj(ph)) R, Q <- Q diag(ph)
            for j in 0..r.ncols() {
                r[(i, j)] *= ph.conj();
            }
            for k in 0..q.nrows() {
                q[(k, i)] *= ph;
            }
        }
        r[(i, i)] = c(r[(i, i)].re.max(0.0), 0.0);
        for k in (i + 1)..r.nrows() {
            r[(k, i)] = c(0.0, 0.0);
        }
    }
    (q, r)
}

/// Eigen-decomposition of the Hermitian part of `a`, eigenvalues ascending.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let h = hermitian_part(a);
    let e = h.symmetric_eigen();
    let mut idx: Vec<usize> = (0..e.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| e.eigenvalues[i].total_cmp(&e.eigenvalues[j]));
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(a.nrows(), idx.len(), |r, k| e.eigenvectors[(r, idx[k])]);
    (vals, vecs)
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Eigenvalues of a general square complex matrix via the complex Schur form.
pub fn eigenvalues(a: &CMat) -> Vec<Complex64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let schur = a.clone().schur();
    let (_, t) = schur.unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// Orthonormal basis of the range of `a` (left singular vectors above `tol`).
pub fn range_basis(a: &CMat, tol: f64) -> CMat {
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let cols: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > tol).collect();
    CMat::from_fn(a.nrows(), cols.len(), |r, k| u[(r, cols[k])])
}

/// Orthonormal basis of the orthogonal complement of the columns of `basis`
/// in `C^m`, where `basis` has orthonormal columns.
pub fn complement_basis(basis: &CMat) -> CMat {
    let m = basis.nrows();
    let r = basis.ncols();
    if r == m {
        return zeros(m, 0);
    }
    let proj = eye(m) - basis * basis.adjoint();
    let svd = proj.svd(true, false);
    let u = svd.u.expect("requested U");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    CMat::from_fn(m, m - r, |row, k| u[(row, idx[k])])
}

/// Orthonormal basis of the null space of `a` (right singular vectors at or
/// below `tol`, including the ones implied by a wide shape).
pub fn null_basis(a: &CMat, tol: f64) -> CMat {
    let n = a.ncols();
    let r = rank(a, tol);
    let row_space = range_basis(&a.adjoint(), tol);
    debug_assert_eq!(row_space.ncols(), r);
    complement_basis(&row_space).columns(0, n - r).into_owned()
}

/// Moore-Penrose pseudoinverse with an absolute singular value cutoff.
pub fn pinv(a: &CMat, tol: f64) -> CMat {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return zeros(n, m);
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let mut out = zeros(n, m);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            let vk = vt.row(k).adjoint();
            let uk = u.column(k).adjoint();
            out += (vk * uk).scale(1.0 / s);
        }
    }
    out
}

/// Default pseudoinverse cutoff `sigma_max * eps * max(m, n)`.
pub fn pinv_default(a: &CMat) -> CMat {
    let tol = norm2(a) * EPS * a.nrows().max(a.ncols()) as f64;
    pinv(a, tol)
}

/// Solves `R X = B` for upper-triangular `R`.
pub fn solve_upper(r: &CMat, b: &CMat) -> Option<CMat> {
    r.solve_upper_triangular(b)
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn solve_lower(l: &CMat, b: &CMat) -> Option<CMat> {
    l.solve_lower_triangular(b)
}

pub fn inverse(a: &CMat) -> Option<CMat> {
    a.clone().try_inverse()
}

pub fn random_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    })
}

pub fn random_real_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c(rng.sample(StandardNormal), 0.0))
}

/// Haar-distributed unitary matrix: QR of a complex Gaussian matrix with the
/// diagonal of `R` made positive.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let g = random_gaussian(rng, n, n);
    qr_positive(&g).0
}
