#![allow(dead_code)]

use blkrylov::dense::{self, random_gaussian, CMat};
use blkrylov::{BlockMatrix, BlockVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_problem(seed: u64, n: usize, s: usize) -> (BlockMatrix, BlockVector) {
    let mut r = rng(seed);
    let a = BlockMatrix::new(n, s, random_gaussian(&mut r, n * s, n * s)).unwrap();
    let b = BlockVector::new(n, s, random_gaussian(&mut r, n * s, s)).unwrap();
    (a, b)
}

/// Sizes cycling through the desk-scale range.
pub fn dims(seed: u64) -> (usize, usize) {
    let n = 2 + (seed as usize % 7);
    let s = 1 + (seed as usize / 7 % 4);
    (n, s)
}

fn cnorm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Textbook single-vector GMRES: modified Gram-Schmidt Arnoldi and complex
/// Givens rotations. Returns the residual norms after steps `0..=k_max`.
pub fn scalar_gmres(a: &CMat, b: &[Complex64], k_max: usize) -> Vec<f64> {
    let m = a.nrows();
    let beta = cnorm(b);
    let mut basis: Vec<Vec<Complex64>> = vec![b.iter().map(|z| z / beta).collect()];
    let mut rot: Vec<(Complex64, Complex64)> = Vec::new();
    let mut g = vec![Complex64::new(beta, 0.0)];
    let mut out = vec![beta];
    for j in 0..k_max {
        let vj = nalgebra::DVector::from_vec(basis[j].clone());
        let mut w: Vec<Complex64> = (a * vj).iter().copied().collect();
        let mut h = vec![Complex64::new(0.0, 0.0); j + 2];
        for (i, v) in basis.iter().enumerate() {
            let hij: Complex64 = v.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
            h[i] = hij;
            for (wk, vk) in w.iter_mut().zip(v) {
                *wk -= hij * vk;
            }
        }
        let hn = cnorm(&w);
        h[j + 1] = Complex64::new(hn, 0.0);
        for (i, &(c, s)) in rot.iter().enumerate() {
            let (x, y) = (h[i], h[i + 1]);
            h[i] = c.conj() * x + s.conj() * y;
            h[i + 1] = -s * x + c * y;
        }
        let r = (h[j].norm_sqr() + h[j + 1].norm_sqr()).sqrt();
        let (c, s) = (h[j] / r, h[j + 1] / r);
        rot.push((c, s));
        let gj = g[j];
        g[j] = c.conj() * gj;
        g.push(-s * gj);
        out.push(g[j + 1].norm());
        if j + 1 < m {
            basis.push(w.iter().map(|z| z / hn).collect());
        }
    }
    out
}

/// Textbook Givens QR of an upper Hessenberg matrix with a positive real
/// diagonal in `R`. Returns `R`.
pub fn scalar_hessenberg_r(h: &CMat) -> CMat {
    let mut r = h.clone();
    let n = r.ncols();
    let rows = r.nrows();
    for j in 0..n.min(rows - 1) {
        let (x, y) = (r[(j, j)], r[(j + 1, j)]);
        let nrm = (x.norm_sqr() + y.norm_sqr()).sqrt();
        let (c, s) = (x / nrm, y / nrm);
        for col in j..n {
            let (p, q) = (r[(j, col)], r[(j + 1, col)]);
            r[(j, col)] = c.conj() * p + s.conj() * q;
            r[(j + 1, col)] = -s * p + c * q;
        }
        r[(j + 1, j)] = Complex64::new(0.0, 0.0);
    }
    if rows == n {
        let d = r[(n - 1, n - 1)];
        if d.norm() > 0.0 {
            let ph = d.conj() / d.norm();
            for col in 0..n {
                r[(n - 1, col)] *= ph;
            }
        }
    }
    r
}

/// Complex roots of `x^n - sum_k c_k x^k` from the scalar companion matrix.
pub fn scalar_poly_roots(c: &[Complex64]) -> Vec<Complex64> {
    let n = c.len();
    let mut comp = dense::zeros(n, n);
    for i in 1..n {
        comp[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for (k, ck) in c.iter().enumerate() {
        comp[(k, n - 1)] = *ck;
    }
    dense::eigenvalues(&comp)
}

/// A problem where the monic lambda-matrix annihilates every Krylov block
/// `A^{i-1} B` but not a block combination of them.
#[derive(serde::Serialize, serde::Deserialize)]
pub struct NoncommutativeCase {
    #[serde(rename = "A")]
    pub a: BlockMatrix,
    #[serde(rename = "B")]
    pub b: BlockVector,
    #[serde(rename = "M")]
    pub m: blkrylov::LambdaMatrix,
    /// Coefficients `D_1, ..., D_n` of the combination `sum_i A^{i-1} B D_i`.
    #[serde(rename = "D", with = "blkrylov::json::cmat_vec")]
    pub d: Vec<CMat>,
}

pub const NONCOMMUTATIVE_CASE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/noncommutative.json");

pub fn build_noncommutative_case() -> NoncommutativeCase {
    use blkrylov::prescribe::{random_prescription, RandomPrescription};
    let p = random_prescription(1, &RandomPrescription::new(2, 2)).unwrap();
    let inst = blkrylov::construct(&p, 17).unwrap();
    let mut r = rng(1);
    let d = (0..2).map(|_| random_gaussian(&mut r, 2, 2)).collect();
    NoncommutativeCase { a: inst.a, b: inst.b, m: p.ritz[1].clone(), d }
}

pub fn load_noncommutative_case() -> NoncommutativeCase {
    let text = std::fs::read_to_string(NONCOMMUTATIVE_CASE).expect("stored noncommutative case");
    serde_json::from_str(&text).unwrap()
}

/// `||A||^n ||V|| + sum_k ||A||^k ||V|| ||C_k||`, the size of the terms of
/// `M(A) o V`.
pub fn circ_scale(m: &blkrylov::LambdaMatrix, a: &BlockMatrix, v: &BlockVector) -> f64 {
    let na = dense::norm2(a.as_mat());
    let nv = dense::fro(v.as_mat());
    let n = m.degree() as i32;
    na.powi(n) * nv + m.coeffs().iter().enumerate().map(|(k, c)| na.powi(k as i32) * nv * dense::norm2(c)).sum::<f64>()
}
