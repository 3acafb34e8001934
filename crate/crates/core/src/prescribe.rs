//! Prescribing block GMRES residual norms and block Arnoldi Ritz
//! lambda-matrices.
//!
//! Given admissible norms `F_0 >= F_1 >= ... >= F_{n-1} > 0` and monic
//! lambda-matrices `M^(1), ..., M^(n)` whose constant coefficients are
//! consistent with the norm decrements, [`construct`] returns
//! `A = V D U C U^{-1} D^{-1} V^*` and `B = V E_1 F_0` for which block GMRES
//! has exactly these residual norms and every `M^(k)` annihilates
//! `H^(k)` applied to `E_1 ||B||`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arnoldi::block_arnoldi;
use crate::blockvec::{BlockMatrix, BlockVector, RANK_SAFETY};
use crate::dense::{self, CMat, EPS};
use crate::error::{Error, Result};
use crate::lambda_matrix::{LambdaMatrix, SolventChain};
use crate::matching::{bottleneck_distance, spectral_radius};
use crate::salgebra::{block_abs, chol_upper, loewner_cmp, loewner_slack, UpperTriNonneg};
use crate::solvers::solve;
use crate::solvers::SolveOptions;

/// Condition number above which [`construct`] refuses to proceed.
pub const COND_LIMIT: f64 = 1e12;

/// Largest allowed `||P_1 - P_2||_2` between the orthogonal projectors onto
/// two ranges that are considered equal.
pub const RANGE_TOL: f64 = 1e-7;

/// Prescribed residual norms and Ritz lambda-matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PrescriptionJson", into = "PrescriptionJson")]
pub struct ConvergencePrescription {
    pub n: usize,
    pub s: usize,
    /// `F_0, ..., F_{n-1}`.
    pub f: Vec<UpperTriNonneg>,
    /// `M^(1), ..., M^(n)`; `ritz[k-1]` has degree `k`.
    pub ritz: Vec<LambdaMatrix>,
    pub seed: Option<u64>,
}

/// How intermediate Ritz lambda-matrices are filled in when only the final
/// one is given as a solvent chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RitzMode {
    /// `M^(k)(lambda) = lambda^k I - P_k`, `P_k` the orthogonal projector
    /// onto the range of the Gram decrement at step `k`. Always consistent.
    Zero,
    /// Taken from the `intermediate` list.
    Explicit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RitzJson {
    List(Vec<LambdaMatrix>),
    Chain {
        solvent_chain: SolventChain,
        ritz_mode: RitzMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        intermediate: Option<Vec<LambdaMatrix>>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PrescriptionJson {
    n: usize,
    s: usize,
    #[serde(rename = "F")]
    f: Vec<UpperTriNonneg>,
    ritz: RitzJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl TryFrom<PrescriptionJson> for ConvergencePrescription {
    type Error = Error;

    fn try_from(j: PrescriptionJson) -> Result<Self> {
        let ritz = match j.ritz {
            RitzJson::List(list) => list,
            RitzJson::Chain { solvent_chain, ritz_mode, intermediate } => {
                let last = LambdaMatrix::from_solvent_chain(&solvent_chain)?;
                let mut list = match ritz_mode {
                    RitzMode::Zero => {
                        if j.f.len() != j.n {
                            return Err(Error::dims(format!("n = {} but {} norms", j.n, j.f.len())));
                        }
                        projector_ritz(&j.f)?
                    }
                    RitzMode::Explicit => intermediate.ok_or_else(|| {
                        Error::Invalid("ritz_mode \"explicit\" needs an \"intermediate\" list".into())
                    })?,
                };
                list.push(last);
                list
            }
        };
        ConvergencePrescription::new(j.s, j.f, ritz, j.seed)
    }
}

impl From<ConvergencePrescription> for PrescriptionJson {
    fn from(p: ConvergencePrescription) -> Self {
        PrescriptionJson { n: p.n, s: p.s, f: p.f, ritz: RitzJson::List(p.ritz), seed: p.seed }
    }
}

/// `<<F, F>>^{-1} = F^{-1} F^{-*}`.
fn gram_inverse(f: &UpperTriNonneg) -> Result<CMat> {
    let inv = f.inverse().ok_or_else(|| Error::Invalid("residual norm is singular".into()))?;
    Ok(&inv * inv.adjoint())
}

/// Rank cutoff for a Hermitian decrement measured against `scale`.
fn rank_tol(scale: f64, s: usize) -> f64 {
    scale * EPS * s as f64 * RANK_SAFETY
}

/// `Delta_k = <<F_k>>^{-1} - <<F_{k-1}>>^{-1}` (Hermitian part) and the
/// scale used for its rank decisions.
fn decrement(f: &[UpperTriNonneg], k: usize) -> Result<(CMat, f64)> {
    let cur = gram_inverse(&f[k])?;
    let prev = gram_inverse(&f[k - 1])?;
    let scale = dense::norm2(&cur);
    Ok((dense::hermitian_part(&(cur - prev)), scale))
}

/// Upper Cholesky factor of a decrement with eigenvalues below `tol` set to
/// zero, so that cancellation noise does not read as indefiniteness.
fn decrement_factor(delta: &CMat, tol: f64) -> Result<CMat> {
    let (vals, vecs) = dense::hermitian_eigen(delta);
    let clean: Vec<f64> = vals.iter().map(|&v| if v <= tol { 0.0 } else { v }).collect();
    let m = &vecs * dense::diag(&clean) * vecs.adjoint();
    Ok(chol_upper(&dense::hermitian_part(&m))?.into_mat())
}

fn projector(basis: &CMat) -> CMat {
    basis * basis.adjoint()
}

fn range_projector(m: &CMat, tol: f64) -> CMat {
    projector(&dense::range_basis(m, tol))
}

/// `M^(k)(lambda) = lambda^k I - P_k` for `k = 1..n-1`.
fn projector_ritz(f: &[UpperTriNonneg]) -> Result<Vec<LambdaMatrix>> {
    let s = f.first().map(UpperTriNonneg::size).unwrap_or(0);
    let mut out = Vec::new();
    for k in 1..f.len() {
        let (delta, scale) = decrement(f, k)?;
        let p = range_projector(&delta, rank_tol(scale, s));
        let mut coeffs = vec![dense::zeros(s, s); k];
        coeffs[0] = p;
        out.push(LambdaMatrix::new(s, coeffs)?);
    }
    Ok(out)
}

impl ConvergencePrescription {
    pub fn new(s: usize, f: Vec<UpperTriNonneg>, ritz: Vec<LambdaMatrix>, seed: Option<u64>) -> Result<Self> {
        let n = f.len();
        if n == 0 {
            return Err(Error::Invalid("a prescription needs at least F_0".into()));
        }
        if ritz.len() != n {
            return Err(Error::dims(format!("{n} residual norms but {} Ritz lambda-matrices", ritz.len())));
        }
        if let Some(bad) = f.iter().find(|fk| fk.size() != s) {
            return Err(Error::dims(format!("residual norm of size {}, expected {s}", bad.size())));
        }
        for (i, m) in ritz.iter().enumerate() {
            if m.degree() != i + 1 || m.s() != s {
                return Err(Error::dims(format!(
                    "M^({}) has degree {} and block size {}, expected {} and {s}",
                    i + 1,
                    m.degree(),
                    m.s(),
                    i + 1
                )));
            }
        }
        Ok(ConvergencePrescription { n, s, f, ritz, seed })
    }

    /// `G_k` with `G_k^* G_k = F_{k-1}^* F_{k-1} - F_k^* F_k` for
    /// `k = 1..n-1`, and `G_n = F_{n-1}`.
    pub fn gram_decrements(&self) -> Result<Vec<UpperTriNonneg>> {
        let mut out = Vec::with_capacity(self.n);
        for k in 1..self.n {
            out.push(chol_upper(&(self.f[k - 1].gram() - self.f[k].gram()))?);
        }
        out.push(self.f[self.n - 1].clone());
        Ok(out)
    }
}

/// Outcome of [`check_admissible`].
#[derive(Clone, Debug, PartialEq)]
pub enum Admissibility {
    Ok,
    /// The sequence fails at step `k`: `F_k` is not below `F_{k-1}`, or `k`
    /// is the last index and `F_k` is singular. `slack` is the smallest
    /// eigenvalue of the offending Gram difference (or of `<<F_k>>`).
    Violation {
        k: usize,
        slack: f64,
    },
}

impl Admissibility {
    pub fn is_ok(&self) -> bool {
        matches!(self, Admissibility::Ok)
    }
}

/// Checks `F_0 >= F_1 >= ... >= F_{n-1} > 0` in the generalized Loewner
/// order.
pub fn check_admissible(f: &[UpperTriNonneg]) -> Admissibility {
    for k in 1..f.len() {
        if !loewner_cmp(&f[k], &f[k - 1]).is_le() {
            return Admissibility::Violation { k, slack: loewner_slack(&f[k].gram(), &f[k - 1].gram()) };
        }
    }
    match f.last() {
        Some(last) if !last.is_positive() => {
            Admissibility::Violation { k: f.len() - 1, slack: dense::hermitian_eigen(&last.gram()).0[0] }
        }
        _ => Admissibility::Ok,
    }
}

/// [`check_admissible`] on Gram matrices `<<R_k, R_k>>` directly, for data
/// that need not come from elements of `S+`: a Gram matrix that is not
/// positive semidefinite (or, for the last one, not definite) is a
/// violation too.
pub fn check_admissible_grams(grams: &[CMat]) -> Admissibility {
    let scale = grams.iter().map(dense::norm2).fold(0.0, f64::max);
    let tol = 4.0 * EPS * grams.first().map(|g| g.nrows()).unwrap_or(1) as f64 * scale;
    for (k, g) in grams.iter().enumerate() {
        let min_eig = dense::hermitian_eigen(g).0.first().copied().unwrap_or(0.0);
        let last = k + 1 == grams.len();
        if min_eig < -tol || (last && min_eig <= tol) {
            return Admissibility::Violation { k, slack: min_eig };
        }
        if k > 0 {
            let slack = loewner_slack(g, &grams[k - 1]);
            if slack < -tol {
                return Admissibility::Violation { k, slack };
            }
        }
    }
    Admissibility::Ok
}

/// Outcome of [`check_consistency`].
#[derive(Clone, Debug, PartialEq)]
pub enum Consistency {
    Ok,
    RangeMismatch { k: usize, rank_decrement: usize, rank_c0: usize, projector_gap: f64 },
}

impl Consistency {
    pub fn is_ok(&self) -> bool {
        matches!(self, Consistency::Ok)
    }
}

/// Checks `Range(<<F_k>>^{-1} - <<F_{k-1}>>^{-1}) = Range(C_0^(k))` for
/// `k = 1..n-1`.
pub fn check_consistency(f: &[UpperTriNonneg], ritz: &[LambdaMatrix]) -> Result<Consistency> {
    let s = f.first().map(UpperTriNonneg::size).unwrap_or(0);
    for k in 1..f.len().min(ritz.len() + 1) {
        let (delta, scale) = decrement(f, k)?;
        let tol_d = rank_tol(scale, s);
        let c0 = ritz[k - 1].coeff(0);
        let tol_c = rank_tol(dense::norm2(c0), s);
        let rank_d = dense::rank(&delta, tol_d);
        let rank_c = dense::rank(c0, tol_c);
        let gap = dense::norm2(&(range_projector(&delta, tol_d) - range_projector(c0, tol_c)));
        if rank_d != rank_c || gap > RANGE_TOL {
            return Ok(Consistency::RangeMismatch { k, rank_decrement: rank_d, rank_c0: rank_c, projector_gap: gap });
        }
    }
    Ok(Consistency::Ok)
}

/// The unit upper block triangular matrix with block `(j, k)` equal to
/// `-C_j^(k)` for `j < k` (zero-based rows, `k = 1..n-1`), the inverse of
/// `U`.
pub fn build_u_inverse(ritz: &[LambdaMatrix]) -> Result<BlockMatrix> {
    let n = ritz.len();
    let s = ritz.first().map(LambdaMatrix::s).ok_or_else(|| Error::Invalid("no Ritz lambda-matrices".into()))?;
    let mut m = BlockMatrix::identity(n, s);
    for k in 1..n {
        let mk = &ritz[k - 1];
        for j in 0..k {
            m.set_block(j, k, &(-mk.coeff(j)));
        }
    }
    Ok(m)
}

/// `U` of the factorization `K = V D U` of the Krylov matrix.
pub fn build_u(ritz: &[LambdaMatrix]) -> Result<BlockMatrix> {
    let inv = build_u_inverse(ritz)?;
    let u = dense::solve_upper(inv.as_mat(), &dense::eye(inv.as_mat().nrows())).ok_or(Error::SingularPivot)?;
    BlockMatrix::new(inv.n(), inv.s(), unit_upper_cleanup(u, inv.s()))
}

/// Exact zeros below the block diagonal and exact identity diagonal blocks.
fn unit_upper_cleanup(mut u: CMat, s: usize) -> CMat {
    let m = u.nrows();
    for j in 0..m {
        for i in 0..m {
            if i / s > j / s {
                u[(i, j)] = dense::c(0.0, 0.0);
            } else if i / s == j / s {
                u[(i, j)] = dense::c(if i == j { 1.0 } else { 0.0 }, 0.0);
            }
        }
    }
    u
}

/// How the free parameters of `D_k` at (partially) stagnating steps are
/// chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreeParams {
    /// Identity on the complementary coordinates.
    Canonical,
    /// A seeded random unitary times a positive scale on the complementary
    /// coordinates.
    Seeded(u64),
}

/// One diagonal block of `D` with its unitary companion: `R^* Q D = C_0`,
/// `R = chol_upper(Delta)`.
#[derive(Clone, Debug)]
pub struct DiagonalFactor {
    pub d: UpperTriNonneg,
    pub q: CMat,
}

/// `D_1 = F_0` followed by the solutions `D_{k+1}` of
/// `chol_upper(Delta_k)^* (Q D_{k+1}) = C_0^(k)`, `k = 1..n-1`.
pub fn build_d_factors(f: &[UpperTriNonneg], ritz: &[LambdaMatrix], free: FreeParams) -> Result<Vec<DiagonalFactor>> {
    let s = f.first().map(UpperTriNonneg::size).ok_or_else(|| Error::Invalid("no residual norms".into()))?;
    let mut rng = match free {
        FreeParams::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        FreeParams::Canonical => None,
    };
    let mut out = vec![DiagonalFactor { d: f[0].clone(), q: dense::eye(s) }];
    for k in 1..f.len() {
        if let Consistency::RangeMismatch { rank_decrement, rank_c0, .. } = check_consistency(&f[..=k], &ritz[..k])? {
            return Err(Error::InconsistentPrescription {
                k,
                reason: format!("decrement has rank {rank_decrement}, C_0 has rank {rank_c0} or a different range"),
            });
        }
        let (delta, scale) = decrement(f, k)?;
        let tol = rank_tol(scale, s);
        let c0 = ritz[k - 1].coeff(0);
        let r = decrement_factor(&delta, tol)?;
        let rs = r.adjoint();
        let x = if dense::rank(&delta, tol) == s {
            dense::solve_lower(&rs, c0).ok_or(Error::SingularPivot)?
        } else {
            let particular = dense::pinv(&rs, tol.sqrt()) * c0;
            let null_r = dense::null_basis(&rs, tol.sqrt());
            let null_c = dense::null_basis(c0, rank_tol(dense::norm2(c0), s));
            if null_r.ncols() != null_c.ncols() {
                return Err(Error::InconsistentPrescription {
                    k,
                    reason: format!(
                        "null spaces of dimension {} and {} after factorization",
                        null_r.ncols(),
                        null_c.ncols()
                    ),
                });
            }
            let mut y = null_c.adjoint();
            if let Some(rng) = rng.as_mut() {
                let w = dense::random_unitary(rng, null_r.ncols());
                let t: f64 = rng.random_range(0.5..2.0);
                y = (w * y).scale(t);
            }
            particular + null_r * y
        };
        let d = block_abs(&x);
        if !d.is_positive() {
            return Err(Error::InconsistentPrescription { k, reason: "D_k came out singular".into() });
        }
        let d_inv = d.inverse().ok_or(Error::SingularPivot)?;
        out.push(DiagonalFactor { q: &x * d_inv, d });
    }
    Ok(out)
}

/// Block diagonal `D` from [`build_d_factors`].
pub fn build_d(f: &[UpperTriNonneg], ritz: &[LambdaMatrix], free: FreeParams) -> Result<BlockMatrix> {
    let blocks: Vec<CMat> = build_d_factors(f, ritz, free)?.into_iter().map(|df| df.d.into_mat()).collect();
    BlockMatrix::block_diag(&blocks)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConstructOptions {
    /// Seed for the random unitary `V`.
    pub seed: u64,
    /// Randomize the free parameters of `D` at stagnating steps (from the
    /// same seed) instead of using the canonical choice.
    pub randomize_free: bool,
}

/// `(A, B)` and the factors it was built from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstructedInstance {
    #[serde(rename = "A")]
    pub a: BlockMatrix,
    #[serde(rename = "B")]
    pub b: BlockVector,
    #[serde(rename = "U")]
    pub u: BlockMatrix,
    #[serde(rename = "D")]
    pub d: BlockMatrix,
    #[serde(rename = "C")]
    pub c: BlockMatrix,
    #[serde(rename = "V")]
    pub v: BlockMatrix,
    /// `D U C U^{-1} D^{-1}`.
    #[serde(rename = "H")]
    pub h: BlockMatrix,
    pub seed: u64,
    pub cond_u: f64,
    pub cond_d: f64,
}

/// Builds `(A, B)` with the canonical free parameters.
pub fn construct(p: &ConvergencePrescription, seed: u64) -> Result<ConstructedInstance> {
    construct_with(p, ConstructOptions { seed, randomize_free: false })
}

pub fn construct_with(p: &ConvergencePrescription, opts: ConstructOptions) -> Result<ConstructedInstance> {
    let n = p.n;
    let s = p.s;
    if let Admissibility::Violation { k, slack } = check_admissible(&p.f) {
        return Err(Error::InconsistentPrescription {
            k,
            reason: format!("residual norms are not admissible (slack {slack:.3e})"),
        });
    }
    if let Consistency::RangeMismatch { k, rank_decrement, rank_c0, projector_gap } = check_consistency(&p.f, &p.ritz)?
    {
        return Err(Error::InconsistentPrescription {
            k,
            reason: format!("decrement rank {rank_decrement}, C_0 rank {rank_c0}, projector gap {projector_gap:.3e}"),
        });
    }
    let m = &p.ritz[n - 1];
    let c0 = m.coeff(0);
    if dense::rank(c0, rank_tol(dense::norm2(c0), s)) < s {
        return Err(Error::InconsistentPrescription { k: n, reason: "C_0 of M^(n) is singular".into() });
    }

    let free = if opts.randomize_free { FreeParams::Seeded(opts.seed ^ 0x5eed_f4ee) } else { FreeParams::Canonical };
    let factors = build_d_factors(&p.f, &p.ritz, free)?;
    let d_blocks: Vec<CMat> = factors.iter().map(|df| df.d.as_mat().clone()).collect();
    let d = BlockMatrix::block_diag(&d_blocks)?;
    let u_inv = build_u_inverse(&p.ritz)?;
    let u = build_u(&p.ritz)?;
    let cond_u = dense::cond2(u.as_mat());
    let cond_d = dense::cond2(d.as_mat());
    for (what, cond) in [("U", cond_u), ("D", cond_d)] {
        if cond.is_nan() || cond > COND_LIMIT {
            return Err(Error::IllConditioned { what: what.into(), cond, limit: COND_LIMIT });
        }
    }
    let c = m.companion().into_block_matrix();

    // H = D U C U^{-1} D^{-1} with U^{-1} known explicitly
    let ucu = u.as_mat() * c.as_mat() * u_inv.as_mat();
    let mut h = dense::zeros(n * s, n * s);
    for i in 0..n {
        for j in 0..n {
            if i > j + 1 {
                continue;
            }
            let dj_inv = d_blocks[j].clone().try_inverse().ok_or(Error::SingularPivot)?;
            let blk = if i == j + 1 {
                // U C U^{-1} has identity subdiagonal blocks
                let mut sub = &d_blocks[i] * &dj_inv;
                for r in 0..s {
                    for col in 0..r {
                        sub[(r, col)] = dense::c(0.0, 0.0);
                    }
                    sub[(r, r)] = dense::c(sub[(r, r)].re, 0.0);
                }
                sub
            } else {
                &d_blocks[i] * ucu.view((i * s, j * s), (s, s)) * dj_inv
            };
            h.view_mut((i * s, j * s), (s, s)).copy_from(&blk);
        }
    }
    let h = BlockMatrix::new(n, s, h)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let v = dense::random_unitary(&mut rng, n * s);
    let a = &v * h.as_mat() * v.adjoint();
    let b = v.columns(0, s) * p.f[0].as_mat();
    Ok(ConstructedInstance {
        a: BlockMatrix::new(n, s, a)?,
        b: BlockVector::new(n, s, b)?,
        u,
        d,
        c,
        v: BlockMatrix::new(n, s, v)?,
        h,
        seed: opts.seed,
        cond_u,
        cond_d,
    })
}

/// Thresholds used by [`verify`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyTolerances {
    pub residual: f64,
    pub annihilation: f64,
    pub spectrum: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        VerifyTolerances { residual: 1e-8, annihilation: 1e-8, spectrum: 1e-7 }
    }
}

/// Forward check of a constructed instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// `||Gram(R_k) - F_k^* F_k||_F / ||F_0||_2^2` for `k = 0..n-1`.
    pub residual_mismatch: Vec<f64>,
    /// `||M^(k)(H^(k)) o E_1 ||B|| ||_F / scale_k` for `k = 1..n`, with
    /// `scale_k = ||F_0||_2 (||H||_2^k + sum_j ||H||_2^j ||C_j^(k)||_2)`.
    pub annihilation: Vec<f64>,
    /// Bottleneck distance between `eig(A)` and the latent roots of `M^(n)`
    /// divided by the spectral radius of the latter.
    pub spectrum_distance: f64,
    /// `||H_forward - H_constructed||_F / ||H||_F`, `None` when no
    /// construction is at hand.
    pub hessenberg_mismatch: Option<f64>,
    pub tolerances: VerifyTolerances,
    pub residual_ok: bool,
    pub annihilation_ok: bool,
    pub spectrum_ok: bool,
}

impl Report {
    pub fn max_residual_mismatch(&self) -> f64 {
        self.residual_mismatch.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_annihilation(&self) -> f64 {
        self.annihilation.iter().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.residual_ok && self.annihilation_ok && self.spectrum_ok
    }
}

/// Runs block Arnoldi and block GMRES on `(inst.A, inst.B)` and measures how
/// well the prescription is met.
pub fn verify(inst: &ConstructedInstance, p: &ConvergencePrescription) -> Result<Report> {
    verify_problem(&inst.a, &inst.b, p, Some(&inst.h), VerifyTolerances::default())
}

/// [`verify`] for an arbitrary `(A, B)`.
pub fn verify_problem(
    a: &BlockMatrix,
    b: &BlockVector,
    p: &ConvergencePrescription,
    h_expected: Option<&BlockMatrix>,
    tol: VerifyTolerances,
) -> Result<Report> {
    let n = p.n;
    let s = p.s;
    if a.n() != n || a.s() != s || b.n() != n || b.s() != s {
        return Err(Error::dims(format!("prescription is (n={n}, s={s}) but A is (n={}, s={})", a.n(), a.s())));
    }
    let trace = solve(a, b, SolveOptions::steps(n))?;
    let f0_sq = dense::norm2(p.f[0].as_mat()).powi(2);
    let residual_mismatch: Vec<f64> = (0..n)
        .map(|k| {
            let gram = trace.gmres_gram(k.min(trace.steps.len()));
            dense::fro(&(gram - p.f[k].gram())) / f0_sq
        })
        .collect();

    let dec = block_arnoldi(a, b, n)?;
    let h_norm = dense::norm2(&dec.hessenberg);
    let f0_norm = f0_sq.sqrt();
    let mut annihilation = Vec::with_capacity(n);
    for k in 1..=n {
        let hk = dec.principal(k);
        let mut e1 = BlockVector::zeros(k, s);
        e1.set_block(0, dec.rhs_norm.as_mat());
        let m = &p.ritz[k - 1];
        let val = m.circ_action(&hk, &e1)?;
        let scale = f0_norm
            * (h_norm.powi(k as i32)
                + m.coeffs().iter().enumerate().map(|(j, c)| h_norm.powi(j as i32) * dense::norm2(c)).sum::<f64>());
        annihilation.push(dense::fro(val.as_mat()) / scale.max(f64::MIN_POSITIVE));
    }

    let eig_a = dense::eigenvalues(a.as_mat());
    let roots = p.ritz[n - 1].latent_roots();
    let radius = spectral_radius(&roots).max(f64::MIN_POSITIVE);
    let spectrum_distance = bottleneck_distance(&eig_a, &roots).unwrap_or(f64::INFINITY) / radius;

    let hessenberg_mismatch =
        h_expected.map(|h| dense::fro(&(&dec.hessenberg - h.as_mat())) / dense::fro(h.as_mat()).max(f64::MIN_POSITIVE));

    let max_res = residual_mismatch.iter().copied().fold(0.0, f64::max);
    let max_ann = annihilation.iter().copied().fold(0.0, f64::max);
    Ok(Report {
        residual_ok: max_res <= tol.residual,
        annihilation_ok: max_ann <= tol.annihilation,
        spectrum_ok: spectrum_distance <= tol.spectrum,
        residual_mismatch,
        annihilation,
        spectrum_distance,
        hessenberg_mismatch,
        tolerances: tol,
    })
}

/// Both sides of the auxiliary identity
/// `|E_j^T R_Z^{-*} Z| = chol_upper((I - Z_{1:j}^* Z_{1:j})^{-1} - (I - Z_{1:j-1}^* Z_{1:j-1})^{-1})`
/// with `R_Z` the upper Cholesky factor of `I - Z Z^*` and `j` one-based.
pub fn aux_lemma_check(z: &BlockVector, j: usize) -> Result<(UpperTriNonneg, UpperTriNonneg)> {
    let k = z.n();
    let s = z.s();
    if j == 0 || j > k {
        return Err(Error::Invalid(format!("j = {j} outside 1..={k}")));
    }
    let zm = z.as_mat();
    let big = dense::eye(k * s) - zm * zm.adjoint();
    let rz = chol_upper(&big)?;
    if !rz.is_positive() {
        return Err(Error::NotPsd { min_eig: dense::hermitian_eigen(&big).0[0], tol: 0.0 });
    }
    let w = dense::solve_lower(&rz.as_mat().adjoint(), zm).ok_or(Error::SingularPivot)?;
    let lhs = block_abs(&w.rows((j - 1) * s, s).into_owned());

    let partial_inv = |rows: usize| -> Result<CMat> {
        let head = zm.rows(0, rows * s).into_owned();
        let g = dense::eye(s) - head.adjoint() * head;
        dense::inverse(&g).ok_or(Error::SingularPivot)
    };
    let rhs = chol_upper(&(partial_inv(j)? - partial_inv(j - 1)?))?;
    Ok((lhs, rhs))
}

/// Options for [`random_prescription`].
#[derive(Clone, Debug, PartialEq)]
pub struct RandomPrescription {
    pub n: usize,
    pub s: usize,
    /// Steps `k` (one-based, `< n`) at which `F_k = F_{k-1}`.
    pub stagnate: Vec<usize>,
    /// Steps at which the norm decreases in only one direction.
    pub partial: Vec<usize>,
    /// Use `lambda^k I - P_k` for the intermediate Ritz lambda-matrices
    /// instead of random ones.
    pub projector_ritz: bool,
}

impl RandomPrescription {
    pub fn new(n: usize, s: usize) -> Self {
        RandomPrescription { n, s, stagnate: Vec::new(), partial: Vec::new(), projector_ritz: false }
    }
}

fn random_contraction(rng: &mut ChaCha8Rng, s: usize, lo: f64, hi: f64) -> CMat {
    // W diag(sigma) W'^* with singular values in [lo, hi]
    let w1 = dense::random_unitary(rng, s);
    let w2 = dense::random_unitary(rng, s);
    let sig: Vec<f64> = (0..s).map(|_| rng.random_range(lo..hi)).collect();
    w1 * dense::diag(&sig) * w2.adjoint()
}

/// A seeded admissible and consistent prescription with well-conditioned
/// factors: contraction factors with singular values in `[0.55, 0.95]`,
/// intermediate coefficients of size about `0.3`, and a final solvent chain
/// whose eigenvalues have moduli in `[0.5, 1.5]`.
pub fn random_prescription(seed: u64, opts: &RandomPrescription) -> Result<ConvergencePrescription> {
    let (n, s) = (opts.n, opts.s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0 = block_abs(&random_contraction(&mut rng, s, 0.7, 1.3));
    let mut f = vec![f0];
    for k in 1..n {
        let prev = f[k - 1].clone();
        let next = if opts.stagnate.contains(&k) {
            prev
        } else {
            let t = if opts.partial.contains(&k) && s > 1 {
                // singular values (1, ..., 1, sigma): Gram decrement of rank one
                let w = dense::random_unitary(&mut rng, s);
                let mut sig = vec![1.0; s];
                sig[s - 1] = rng.random_range(0.55..0.95);
                w.clone() * dense::diag(&sig) * w.adjoint()
            } else {
                random_contraction(&mut rng, s, 0.55, 0.95)
            };
            block_abs(&(t * prev.as_mat()))
        };
        f.push(next);
    }

    let mut ritz = if opts.projector_ritz {
        projector_ritz(&f)?
    } else {
        let mut list = Vec::new();
        for k in 1..n {
            let (delta, scale) = decrement(&f, k)?;
            let p = range_projector(&delta, rank_tol(scale, s));
            let mut coeffs: Vec<CMat> =
                (0..k).map(|_| dense::random_gaussian(&mut rng, s, s).scale(0.3 / (s as f64).sqrt())).collect();
            // keep C_0 on the range of the decrement and well away from singular there
            coeffs[0] = &p * (dense::eye(s) + &coeffs[0]) * &p;
            list.push(LambdaMatrix::new(s, coeffs)?);
        }
        list
    };
    let solvents: Vec<CMat> = (0..n)
        .map(|_| {
            let x = dense::eye(s) + dense::random_gaussian(&mut rng, s, s).scale(0.2 / (s as f64).sqrt());
            let lam: Vec<Complex64> = (0..s)
                .map(|_| {
                    let r: f64 = rng.random_range(0.5..1.5);
                    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    Complex64::from_polar(r, phi)
                })
                .collect();
            let mut dm = dense::zeros(s, s);
            for (i, l) in lam.iter().enumerate() {
                dm[(i, i)] = *l;
            }
            &x * dm * x.clone().try_inverse().expect("near-identity similarity")
        })
        .collect();
    ritz.push(LambdaMatrix::from_solvent_chain(&SolventChain::new(solvents)?)?);
    ConvergencePrescription::new(s, f, ritz, Some(seed))
}
