//! Block GMRES and block FOM with `X_0 = 0`.
//!
//! Both methods run on one block Arnoldi process. The projected least
//! squares problem is triangularized incrementally with block Givens
//! transformations, whose sines give the residual norm recurrence
//! `||R_k|| = S_k ... S_1 ||R_0||`. Every step also records the directly
//! computed residuals so the recurrences can be checked.

use serde::{Deserialize, Serialize};

use crate::arnoldi::BlockArnoldi;
use crate::blockvec::{BlockMatrix, BlockVector, RANK_SAFETY};
use crate::dense::{self, CMat, EPS};
use crate::error::{Error, Result};
use crate::givens::{block_givens, BlockGivens};
use crate::json::{cmat, ComplexMatrixJson};
use crate::lambda_matrix::LambdaPoly;
use crate::salgebra::{block_abs, loewner_slack, UpperTriNonneg};

/// Singular value cutoff used for every pseudoinverse and rank decision in
/// the solvers, relative to a caller-supplied scale.
pub fn pinv_cut(scale: f64, dim: usize) -> f64 {
    scale * EPS * dim as f64 * RANK_SAFETY
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// `k_max` steps done.
    StepLimit,
    /// All `n` steps done; the projected problem is square.
    Completed,
    /// The Krylov space became invariant (zero candidate block); the
    /// residual is exactly zero from this step on.
    Invariant,
    /// The Frobenius norm of the residual norm dropped below `conv_tol`.
    Converged,
}

/// Everything recorded at step `k >= 1`.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub k: usize,
    /// Coefficients `Y_k^G` in `S^k`, stored as a `ks x s` matrix.
    pub y_gmres: CMat,
    pub x_gmres: BlockVector,
    /// `||R_k^G||` from the Givens recurrence.
    pub gmres_norm: UpperTriNonneg,
    /// `<<R_k^G, R_k^G>>` of the explicitly formed residual `B - A X_k^G`.
    pub gmres_gram: CMat,
    /// Euclidean norms of the columns of `B - A X_k^G`.
    pub gmres_column_norms: Vec<f64>,
    /// Block Givens transformation of this step (absent on the final
    /// square step).
    pub givens: Option<BlockGivens>,
    /// Whether `H^(k)` is numerically singular.
    pub fom_singular: bool,
    /// Generalized FOM coefficients `Y_k^F`.
    pub y_fom: CMat,
    pub x_fom: BlockVector,
    /// Galerkin residual component `V_{k+1} V_{k+1}^* (B - A X_k^F)`; zero
    /// once the projected problem is square.
    pub fom_residual: BlockVector,
    /// `||R_k^F||` of the Galerkin component, computed directly.
    pub fom_norm: UpperTriNonneg,
    /// `|C_k^+| ||R_k^G||`, when a Givens transformation exists.
    pub fom_norm_formula: Option<UpperTriNonneg>,
    /// `<<R, R>>` of the full FOM residual `B - A X_k^F`.
    pub fom_full_gram: CMat,
}

impl StepRecord {
    pub fn sine(&self) -> Option<UpperTriNonneg> {
        self.givens.as_ref().map(BlockGivens::sine)
    }

    pub fn fom_gram(&self) -> CMat {
        self.fom_norm.gram()
    }
}

#[derive(Clone, Debug)]
pub struct SolveTrace {
    pub n: usize,
    pub s: usize,
    /// `||R_0|| = ||B||`.
    pub rhs_norm: UpperTriNonneg,
    /// `<<B, B>>`.
    pub rhs_gram: CMat,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
}

impl SolveTrace {
    /// `||R_k^G||` for `k = 0..=steps`.
    pub fn gmres_norm(&self, k: usize) -> &UpperTriNonneg {
        if k == 0 {
            &self.rhs_norm
        } else {
            &self.steps[k - 1].gmres_norm
        }
    }

    /// Directly computed `<<R_k^G, R_k^G>>` for `k = 0..=steps`.
    pub fn gmres_gram(&self, k: usize) -> &CMat {
        if k == 0 {
            &self.rhs_gram
        } else {
            &self.steps[k - 1].gmres_gram
        }
    }

    /// Largest `||F_k^* F_k - Gram(R_k)||_F` over all steps: recurrence
    /// against explicit residuals.
    pub fn recurrence_mismatch(&self) -> f64 {
        self.steps.iter().map(|st| dense::fro(&(st.gmres_norm.gram() - &st.gmres_gram))).fold(0.0, f64::max)
    }

    /// Smallest eigenvalue of `Gram(R_{k-1}) - Gram(R_k)` over all steps,
    /// using the explicit residuals. Nonnegative up to rounding for block
    /// GMRES.
    pub fn monotonicity_slack(&self) -> f64 {
        (1..=self.steps.len())
            .map(|k| loewner_slack(self.gmres_gram(k), self.gmres_gram(k - 1)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Exportable summary.
    pub fn to_json(&self) -> TraceJson {
        let mut steps = vec![TraceStepJson {
            k: 0,
            gmres_norm: ComplexMatrixJson::from(self.rhs_norm.as_mat()),
            gmres_gram: self.rhs_gram.clone(),
            column_norms: column_norms_from_gram(&self.rhs_gram),
            fom_norm: None,
            fom_singular: None,
        }];
        for st in &self.steps {
            steps.push(TraceStepJson {
                k: st.k,
                gmres_norm: ComplexMatrixJson::from(st.gmres_norm.as_mat()),
                gmres_gram: st.gmres_gram.clone(),
                column_norms: st.gmres_column_norms.clone(),
                fom_norm: Some(ComplexMatrixJson::from(st.fom_norm.as_mat())),
                fom_singular: Some(st.fom_singular),
            });
        }
        TraceJson { n: self.n, s: self.s, termination: self.termination, steps }
    }
}

fn column_norms_from_gram(g: &CMat) -> Vec<f64> {
    (0..g.nrows()).map(|j| g[(j, j)].re.max(0.0).sqrt()).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceJson {
    pub n: usize,
    pub s: usize,
    pub termination: Termination,
    pub steps: Vec<TraceStepJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceStepJson {
    pub k: usize,
    /// `F_k`, upper triangular.
    pub gmres_norm: ComplexMatrixJson,
    #[serde(with = "cmat")]
    pub gmres_gram: CMat,
    pub column_norms: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fom_norm: Option<ComplexMatrixJson>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fom_singular: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub k_max: usize,
    /// Stop once `||F_k||_F <= conv_tol`. Off by default.
    pub conv_tol: Option<f64>,
    /// Relative cutoff for the singular values treated as zero when
    /// deciding whether `H^(k)` or a block cosine is singular. Defaults to
    /// `64 eps dim`.
    pub rank_tol: Option<f64>,
}

impl SolveOptions {
    pub fn steps(k_max: usize) -> Self {
        SolveOptions { k_max, conv_tol: None, rank_tol: None }
    }

    fn cut(&self, scale: f64, dim: usize) -> f64 {
        match self.rank_tol {
            Some(r) => scale * r,
            None => pinv_cut(scale, dim),
        }
    }
}

/// Block GMRES. The returned trace also carries the block FOM iterates of
/// the same run.
pub fn blgmres(a: &BlockMatrix, b: &BlockVector, k_max: usize, conv_tol: Option<f64>) -> Result<SolveTrace> {
    solve(a, b, SolveOptions { k_max, conv_tol, rank_tol: None })
}

/// Block FOM (generalized where `H^(k)` is singular). Same trace as
/// [`blgmres`] without early exit.
pub fn blfom(a: &BlockMatrix, b: &BlockVector, k_max: usize) -> Result<SolveTrace> {
    solve(a, b, SolveOptions::steps(k_max))
}

fn column_norms(r: &CMat) -> Vec<f64> {
    r.column_iter().map(|c| c.norm()).collect()
}

/// Runs both solvers for up to `opts.k_max` steps.
pub fn solve(a: &BlockMatrix, b: &BlockVector, opts: SolveOptions) -> Result<SolveTrace> {
    let n = a.n();
    let s = a.s();
    if opts.k_max > n {
        return Err(Error::Invalid(format!("k_max = {} exceeds n = {n}", opts.k_max)));
    }
    let mut arnoldi = BlockArnoldi::new(a, b)?;
    let f0 = arnoldi.rhs_norm().clone();
    let mut trace = SolveTrace {
        n,
        s,
        rhs_norm: f0.clone(),
        rhs_gram: b.as_mat().adjoint() * b.as_mat(),
        steps: Vec::new(),
        termination: Termination::StepLimit,
    };
    if opts.k_max == 0 {
        return Ok(trace);
    }

    let mut transforms: Vec<BlockGivens> = Vec::new();
    let mut norm = f0.clone();
    for k in 1..=opts.k_max {
        arnoldi.step()?;
        let bd = arnoldi.breakdown();
        if let Some(info) = bd {
            if info.rank > 0 {
                return Err(Error::Breakdown { step: info.step, rank: info.rank, s });
            }
        }
        let square = k == n || bd.is_some();
        let dec = arnoldi.decomposition();
        let j = k - 1;

        // newest column through the previous transformations
        let rows = if square { k } else { k + 1 };
        let mut col: Vec<CMat> = (0..rows).map(|i| dec.h(i, j)).collect();
        for (i, g) in transforms.iter().enumerate() {
            let (t, u) = g.apply(&col[i], &col[i + 1]);
            col[i] = t;
            col[i + 1] = u;
        }

        let hk = dec.principal(k).into_mat();
        let proj = if square { hk.clone() } else { dec.slab(k) };
        let cut = opts.cut(dense::norm2(&proj), k * s);
        let mut e1f0 = dense::zeros(proj.nrows(), s);
        e1f0.view_mut((0, 0), (s, s)).copy_from(f0.as_mat());

        // GMRES
        let y_g = dense::pinv(&proj, cut) * &e1f0;
        let vk = dec.basis_head(k);
        let x_g = BlockVector::new(n, s, &vk * &y_g)?;
        let r_g = b - &a.apply(&x_g)?;

        let (givens, fom_formula) = if square {
            let proj_res = &e1f0 - &proj * &y_g;
            norm = if dense::rank(&hk, cut) == k * s {
                UpperTriNonneg::zero(s)
            } else {
                BlockVector::new(k, s, proj_res)?.norm()
            };
            (None, None)
        } else {
            let g = block_givens(&col[j], &col[j + 1])?;
            norm = g.sine().mul(&norm);
            let c_pinv = dense::pinv(&g.c, opts.cut(1.0, s));
            let formula = block_abs(&(c_pinv * norm.as_mat()));
            transforms.push(g.clone());
            (Some(g), Some(formula))
        };

        // generalized FOM
        let fom_singular = dense::rank(&hk, cut) < k * s;
        let mut rhs_k = dense::zeros(k * s, s);
        rhs_k.view_mut((0, 0), (s, s)).copy_from(f0.as_mat());
        let y_f = if fom_singular {
            let hp = dense::pinv(&hk, cut);
            let base = &hp * &rhs_k;
            let null = dense::null_basis(&hk, cut);
            let ek_null = null.rows(j * s, s).into_owned();
            let ek_base = base.rows(j * s, s).into_owned();
            let z = -dense::pinv_default(&ek_null) * ek_base;
            base + null * z
        } else {
            hk.clone().lu().solve(&rhs_k).ok_or(Error::SingularPivot)?
        };
        let x_f = BlockVector::new(n, s, &vk * &y_f)?;
        let r_f_full = b - &a.apply(&x_f)?;
        let (fom_residual, fom_norm) = if square {
            (BlockVector::zeros(n, s), UpperTriNonneg::zero(s))
        } else {
            let vnext = dec.v(k);
            let coeff = vnext.as_mat().adjoint() * r_f_full.as_mat();
            (vnext.mul_right(&coeff), block_abs(&coeff))
        };

        trace.steps.push(StepRecord {
            k,
            y_gmres: y_g,
            gmres_gram: r_g.as_mat().adjoint() * r_g.as_mat(),
            gmres_column_norms: column_norms(r_g.as_mat()),
            x_gmres: x_g,
            gmres_norm: norm.clone(),
            givens,
            fom_singular,
            y_fom: y_f,
            x_fom: x_f,
            fom_residual,
            fom_norm,
            fom_norm_formula: fom_formula,
            fom_full_gram: r_f_full.as_mat().adjoint() * r_f_full.as_mat(),
        });

        if square {
            trace.termination = if bd.is_some() { Termination::Invariant } else { Termination::Completed };
            break;
        }
        if let Some(tol) = opts.conv_tol {
            if dense::fro(norm.as_mat()) <= tol {
                trace.termination = Termination::Converged;
                break;
            }
        }
    }
    Ok(trace)
}

/// Deviations from the peak-plateau identities
/// `<<R_k^F>>^+ = <<R_k^G>>^{-1} - <<R_{k-1}^G>>^{-1}` and
/// `<<R_k^G>>^{-1} = sum_{i<=k} <<R_i^F>>^+` (with `R_0^F = R_0`).
#[derive(Clone, Debug, PartialEq)]
pub struct PeakPlateauReport {
    /// Frobenius deviation of the per-step identity, one entry per checked
    /// step `k = 1, 2, ...`.
    pub step_deviation: Vec<f64>,
    /// Frobenius deviation of the cumulative identity.
    pub cumulative_deviation: Vec<f64>,
    /// Steps whose FOM term `<<R_k^F>>^+` vanished (GMRES stagnation).
    pub plateau_steps: Vec<usize>,
}

impl PeakPlateauReport {
    pub fn max_deviation(&self) -> f64 {
        self.step_deviation.iter().chain(&self.cumulative_deviation).copied().fold(0.0, f64::max)
    }
}

fn gram_inverse(norm: &UpperTriNonneg) -> Option<CMat> {
    let inv = norm.inverse()?;
    Some(&inv * inv.adjoint())
}

/// Checks the peak-plateau identities on every step of `trace` where the
/// GMRES residual norm is still invertible (so not on a final square step).
pub fn peak_plateau_residual_check(trace: &SolveTrace) -> PeakPlateauReport {
    let s = trace.s;
    let gram_cut = pinv_cut(dense::norm2(&trace.rhs_gram), s);
    let mut report =
        PeakPlateauReport { step_deviation: Vec::new(), cumulative_deviation: Vec::new(), plateau_steps: Vec::new() };
    let Some(mut prev_inv) = gram_inverse(&trace.rhs_norm) else {
        return report;
    };
    let mut cumulative = prev_inv.clone();
    for st in &trace.steps {
        if st.givens.is_none() {
            break;
        }
        let Some(cur_inv) = gram_inverse(&st.gmres_norm) else {
            break;
        };
        let fom_term = dense::pinv(&st.fom_gram(), gram_cut);
        if fom_term.iter().all(|z| *z == dense::c(0.0, 0.0)) {
            report.plateau_steps.push(st.k);
        }
        cumulative += &fom_term;
        report.step_deviation.push(dense::fro(&(&fom_term - (&cur_inv - &prev_inv))));
        report.cumulative_deviation.push(dense::fro(&(&cur_inv - &cumulative)));
        prev_inv = cur_inv;
    }
    report
}

/// `P(A) o B` for a residual lambda-matrix with `P(0) = I`.
pub fn residual_poly_apply(p: &LambdaPoly, a: &BlockMatrix, b: &BlockVector) -> Result<BlockVector> {
    if p.coeffs()[0] != dense::eye(p.s()) {
        return Err(Error::Invalid("residual polynomial must satisfy P(0) = I".into()));
    }
    p.circ_action(a, b)
}
