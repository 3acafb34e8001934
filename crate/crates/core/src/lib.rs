//! Block Krylov methods over the matrix *-algebra `S = C^{s x s}`.
//!
//! The crate runs block Arnoldi, block GMRES and block FOM with `s x s`
//! matrices in place of scalars, and solves the inverse problem: given an
//! admissible sequence of block residual norms and a sequence of Ritz
//! lambda-matrices, it builds a matrix and right-hand side for which block
//! GMRES and block Arnoldi behave exactly as prescribed.

pub mod arnoldi;
pub mod blockvec;
pub mod dense;
pub mod error;
pub mod givens;
pub mod json;
pub mod lambda_matrix;
pub mod matching;
pub mod prescribe;
pub mod salgebra;
pub mod solvers;

pub use arnoldi::{block_arnoldi, ArnoldiDecomposition, BlockArnoldi, BlockHessenberg, BreakdownInfo};
pub use blockvec::{block_inner, block_normalize, pad_problem, BlockMatrix, BlockVector};
pub use error::{Error, Result};
pub use givens::{block_givens, hessenberg_qr, BlockGivens, HessenbergQr};
pub use lambda_matrix::{CompanionMatrix, LambdaMatrix, LambdaPoly, SolventChain};
pub use prescribe::{
    check_admissible, check_consistency, construct, verify, Admissibility, Consistency, ConstructedInstance,
    ConvergencePrescription, Report,
};
pub use salgebra::{block_abs, chol_upper, loewner_cmp, BlockScalar, LoewnerOrdering, UpperTriNonneg};
pub use solvers::{blfom, blgmres, peak_plateau_residual_check, residual_poly_apply, solve, SolveOptions, SolveTrace};
