//! Monic lambda-matrices `M(lambda) = lambda^n I - sum_k lambda^k C_k`,
//! their matrix polynomials, block companion matrices and solvent chains.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::blockvec::{BlockMatrix, BlockVector};
use crate::dense::{self, CMat};
use crate::error::{Error, Result};
use crate::json::{cmat_vec, ComplexMatrixJson};
use crate::salgebra::BlockScalar;

/// Monic lambda-matrix of degree `n`; the leading identity is implicit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LambdaMatrixJson", into = "LambdaMatrixJson")]
pub struct LambdaMatrix {
    s: usize,
    coeffs: Vec<BlockScalar>,
}

#[derive(Serialize, Deserialize)]
struct LambdaMatrixJson {
    n: usize,
    s: usize,
    coeffs: Vec<ComplexMatrixJson>,
}

impl TryFrom<LambdaMatrixJson> for LambdaMatrix {
    type Error = Error;

    fn try_from(j: LambdaMatrixJson) -> Result<Self> {
        if j.coeffs.len() != j.n {
            return Err(Error::dims(format!("n = {} but {} coefficients", j.n, j.coeffs.len())));
        }
        let coeffs = j.coeffs.iter().map(|c| c.to_matrix()).collect::<Result<Vec<_>>>()?;
        LambdaMatrix::new(j.s, coeffs)
    }
}

impl From<LambdaMatrix> for LambdaMatrixJson {
    fn from(m: LambdaMatrix) -> Self {
        LambdaMatrixJson { n: m.degree(), s: m.s, coeffs: m.coeffs.iter().map(ComplexMatrixJson::from).collect() }
    }
}

impl LambdaMatrix {
    /// `coeffs[k] = C_k`, `k = 0..n-1`.
    pub fn new(s: usize, coeffs: Vec<BlockScalar>) -> Result<Self> {
        if s == 0 {
            return Err(Error::Invalid("block size must be positive".into()));
        }
        if let Some(bad) = coeffs.iter().find(|c| c.shape() != (s, s)) {
            return Err(Error::dims(format!("coefficient of shape {:?}, expected {s}x{s}", bad.shape())));
        }
        Ok(LambdaMatrix { s, coeffs })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn coeffs(&self) -> &[BlockScalar] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> &BlockScalar {
        &self.coeffs[k]
    }

    /// `M(lambda)`.
    pub fn eval_lambda(&self, lambda: Complex64) -> BlockScalar {
        let mut acc = dense::eye(self.s);
        for c in self.coeffs.iter().rev() {
            acc = acc * lambda - c;
        }
        acc
    }

    /// `M(X) = X^n - sum_k C_k X^k`, coefficients on the left.
    pub fn eval_matrix_poly(&self, x: &BlockScalar) -> Result<BlockScalar> {
        if x.shape() != (self.s, self.s) {
            return Err(Error::dims(format!("X is {:?}, expected {}x{}", x.shape(), self.s, self.s)));
        }
        let mut acc = dense::eye(self.s);
        for c in self.coeffs.iter().rev() {
            acc = acc * x - c;
        }
        Ok(acc)
    }

    /// `M(A) o V = A^n V - sum_k A^k V C_k`.
    pub fn circ_action(&self, a: &BlockMatrix, v: &BlockVector) -> Result<BlockVector> {
        if v.s() != self.s || a.s() != self.s || a.n() != v.n() {
            return Err(Error::dims(format!(
                "M has s = {}, A is (n={}, s={}), V is (n={}, s={})",
                self.s,
                a.n(),
                a.s(),
                v.n(),
                v.s()
            )));
        }
        let mut acc = v.as_mat().clone();
        for c in self.coeffs.iter().rev() {
            acc = a.as_mat() * acc - v.as_mat() * c;
        }
        BlockVector::new(v.n(), v.s(), acc)
    }

    /// Block companion matrix: identity blocks on the subdiagonal and
    /// `C_0, ..., C_{n-1}` down the last block column.
    pub fn companion(&self) -> CompanionMatrix {
        let n = self.degree();
        let s = self.s;
        let mut m = BlockMatrix::zeros(n, s);
        for k in 1..n {
            m.set_block(k, k - 1, &dense::eye(s));
        }
        for (k, c) in self.coeffs.iter().enumerate() {
            m.set_block(k, n - 1, c);
        }
        CompanionMatrix(m)
    }

    /// The `ns` latent roots, i.e. the eigenvalues of the companion matrix.
    pub fn latent_roots(&self) -> Vec<Complex64> {
        dense::eigenvalues(self.companion().as_block_matrix().as_mat())
    }

    /// `(lambda I - S_1)(lambda I - S_2) ... (lambda I - S_n)` expanded with
    /// the factor order kept.
    pub fn from_solvent_chain(chain: &SolventChain) -> Result<Self> {
        let s = chain.s()?;
        // p[i] is the coefficient of lambda^i, highest last
        let mut p: Vec<CMat> = vec![dense::eye(s)];
        for sj in &chain.solvents {
            let d = p.len();
            let mut next = vec![dense::zeros(s, s); d + 1];
            for i in 0..=d {
                if i >= 1 {
                    next[i] += &p[i - 1];
                }
                if i < d {
                    next[i] -= &p[i] * sj;
                }
            }
            p = next;
        }
        p.pop();
        LambdaMatrix::new(s, p.into_iter().map(|c| -c).collect())
    }
}

/// Block companion matrix of a monic lambda-matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CompanionMatrix(BlockMatrix);

impl CompanionMatrix {
    pub fn as_block_matrix(&self) -> &BlockMatrix {
        &self.0
    }

    pub fn into_block_matrix(self) -> BlockMatrix {
        self.0
    }
}

/// Ordered solvents `S_1, ..., S_n`; `S_n` is a right solvent of the
/// expanded lambda-matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SolventChain {
    #[serde(with = "cmat_vec")]
    pub solvents: Vec<BlockScalar>,
}

impl SolventChain {
    pub fn new(solvents: Vec<BlockScalar>) -> Result<Self> {
        let chain = SolventChain { solvents };
        chain.s()?;
        Ok(chain)
    }

    pub fn len(&self) -> usize {
        self.solvents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solvents.is_empty()
    }

    fn s(&self) -> Result<usize> {
        let s = self.solvents.first().map(|m| m.nrows()).ok_or_else(|| Error::Invalid("empty solvent chain".into()))?;
        if s == 0 || self.solvents.iter().any(|m| m.shape() != (s, s)) {
            return Err(Error::dims("solvents must be square and of one size"));
        }
        Ok(s)
    }
}

/// General (not necessarily monic) lambda-matrix
/// `P(lambda) = sum_k lambda^k P_k`, used for residual polynomials.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaPoly {
    s: usize,
    coeffs: Vec<BlockScalar>,
}

impl LambdaPoly {
    /// `coeffs[k] = P_k`; at least one coefficient.
    pub fn new(s: usize, coeffs: Vec<BlockScalar>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Invalid("a lambda-matrix needs at least one coefficient".into()));
        }
        if let Some(bad) = coeffs.iter().find(|c| c.shape() != (s, s)) {
            return Err(Error::dims(format!("coefficient of shape {:?}, expected {s}x{s}", bad.shape())));
        }
        Ok(LambdaPoly { s, coeffs })
    }

    /// `I - sum_{k>=1} lambda^k C_k` with `rest = [C_1, C_2, ...]`.
    pub fn residual(s: usize, rest: Vec<BlockScalar>) -> Result<Self> {
        let mut coeffs = vec![dense::eye(s)];
        coeffs.extend(rest.into_iter().map(|c| -c));
        LambdaPoly::new(s, coeffs)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn coeffs(&self) -> &[BlockScalar] {
        &self.coeffs
    }

    /// `P(A) o V = sum_k A^k V P_k`.
    pub fn circ_action(&self, a: &BlockMatrix, v: &BlockVector) -> Result<BlockVector> {
        if v.s() != self.s || a.s() != self.s || a.n() != v.n() {
            return Err(Error::dims(format!(
                "P has s = {}, A is (n={}, s={}), V is (n={}, s={})",
                self.s,
                a.n(),
                a.s(),
                v.n(),
                v.s()
            )));
        }
        let vm = v.as_mat();
        let mut acc = vm * self.coeffs.last().expect("nonempty");
        for c in self.coeffs.iter().rev().skip(1) {
            acc = a.as_mat() * acc + vm * c;
        }
        BlockVector::new(v.n(), v.s(), acc)
    }
}

impl From<&LambdaMatrix> for LambdaPoly {
    fn from(m: &LambdaMatrix) -> Self {
        let mut coeffs: Vec<CMat> = m.coeffs.iter().map(|c| -c).collect();
        coeffs.push(dense::eye(m.s));
        LambdaPoly { s: m.s, coeffs }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{c, fro, random_gaussian};
    use crate::matching::bottleneck_distance;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> CMat {
        dense::diag(&[v])
    }

    fn random_chain(seed: u64, n: usize, s: usize) -> SolventChain {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SolventChain::new((0..n).map(|_| random_gaussian(&mut rng, s, s)).collect()).unwrap()
    }

    #[test]
    fn linear_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c0 = random_gaussian(&mut rng, 3, 3);
        let m = LambdaMatrix::new(3, vec![c0.clone()]).unwrap();
        assert_eq!(m.eval_lambda(c(0.0, 0.0)), -&c0);
        assert!(fro(&m.eval_matrix_poly(&c0).unwrap()) == 0.0);
        assert_eq!(m.companion().as_block_matrix().as_mat(), &c0);
    }

    #[test]
    fn eigenvalue_of_c0_is_latent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c0 = random_gaussian(&mut rng, 3, 3);
        let m = LambdaMatrix::new(3, vec![c0.clone()]).unwrap();
        for lam in dense::eigenvalues(&c0) {
            let sv = dense::singular_values(&m.eval_lambda(lam));
            assert!(sv[2] < 1e-12 * sv[0]);
        }
    }

    #[test]
    fn two_three_quadratic() {
        let chain = SolventChain::new(vec![scalar(2.0), scalar(3.0)]).unwrap();
        let m = LambdaMatrix::from_solvent_chain(&chain).unwrap();
        assert_eq!(m.coeff(0), &scalar(-6.0));
        assert_eq!(m.coeff(1), &scalar(5.0));
        let comp = m.companion();
        assert_eq!(comp.as_block_matrix().as_mat(), &dense::from_real_rows(2, 2, &[0.0, -6.0, 1.0, 5.0]));
        let roots = m.latent_roots();
        let d = bottleneck_distance(&roots, &[c(2.0, 0.0), c(3.0, 0.0)]).unwrap();
        assert!(d < 1e-12);
    }

    #[test]
    fn scalar_horner_oracle() {
        // lambda^3 - (1 + 2 lambda - lambda^2) at lambda = 1.5 + 0.5i
        let m = LambdaMatrix::new(1, vec![scalar(1.0), scalar(2.0), scalar(-1.0)]).unwrap();
        let l = c(1.5, 0.5);
        let expect = l * l * l - (c(1.0, 0.0) + l * 2.0 - l * l);
        assert!((m.eval_lambda(l)[(0, 0)] - expect).norm() < 1e-14);
    }

    #[test]
    fn scalar_circ_action_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_gaussian(&mut rng, 4, 4);
        let v = random_gaussian(&mut rng, 4, 1);
        let m = LambdaMatrix::new(1, vec![scalar(0.5), scalar(-2.0)]).unwrap();
        // p(A) v with p(t) = t^2 + 2 t - 0.5
        let expect = &a * &a * &v + (&a * &v).scale(2.0) - v.scale(0.5);
        let got = m.circ_action(&BlockMatrix::new(4, 1, a).unwrap(), &BlockVector::new(4, 1, v).unwrap()).unwrap();
        assert!(fro(&(got.as_mat() - expect)) < 1e-12);
    }

    #[test]
    fn linear_circ_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = BlockMatrix::new(3, 2, random_gaussian(&mut rng, 6, 6)).unwrap();
        let v = BlockVector::new(3, 2, random_gaussian(&mut rng, 6, 2)).unwrap();
        let c0 = random_gaussian(&mut rng, 2, 2);
        let m = LambdaMatrix::new(2, vec![c0.clone()]).unwrap();
        let expect = a.as_mat() * v.as_mat() - v.as_mat() * c0;
        assert!(fro(&(m.circ_action(&a, &v).unwrap().as_mat() - expect)) < 1e-13);
        let wrong = BlockVector::zeros(3, 3);
        assert!(matches!(m.circ_action(&a, &wrong), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn commuting_diagonal_solvents() {
        let chain = SolventChain::new(vec![dense::diag(&[1.0, 2.0]), dense::diag(&[3.0, -1.0])]).unwrap();
        let m = LambdaMatrix::from_solvent_chain(&chain).unwrap();
        for sj in &chain.solvents {
            assert!(fro(&m.eval_matrix_poly(sj).unwrap()) < 1e-14);
        }
    }

    #[test]
    fn noncommuting_left_factor_is_not_a_solvent() {
        let chain = random_chain(6, 2, 3);
        let m = LambdaMatrix::from_solvent_chain(&chain).unwrap();
        assert!(fro(&m.eval_matrix_poly(&chain.solvents[1]).unwrap()) < 1e-12);
        assert!(fro(&m.eval_matrix_poly(&chain.solvents[0]).unwrap()) > 1e-3);
        // direct expansion
        let (s1, s2) = (&chain.solvents[0], &chain.solvents[1]);
        assert!(fro(&(m.coeff(1) - (s1 + s2))) < 1e-14);
        assert!(fro(&(m.coeff(0) + s1 * s2)) < 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let m = LambdaMatrix::from_solvent_chain(&random_chain(3, 2, 2)).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.starts_with(r#"{"n":2,"s":2,"coeffs":["#));
        let back: LambdaMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        let bad = r#"{"n":2,"s":1,"coeffs":[{"rows":1,"cols":1,"data":[[1,0]]}]}"#;
        assert!(serde_json::from_str::<LambdaMatrix>(bad).is_err());
    }

    #[test]
    fn residual_poly_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = BlockMatrix::new(3, 2, random_gaussian(&mut rng, 6, 6)).unwrap();
        let v = BlockVector::new(3, 2, random_gaussian(&mut rng, 6, 2)).unwrap();
        let p0 = LambdaPoly::residual(2, vec![]).unwrap();
        assert_eq!(p0.circ_action(&a, &v).unwrap(), v);
        let p1 = LambdaPoly::residual(2, vec![dense::zeros(2, 2)]).unwrap();
        assert_eq!(p1.circ_action(&a, &v).unwrap(), v);
        // monic conversion agrees with the monic action
        let m = LambdaMatrix::from_solvent_chain(&random_chain(9, 3, 2)).unwrap();
        let lhs = LambdaPoly::from(&m).circ_action(&a, &v).unwrap();
        let rhs = m.circ_action(&a, &v).unwrap();
        assert!(fro(&(lhs.as_mat() - rhs.as_mat())) < 1e-10 * fro(rhs.as_mat()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn companion_determinant_identity(seed in 0u64..10_000, n in 1usize..4, s in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coeffs = (0..n).map(|_| random_gaussian(&mut rng, s, s)).collect();
            let m = LambdaMatrix::new(s, coeffs).unwrap();
            let comp = m.companion().into_block_matrix().into_mat();
            let sign = if (n * s) % 2 == 0 { 1.0 } else { -1.0 };
            for _ in 0..20 {
                let z = random_gaussian(&mut rng, 1, 1)[(0, 0)];
                let lhs = (&comp - dense::eye(n * s) * z).determinant();
                let rhs = m.eval_lambda(z).determinant() * sign;
                prop_assert!((lhs - rhs).norm() <= 1e-8 * lhs.norm().max(rhs.norm()).max(1.0));
            }
        }

        #[test]
        fn chain_roots_are_solvent_eigenvalues(seed in 0u64..10_000, n in 1usize..4, s in 1usize..4) {
            let chain = random_chain(seed, n, s);
            let m = LambdaMatrix::from_solvent_chain(&chain).unwrap();
            prop_assert!(fro(&m.eval_matrix_poly(chain.solvents.last().unwrap()).unwrap()) <= 1e-10);
            let expect: Vec<Complex64> = chain.solvents.iter().flat_map(dense::eigenvalues).collect();
            let roots = m.latent_roots();
            let scale = roots.iter().map(|z| z.norm()).fold(1.0, f64::max);
            // clustered roots can be ill-conditioned; the bound stays loose
            prop_assert!(bottleneck_distance(&roots, &expect).unwrap() <= 1e-6 * scale);
        }
    }
}
