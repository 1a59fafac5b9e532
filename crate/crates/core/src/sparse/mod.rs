//! Sparse symmetric linear algebra for GMRF precision matrices.

mod cholesky;
mod csc;
mod ordering;

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

pub use cholesky::{CholeskyFactor, SelectedInverse, SymbolicCholesky, JITTER_ESCALATIONS, JITTER_INITIAL};
pub use csc::{compact_row, CscMatrix, SparseRow, TripletBuilder};
pub use ordering::{invert, minimum_degree, nested_dissection, reverse_cuthill_mckee};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Symmetric positive-definite sparse matrix (full storage) with an optional
/// Cholesky factor.
#[derive(Debug, Clone)]
pub struct SparseSpd<T> {
    matrix: CscMatrix<T>,
    factor: Option<CholeskyFactor<T>>,
}

impl<T: Real> SparseSpd<T> {
    pub fn new(matrix: CscMatrix<T>) -> Self {
        Self { matrix, factor: None }
    }

    pub fn matrix(&self) -> &CscMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CscMatrix<T> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_factorized(&self) -> bool {
        self.factor.is_some()
    }

    /// Factorizes with a fresh symbolic analysis.
    pub fn factorize(&mut self) -> Result<&CholeskyFactor<T>> {
        let sym = Arc::new(SymbolicCholesky::analyze(&self.matrix)?);
        self.factorize_with(sym)
    }

    /// Factorizes reusing an existing analysis of the same pattern.
    pub fn factorize_with(&mut self, symbolic: Arc<SymbolicCholesky>) -> Result<&CholeskyFactor<T>> {
        let f = CholeskyFactor::factorize(symbolic, &self.matrix)?;
        Ok(self.factor.insert(f))
    }

    pub fn factor(&self) -> Result<&CholeskyFactor<T>> {
        self.factor.as_ref().ok_or(Error::NotFactorized)
    }

    pub fn logdet(&self) -> Result<T> {
        Ok(self.factor()?.logdet())
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        Ok(self.factor()?.solve(b))
    }

    /// Zero-mean Gaussian draw with covariance equal to the inverse of this matrix.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<T>>
    where
        StandardNormal: rand_distr::Distribution<T>,
    {
        let f = self.factor()?;
        let z: Vec<T> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        Ok(f.solve_lt_permuted(&z))
    }

    pub fn selected_inverse(&self) -> Result<SelectedInverse<T>> {
        Ok(self.factor()?.selected_inverse())
    }
}
