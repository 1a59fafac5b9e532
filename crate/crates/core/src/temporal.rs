//! AR(1) temporal precision and its Kronecker product with a spatial
//! precision.
//!
//! Space-time vectors are stacked vertex-fastest: entry `(t, i)` lives at
//! `t·m + i`. [`StLayout`] owns that mapping.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::sparse::{CscMatrix, SparseSpd, TripletBuilder};

/// Default cap on the dimension of a Kronecker precision.
pub const DEFAULT_DIM_CAP: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar1Params<T> {
    pub phi: T,
    pub n_times: usize,
}

impl<T: Real> Ar1Params<T> {
    pub fn new(phi: T, n_times: usize) -> Result<Self> {
        if !(phi.abs() < T::one()) {
            return Err(Error::InvalidParameter(format!("AR(1) coefficient {phi} outside (-1, 1)")));
        }
        if n_times == 0 {
            return Err(Error::InvalidParameter("AR(1) needs at least one time point".into()));
        }
        Ok(Self { phi, n_times })
    }
}

/// Index map between `(time, vertex)` and the stacked space-time vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StLayout {
    pub n_vertices: usize,
    pub n_times: usize,
}

impl StLayout {
    pub fn new(n_vertices: usize, n_times: usize) -> Self {
        Self { n_vertices, n_times }
    }

    pub fn len(&self) -> usize {
        self.n_vertices * self.n_times
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Position of vertex `vertex` at 0-based time `t`.
    #[inline]
    pub fn index(&self, t: usize, vertex: usize) -> usize {
        debug_assert!(t < self.n_times && vertex < self.n_vertices);
        t * self.n_vertices + vertex
    }

    /// Inverse of [`Self::index`]: `(t, vertex)`.
    #[inline]
    pub fn split(&self, k: usize) -> (usize, usize) {
        (k / self.n_vertices, k % self.n_vertices)
    }

    pub fn block(&self, t: usize) -> std::ops::Range<usize> {
        t * self.n_vertices..(t + 1) * self.n_vertices
    }
}

/// Decomposition `Q_T(φ) = I + φ² J − φ O` on the tridiagonal pattern, with
/// `J = diag(0, 1, …, 1, 0)` and `O` the unit off-diagonals. For a single
/// time point `J = (−1)` so that `Q_T = 1 − φ²`.
#[derive(Debug, Clone)]
pub struct Ar1Components<T> {
    pub pattern: CscMatrix<T>,
    pub identity: Vec<T>,
    pub inner: Vec<T>,
    pub offdiag: Vec<T>,
}

impl<T: Real> Ar1Components<T> {
    pub fn new(n_times: usize) -> Self {
        assert!(n_times > 0);
        let mut b = TripletBuilder::with_capacity(n_times, n_times, 3 * n_times);
        for t in 0..n_times {
            b.push(t, t, T::one());
            if t + 1 < n_times {
                b.push(t, t + 1, T::one());
                b.push(t + 1, t, T::one());
            }
        }
        let pattern = b.build();
        let nnz = pattern.nnz();
        let (mut identity, mut inner, mut offdiag) = (vec![T::zero(); nnz], vec![T::zero(); nnz], vec![T::zero(); nnz]);
        for (r, c, _) in pattern.iter() {
            let p = pattern.position(r, c).expect("own entry");
            if r == c {
                identity[p] = T::one();
                inner[p] = if n_times == 1 {
                    -T::one()
                } else if r == 0 || r + 1 == n_times {
                    T::zero()
                } else {
                    T::one()
                };
            } else {
                offdiag[p] = T::one();
            }
        }
        Self {
            pattern,
            identity,
            inner,
            offdiag,
        }
    }

    /// Weights of `(identity, inner, offdiag)` for coefficient `φ`.
    pub fn coefficients(phi: T) -> [T; 3] {
        [T::one(), phi * phi, -phi]
    }

    pub fn matrix(&self, phi: T) -> CscMatrix<T> {
        let w = Self::coefficients(phi);
        let values = (0..self.pattern.nnz())
            .map(|k| w[0] * self.identity[k] + w[1] * self.inner[k] + w[2] * self.offdiag[k])
            .collect();
        self.pattern.with_values(values)
    }
}

/// `log det Q_T(φ) = log(1 − φ²)` for every `T ≥ 1`.
pub fn ar1_logdet<T: Real>(phi: T) -> T {
    (T::one() - phi * phi).ln()
}

/// Tridiagonal AR(1) precision with unit innovation variance (factorized).
pub fn ar1_precision<T: Real>(p: &Ar1Params<T>) -> Result<SparseSpd<T>> {
    let mut q = SparseSpd::new(Ar1Components::new(p.n_times).matrix(p.phi));
    q.factorize()?;
    Ok(q)
}

/// `Q_T ⊗ Q_s` with the vertex index varying fastest (factorized).
pub fn kronecker_precision<T: Real>(q_t: &SparseSpd<T>, q_s: &SparseSpd<T>, cap: usize) -> Result<SparseSpd<T>> {
    let dim = q_t.dim().checked_mul(q_s.dim()).unwrap_or(usize::MAX);
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    let mut q = SparseSpd::new(q_t.matrix().kron(q_s.matrix()));
    q.factorize()?;
    Ok(q)
}

/// Simulates `ξ_1 ~ N(0, Q_s⁻¹/(1−φ²))`, `ξ_t = φ ξ_{t−1} + ω_t` with
/// `ω_t ~ N(0, Q_s⁻¹)`. Returns one row of `m` vertex values per time.
pub fn simulate_st_field<T: Real>(p: &Ar1Params<T>, q_s: &SparseSpd<T>, seed: u64) -> Result<Vec<Vec<T>>>
where
    StandardNormal: rand_distr::Distribution<T>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = T::one() / (T::one() - p.phi * p.phi).max(lit(1e-300)).sqrt();
    let mut out = Vec::with_capacity(p.n_times);
    let first: Vec<T> = q_s.sample(&mut rng)?.into_iter().map(|v| v * scale).collect();
    out.push(first);
    for t in 1..p.n_times {
        let innov = q_s.sample(&mut rng)?;
        let next = out[t - 1].iter().zip(&innov).map(|(&a, &w)| p.phi * a + w).collect();
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_by_three() {
        let q = ar1_precision(&Ar1Params::new(0.5f64, 3).unwrap()).unwrap();
        let d = q.matrix().to_dense();
        let expect = [[1.0, -0.5, 0.0], [-0.5, 1.25, -0.5], [0.0, -0.5, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((d[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
        assert!((q.logdet().unwrap() - 0.75f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_time_is_stationary() {
        let q = ar1_precision(&Ar1Params::new(0.6f64, 1).unwrap()).unwrap();
        assert!((q.matrix().get(0, 0) - 0.64).abs() < 1e-15);
    }

    #[test]
    fn layout_round_trip() {
        let l = StLayout::new(7, 4);
        for k in 0..l.len() {
            let (t, v) = l.split(k);
            assert_eq!(l.index(t, v), k);
        }
        assert_eq!(l.block(2), 14..21);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(Ar1Params::new(1.0f64, 3).is_err());
        assert!(Ar1Params::new(0.1f64, 0).is_err());
    }
}
