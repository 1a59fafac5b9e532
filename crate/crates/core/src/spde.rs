//! Matérn fields through the SPDE `(κ² − Δ) τ ω = W` with ν = 1 in two
//! dimensions, discretized with lumped-mass linear finite elements.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::FemMatrices;
use crate::scalar::{lit, Real};
use crate::sparse::{CscMatrix, SparseSpd};

/// Smoothness configuration. Only `ν = 1, d = 2, α = 2` is supported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpdeConfig {
    pub nu: f64,
    pub alpha: f64,
    pub d: u32,
}

impl Default for SpdeConfig {
    fn default() -> Self {
        Self {
            nu: 1.0,
            alpha: 2.0,
            d: 2,
        }
    }
}

impl SpdeConfig {
    pub fn validate(&self) -> Result<()> {
        if (self.alpha - (self.nu + self.d as f64 / 2.0)).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "alpha {} must equal nu + d/2 = {}",
                self.alpha,
                self.nu + self.d as f64 / 2.0
            )));
        }
        if self.d != 2 || self.alpha != 2.0 {
            return Err(Error::Unsupported(format!(
                "only alpha = 2 in two dimensions is implemented (got alpha {}, d {})",
                self.alpha, self.d
            )));
        }
        Ok(())
    }
}

/// Matérn parameters in both the interpretable (range, marginal sd) and
/// SPDE (κ, τ) forms, for ν = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams<T> {
    pub sigma_omega: T,
    pub range_r: T,
    pub kappa: T,
    pub tau: T,
}

/// `κ = √8 / r`, `τ = 1 / (2 √π κ σ)`.
pub fn convert_params<T: Real>(range_r: T, sigma_omega: T) -> Result<MaternParams<T>> {
    if !(range_r > T::zero()) || !(sigma_omega > T::zero()) || !range_r.is_finite() || !sigma_omega.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "range {range_r} and sigma {sigma_omega} must be positive"
        )));
    }
    let kappa = lit::<T>(8.0).sqrt() / range_r;
    let tau = T::one() / (lit::<T>(2.0) * T::PI().sqrt() * kappa * sigma_omega);
    Ok(MaternParams {
        sigma_omega,
        range_r,
        kappa,
        tau,
    })
}

impl<T: Real> MaternParams<T> {
    /// Inverse map from `(κ, τ)`: `σ² = 1 / (4π κ² τ²)`, `r = √8 / κ`.
    pub fn from_kappa_tau(kappa: T, tau: T) -> Result<Self> {
        if !(kappa > T::zero()) || !(tau > T::zero()) {
            return Err(Error::InvalidParameter("kappa and tau must be positive".into()));
        }
        let var = T::one() / (lit::<T>(4.0) * T::PI() * kappa * kappa * tau * tau);
        Ok(Self {
            sigma_omega: var.sqrt(),
            range_r: lit::<T>(8.0).sqrt() / kappa,
            kappa,
            tau,
        })
    }
}

/// Modified Bessel function of the second kind, order one.
///
/// Power series for `x ≤ 2`; trapezoidal rule on
/// `∫₀^∞ exp(−x cosh t) cosh t dt` otherwise (the rule converges
/// geometrically for this integrand).
pub fn bessel_k1<T: Real>(x: T) -> T {
    assert!(x > T::zero(), "bessel_k1 needs x > 0");
    let two = lit::<T>(2.0);
    if x <= two {
        let q = x * x / lit(4.0);
        let euler = lit::<T>(0.577_215_664_901_532_9);
        let mut psi_a = -euler; // ψ(k+1)
        let mut psi_b = T::one() - euler; // ψ(k+2)
        let mut term = T::one(); // q^k / (k! (k+1)!)
        let mut i1 = T::zero();
        let mut s = T::zero();
        for k in 0..40 {
            let kf = lit::<T>(k as f64);
            i1 += term;
            s += (psi_a + psi_b) * term;
            psi_a += T::one() / (kf + T::one());
            psi_b += T::one() / (kf + two);
            term *= q / ((kf + T::one()) * (kf + two));
            if term < T::epsilon() * lit(1e-3) {
                break;
            }
        }
        let i1 = i1 * x / two;
        T::one() / x + (x / two).ln() * i1 - x / lit(4.0) * s
    } else {
        let h = lit::<T>(0.1);
        let f = |t: T| (-x * t.cosh()).exp() * t.cosh();
        let mut sum = f(T::zero()) / two;
        let mut k = 1;
        loop {
            let v = f(h * lit(k as f64));
            sum += v;
            if v < sum * T::epsilon() * lit(1e-2) || k > 2000 {
                break;
            }
            k += 1;
        }
        sum * h
    }
}

/// Matérn correlation for ν = 1: `(κh) K₁(κh)`, equal to 1 at `h = 0`.
pub fn matern_correlation<T: Real>(h: T, params: &MaternParams<T>) -> T {
    assert!(h >= T::zero(), "distance must be non-negative");
    let x = params.kappa * h;
    if x == T::zero() {
        return T::one();
    }
    if x > lit(700.0) {
        return T::zero();
    }
    (x * bessel_k1(x)).min(T::one())
}

/// The three fixed matrices `C`, `2G`, `G C⁻¹ G` on a shared pattern, so
/// `Q_s(κ, τ) = τ² (κ⁴ C + κ² 2G + G C⁻¹ G)` is a cheap value update.
#[derive(Debug, Clone)]
pub struct SpdeOperator<T> {
    pattern: CscMatrix<T>,
    c_vals: Vec<T>,
    g2_vals: Vec<T>,
    gcg_vals: Vec<T>,
}

impl<T: Real> SpdeOperator<T> {
    pub fn new(fem: &FemMatrices<T>) -> Result<Self> {
        let c = fem.c_matrix();
        let gcg = fem.gcg();
        let pattern = gcg
            .add_scaled(T::one(), &fem.g, T::zero())?
            .add_scaled(T::one(), &c, T::zero())?;
        Ok(Self {
            c_vals: c.values_on(&pattern)?,
            g2_vals: fem.g.scale(lit(2.0)).values_on(&pattern)?,
            gcg_vals: gcg.values_on(&pattern)?,
            pattern,
        })
    }

    pub fn dim(&self) -> usize {
        self.pattern.nrows()
    }

    pub fn pattern(&self) -> &CscMatrix<T> {
        &self.pattern
    }

    /// Values of `Q_s` on [`Self::pattern`]: `[C, 2G, GC⁻¹G]` weighted by
    /// `τ²κ⁴, τ²κ², τ²`.
    pub fn coefficients(kappa: T, tau: T) -> [T; 3] {
        let t2 = tau * tau;
        let k2 = kappa * kappa;
        [t2 * k2 * k2, t2 * k2, t2]
    }

    pub fn components(&self) -> [&[T]; 3] {
        [&self.c_vals, &self.g2_vals, &self.gcg_vals]
    }

    pub fn precision(&self, params: &MaternParams<T>) -> CscMatrix<T> {
        let w = Self::coefficients(params.kappa, params.tau);
        let values = (0..self.pattern.nnz())
            .map(|k| w[0] * self.c_vals[k] + w[1] * self.g2_vals[k] + w[2] * self.gcg_vals[k])
            .collect();
        self.pattern.with_values(values)
    }
}

/// Assembles and factorizes `Q_s = τ² (κ⁴ C + 2κ² G + G C⁻¹ G)`.
pub fn spatial_precision<T: Real>(fem: &FemMatrices<T>, params: &MaternParams<T>) -> Result<SparseSpd<T>> {
    let op = SpdeOperator::new(fem)?;
    let mut q = SparseSpd::new(op.precision(params));
    q.factorize()?;
    Ok(q)
}

/// Draws the FEM weights of one spatial field, `x = P L⁻ᵀ z`.
pub fn sample_spatial_field<T: Real>(q_s: &SparseSpd<T>, seed: u64) -> Result<Vec<T>>
where
    StandardNormal: rand_distr::Distribution<T>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    q_s.sample(&mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions() {
        let p = convert_params(2.0f64, 1.0).unwrap();
        assert!((p.kappa - 2f64.sqrt()).abs() < 1e-15);
        let back = MaternParams::from_kappa_tau(p.kappa, p.tau).unwrap();
        assert!((back.range_r - 2.0).abs() < 1e-12);
        assert!((back.sigma_omega - 1.0).abs() < 1e-12);
        let unit = MaternParams::from_kappa_tau(1.0f64, 1.0).unwrap();
        assert!((unit.sigma_omega.powi(2) - 0.079_577_471_545_947_67).abs() < 1e-12);
        assert!(convert_params(-1.0f64, 1.0).is_err());
        assert!(convert_params(1.0f64, 0.0).is_err());
    }

    #[test]
    fn alpha_restricted() {
        assert!(SpdeConfig::default().validate().is_ok());
        let frac = SpdeConfig {
            nu: 0.5,
            alpha: 1.5,
            d: 2,
        };
        assert!(matches!(frac.validate(), Err(Error::Unsupported(_))));
        let bad = SpdeConfig {
            nu: 1.0,
            alpha: 3.0,
            d: 2,
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn series_and_quadrature_agree_at_switch() {
        let below = bessel_k1(2.0f64 - 1e-12);
        let above = bessel_k1(2.0f64 + 1e-12);
        assert!((below - above).abs() < 1e-12);
    }

    #[test]
    fn correlation_limits() {
        let p = convert_params(2.0f64, 1.0).unwrap();
        assert_eq!(matern_correlation(0.0, &p), 1.0);
        let mut last = 1.0;
        for k in 1..100 {
            let c = matern_correlation(k as f64 * 0.1, &p);
            assert!(c < last);
            last = c;
        }
        assert!(matern_correlation(20.0, &p) < 1e-6);
    }
}
