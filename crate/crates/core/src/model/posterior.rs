use std::sync::Arc;

use crate::error::{Error, Result};
use crate::priors::{log_prior, HyperParams};
use crate::sparse::{CholeskyFactor, SparseSpd};

use super::assemble::{AssembledModel, ThetaParams};

/// Exact Gaussian conditional `x | y, θ`.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    /// Factorized `Q_c`.
    pub precision: SparseSpd<f64>,
    /// `log det Q_c`.
    pub logdet: f64,
}

/// Everything computed at one hyperparameter value.
#[derive(Debug, Clone)]
pub struct ThetaEval {
    pub hyper: HyperParams,
    pub params: ThetaParams,
    pub posterior: GaussianPosterior,
    /// `log p(y | θ)`.
    pub log_lik: f64,
    pub log_prior: f64,
    /// `log p(y | θ) + log π(θ)`.
    pub log_post: f64,
    /// Factorized `Q_s(θ)` when the model has a spatial field.
    pub spatial: Option<CholeskyFactor<f64>>,
}

impl AssembledModel {
    /// Conditional posterior, marginal likelihood and prior at `h`.
    pub fn evaluate(&self, h: &HyperParams) -> Result<ThetaEval> {
        if h.kind != self.kind {
            return Err(Error::Dimension(format!(
                "hyperparameters for {} given to a {} model",
                h.kind, self.kind
            )));
        }
        let params = ThetaParams::from_hyper(h)?;
        let tau = params.tau_eps;
        let mut q = SparseSpd::new(self.posterior_precision(&params));
        q.factorize_with(Arc::clone(self.symbolic()))?;
        let rhs: Vec<f64> = self.bty().iter().map(|v| v * tau).collect();
        let mean = q.solve(&rhs)?;
        let logdet_c = q.logdet()?;
        let spatial = self.spatial_factor(&params)?;
        let logdet_x = self.prior_logdet(&params, spatial.as_ref());
        let n = self.n_obs() as f64;
        let fit_term = tau * self.yty() - mean.iter().zip(&rhs).map(|(a, b)| a * b).sum::<f64>();
        let log_lik = 0.5 * logdet_x - 0.5 * logdet_c + 0.5 * n * tau.ln()
            - 0.5 * fit_term
            - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
        let lp = log_prior(h, &self.prior);
        Ok(ThetaEval {
            hyper: h.clone(),
            params,
            posterior: GaussianPosterior {
                mean,
                precision: q,
                logdet: logdet_c,
            },
            log_lik,
            log_prior: lp,
            log_post: log_lik + lp,
            spatial,
        })
    }
}

/// `x | y, θ` with precision `Q_x(θ) + τ_ε BᵀB` and mean `Q_c⁻¹ τ_ε Bᵀy`.
pub fn conditional_posterior(am: &AssembledModel, h: &HyperParams) -> Result<GaussianPosterior> {
    Ok(am.evaluate(h)?.posterior)
}

/// `log p(y | θ)` with the latent field integrated out exactly.
pub fn log_marginal_likelihood(am: &AssembledModel, h: &HyperParams) -> Result<f64> {
    Ok(am.evaluate(h)?.log_lik)
}

/// `log p(y | θ) + log π(θ)` on the internal scale.
pub fn log_marginal_posterior(am: &AssembledModel, h: &HyperParams) -> Result<f64> {
    Ok(am.evaluate(h)?.log_post)
}
