//! Hyperparameter transforms and log-prior densities.
//!
//! All densities are expressed on the internal unconstrained scale
//! (log-precision, log-range, log-sd, `log((1+φ)/(1−φ))`), Jacobians
//! included.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// The three model structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Fixed effects only.
    #[serde(alias = "model1")]
    CovariateOnly,
    /// Static spatial field plus a spatially constant AR(1) time effect.
    #[serde(alias = "model2")]
    Additive,
    /// Spatiotemporal field with AR(1) dynamics and Matérn innovations.
    #[serde(alias = "model3")]
    FullSt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::CovariateOnly, ModelKind::Additive, ModelKind::FullSt];

    pub fn n_hyper(self) -> usize {
        match self {
            ModelKind::CovariateOnly => 1,
            ModelKind::Additive => 5,
            ModelKind::FullSt => 4,
        }
    }

    /// Names of the internal coordinates.
    pub fn theta_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::CovariateOnly => &["log_tau_eps"],
            ModelKind::Additive => &["log_tau_eps", "log_range", "log_sigma_omega", "log_sigma_f", "phi_f_internal"],
            ModelKind::FullSt => &["log_tau_eps", "log_range", "log_sigma_omega", "phi_internal"],
        }
    }

    /// Names of the natural-scale hyperparameters, same order as the internal
    /// coordinates.
    pub fn natural_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::CovariateOnly => &["tau_eps"],
            ModelKind::Additive => &["tau_eps", "range", "sigma_omega", "sigma_f", "phi_f"],
            ModelKind::FullSt => &["tau_eps", "range", "sigma_omega", "phi"],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::CovariateOnly => "model1",
            ModelKind::Additive => "model2",
            ModelKind::FullSt => "model3",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::CovariateOnly => "covariate_only",
            ModelKind::Additive => "additive",
            ModelKind::FullSt => "full_st",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "covariate_only" | "model1" | "1" => Ok(ModelKind::CovariateOnly),
            "additive" | "model2" | "2" => Ok(ModelKind::Additive),
            "full_st" | "fullst" | "model3" | "3" => Ok(ModelKind::FullSt),
            other => Err(Error::InvalidParameter(format!("unknown model kind `{other}`"))),
        }
    }
}

/// How the AR(1) PC prior is calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Ar1Calibration {
    /// Base model `φ = 0`, `Prob(|φ| > u) = α`.
    Symmetric { u: f64, alpha: f64 },
    /// Base model `φ = 1`, `Prob(φ > u) = α`.
    TowardOne { u: f64, alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// `Prob(r < range0) = alpha_range`.
    pub range0: f64,
    pub alpha_range: f64,
    /// `Prob(σ > sigma0) = alpha_sigma`.
    pub sigma0: f64,
    pub alpha_sigma: f64,
    pub phi_u: f64,
    pub phi_alpha: f64,
    /// Use the base-one calibration `Prob(φ > phi_u) = phi_alpha` instead
    /// of the symmetric one.
    pub phi_toward_one: bool,
    /// Gamma prior on the noise precision.
    pub noise_shape: f64,
    pub noise_rate: f64,
    /// Prior precision of every fixed effect, intercept included.
    pub beta_prec: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            range0: 600.0,
            alpha_range: 0.5,
            sigma0: 3.0,
            alpha_sigma: 0.01,
            phi_u: 0.5,
            phi_alpha: 0.5,
            phi_toward_one: false,
            noise_shape: 1.0,
            noise_rate: 5e-5,
            beta_prec: 1e-6,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} = {v} must lie in (0, 1)")))
            }
        };
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} = {v} must be positive")))
            }
        };
        prob("alpha_range", self.alpha_range)?;
        prob("alpha_sigma", self.alpha_sigma)?;
        prob("phi_alpha", self.phi_alpha)?;
        pos("range0", self.range0)?;
        pos("sigma0", self.sigma0)?;
        pos("noise_shape", self.noise_shape)?;
        pos("noise_rate", self.noise_rate)?;
        pos("beta_prec", self.beta_prec)?;
        if self.phi_toward_one {
            if !(self.phi_u > -1.0 && self.phi_u < 1.0) {
                return Err(Error::InvalidParameter(format!("phi_u = {} must lie in (-1, 1)", self.phi_u)));
            }
            if self.phi_alpha <= (1.0 - self.phi_u).sqrt() / 2f64.sqrt() {
                return Err(Error::InvalidParameter(format!(
                    "Prob(phi > {}) = {} is not attainable with a base-one PC prior",
                    self.phi_u, self.phi_alpha
                )));
            }
        } else {
            prob("phi_u", self.phi_u)?;
        }
        Ok(())
    }

    pub fn ar1_calibration(&self) -> Ar1Calibration {
        if self.phi_toward_one {
            Ar1Calibration::TowardOne {
                u: self.phi_u,
                alpha: self.phi_alpha,
            }
        } else {
            Ar1Calibration::Symmetric {
                u: self.phi_u,
                alpha: self.phi_alpha,
            }
        }
    }

    /// `λ_r = −ln(alpha_range)·range0`.
    pub fn lambda_range(&self) -> f64 {
        -self.alpha_range.ln() * self.range0
    }

    /// `λ_σ = −ln(alpha_sigma)/sigma0`.
    pub fn lambda_sigma(&self) -> f64 {
        -self.alpha_sigma.ln() / self.sigma0
    }
}

/// `φ = tanh(θ/2)`, the inverse of `θ = log((1+φ)/(1−φ))`.
pub fn phi_from_internal(theta: f64) -> f64 {
    (theta / 2.0).tanh()
}

pub fn phi_to_internal(phi: f64) -> f64 {
    ((1.0 + phi) / (1.0 - phi)).ln()
}

/// Joint PC prior of `(log r, log σ)` for a Matérn field in two dimensions.
pub fn log_prior_spatial(log_r: f64, log_sigma: f64, cfg: &PriorConfig) -> f64 {
    let lr = cfg.lambda_range();
    let ls = cfg.lambda_sigma();
    let r = log_r.exp();
    let s = log_sigma.exp();
    let log_range_part = if r > 0.0 { lr.ln() - log_r - lr / r } else { f64::NEG_INFINITY };
    log_range_part + log_prior_sd(log_sigma, ls, s)
}

/// Exponential PC prior on a standard deviation, in `log σ`.
fn log_prior_sd(log_sigma: f64, lambda: f64, sigma: f64) -> f64 {
    lambda.ln() + log_sigma - lambda * sigma
}

/// PC prior of a standard deviation alone, in `log σ`, with rate
/// `−ln(alpha_sigma)/sigma0`.
pub fn log_prior_sigma(log_sigma: f64, cfg: &PriorConfig) -> f64 {
    log_prior_sd(log_sigma, cfg.lambda_sigma(), log_sigma.exp())
}

/// KL distance from the base model `φ = 0`: `√(−ln(1−φ²))`.
fn distance_base0(phi: f64) -> f64 {
    (-(-phi * phi).ln_1p()).sqrt()
}

/// Rate of the base-one prior solving `Prob(φ > u) = α`, i.e.
/// `(1 − e^{−λ√(1−u)}) / (1 − e^{−λ√2}) = α`.
fn lambda_toward_one(u: f64, alpha: f64) -> f64 {
    let prob = |lambda: f64| (-(-lambda * (1.0 - u).sqrt()).exp_m1()) / (-(-lambda * 2f64.sqrt()).exp_m1());
    let (mut lo, mut hi) = (1e-10, 1.0);
    while prob(hi) < alpha {
        hi *= 2.0;
        if hi > 1e8 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if prob(mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// PC prior of an AR(1) coefficient, on `θ = log((1+φ)/(1−φ))`.
pub fn log_prior_ar1(theta: f64, cfg: &PriorConfig) -> f64 {
    let phi = phi_from_internal(theta);
    // dφ/dθ = (1−φ²)/2, written through θ to stay accurate in the tails
    // log(1−φ²), accurate near 0 and in the tails
    let log_one_minus = if theta.abs() < 2.0 {
        (-phi * phi).ln_1p()
    } else {
        -2.0 * ln_cosh(theta / 2.0)
    };
    let log_jac = -std::f64::consts::LN_2 + log_one_minus;
    match cfg.ar1_calibration() {
        Ar1Calibration::Symmetric { u, alpha } => {
            let lambda = -alpha.ln() / distance_base0(u);
            if theta.abs() < 1e-8 {
                // |φ| / ((1−φ²) d(φ)) → 1 as φ → 0
                return (lambda / 4.0).ln() - lambda * distance_base0(phi);
            }
            let d = (-log_one_minus).sqrt();
            (lambda / 2.0).ln() - lambda * d + phi.abs().ln() - log_one_minus - d.ln() + log_jac
        }
        Ar1Calibration::TowardOne { u, alpha } => {
            let lambda = lambda_toward_one(u, alpha);
            // 1 − φ = 2 / (1 + e^θ)
            let one_minus = 2.0 * (-ln_one_plus_exp(theta)).exp();
            let d = one_minus.sqrt();
            let norm = -(-lambda * 2f64.sqrt()).exp_m1();
            lambda.ln() - lambda * d - (2.0 * d).ln() - norm.ln() + log_jac
        }
    }
}

fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn ln_one_plus_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Gamma(shape, rate) prior on the noise precision, in `log τ`.
pub fn log_prior_noise(log_tau: f64, cfg: &PriorConfig) -> f64 {
    let a = cfg.noise_shape;
    let b = cfg.noise_rate;
    a * b.ln() - ln_gamma(a) + a * log_tau - b * log_tau.exp()
}

/// Natural-scale hyperparameters; fields absent from a model are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NaturalHyper {
    pub tau_eps: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub range_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma_omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub phi_f: Option<f64>,
}

/// Internal unconstrained hyperparameter vector for a given model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub kind: ModelKind,
    pub theta: Vec<f64>,
}

impl HyperParams {
    pub fn new(kind: ModelKind, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != kind.n_hyper() {
            return Err(Error::Dimension(format!(
                "{kind} needs {} hyperparameters, got {}",
                kind.n_hyper(),
                theta.len()
            )));
        }
        if let Some(v) = theta.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite hyperparameter {v}")));
        }
        Ok(Self { kind, theta })
    }

    pub fn from_natural(kind: ModelKind, h: &NaturalHyper) -> Result<Self> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::InvalidParameter(format!("{kind} needs `{name}`")))
        };
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(Error::InvalidParameter(format!("{name} = {v} must be positive")))
            }
        };
        let corr = |v: f64, name: &str| {
            if v.abs() < 1.0 {
                Ok(phi_to_internal(v))
            } else {
                Err(Error::InvalidParameter(format!("{name} = {v} outside (-1, 1)")))
            }
        };
        let mut theta = vec![pos(h.tau_eps, "tau_eps")?];
        match kind {
            ModelKind::CovariateOnly => {}
            ModelKind::Additive => {
                theta.push(pos(need(h.range_r, "range")?, "range")?);
                theta.push(pos(need(h.sigma_omega, "sigma_omega")?, "sigma_omega")?);
                theta.push(pos(need(h.sigma_f, "sigma_f")?, "sigma_f")?);
                theta.push(corr(need(h.phi_f, "phi_f")?, "phi_f")?);
            }
            ModelKind::FullSt => {
                theta.push(pos(need(h.range_r, "range")?, "range")?);
                theta.push(pos(need(h.sigma_omega, "sigma_omega")?, "sigma_omega")?);
                theta.push(corr(need(h.phi, "phi")?, "phi")?);
            }
        }
        Self::new(kind, theta)
    }

    pub fn natural(&self) -> NaturalHyper {
        let t = &self.theta;
        let mut h = NaturalHyper {
            tau_eps: t[0].exp(),
            ..Default::default()
        };
        match self.kind {
            ModelKind::CovariateOnly => {}
            ModelKind::Additive => {
                h.range_r = Some(t[1].exp());
                h.sigma_omega = Some(t[2].exp());
                h.sigma_f = Some(t[3].exp());
                h.phi_f = Some(phi_from_internal(t[4]));
            }
            ModelKind::FullSt => {
                h.range_r = Some(t[1].exp());
                h.sigma_omega = Some(t[2].exp());
                h.phi = Some(phi_from_internal(t[3]));
            }
        }
        h
    }

    /// Natural-scale values in [`ModelKind::natural_names`] order.
    pub fn natural_vec(&self) -> Vec<f64> {
        natural_coordinates(self.kind, &self.theta)
    }
}

/// Maps internal coordinates to natural-scale values coordinate-wise.
pub fn natural_coordinates(kind: ModelKind, theta: &[f64]) -> Vec<f64> {
    theta
        .iter()
        .enumerate()
        .map(|(i, &v)| if is_correlation_coordinate(kind, i) { phi_from_internal(v) } else { v.exp() })
        .collect()
}

/// Whether coordinate `i` of `kind` is an AR(1) coefficient (all others are
/// log-transformed positive quantities).
pub fn is_correlation_coordinate(kind: ModelKind, i: usize) -> bool {
    matches!((kind, i), (ModelKind::Additive, 4) | (ModelKind::FullSt, 3))
}

/// Sum of the independent log-priors of all hyperparameters.
pub fn log_prior(h: &HyperParams, cfg: &PriorConfig) -> f64 {
    let t = &h.theta;
    let mut lp = log_prior_noise(t[0], cfg);
    match h.kind {
        ModelKind::CovariateOnly => {}
        ModelKind::Additive => {
            lp += log_prior_spatial(t[1], t[2], cfg);
            lp += log_prior_sigma(t[3], cfg);
            lp += log_prior_ar1(t[4], cfg);
        }
        ModelKind::FullSt => {
            lp += log_prior_spatial(t[1], t[2], cfg);
            lp += log_prior_ar1(t[3], cfg);
        }
    }
    lp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates() {
        let cfg = PriorConfig::default();
        assert!((cfg.lambda_sigma() - 1.535_056_728_662_697).abs() < 1e-12);
        assert!((cfg.lambda_range() - 415.888_308_335_967_2).abs() < 1e-9);
    }

    #[test]
    fn ar1_symmetric() {
        let cfg = PriorConfig::default();
        for &t in &[0.1, 0.7, 2.0, 5.0, 12.0] {
            assert!((log_prior_ar1(t, &cfg) - log_prior_ar1(-t, &cfg)).abs() < 1e-12);
        }
        // continuous through the small-θ branch
        let a = log_prior_ar1(0.999e-6, &cfg);
        let b = log_prior_ar1(1.001e-6, &cfg);
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn noise_mode_at_inverse_rate() {
        let cfg = PriorConfig {
            noise_rate: 0.25,
            ..Default::default()
        };
        let f = |x: f64| log_prior_noise(x, &cfg);
        let mode = 4f64.ln();
        assert!(f(mode) > f(mode + 1e-3) && f(mode) > f(mode - 1e-3));
    }

    #[test]
    fn round_trip() {
        let h = NaturalHyper {
            tau_eps: 8.41,
            range_r: Some(1419.84),
            sigma_omega: Some(2.0),
            phi: Some(0.75),
            ..Default::default()
        };
        let p = HyperParams::from_natural(ModelKind::FullSt, &h).unwrap();
        let back = p.natural();
        assert!((back.tau_eps - 8.41).abs() < 1e-12);
        assert!((back.range_r.unwrap() - 1419.84).abs() < 1e-9);
        assert!((back.phi.unwrap() - 0.75).abs() < 1e-12);
        assert!(HyperParams::from_natural(ModelKind::Additive, &h).is_err());
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("model3".parse::<ModelKind>().unwrap(), ModelKind::FullSt);
        assert_eq!("additive".parse::<ModelKind>().unwrap(), ModelKind::Additive);
        assert!("model4".parse::<ModelKind>().is_err());
    }
}
