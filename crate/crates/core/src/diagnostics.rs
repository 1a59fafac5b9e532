//! Model criteria (DIC, WAIC, CPO/LCPO, PIT) and predictive scores.
//!
//! Every criterion is computed from the per-θ Gaussian moments of the
//! linear predictor at the observation rows, so expectations over the
//! latent field are exact and only the θ integral is a finite mixture.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data_io::Scaling;
use crate::error::{Error, Result};
use crate::model::{AssembledModel, FitResult, ObsMoments};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Correlation, RMSE and MAE on one scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    /// Pearson correlation; absent when either vector is constant.
    pub r: Option<f64>,
    pub rmse: f64,
    pub mae: f64,
    /// Mean of `pred − obs`.
    pub bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub n: usize,
    pub standardized: Scores,
    /// Back-transformed to the response units.
    pub response: Scores,
}

fn raw_scores(obs: &[f64], pred: &[f64]) -> Scores {
    let n = obs.len() as f64;
    let err: Vec<f64> = pred.iter().zip(obs).map(|(p, o)| p - o).collect();
    let rmse = (err.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let mae = err.iter().map(|e| e.abs()).sum::<f64>() / n;
    let bias = err.iter().sum::<f64>() / n;
    let mo = obs.iter().sum::<f64>() / n;
    let mp = pred.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (o, p) in obs.iter().zip(pred) {
        sxy += (o - mo) * (p - mp);
        sxx += (o - mo) * (o - mo);
        syy += (p - mp) * (p - mp);
    }
    let r = if sxx > 0.0 && syy > 0.0 {
        Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
    } else {
        None
    };
    Scores { r, rmse, mae, bias }
}

/// Scores of `pred` against `obs` on a single scale.
pub fn score(obs: &[f64], pred: &[f64]) -> Result<ScoreReport> {
    score_with_scaling(obs, pred, None)
}

/// Scores on the standardized scale and, through `scaling`, in response units.
pub fn score_with_scaling(obs: &[f64], pred: &[f64], scaling: Option<Scaling>) -> Result<ScoreReport> {
    if obs.len() != pred.len() {
        return Err(Error::Dimension(format!(
            "{} observations against {} predictions",
            obs.len(),
            pred.len()
        )));
    }
    if obs.len() < 2 {
        return Err(Error::Dimension("scores need at least two pairs".into()));
    }
    if let Some(v) = obs.iter().chain(pred).find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite value {v} in scores")));
    }
    let standardized = raw_scores(obs, pred);
    let response = match scaling {
        None => standardized,
        Some(s) => Scores {
            r: standardized.r,
            rmse: standardized.rmse * s.sd,
            mae: standardized.mae * s.sd,
            bias: standardized.bias * s.sd,
        },
    };
    Ok(ScoreReport {
        n: obs.len(),
        standardized,
        response,
    })
}

/// `−2 log p(y | η, τ)` for the Gaussian observation model.
pub fn deviance(y: &[f64], eta: &[f64], tau_eps: f64) -> f64 {
    let n = y.len() as f64;
    let rss: f64 = y.iter().zip(eta).map(|(a, b)| (a - b) * (a - b)).sum();
    n * LN_2PI - n * tau_eps.ln() + tau_eps * rss
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DicReport {
    pub dic: f64,
    pub p_dic: f64,
    /// Posterior expected deviance.
    pub d_bar: f64,
    /// Deviance at the posterior means of `η` and `τ_ε`.
    pub d_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaicReport {
    pub waic: f64,
    pub p_waic: f64,
    pub lppd: f64,
    /// The θ integral had one point, so `p_waic` holds only the latent part.
    pub single_point: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpoPit {
    pub cpo: Vec<f64>,
    pub pit: Vec<f64>,
    /// Observations where `s_i² ≥ σ_ε² − 1e-12` at some θ, so the
    /// leave-one-out identity is numerically unreliable.
    pub flagged: Vec<bool>,
    /// Mean negative log CPO.
    pub lcpo: f64,
}

/// Leave-one-out predictive `N(M, V)` for `y` given the full-data moments
/// `(m, s²)` of its linear predictor and the noise variance. `None` when
/// the guard `s² < σ² − 1e-12` fails.
pub fn loo_predictive(y: f64, m: f64, s2: f64, sigma2: f64) -> Option<(f64, f64)> {
    let gap = sigma2 - s2;
    if !(gap > 1e-12) {
        return None;
    }
    let v = sigma2 * sigma2 / gap;
    let mean = y - sigma2 * (y - m) / gap;
    Some((mean, v))
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + (x - mean) * (x - mean) / var)
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check_moments(y: &[f64], weights: &[f64], moments: &[ObsMoments]) -> Result<()> {
    if moments.is_empty() || weights.len() != moments.len() {
        return Err(Error::Dimension(format!(
            "{} weights for {} θ points",
            weights.len(),
            moments.len()
        )));
    }
    if moments.iter().any(|m| m.mean.len() != y.len() || m.var.len() != y.len()) {
        return Err(Error::Dimension("observation moments do not match the response".into()));
    }
    Ok(())
}

/// DIC from per-θ moments. `tau_bar` is the posterior mean of `τ_ε` and
/// `eta_bar` the posterior mean of the linear predictor.
pub fn dic_from_moments(
    y: &[f64],
    weights: &[f64],
    moments: &[ObsMoments],
    eta_bar: &[f64],
    tau_bar: f64,
) -> Result<DicReport> {
    check_moments(y, weights, moments)?;
    let n = y.len() as f64;
    let mut d_bar = 0.0;
    for (w, mo) in weights.iter().zip(moments) {
        let expected_rss: f64 = y
            .iter()
            .zip(mo.mean.iter().zip(&mo.var))
            .map(|(yi, (m, v))| (yi - m) * (yi - m) + v)
            .sum();
        d_bar += w * (n * LN_2PI - n * mo.tau_eps.ln() + mo.tau_eps * expected_rss);
    }
    let d_hat = deviance(y, eta_bar, tau_bar);
    let p_dic = d_bar - d_hat;
    Ok(DicReport {
        dic: d_hat + 2.0 * p_dic,
        p_dic,
        d_bar,
        d_hat,
    })
}

/// WAIC from per-θ moments. The pointwise variance of the log density is
/// split by the law of total variance into its exact within-θ part and
/// the spread of the within-θ means across the mixture.
pub fn waic_from_moments(y: &[f64], weights: &[f64], moments: &[ObsMoments]) -> Result<WaicReport> {
    check_moments(y, weights, moments)?;
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    for i in 0..y.len() {
        let terms = weights.iter().zip(moments).filter(|(w, _)| **w > 0.0).map(|(w, mo)| {
            w.ln() + log_normal_pdf(y[i], mo.mean[i], 1.0 / mo.tau_eps + mo.var[i])
        });
        lppd += log_sum_exp(terms);
        // log p(y_i | η, τ) = ½ln τ − ½ln 2π − ½τ r², r = y_i − η ~ N(μ, v)
        let (mut e1, mut e2, mut within) = (0.0, 0.0, 0.0);
        for (w, mo) in weights.iter().zip(moments) {
            let tau = mo.tau_eps;
            let mu = y[i] - mo.mean[i];
            let v = mo.var[i];
            let mean_ll = 0.5 * tau.ln() - 0.5 * LN_2PI - 0.5 * tau * (mu * mu + v);
            let var_ll = 0.25 * tau * tau * (2.0 * v * v + 4.0 * mu * mu * v);
            e1 += w * mean_ll;
            e2 += w * mean_ll * mean_ll;
            within += w * var_ll;
        }
        p_waic += within + (e2 - e1 * e1).max(0.0);
    }
    Ok(WaicReport {
        waic: -2.0 * (lppd - p_waic),
        p_waic,
        lppd,
        single_point: moments.len() == 1,
    })
}

/// CPO and PIT from per-θ moments.
///
/// At each θ the leave-one-out predictive is Gaussian and exact. Across θ
/// the mixture uses the leave-one-out weights `w_k / CPO_ik` (normalized),
/// which is what `p(y_i | y_{−i})` requires; at a single θ this reduces to
/// the plain identity.
pub fn cpo_pit_from_moments(y: &[f64], weights: &[f64], moments: &[ObsMoments]) -> Result<CpoPit> {
    check_moments(y, weights, moments)?;
    let n = y.len();
    let mut cpo = Vec::with_capacity(n);
    let mut pit = Vec::with_capacity(n);
    let mut flagged = Vec::with_capacity(n);
    let mut lw = Vec::with_capacity(moments.len());
    let mut cdf = Vec::with_capacity(moments.len());
    for i in 0..n {
        lw.clear();
        cdf.clear();
        let mut flag = false;
        for (w, mo) in weights.iter().zip(moments) {
            if !(*w > 0.0) {
                continue;
            }
            let sigma2 = 1.0 / mo.tau_eps;
            let (mean, var) = match loo_predictive(y[i], mo.mean[i], mo.var[i], sigma2) {
                Some(mv) => mv,
                None => {
                    flag = true;
                    let gap = 1e-12f64.max(sigma2 * 1e-12);
                    (y[i] - sigma2 * (y[i] - mo.mean[i]) / gap, sigma2 * sigma2 / gap)
                }
            };
            let log_cpo = log_normal_pdf(y[i], mean, var);
            lw.push(w.ln() - log_cpo);
            cdf.push(normal_cdf((y[i] - mean) / var.sqrt()));
        }
        let norm = log_sum_exp(lw.iter().copied());
        cpo.push((-norm).exp());
        pit.push(
            lw.iter()
                .zip(&cdf)
                .map(|(l, c)| (l - norm).exp() * c)
                .sum::<f64>()
                .clamp(0.0, 1.0),
        );
        flagged.push(flag);
    }
    let lcpo = -cpo.iter().map(|c| c.ln()).sum::<f64>() / n as f64;
    Ok(CpoPit {
        cpo,
        pit,
        flagged,
        lcpo,
    })
}

fn tau_mean(fit: &FitResult) -> Result<f64> {
    fit.hyper_mean("tau_eps")
        .ok_or_else(|| Error::Dimension("fit has no noise precision marginal".into()))
}

fn check_fit(fit: &FitResult, am: &AssembledModel) -> Result<()> {
    if fit.kind != am.kind || fit.fitted.mean.len() != am.n_obs() {
        return Err(Error::Dimension("fit does not belong to this assembled model".into()));
    }
    Ok(())
}

pub fn dic(fit: &FitResult, am: &AssembledModel) -> Result<DicReport> {
    check_fit(fit, am)?;
    dic_from_moments(&am.y, &fit.weights(), &fit.obs_moments, &fit.fitted.mean, tau_mean(fit)?)
}

pub fn waic(fit: &FitResult, am: &AssembledModel) -> Result<WaicReport> {
    check_fit(fit, am)?;
    waic_from_moments(&am.y, &fit.weights(), &fit.obs_moments)
}

pub fn cpo_pit(fit: &FitResult, am: &AssembledModel) -> Result<CpoPit> {
    check_fit(fit, am)?;
    cpo_pit_from_moments(&am.y, &fit.weights(), &fit.obs_moments)
}

/// One-sample Kolmogorov–Smirnov test against `U(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub n: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{k−1} exp(−2k²λ²)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// KS uniformity test with the Stephens small-sample correction of the
/// asymptotic p-value.
pub fn ks_uniform(sample: &[f64]) -> Result<KsTest> {
    if sample.is_empty() {
        return Err(Error::Dimension("KS test of an empty sample".into()));
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &u) in s.iter().enumerate() {
        let u = u.clamp(0.0, 1.0);
        d = d.max((i + 1) as f64 / nf - u).max(u - i as f64 / nf);
    }
    let sq = nf.sqrt();
    Ok(KsTest {
        n,
        statistic: d,
        p_value: kolmogorov_q((sq + 0.12 + 0.11 / sq) * d),
    })
}

/// Counts of `pit` values in `bins` equal-width bins of `[0, 1]`.
pub fn pit_histogram(pit: &[f64], bins: usize) -> Vec<usize> {
    let mut h = vec![0usize; bins.max(1)];
    let nb = h.len();
    for &u in pit {
        let b = ((u.clamp(0.0, 1.0) * nb as f64) as usize).min(nb - 1);
        h[b] += 1;
    }
    h
}

/// All model-choice criteria of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub dic: f64,
    pub p_dic: f64,
    pub waic: f64,
    pub p_waic: f64,
    pub lppd: f64,
    pub lcpo: f64,
    pub log_ml: f64,
    pub n_obs: usize,
    pub n_cpo_flagged: usize,
    pub waic_single_point: bool,
    pub pit_ks: KsTest,
    pub pit_histogram: Vec<usize>,
    #[serde(skip)]
    pub cpo: Vec<f64>,
    #[serde(skip)]
    pub pit: Vec<f64>,
    #[serde(skip)]
    pub cpo_flagged: Vec<bool>,
}

pub const PIT_BINS: usize = 20;

pub fn criteria(fit: &FitResult, am: &AssembledModel) -> Result<CriteriaReport> {
    let d = dic(fit, am)?;
    let w = waic(fit, am)?;
    let c = cpo_pit(fit, am)?;
    Ok(CriteriaReport {
        dic: d.dic,
        p_dic: d.p_dic,
        waic: w.waic,
        p_waic: w.p_waic,
        lppd: w.lppd,
        lcpo: c.lcpo,
        log_ml: fit.log_ml,
        n_obs: am.n_obs(),
        n_cpo_flagged: c.flagged.iter().filter(|&&f| f).count(),
        waic_single_point: w.single_point,
        pit_ks: ks_uniform(&c.pit)?,
        pit_histogram: pit_histogram(&c.pit, PIT_BINS),
        cpo: c.cpo,
        pit: c.pit,
        cpo_flagged: c.flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_examples() {
        let s = score(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap().standardized;
        assert_eq!((s.r, s.rmse, s.mae), (Some(1.0), 0.0, 0.0));
        let s = score(&[2.0, 4.0], &[1.0, 5.0]).unwrap().standardized;
        assert_eq!((s.rmse, s.mae), (1.0, 1.0));
        let s = score(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap().standardized;
        assert!((s.r.unwrap() - 1.0).abs() < 1e-15 && s.rmse > 0.0);
        assert_eq!(score(&[1.0, 1.0], &[0.0, 2.0]).unwrap().standardized.r, None);
        assert!(score(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn one_observation_prior_predictive() {
        // η ~ N(0, 1), σ_ε = 1, y = 0: posterior of η has mean 0, var 1/2
        let mo = ObsMoments {
            tau_eps: 1.0,
            mean: vec![0.0],
            var: vec![0.5],
        };
        let c = cpo_pit_from_moments(&[0.0], &[1.0], &[mo]).unwrap();
        let want = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
        assert!((c.cpo[0] - want).abs() < 1e-14);
        assert!((c.pit[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_known_values() {
        // Q(1.3581) ≈ 0.05, Q(1.6276) ≈ 0.01
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 2e-4);
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 1e-4);
        let u: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!(ks_uniform(&u).unwrap().p_value > 0.999);
    }

    #[test]
    fn histogram_edges() {
        assert_eq!(pit_histogram(&[0.0, 0.5, 1.0], 2), vec![1, 2]);
    }
}
