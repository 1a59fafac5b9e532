//! Posterior prediction on arbitrary points and times, monthly latent
//! summaries and exact posterior sampling.
//!
//! Predictions re-evaluate the conditional posterior at every integration
//! point and mix the per-θ Gaussian moments by the law of total variance.
//! Times past the fitted horizon are forecast by propagating the AR(1)
//! dynamics from the last fitted time.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::{Dataset, Scaling, SpatialPoint};
use crate::error::{Error, Result};
use crate::mesh::make_projector;
use crate::model::{AssembledModel, FitResult, ThetaEval};
use crate::priors::ModelKind;
use crate::sparse::{SelectedInverse, SparseRow};
use crate::synthetic::stream_rng;

/// Predictive mean and sd of the linear predictor on a points × times grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub points: Vec<SpatialPoint>,
    /// 1-based time indices; values past the fitted horizon are forecasts.
    pub times: Vec<usize>,
    /// Row `ti · points.len() + j` holds point `j` at `times[ti]`.
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Back-transformed to the response units.
    pub mean_response: Vec<f64>,
    pub sd_response: Vec<f64>,
}

impl PredictionResult {
    pub fn n_rows(&self) -> usize {
        self.mean.len()
    }

    pub fn index(&self, ti: usize, j: usize) -> usize {
        ti * self.points.len() + j
    }
}

/// One prediction target: barycentric weights, 1-based time and the
/// covariate row with the intercept in front.
struct Target<'a> {
    proj: &'a [(usize, f64)],
    time: usize,
    z: &'a [f64],
}

/// Per-θ quantities needed to predict.
struct ThetaState {
    eval: ThetaEval,
    sel: SelectedInverse<f64>,
    /// Selected inverse of `Q_s`, only when some target lies past the horizon.
    spatial_sel: Option<SelectedInverse<f64>>,
}

fn theta_state(am: &AssembledModel, fit: &FitResult, k: usize, forecast: bool) -> Result<ThetaState> {
    let eval = am.evaluate(&fit.grid.hyper(k))?;
    let sel = eval.posterior.precision.selected_inverse()?;
    let spatial_sel = match (&eval.spatial, forecast && am.kind == ModelKind::FullSt) {
        (Some(f), true) => Some(f.selected_inverse()),
        _ => None,
    };
    Ok(ThetaState {
        eval,
        sel,
        spatial_sel,
    })
}

/// Mean and variance of the linear predictor at one target under one θ.
fn moments_at(am: &AssembledModel, st: &ThetaState, t: &Target) -> Result<(f64, f64)> {
    let l = am.layout;
    let big_t = l.n_times;
    let (tt, ahead) = if t.time > big_t { (big_t, t.time - big_t) } else { (t.time, 0) };
    let p = st.eval.params;
    let mut row: SparseRow<f64> = Vec::with_capacity(t.proj.len() + 1 + t.z.len());
    let mut extra = 0.0;
    match am.kind {
        ModelKind::CovariateOnly => {}
        ModelKind::FullSt => {
            let phi = p.phi.expect("FullSt has phi");
            let g = phi.powi(ahead as i32);
            for &(v, w) in t.proj {
                row.push((l.field_index(tt - 1, v), w * g));
            }
            if ahead > 0 {
                let ss = st.spatial_sel.as_ref().expect("spatial inverse for forecasts");
                let a_qs_a = ss.quad_form(t.proj).ok_or_else(|| outside("spatial"))?;
                extra = (1.0 - g * g) / (1.0 - phi * phi) * a_qs_a;
            }
        }
        ModelKind::Additive => {
            let phi = p.phi_f.expect("Additive has phi_f");
            let sf = p.sigma_f.expect("Additive has sigma_f");
            let g = phi.powi(ahead as i32);
            row.extend_from_slice(t.proj);
            row.push((l.temporal().start + tt - 1, g));
            if ahead > 0 {
                extra = sf * sf * (1.0 - g * g) / (1.0 - phi * phi);
            }
        }
    }
    let b0 = l.beta().start;
    for (j, &z) in t.z.iter().enumerate() {
        if z != 0.0 {
            row.push((b0 + j, z));
        }
    }
    let mean: f64 = row.iter().map(|&(i, w)| w * st.eval.posterior.mean[i]).sum();
    let var = st.sel.quad_form(&row).ok_or_else(|| outside("posterior"))?.max(0.0) + extra;
    Ok((mean, var))
}

fn outside(what: &str) -> Error {
    Error::Dimension(format!("prediction row outside the {what} factor pattern"))
}

/// Mixture mean and variance at every target.
fn mixture_predict(fit: &FitResult, am: &AssembledModel, targets: &[Target]) -> Result<(Vec<f64>, Vec<f64>)> {
    if fit.kind != am.kind || fit.grid.is_empty() {
        return Err(Error::Dimension("fit does not belong to this assembled model".into()));
    }
    for t in targets {
        if t.time == 0 {
            return Err(Error::Dimension("time indices are 1-based".into()));
        }
        if t.z.len() != am.layout.n_coef {
            return Err(Error::Dimension(format!(
                "covariate row of length {} for {} coefficients",
                t.z.len(),
                am.layout.n_coef
            )));
        }
    }
    let forecast = targets.iter().any(|t| t.time > am.layout.n_times);
    let n = targets.len();
    let mut s1 = vec![0.0; n];
    let mut s2 = vec![0.0; n];
    for (k, gp) in fit.grid.points.iter().enumerate() {
        if !(gp.weight > 0.0) {
            continue;
        }
        let st = theta_state(am, fit, k, forecast)?;
        let mv: Vec<(f64, f64)> = targets
            .par_iter()
            .map(|t| moments_at(am, &st, t))
            .collect::<Result<_>>()?;
        for (i, (m, v)) in mv.into_iter().enumerate() {
            s1[i] += gp.weight * m;
            s2[i] += gp.weight * (v + m * m);
        }
    }
    let var = s1.iter().zip(&s2).map(|(m, q)| (q - m * m).max(0.0)).collect();
    Ok((s1, var))
}

/// Predicts the linear predictor at `points` for each of `times`.
///
/// `covariates` holds one row per (time, point) in the same order as the
/// result (time-major), without the intercept, on the model's scale.
pub fn predict_surface(
    fit: &FitResult,
    am: &AssembledModel,
    points: &[SpatialPoint],
    times: &[usize],
    covariates: &[Vec<f64>],
    scaling: Option<Scaling>,
) -> Result<PredictionResult> {
    let n_rows = points.len() * times.len();
    if covariates.len() != n_rows {
        return Err(Error::Dimension(format!(
            "{} covariate rows for {} prediction rows",
            covariates.len(),
            n_rows
        )));
    }
    let n_cov = am.layout.n_coef - 1;
    let mut z_rows = Vec::with_capacity(n_rows);
    for (i, c) in covariates.iter().enumerate() {
        if c.len() != n_cov {
            return Err(Error::Dimension(format!(
                "prediction row {i} has {} covariates, the model has {n_cov}",
                c.len()
            )));
        }
        if let Some(j) = c.iter().position(|v| !v.is_finite()) {
            return Err(Error::MissingCovariate {
                column: am.coef_names[j + 1].clone(),
                line: i + 1,
            });
        }
        let mut z = Vec::with_capacity(n_cov + 1);
        z.push(1.0);
        z.extend_from_slice(c);
        z_rows.push(z);
    }
    let proj = make_projector::<f64>(&am.mesh, points)?;
    let targets: Vec<Target> = times
        .iter()
        .flat_map(|&t| (0..points.len()).map(move |j| (t, j)))
        .zip(&z_rows)
        .map(|((t, j), z)| Target {
            proj: &proj.rows[j],
            time: t,
            z,
        })
        .collect();
    let (mean, var) = mixture_predict(fit, am, &targets)?;
    let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    let (mean_response, sd_response) = match scaling {
        Some(s) => (mean.iter().map(|&m| s.invert(m)).collect(), sd.iter().map(|&v| v * s.sd).collect()),
        None => (mean.clone(), sd.clone()),
    };
    Ok(PredictionResult {
        points: points.to_vec(),
        times: times.to_vec(),
        mean,
        sd,
        mean_response,
        sd_response,
    })
}

/// Predictive mean and sd of the linear predictor at every row of `ds`,
/// whose sites must share the fitted dataset's projection. Rows past the
/// fitted horizon are forecasts.
pub fn predict_rows(fit: &FitResult, am: &AssembledModel, ds: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
    if ds.n_coef() != am.layout.n_coef {
        return Err(Error::Dimension("dataset covariates differ from the model's".into()));
    }
    let proj = make_projector::<f64>(&am.mesh, &ds.points)?;
    let targets: Vec<Target> = (0..ds.n_rows())
        .map(|i| Target {
            proj: &proj.rows[ds.site[i]],
            time: ds.time[i],
            z: &ds.z[i],
        })
        .collect();
    let (mean, var) = mixture_predict(fit, am, &targets)?;
    Ok((mean, var.into_iter().map(f64::sqrt).collect()))
}

/// Posterior mean and sd of the spatiotemporal field by calendar month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlySummary {
    /// Calendar months present (1 = January).
    pub months: Vec<u32>,
    /// `mean[c][v]`: average over years of the posterior mean at vertex `v`.
    pub mean: Vec<Vec<f64>>,
    /// Root mean square of the per-time posterior sds.
    pub sd: Vec<Vec<f64>>,
}

/// Averages the latent field by calendar month, assuming time 1 is
/// January. Months without any fitted time are left out.
pub fn monthly_latent_summary(fit: &FitResult, am: &AssembledModel) -> Result<MonthlySummary> {
    if am.kind != ModelKind::FullSt {
        return Err(Error::Unsupported(format!(
            "monthly summaries need the spatiotemporal field, not {}",
            am.kind
        )));
    }
    let l = am.layout;
    if fit.latent.mean.len() != l.dim() {
        return Err(Error::Dimension("fit does not belong to this assembled model".into()));
    }
    let m = l.n_vertices;
    let mut acc: BTreeMap<u32, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for t in 0..l.n_times {
        let month = (t % 12) as u32 + 1;
        let e = acc.entry(month).or_insert_with(|| (0, vec![0.0; m], vec![0.0; m]));
        e.0 += 1;
        for v in 0..m {
            let k = l.field_index(t, v);
            e.1[v] += fit.latent.mean[k];
            e.2[v] += fit.latent.sd[k] * fit.latent.sd[k];
        }
    }
    let mut out = MonthlySummary {
        months: Vec::new(),
        mean: Vec::new(),
        sd: Vec::new(),
    };
    for (month, (count, s, q)) in acc {
        let c = count as f64;
        out.months.push(month);
        out.mean.push(s.into_iter().map(|v| v / c).collect());
        out.sd.push(q.into_iter().map(|v| (v / c).sqrt()).collect());
    }
    Ok(out)
}

/// Joint posterior draws of the latent vector `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    /// Integration point each draw was taken at.
    pub theta_index: Vec<usize>,
    pub x: Vec<Vec<f64>>,
}

/// Streams `n_draws` joint draws: a θ point is picked by weight, then `x`
/// is drawn exactly from its Gaussian conditional. Draws are grouped by θ
/// point; `f` receives `(draw index, θ index, x)`.
pub fn sample_posterior_with(
    fit: &FitResult,
    am: &AssembledModel,
    n_draws: usize,
    seed: u64,
    mut f: impl FnMut(usize, usize, &[f64]),
) -> Result<()> {
    if n_draws == 0 {
        return Err(Error::InvalidParameter("at least one draw is required".into()));
    }
    if fit.kind != am.kind || fit.grid.is_empty() {
        return Err(Error::Dimension("fit does not belong to this assembled model".into()));
    }
    let weights = fit.weights();
    let pick = WeightedIndex::new(&weights).map_err(|e| Error::InvalidParameter(format!("grid weights: {e}")))?;
    let mut rng_theta = stream_rng(seed, 0);
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for d in 0..n_draws {
        groups.entry(pick.sample(&mut rng_theta)).or_default().push(d);
    }
    let mut rng = stream_rng(seed, 1);
    let dim = am.dim();
    let mut z = vec![0.0; dim];
    for (k, draws) in groups {
        let eval = am.evaluate(&fit.grid.hyper(k))?;
        let factor = eval.posterior.precision.factor()?;
        for d in draws {
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            let mut x = factor.solve_lt_permuted(&z);
            for (xi, mi) in x.iter_mut().zip(&eval.posterior.mean) {
                *xi += mi;
            }
            f(d, k, &x);
        }
    }
    Ok(())
}

/// Collects [`sample_posterior_with`] in draw order.
pub fn sample_posterior(fit: &FitResult, am: &AssembledModel, n_draws: usize, seed: u64) -> Result<PosteriorDraws> {
    let mut theta_index = vec![0; n_draws];
    let mut x = vec![Vec::new(); n_draws];
    sample_posterior_with(fit, am, n_draws, seed, |d, k, v| {
        theta_index[d] = k;
        x[d] = v.to_vec();
    })?;
    Ok(PosteriorDraws { theta_index, x })
}
