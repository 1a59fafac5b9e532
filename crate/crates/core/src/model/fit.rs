use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::mesh::{build_mesh, TriangleMesh};
use crate::priors::{natural_coordinates, phi_to_internal, HyperParams, ModelKind};
use crate::sparse::SelectedInverse;

use super::assemble::{assemble, AssembledModel};
use super::grid::{explore_with, GridPoint, ThetaGrid};
use super::optimize::{optimize_hyperparameters, OptimResult};
use super::posterior::ThetaEval;
use super::{InferenceConfig, IntStrategy, ModelSpec};

/// Posterior summary of one fixed effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaMarginal {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

/// Posterior summary of one hyperparameter on its natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperMarginal {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    /// Value at the highest grid point.
    pub mode: f64,
}

/// Mixture mean and sd of every entry of the latent vector `x`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LatentMarginals {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Conditional moments of the linear predictor at the observations for one
/// grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsMoments {
    pub tau_eps: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: ModelKind,
    pub grid: ThetaGrid,
    pub beta: Vec<BetaMarginal>,
    pub hyper: Vec<HyperMarginal>,
    #[serde(skip)]
    pub latent: LatentMarginals,
    /// Mixture mean and sd of the linear predictor at each observation.
    #[serde(skip)]
    pub fitted: LatentMarginals,
    /// Per grid point, in grid order.
    #[serde(skip)]
    pub obs_moments: Vec<ObsMoments>,
    pub log_ml: f64,
    pub optimizer_iterations: usize,
    pub optimizer_evaluations: usize,
    pub optimizer_converged: bool,
    pub hessian_repaired: bool,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn weights(&self) -> Vec<f64> {
        self.grid.weights()
    }

    /// Posterior mean of a hyperparameter on the natural scale.
    pub fn hyper_mean(&self, name: &str) -> Option<f64> {
        self.hyper.iter().find(|h| h.name == name).map(|h| h.mean)
    }
}

/// Moments kept per retained grid point.
struct PointSummary {
    mean: Vec<f64>,
    var: Vec<f64>,
    obs: ObsMoments,
}

fn summarize(am: &AssembledModel, e: &ThetaEval) -> Result<PointSummary> {
    let sel = e.posterior.precision.selected_inverse()?;
    Ok(PointSummary {
        mean: e.posterior.mean.clone(),
        var: sel.diag(),
        obs: moments_with(am, e, &sel)?,
    })
}

fn moments_with(am: &AssembledModel, e: &ThetaEval, sel: &SelectedInverse<f64>) -> Result<ObsMoments> {
    let mean = &e.posterior.mean;
    let mut om = Vec::with_capacity(am.n_obs());
    let mut ov = Vec::with_capacity(am.n_obs());
    for row in &am.b_rows {
        om.push(row.iter().map(|&(j, v)| v * mean[j]).sum());
        ov.push(
            sel.quad_form(row)
                .ok_or_else(|| Error::Dimension("observation row outside the factor pattern".into()))?
                .max(0.0),
        );
    }
    Ok(ObsMoments {
        tau_eps: e.params.tau_eps,
        mean: om,
        var: ov,
    })
}

/// Mean and variance of the linear predictor at every observation row,
/// conditional on the θ of `e`.
pub fn observation_moments(am: &AssembledModel, e: &ThetaEval) -> Result<ObsMoments> {
    let sel = e.posterior.precision.selected_inverse()?;
    moments_with(am, e, &sel)
}

/// Builds the mesh from the dataset sites, assembles and fits.
pub fn fit(spec: &ModelSpec, ds: &Dataset) -> Result<(AssembledModel, FitResult)> {
    spec.validate()?;
    let mesh = build_mesh(&ds.points, &spec.mesh_cfg)?;
    fit_on_mesh(spec, ds, &mesh)
}

/// Fits on a given mesh.
pub fn fit_on_mesh(spec: &ModelSpec, ds: &Dataset, mesh: &TriangleMesh) -> Result<(AssembledModel, FitResult)> {
    let am = assemble(spec, ds, mesh)?;
    let fr = fit_assembled(&am, &spec.inference)?;
    Ok((am, fr))
}

/// Runs the mode search and the integration over θ for an assembled model.
pub fn fit_assembled(am: &AssembledModel, cfg: &InferenceConfig) -> Result<FitResult> {
    if cfg.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| fit_inner(am, cfg))
    } else {
        fit_inner(am, cfg)
    }
}

/// Running mixture moments over integration points.
struct Accumulator {
    sum_w: f64,
    ref_lw: Option<f64>,
    m1: Vec<f64>,
    m2: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    beta_parts: Vec<(Vec<f64>, Vec<f64>)>,
    obs_moments: Vec<ObsMoments>,
}

impl Accumulator {
    fn new(am: &AssembledModel) -> Self {
        Self {
            sum_w: 0.0,
            ref_lw: None,
            m1: vec![0.0; am.dim()],
            m2: vec![0.0; am.dim()],
            f1: vec![0.0; am.n_obs()],
            f2: vec![0.0; am.n_obs()],
            beta_parts: Vec::new(),
            obs_moments: Vec::new(),
        }
    }

    fn push(&mut self, am: &AssembledModel, lw: f64, s: PointSummary) {
        let r = *self.ref_lw.get_or_insert(lw);
        let w = (lw - r).exp();
        self.sum_w += w;
        for j in 0..s.mean.len() {
            self.m1[j] += w * s.mean[j];
            self.m2[j] += w * (s.var[j] + s.mean[j] * s.mean[j]);
        }
        for i in 0..s.obs.mean.len() {
            self.f1[i] += w * s.obs.mean[i];
            self.f2[i] += w * (s.obs.var[i] + s.obs.mean[i] * s.obs.mean[i]);
        }
        let beta = am.layout.beta();
        self.beta_parts.push((s.mean[beta.clone()].to_vec(), s.var[beta].to_vec()));
        self.obs_moments.push(s.obs);
    }

    fn finish(self, am: &AssembledModel, grid: ThetaGrid, opt: Option<&OptimResult>) -> FitResult {
        let sum_w = self.sum_w;
        let finish = |a: Vec<f64>, b: Vec<f64>| -> LatentMarginals {
            let mean: Vec<f64> = a.iter().map(|v| v / sum_w).collect();
            let sd = b
                .iter()
                .zip(&mean)
                .map(|(v, m)| (v / sum_w - m * m).max(0.0).sqrt())
                .collect();
            LatentMarginals { mean, sd }
        };
        let latent = finish(self.m1, self.m2);
        let fitted = finish(self.f1, self.f2);

        let weights = grid.weights();
        let beta0 = am.layout.beta().start;
        let mut beta_out = Vec::with_capacity(am.layout.n_coef);
        for (j, name) in am.coef_names.iter().enumerate() {
            let means: Vec<f64> = self.beta_parts.iter().map(|b| b.0[j]).collect();
            let sds: Vec<f64> = self.beta_parts.iter().map(|b| b.1[j].max(0.0).sqrt()).collect();
            beta_out.push(BetaMarginal {
                name: name.clone(),
                mean: latent.mean[beta0 + j],
                sd: latent.sd[beta0 + j],
                q025: mixture_quantile(&weights, &means, &sds, 0.025),
                q50: mixture_quantile(&weights, &means, &sds, 0.5),
                q975: mixture_quantile(&weights, &means, &sds, 0.975),
            });
        }
        let hyper = hyper_marginals(&grid);
        let mut warnings = grid.warnings.clone();
        warnings.dedup();
        FitResult {
            kind: am.kind,
            log_ml: grid.log_ml,
            beta: beta_out,
            hyper,
            latent,
            fitted,
            obs_moments: self.obs_moments,
            optimizer_iterations: opt.map_or(0, |o| o.iterations),
            optimizer_evaluations: opt.map_or(0, |o| o.evaluations),
            optimizer_converged: opt.is_none_or(|o| o.converged),
            hessian_repaired: opt.is_some_and(|o| o.hessian_repaired),
            warnings,
            grid,
        }
    }
}

fn fit_inner(am: &AssembledModel, cfg: &InferenceConfig) -> Result<FitResult> {
    let init = match &cfg.init {
        Some(t) => HyperParams::new(am.kind, t.clone())?,
        None => initial_theta(am),
    };
    let opt = optimize_hyperparameters(am, &init, cfg)?;
    let mut acc = Accumulator::new(am);
    let grid = explore_with(
        am,
        &opt,
        cfg,
        |e| summarize(am, e),
        |lw, s| {
            acc.push(am, lw, s);
            Ok(())
        },
    )?;
    Ok(acc.finish(am, grid, Some(&opt)))
}

/// Posterior summaries conditional on fixed hyperparameters: a one-point
/// integration rule at `h`. `log_ml` is `log p(y | h)`.
pub fn fit_at(am: &AssembledModel, h: &HyperParams) -> Result<FitResult> {
    let e = am.evaluate(h)?;
    let d = h.theta.len();
    let grid = ThetaGrid {
        kind: am.kind,
        strategy: IntStrategy::Mode,
        points: vec![GridPoint {
            theta: h.theta.clone(),
            z: vec![0.0; d],
            log_post: e.log_post,
            weight: 1.0,
        }],
        mode: h.theta.clone(),
        hessian: Vec::new(),
        log_ml: e.log_lik,
        warnings: Vec::new(),
    };
    let mut acc = Accumulator::new(am);
    acc.push(am, 0.0, summarize(am, &e)?);
    Ok(acc.finish(am, grid, None))
}

/// Recomputes the summaries of a stored integration rule, e.g. one read
/// back from `fit.json`. Weights are taken from the grid as stored.
pub fn fit_on_grid(am: &AssembledModel, grid: &ThetaGrid) -> Result<FitResult> {
    if grid.kind != am.kind {
        return Err(Error::InvalidParameter(format!(
            "grid is for {} but the model is {}",
            grid.kind, am.kind
        )));
    }
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty integration grid".into()));
    }
    let summaries: Vec<PointSummary> = grid
        .points
        .par_iter()
        .map(|p| {
            let h = HyperParams::new(am.kind, p.theta.clone())?;
            summarize(am, &am.evaluate(&h)?)
        })
        .collect::<Result<_>>()?;
    let mut acc = Accumulator::new(am);
    for (p, s) in grid.points.iter().zip(summaries) {
        acc.push(am, p.weight.max(f64::MIN_POSITIVE).ln(), s);
    }
    Ok(acc.finish(am, grid.clone(), None))
}

/// Starting point from the data scale: half of the response variance
/// assigned to noise, a range of a third of the site span, `φ = 0.5`.
fn initial_theta(am: &AssembledModel) -> HyperParams {
    let n = am.n_obs().max(1) as f64;
    let mean = am.y.iter().sum::<f64>() / n;
    let var = (am.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).max(1e-8);
    let phi0 = phi_to_internal(0.5);
    let span = {
        let pts = &am.mesh.vertices;
        let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for (p, &b) in pts.iter().zip(&am.mesh.boundary) {
            if !b {
                lo_x = lo_x.min(p.x);
                hi_x = hi_x.max(p.x);
                lo_y = lo_y.min(p.y);
                hi_y = hi_y.max(p.y);
            }
        }
        let s = ((hi_x - lo_x).powi(2) + (hi_y - lo_y).powi(2)).sqrt();
        if s.is_finite() && s > 0.0 {
            s
        } else {
            1.0
        }
    };
    let log_tau = (1.0 / (0.5 * var)).ln();
    let theta = match am.kind {
        ModelKind::CovariateOnly => vec![(1.0 / var).ln()],
        ModelKind::FullSt => vec![log_tau, (span / 3.0).ln(), (0.5 * var * 0.75).sqrt().ln(), phi0],
        ModelKind::Additive => vec![
            log_tau,
            (span / 3.0).ln(),
            (0.4 * var).sqrt().ln(),
            (0.1 * var * 0.75).sqrt().ln(),
            phi0,
        ],
    };
    HyperParams {
        kind: am.kind,
        theta,
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Quantile `q` of the Gaussian mixture `Σ w_k N(means_k, sds_k²)`.
pub fn mixture_quantile(weights: &[f64], means: &[f64], sds: &[f64], q: f64) -> f64 {
    let cdf = |x: f64| -> f64 {
        weights
            .iter()
            .zip(means.iter().zip(sds))
            .map(|(w, (m, s))| {
                if *s > 0.0 {
                    w * normal_cdf((x - m) / s)
                } else if x >= *m {
                    *w
                } else {
                    0.0
                }
            })
            .sum()
    };
    let spread = sds.iter().cloned().fold(0.0, f64::max).max(1e-300);
    let mut lo = means.iter().cloned().fold(f64::INFINITY, f64::min) - 10.0 * spread;
    let mut hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 10.0 * spread;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Quantile of weighted point masses, linear between the mid-CDF values of
/// neighbouring support points.
fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> f64 {
    let mut pairs: Vec<(f64, f64)> = values.iter().cloned().zip(weights.iter().cloned()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (v, w) in pairs {
        match merged.last_mut() {
            Some(last) if (last.0 - v).abs() <= 1e-12 * (1.0 + v.abs()) => last.1 += w,
            _ => merged.push((v, w)),
        }
    }
    let total: f64 = merged.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    let mids: Vec<f64> = merged
        .iter()
        .map(|&(_, w)| {
            let mid = (acc + w / 2.0) / total;
            acc += w;
            mid
        })
        .collect();
    if q <= mids[0] {
        return merged[0].0;
    }
    for i in 1..merged.len() {
        if q <= mids[i] {
            let t = (q - mids[i - 1]) / (mids[i] - mids[i - 1]);
            return merged[i - 1].0 + t * (merged[i].0 - merged[i - 1].0);
        }
    }
    merged.last().unwrap().0
}

fn hyper_marginals(grid: &ThetaGrid) -> Vec<HyperMarginal> {
    let kind = grid.kind;
    let w = grid.weights();
    let nat: Vec<Vec<f64>> = grid.points.iter().map(|p| natural_coordinates(kind, &p.theta)).collect();
    let best = grid
        .points
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.log_post.total_cmp(&b.1.log_post))
        .map(|(k, _)| k)
        .unwrap_or(0);
    kind.natural_names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let v: Vec<f64> = nat.iter().map(|x| x[j]).collect();
            let mean: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            let var: f64 = v.iter().zip(&w).map(|(a, b)| b * (a - mean).powi(2)).sum();
            HyperMarginal {
                name: name.to_string(),
                mean,
                sd: var.max(0.0).sqrt(),
                q025: weighted_quantile(&v, &w, 0.025),
                q50: weighted_quantile(&v, &w, 0.5),
                q975: weighted_quantile(&v, &w, 0.975),
                mode: v[best],
            }
        })
        .collect()
}
