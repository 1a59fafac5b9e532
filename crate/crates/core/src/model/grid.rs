use std::collections::BTreeSet;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::{HyperParams, ModelKind};

use super::assemble::AssembledModel;
use super::optimize::OptimResult;
use super::posterior::ThetaEval;
use super::{InferenceConfig, IntStrategy};

/// Scale of the CCD design points relative to the unit sphere.
const CCD_F0: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    /// Internal-scale hyperparameters.
    pub theta: Vec<f64>,
    /// Standardized coordinates.
    pub z: Vec<f64>,
    pub log_post: f64,
    /// Normalized integration weight.
    pub weight: f64,
}

/// Integration points for θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrid {
    pub kind: ModelKind,
    pub strategy: IntStrategy,
    pub points: Vec<GridPoint>,
    /// Point with the largest log-posterior.
    pub mode: Vec<f64>,
    /// Finite-difference Hessian at the optimizer's mode.
    pub hessian: Vec<Vec<f64>>,
    /// Log marginal likelihood estimate from the integration rule.
    pub log_ml: f64,
    pub warnings: Vec<String>,
}

impl ThetaGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.weight).collect()
    }

    pub fn hyper(&self, k: usize) -> HyperParams {
        HyperParams {
            kind: self.kind,
            theta: self.points[k].theta.clone(),
        }
    }

    /// Collapses to the single highest point with weight one.
    pub fn collapse_to_mode(&self) -> ThetaGrid {
        let best = self
            .points
            .iter()
            .max_by(|a, b| a.log_post.total_cmp(&b.log_post))
            .cloned()
            .map(|mut p| {
                p.weight = 1.0;
                p
            });
        ThetaGrid {
            strategy: IntStrategy::Mode,
            points: best.into_iter().collect(),
            ..self.clone()
        }
    }
}

/// `θ = mode + V Λ^{-1/2} z` from the eigendecomposition of `−H`.
struct ZMap {
    mode: Vec<f64>,
    scale: DMatrix<f64>,
    log_det_neg_h: f64,
}

impl ZMap {
    fn new(mode: &[f64], neg_hessian: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(neg_hessian.clone());
        let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
        let scale = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt);
        Self {
            mode: mode.to_vec(),
            scale,
            log_det_neg_h: eig.eigenvalues.iter().map(|l| l.ln()).sum(),
        }
    }

    fn theta(&self, z: &[f64]) -> Vec<f64> {
        let d = self.mode.len();
        (0..d)
            .map(|i| self.mode[i] + (0..d).map(|j| self.scale[(i, j)] * z[j]).sum::<f64>())
            .collect()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Integration points without per-point summaries.
pub fn explore(am: &AssembledModel, opt: &OptimResult, cfg: &InferenceConfig) -> Result<ThetaGrid> {
    explore_with(am, opt, cfg, |_| Ok(()), |_, _| Ok(()))
}

/// Builds the integration rule around the mode. `summarize` runs on the
/// evaluation at every retained point (possibly in parallel) and `sink`
/// receives `(unnormalized log-weight, summary)` sequentially in the final
/// point order.
pub fn explore_with<S: Send>(
    am: &AssembledModel,
    opt: &OptimResult,
    cfg: &InferenceConfig,
    summarize: impl Fn(&ThetaEval) -> Result<S> + Sync,
    mut sink: impl FnMut(f64, S) -> Result<()>,
) -> Result<ThetaGrid> {
    let kind = am.kind;
    let d = kind.n_hyper();
    let zmap = ZMap::new(&opt.mode.theta, &opt.neg_hessian);
    let mut warnings = opt.warnings.clone();
    let eval_at = |z: &[f64]| -> Option<ThetaEval> {
        let theta = zmap.theta(z);
        let h = HyperParams::new(kind, theta).ok()?;
        am.evaluate(&h).ok().filter(|e| e.log_post.is_finite())
    };

    // (z, log_post, design log-weight)
    let mut kept: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    match cfg.strategy {
        IntStrategy::Mode => {
            let e = eval_at(&vec![0.0; d]).ok_or_else(|| Error::NonFiniteObjective(opt.mode.theta.clone()))?;
            sink(e.log_post, summarize(&e)?)?;
            kept.push((vec![0.0; d], e.log_post, 0.0));
        }
        IntStrategy::Ccd => {
            let design = ccd_design(d);
            let n_p = design.len() as f64;
            let f2 = CCD_F0 * CCD_F0;
            // weights exact for a Gaussian integrand, relative to the centre
            let log_delta = d as f64 * f2 / 2.0 - ((n_p - 1.0) * (f2 - 1.0)).ln();
            let evaluated: Vec<Option<(ThetaEval, Vec<f64>)>> = design
                .par_iter()
                .map(|z| eval_at(z).map(|e| (e, z.clone())))
                .collect();
            for (k, item) in evaluated.into_iter().enumerate() {
                match item {
                    Some((e, z)) => {
                        let lw = if k == 0 { 0.0 } else { log_delta };
                        sink(e.log_post + lw, summarize(&e)?)?;
                        kept.push((z, e.log_post, lw));
                    }
                    None if k == 0 => return Err(Error::NonFiniteObjective(opt.mode.theta.clone())),
                    None => warnings.push(format!("CCD point {k} could not be evaluated and was dropped")),
                }
            }
        }
        IntStrategy::Grid => {
            let origin = vec![0i64; d];
            let mut visited: BTreeSet<Vec<i64>> = BTreeSet::new();
            visited.insert(origin.clone());
            let mut frontier = vec![origin];
            let mut threshold = None;
            let mut capped = false;
            while !frontier.is_empty() {
                let results: Vec<Option<(f64, Option<S>)>> = frontier
                    .par_iter()
                    .map(|k| {
                        let z: Vec<f64> = k.iter().map(|&v| v as f64 * cfg.grid_step).collect();
                        let e = eval_at(&z)?;
                        let keep = threshold.is_none_or(|t: f64| e.log_post >= t);
                        let s = if keep { Some(summarize(&e)) } else { None };
                        Some((e.log_post, s))
                    })
                    .map(|r| r.map(|(lp, s)| s.transpose().map(|s| (lp, s))).transpose())
                    .collect::<Result<Vec<_>>>()?;
                if threshold.is_none() {
                    match &results[0] {
                        Some((lp, _)) => threshold = Some(lp - cfg.grid_drop),
                        None => return Err(Error::NonFiniteObjective(opt.mode.theta.clone())),
                    }
                }
                let t = threshold.unwrap();
                let mut next = BTreeSet::new();
                for (k, r) in frontier.iter().zip(results) {
                    let Some((lp, Some(s))) = r else { continue };
                    if lp < t {
                        continue;
                    }
                    let z: Vec<f64> = k.iter().map(|&v| v as f64 * cfg.grid_step).collect();
                    sink(lp, s)?;
                    kept.push((z, lp, 0.0));
                    for i in 0..d {
                        for delta in [-1, 1] {
                            let mut nb = k.clone();
                            nb[i] += delta;
                            if !visited.contains(&nb) {
                                next.insert(nb);
                            }
                        }
                    }
                }
                if visited.len() + next.len() > cfg.max_grid_points {
                    capped = true;
                    break;
                }
                visited.extend(next.iter().cloned());
                frontier = next.into_iter().collect();
            }
            if capped {
                let msg = format!("grid exploration stopped at {} evaluated points", visited.len());
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }

    let scores: Vec<f64> = kept.iter().map(|(_, lp, lw)| lp + lw).collect();
    let total = log_sum_exp(&scores);
    let log_ml = match cfg.strategy {
        IntStrategy::Grid => total + d as f64 * cfg.grid_step.ln() - 0.5 * zmap.log_det_neg_h,
        IntStrategy::Mode => total + 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * zmap.log_det_neg_h,
        IntStrategy::Ccd => {
            let w0 = 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() + (1.0 - 1.0 / (CCD_F0 * CCD_F0)).ln();
            total + w0 - 0.5 * zmap.log_det_neg_h
        }
    };
    let points: Vec<GridPoint> = kept
        .into_iter()
        .zip(&scores)
        .map(|((z, lp, _), score)| GridPoint {
            theta: zmap.theta(&z),
            z,
            log_post: lp,
            weight: (score - total).exp(),
        })
        .collect();
    let mode = points
        .iter()
        .max_by(|a, b| a.log_post.total_cmp(&b.log_post))
        .map(|p| p.theta.clone())
        .unwrap_or_else(|| opt.mode.theta.clone());
    Ok(ThetaGrid {
        kind,
        strategy: cfg.strategy,
        points,
        mode,
        hessian: opt.hessian.clone(),
        log_ml,
        warnings,
    })
}

/// Centre, axis points at radius `√d·f0` and factorial corners at `±f0`
/// (a half fraction from five dimensions on).
fn ccd_design(d: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]];
    let r = (d as f64).sqrt() * CCD_F0;
    for i in 0..d {
        for s in [-1.0, 1.0] {
            let mut z = vec![0.0; d];
            z[i] = s * r;
            pts.push(z);
        }
    }
    if d >= 2 {
        let free = if d >= 5 { d - 1 } else { d };
        for mask in 0..(1u32 << free) {
            let mut z: Vec<f64> = (0..free)
                .map(|i| if mask >> i & 1 == 1 { CCD_F0 } else { -CCD_F0 })
                .collect();
            if free < d {
                let sign: f64 = z.iter().map(|v| v.signum()).product();
                z.push(sign * CCD_F0);
            }
            pts.push(z);
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ccd_sizes() {
        assert_eq!(ccd_design(1).len(), 3);
        assert_eq!(ccd_design(4).len(), 1 + 8 + 16);
        assert_eq!(ccd_design(5).len(), 1 + 10 + 16);
    }

    #[test]
    fn ccd_weights_integrate_gaussian() {
        // Σ δ_k exp(−|z_k|²/2) should reproduce (2π)^{d/2}
        for d in 2..=5 {
            let design = ccd_design(d);
            let n_p = design.len() as f64;
            let f2 = CCD_F0 * CCD_F0;
            let delta = (d as f64 * f2 / 2.0).exp() / ((n_p - 1.0) * (f2 - 1.0));
            let w0 = (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0) * (1.0 - 1.0 / f2);
            let sum: f64 = design
                .iter()
                .enumerate()
                .map(|(k, z)| {
                    let q: f64 = z.iter().map(|v| v * v).sum();
                    (if k == 0 { 1.0 } else { delta }) * (-q / 2.0).exp()
                })
                .sum();
            let expect = (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0);
            assert!((sum * w0 - expect).abs() < 1e-9 * expect, "d={d}");
        }
    }
}
