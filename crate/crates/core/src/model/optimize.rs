use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::priors::HyperParams;

use super::assemble::AssembledModel;
use super::InferenceConfig;

/// Smallest eigenvalue allowed in the negative Hessian.
pub const HESSIAN_FLOOR: f64 = 1e-8;

/// Position tolerance of the simplex, per coordinate.
const SIMPLEX_XTOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Maximizes `f` with the Nelder–Mead simplex method. Non-finite values are
/// treated as `−∞`. Stops once the spread of simplex values is below `ftol`
/// and every vertex lies within `xtol` of the best one in each coordinate.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    ftol: f64,
    xtol: f64,
    max_iter: usize,
) -> NelderMeadResult {
    let d = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for i in 0..d {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let mut iterations = 0;
    let mut converged = false;
    // descending by value; ties keep insertion order
    let sort = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    sort(&mut simplex);
    while iterations < max_iter {
        let best = simplex[0].1;
        let worst = simplex[d].1;
        let spread = if best.is_finite() && worst.is_finite() { best - worst } else { f64::INFINITY };
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread < ftol && size < xtol {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|(x, _)| x[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[d].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr > simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[d] = if fe > fr { (xe, fe) } else { (xr, fr) };
        } else if fr > simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr > simplex[d].1 {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc > simplex[d].1.max(fr) {
                simplex[d] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for k in 1..=d {
                    let xs: Vec<f64> = simplex[k]
                        .0
                        .iter()
                        .zip(&x_best)
                        .map(|(x, b)| b + 0.5 * (x - b))
                        .collect();
                    let fs = eval(&xs, &mut evals);
                    simplex[k] = (xs, fs);
                }
            }
        }
        sort(&mut simplex);
    }
    let (x, value) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        value,
        iterations,
        evaluations: evals,
        converged,
    }
}

/// Central finite-difference Hessian of `f` at `x` with step `h`.
pub fn finite_difference_hessian(f: impl Fn(&[f64]) -> f64 + Sync, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let d = x.len();
    let shifted = |moves: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, s) in moves {
            y[i] += s;
        }
        y
    };
    let mut jobs: Vec<Vec<(usize, f64)>> = vec![vec![]];
    for i in 0..d {
        jobs.push(vec![(i, h)]);
        jobs.push(vec![(i, -h)]);
    }
    for i in 0..d {
        for j in i + 1..d {
            for (si, sj) in [(h, h), (h, -h), (-h, h), (-h, -h)] {
                jobs.push(vec![(i, si), (j, sj)]);
            }
        }
    }
    let values: Vec<f64> = jobs.par_iter().map(|m| f(&shifted(m))).collect();
    let f0 = values[0];
    let mut hess = vec![vec![0.0; d]; d];
    for i in 0..d {
        hess[i][i] = (values[1 + 2 * i] - 2.0 * f0 + values[2 + 2 * i]) / (h * h);
    }
    let mut k = 1 + 2 * d;
    for i in 0..d {
        for j in i + 1..d {
            let v = (values[k] - values[k + 1] - values[k + 2] + values[k + 3]) / (4.0 * h * h);
            hess[i][j] = v;
            hess[j][i] = v;
            k += 4;
        }
    }
    hess
}

/// Symmetrizes `hessian` and returns `−H` with every eigenvalue raised to at
/// least [`HESSIAN_FLOOR`], plus whether any repair was needed.
pub fn repair_hessian(hessian: &[Vec<f64>]) -> (DMatrix<f64>, bool) {
    let d = hessian.len();
    let neg = DMatrix::from_fn(d, d, |i, j| {
        let v = -0.5 * (hessian[i][j] + hessian[j][i]);
        if v.is_finite() {
            v
        } else if i == j {
            HESSIAN_FLOOR
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(neg.clone());
    if eig.eigenvalues.iter().all(|&l| l >= HESSIAN_FLOOR) {
        return (neg, false);
    }
    let clamped = eig.eigenvalues.map(|l| l.max(HESSIAN_FLOOR));
    let repaired = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    (0.5 * (&repaired + repaired.transpose()), true)
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub mode: HyperParams,
    pub log_post: f64,
    /// Raw finite-difference Hessian of the log-posterior at the mode.
    pub hessian: Vec<Vec<f64>>,
    /// `−H` after symmetrization and eigenvalue repair.
    pub neg_hessian: DMatrix<f64>,
    pub hessian_repaired: bool,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub warnings: Vec<String>,
}

/// Locates the posterior mode of θ with Nelder–Mead (restarted once from
/// its own optimum) and takes a finite-difference Hessian there.
pub fn optimize_hyperparameters(am: &AssembledModel, init: &HyperParams, cfg: &InferenceConfig) -> Result<OptimResult> {
    let kind = am.kind;
    let objective = |t: &[f64]| -> f64 {
        HyperParams::new(kind, t.to_vec())
            .and_then(|h| am.evaluate(&h))
            .map(|e| e.log_post)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let start = objective(&init.theta);
    if !start.is_finite() {
        return Err(Error::NonFiniteObjective(init.theta.clone()));
    }
    let mut warnings = Vec::new();
    let first = nelder_mead(objective, &init.theta, 1.0, cfg.optim_tol, SIMPLEX_XTOL, cfg.optim_max_iter);
    let second = nelder_mead(objective, &first.x, 0.25, cfg.optim_tol, SIMPLEX_XTOL, cfg.optim_max_iter);
    let iterations = first.iterations + second.iterations;
    let evaluations = first.evaluations + second.evaluations;
    let converged = second.converged;
    if !converged {
        let msg = format!("hyperparameter optimizer stopped at the iteration cap ({})", cfg.optim_max_iter);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let best = if second.value >= first.value { second } else { first };
    let hessian = finite_difference_hessian(objective, &best.x, cfg.hessian_step);
    let (neg_hessian, repaired) = repair_hessian(&hessian);
    if repaired {
        let msg = "Hessian at the mode was not negative definite; eigenvalues raised to 1e-8".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(OptimResult {
        mode: HyperParams::new(kind, best.x)?,
        log_post: best.value,
        hessian,
        neg_hessian,
        hessian_repaired: repaired,
        converged,
        iterations,
        evaluations,
        warnings,
    })
}
