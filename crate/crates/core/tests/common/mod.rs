#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use spdest::data_io::{Dataset, GeoPoint, Schema, SpatialPoint};
use spdest::diagnostics::{deviance, dic, waic};
use spdest::mesh::TriangleMesh;
use spdest::model::{AssembledModel, FitResult};
use spdest::predict::sample_posterior_with;
use spdest::priors::{HyperParams, ModelKind};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Regular `nx × ny` lattice mesh with spacing `h`, each cell split in two.
pub fn lattice_mesh(nx: usize, ny: usize, h: f64) -> TriangleMesh {
    let mut v = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            v.push(SpatialPoint::new(i as f64 * h, j as f64 * h));
        }
    }
    let id = |i: usize, j: usize| j * nx + i;
    let mut t = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            t.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            t.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriangleMesh::from_parts(v, t).unwrap()
}

/// Random standardized dataset over `[0, extent]²` with `p_cov` normal
/// covariates and a fraction of missing responses.
pub fn toy_dataset(extent: f64, n_sites: usize, n_times: usize, p_cov: usize, missing: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let points: Vec<SpatialPoint> = (0..n_sites)
        .map(|_| SpatialPoint::new(r.random_range(0.0..extent), r.random_range(0.0..extent)))
        .collect();
    let sites = points
        .iter()
        .map(|p| GeoPoint {
            lon: 38.0 + p.x / 100.0,
            lat: 9.0 + p.y / 100.0,
        })
        .collect();
    let mut ds = Dataset {
        schema: Schema::default(),
        sites,
        points,
        reference: GeoPoint { lon: 38.0, lat: 9.0 },
        year0: 2000,
        n_times,
        site: Vec::new(),
        time: Vec::new(),
        y: Vec::new(),
        z: Vec::new(),
        names: (1..=p_cov).map(|k| format!("x{k}")).collect(),
        scaling: BTreeMap::new(),
    };
    for s in 0..n_sites {
        for t in 1..=n_times {
            let mut z = vec![1.0];
            z.extend((0..p_cov).map(|_| r.sample::<f64, _>(StandardNormal)));
            let y = if r.random::<f64>() < missing {
                None
            } else {
                Some(0.3 + r.sample::<f64, _>(StandardNormal))
            };
            ds.site.push(s);
            ds.time.push(t);
            ds.y.push(y);
            ds.z.push(z);
        }
    }
    ds
}

/// θ drawn around moderate values on the natural scale.
pub fn random_hyper(kind: ModelKind, extent: f64, r: &mut ChaCha8Rng) -> HyperParams {
    let mut theta = vec![r.random_range(-0.5..2.0)];
    match kind {
        ModelKind::CovariateOnly => {}
        ModelKind::FullSt => {
            theta.push((extent * r.random_range(0.2..1.0)).ln());
            theta.push(r.random_range(-0.7..0.7));
            theta.push(r.random_range(-2.5..2.5));
        }
        ModelKind::Additive => {
            theta.push((extent * r.random_range(0.2..1.0)).ln());
            theta.push(r.random_range(-0.7..0.7));
            theta.push(r.random_range(-1.0..0.5));
            theta.push(r.random_range(-2.5..2.5));
        }
    }
    HyperParams::new(kind, theta).unwrap()
}

pub fn dense(m: &spdest::sparse::CscMatrix<f64>) -> DMatrix<f64> {
    let d = m.to_dense();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[i][j])
}

/// `log N(y; 0, Σ)` by dense Cholesky.
pub fn gaussian_logpdf(y: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let ch = cov.clone().cholesky().expect("covariance not positive definite");
    let logdet = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let a = ch.solve(y);
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + logdet + y.dot(&a))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Prior precision built densely from the FEM matrices and the closed-form
/// AR(1) precision.
pub fn dense_prior(am: &AssembledModel, h: &HyperParams) -> DMatrix<f64> {
    let l = am.layout;
    let nat = h.natural();
    let m = l.n_vertices;
    let t_len = l.n_times;
    let qs = |r: f64, s: f64| {
        let kappa = 8f64.sqrt() / r;
        let tau = 1.0 / (2.0 * std::f64::consts::PI.sqrt() * kappa * s);
        let c = DMatrix::from_diagonal(&DVector::from_vec(am.fem.c.clone()));
        let cinv = DMatrix::from_diagonal(&DVector::from_iterator(m, am.fem.c.iter().map(|v| 1.0 / v)));
        let g = dense(&am.fem.g);
        (c * kappa.powi(4) + &g * (2.0 * kappa * kappa) + &g * cinv * &g) * (tau * tau)
    };
    let qt = |phi: f64| {
        DMatrix::from_fn(t_len, t_len, |i, j| {
            if i == j {
                if t_len == 1 {
                    1.0 - phi * phi
                } else if i == 0 || i == t_len - 1 {
                    1.0
                } else {
                    1.0 + phi * phi
                }
            } else if i.abs_diff(j) == 1 {
                -phi
            } else {
                0.0
            }
        })
    };
    let dim = l.dim();
    let mut q = DMatrix::zeros(dim, dim);
    match h.kind {
        ModelKind::CovariateOnly => {}
        ModelKind::FullSt => {
            let k = qt(nat.phi.unwrap()).kronecker(&qs(nat.range_r.unwrap(), nat.sigma_omega.unwrap()));
            q.view_mut((0, 0), (m * t_len, m * t_len)).copy_from(&k);
        }
        ModelKind::Additive => {
            q.view_mut((0, 0), (m, m)).copy_from(&qs(nat.range_r.unwrap(), nat.sigma_omega.unwrap()));
            let sf = nat.sigma_f.unwrap();
            q.view_mut((m, m), (t_len, t_len)).copy_from(&(qt(nat.phi_f.unwrap()) / (sf * sf)));
        }
    }
    for k in l.beta() {
        q[(k, k)] = am.prior.beta_prec;
    }
    q
}

/// DIC's mean deviance and WAIC's lppd next to their Monte-Carlo estimates
/// from joint posterior draws.
pub struct McCheck {
    pub d_bar: f64,
    pub d_bar_mc: f64,
    pub d_bar_se: f64,
    pub lppd: f64,
    pub lppd_mc: f64,
    pub lppd_se: f64,
}

impl McCheck {
    pub fn d_bar_z(&self) -> f64 {
        (self.d_bar - self.d_bar_mc).abs() / self.d_bar_se
    }

    pub fn lppd_z(&self) -> f64 {
        (self.lppd - self.lppd_mc).abs() / self.lppd_se
    }
}

pub fn mc_criteria(am: &AssembledModel, fit: &FitResult, draws: usize, seed: u64) -> McCheck {
    let n = am.n_obs();
    let taus: Vec<f64> = fit.obs_moments.iter().map(|m| m.tau_eps).collect();
    let mut dev = Vec::with_capacity(draws);
    let mut dens = vec![Vec::with_capacity(draws); n];
    sample_posterior_with(fit, am, draws, seed, |_, k, x| {
        let eta = am.b.mul_vec(x);
        let tau = taus[k];
        dev.push(deviance(&am.y, &eta, tau));
        for i in 0..n {
            let r = am.y[i] - eta[i];
            dens[i].push((0.5 * tau.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * tau * r * r).exp());
        }
    })
    .unwrap();
    let s = draws as f64;
    let mean = dev.iter().sum::<f64>() / s;
    let se = (dev.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (s - 1.0)).sqrt() / s.sqrt();

    // delta method for the sum of log means
    let pbar: Vec<f64> = dens.iter().map(|v| v.iter().sum::<f64>() / s).collect();
    let lppd_mc: f64 = pbar.iter().map(|p| p.ln()).sum();
    let g: Vec<f64> = (0..draws).map(|j| (0..n).map(|i| dens[i][j] / pbar[i]).sum()).collect();
    let gm = g.iter().sum::<f64>() / s;
    let se_l = (g.iter().map(|v| (v - gm).powi(2)).sum::<f64>() / (s - 1.0)).sqrt() / s.sqrt();
    McCheck {
        d_bar: dic(fit, am).unwrap().d_bar,
        d_bar_mc: mean,
        d_bar_se: se,
        lppd: waic(fit, am).unwrap().lppd,
        lppd_mc,
        lppd_se: se_l,
    }
}
