//! Forward simulation from Models 1–3 with known parameters.
//!
//! Latent field, observation noise and covariates use separate ChaCha
//! streams of the same seed, so each component is reproducible on its own.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data_io::{centroid, project_coordinates, Dataset, GeoPoint, Schema, SpatialPoint};
use crate::error::{Error, Result};
use crate::fem::fem_matrices;
use crate::mesh::{build_mesh, make_projector, TriangleMesh};
use crate::model::ModelSpec;
use crate::priors::ModelKind;
use crate::spde::{convert_params, spatial_precision};
use crate::sparse::SparseSpd;
use crate::temporal::{simulate_st_field, Ar1Params, StLayout};

const STREAM_LATENT: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_COVARIATES: u64 = 3;

/// Random generator for one component stream of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Known parameters of a simulation, plus the latent field drawn with them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub kind: ModelKind,
    /// Intercept first.
    pub beta: Vec<f64>,
    pub sigma_eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_f: Option<f64>,
    /// FullSt: `ξ` stacked vertex-fastest over time. Additive: `ω` followed
    /// by `f_1..f_T`. Empty for the covariate-only model.
    #[serde(default)]
    pub latent: Vec<f64>,
    pub seed: u64,
}

impl TruthRecord {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: Option<f64>, name: &str| match v {
            Some(x) if x > 0.0 && x.is_finite() => Ok(()),
            _ => Err(Error::InvalidParameter(format!("truth needs positive `{name}`"))),
        };
        let corr = |v: Option<f64>, name: &str| match v {
            Some(x) if x.abs() < 1.0 => Ok(()),
            _ => Err(Error::InvalidParameter(format!("truth needs `{name}` in (-1, 1)"))),
        };
        if !(self.sigma_eps >= 0.0 && self.sigma_eps.is_finite()) {
            return Err(Error::InvalidParameter("sigma_eps must be non-negative".into()));
        }
        match self.kind {
            ModelKind::CovariateOnly => Ok(()),
            ModelKind::FullSt => {
                pos(self.range_r, "range_r")?;
                pos(self.sigma_omega, "sigma_omega")?;
                corr(self.phi, "phi")
            }
            ModelKind::Additive => {
                pos(self.range_r, "range_r")?;
                pos(self.sigma_omega, "sigma_omega")?;
                pos(self.sigma_f, "sigma_f")?;
                corr(self.phi_f, "phi_f")
            }
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Covariates: `n_normal` independent standard normals per row, then an
/// optional smooth spatial sine sheet `sin(2πx/L)·cos(2πy/L)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovariateGenerator {
    pub n_normal: usize,
    pub sine_sheet: bool,
    /// Wavelength `L` of the sheet in km.
    pub wavelength: f64,
}

impl Default for CovariateGenerator {
    fn default() -> Self {
        Self {
            n_normal: 2,
            sine_sheet: true,
            wavelength: 800.0,
        }
    }
}

impl CovariateGenerator {
    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.n_normal).map(|k| format!("x{k}")).collect();
        if self.sine_sheet {
            v.push("sheet".to_string());
        }
        v
    }

    pub fn n_covariates(&self) -> usize {
        self.n_normal + usize::from(self.sine_sheet)
    }

    /// One covariate row (without intercept) at `p`.
    pub fn row<R: Rng + ?Sized>(&self, p: SpatialPoint, rng: &mut R) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.n_normal).map(|_| rng.sample(StandardNormal)).collect();
        if self.sine_sheet {
            let k = 2.0 * std::f64::consts::PI / self.wavelength;
            v.push((k * p.x).sin() * (k * p.y).cos());
        }
        v
    }
}

/// Where and when to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationDesign {
    pub sites: Vec<GeoPoint>,
    pub n_times: usize,
    pub year0: i32,
    pub covariates: CovariateGenerator,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    /// Raw-scale dataset in the ingestion schema.
    pub dataset: Dataset,
    pub truth: TruthRecord,
    pub mesh: TriangleMesh,
}

/// Draws a dataset from `truth` on the mesh built from the sites with
/// `spec.mesh_cfg`.
pub fn simulate(spec: &ModelSpec, truth: &TruthRecord, design: &SimulationDesign, seed: u64) -> Result<Simulation> {
    let reference = centroid(&design.sites);
    let points = project_coordinates(&design.sites, reference);
    let mesh = build_mesh(&points, &spec.mesh_cfg)?;
    simulate_on_mesh(spec, truth, design, &mesh, seed)
}

/// As [`simulate`] on a given mesh.
pub fn simulate_on_mesh(
    spec: &ModelSpec,
    truth: &TruthRecord,
    design: &SimulationDesign,
    mesh: &TriangleMesh,
    seed: u64,
) -> Result<Simulation> {
    truth.validate()?;
    if truth.kind != spec.kind {
        return Err(Error::InvalidParameter(format!(
            "truth is for {} but the spec is {}",
            truth.kind, spec.kind
        )));
    }
    let p = design.covariates.n_covariates() + 1;
    if truth.beta.len() != p {
        return Err(Error::Dimension(format!(
            "truth has {} coefficients, the covariate generator gives {p}",
            truth.beta.len()
        )));
    }
    if design.n_times == 0 || design.sites.is_empty() {
        return Err(Error::InvalidParameter("simulation needs sites and at least one time".into()));
    }
    let reference = centroid(&design.sites);
    let points = project_coordinates(&design.sites, reference);
    let proj = make_projector::<f64>(mesh, &points)?;
    let m = mesh.n_vertices();
    let t_len = design.n_times;

    let latent_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(STREAM_LATENT);
    let spatial = |range: f64, sigma: f64| -> Result<SparseSpd<f64>> {
        let fem = fem_matrices::<f64>(mesh)?;
        spatial_precision(&fem, &convert_params(range, sigma)?)
    };
    let latent: Vec<f64> = match truth.kind {
        ModelKind::CovariateOnly => Vec::new(),
        ModelKind::FullSt => {
            let qs = spatial(truth.range_r.unwrap(), truth.sigma_omega.unwrap())?;
            let ar = Ar1Params::new(truth.phi.unwrap(), t_len)?;
            simulate_st_field(&ar, &qs, latent_seed)?.concat()
        }
        ModelKind::Additive => {
            let qs = spatial(truth.range_r.unwrap(), truth.sigma_omega.unwrap())?;
            let mut rng = stream_rng(latent_seed, 0);
            let mut v = qs.sample(&mut rng)?;
            let phi = truth.phi_f.unwrap();
            let sf = truth.sigma_f.unwrap();
            let mut f: f64 = rng.sample::<f64, _>(StandardNormal) * sf / (1.0 - phi * phi).sqrt();
            v.push(f);
            for _ in 1..t_len {
                f = phi * f + sf * rng.sample::<f64, _>(StandardNormal);
                v.push(f);
            }
            v
        }
    };
    let st = StLayout::new(m, t_len);
    let mut noise = stream_rng(seed, STREAM_NOISE);
    let mut cov = stream_rng(seed, STREAM_COVARIATES);

    let mut ds = Dataset {
        schema: Schema::default(),
        sites: design.sites.clone(),
        points: points.clone(),
        reference,
        year0: design.year0,
        n_times: t_len,
        site: Vec::new(),
        time: Vec::new(),
        y: Vec::new(),
        z: Vec::new(),
        names: design.covariates.names(),
        scaling: Default::default(),
    };
    for (s, &pt) in points.iter().enumerate() {
        for t in 0..t_len {
            let mut z = vec![1.0];
            z.extend(design.covariates.row(pt, &mut cov));
            let mut eta: f64 = z.iter().zip(&truth.beta).map(|(a, b)| a * b).sum();
            eta += match truth.kind {
                ModelKind::CovariateOnly => 0.0,
                ModelKind::FullSt => proj.rows[s].iter().map(|&(v, w)| w * latent[st.index(t, v)]).sum::<f64>(),
                ModelKind::Additive => {
                    proj.rows[s].iter().map(|&(v, w)| w * latent[v]).sum::<f64>() + latent[m + t]
                }
            };
            let e: f64 = noise.sample(StandardNormal);
            ds.site.push(s);
            ds.time.push(t + 1);
            ds.y.push(Some(eta + truth.sigma_eps * e));
            ds.z.push(z);
        }
    }
    Ok(Simulation {
        dataset: ds,
        truth: TruthRecord {
            latent,
            seed,
            ..truth.clone()
        },
        mesh: mesh.clone(),
    })
}

/// `nx × ny` regular lattice of sites over a lon/lat box.
pub fn site_lattice(lon: (f64, f64), lat: (f64, f64), nx: usize, ny: usize) -> Vec<GeoPoint> {
    let step = |lo: f64, hi: f64, n: usize, i: usize| {
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    (0..ny)
        .flat_map(|j| {
            (0..nx).map(move |i| GeoPoint {
                lon: step(lon.0, lon.1, nx, i),
                lat: step(lat.0, lat.1, ny, j),
            })
        })
        .collect()
}

/// `n` uniformly scattered sites over a lon/lat box, rounded to 1e-4 degrees.
pub fn random_sites(lon: (f64, f64), lat: (f64, f64), n: usize, seed: u64) -> Vec<GeoPoint> {
    let mut rng = stream_rng(seed, 0);
    let round = |v: f64| (v * 1e4).round() / 1e4;
    (0..n)
        .map(|_| GeoPoint {
            lon: round(rng.random_range(lon.0..lon.1)),
            lat: round(rng.random_range(lat.0..lat.1)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ() {
        let a: f64 = stream_rng(7, 1).sample(StandardNormal);
        let b: f64 = stream_rng(7, 2).sample(StandardNormal);
        assert_ne!(a, b);
        let c: f64 = stream_rng(7, 1).sample(StandardNormal);
        assert_eq!(a, c);
    }

    #[test]
    fn lattice_shape() {
        let s = site_lattice((0.0, 1.0), (0.0, 2.0), 3, 2);
        assert_eq!(s.len(), 6);
        assert_eq!(s[5], GeoPoint { lon: 1.0, lat: 2.0 });
    }
}
