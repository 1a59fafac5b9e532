use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use spdest::data_io::{
    collinearity_report, load_dataset, project_coordinates, split_train_validation, standardize, unproject,
    Dataset, GeoPoint, Scaling,
};
use spdest::diagnostics::{criteria, score_with_scaling, CriteriaReport, ScoreReport};
use spdest::mesh::{build_mesh, TriangleMesh};
use spdest::model::{assemble, fit_assembled, fit_on_grid, AssembledModel, FitResult, ModelKind, ModelSpec};
use spdest::predict::{monthly_latent_summary, predict_rows, predict_surface, MonthlySummary, PredictionResult};
use spdest::synthetic::{simulate, stream_rng, SimulationDesign};

use crate::config::{GridGenerator, Loaded, Season, SimulationConfig};
use crate::error::CliError;
use crate::output::{Cell, CsvStream, OutputDir, Table};

const STREAM_GRID: u64 = 4;

/// Training and validation data bound to one mesh.
pub struct Prepared {
    pub train: Dataset,
    pub valid: Option<Dataset>,
    pub mesh: TriangleMesh,
}

pub fn prepare(run: &Loaded) -> Result<Prepared, CliError> {
    let path = run.existing_data_path()?;
    let raw = load_dataset(&path, &run.cfg.schema)?;
    let (train, valid) = match run.cfg.train_months {
        Some(c) if c < raw.n_times => {
            let (t, v) = split_train_validation(&raw, c)?;
            (t, Some(v))
        }
        Some(c) if c > raw.n_times => {
            return Err(spdest::Error::CutoffOutOfRange {
                cutoff: c,
                max: raw.n_times,
            }
            .into())
        }
        _ => (standardize(&raw)?, None),
    };
    let mesh = build_mesh(&train.points, &run.cfg.mesh)?;
    info!(
        "{} sites, {} training months, mesh with {} vertices",
        train.n_sites(),
        train.n_times,
        mesh.n_vertices()
    );
    Ok(Prepared { train, valid, mesh })
}

/// Stored form of a fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifact {
    pub config_hash: String,
    pub model: ModelKind,
    pub n_obs: usize,
    pub n_vertices: usize,
    pub n_times: usize,
    pub scaling: BTreeMap<String, Scaling>,
    pub fit: FitResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoresOut {
    pub config_hash: String,
    pub model: ModelKind,
    pub train: ScoreReport,
    pub validation: Option<ScoreReport>,
}

/// Everything computed for one model.
pub struct ModelRun {
    pub am: AssembledModel,
    pub fit: FitResult,
    pub criteria: CriteriaReport,
    pub train: ScoreReport,
    pub validation: Option<ScoreReport>,
}

pub fn run_model(run: &Loaded, prep: &Prepared, kind: ModelKind) -> Result<ModelRun, CliError> {
    let spec: ModelSpec = run.spec(kind);
    let started = Instant::now();
    let am = assemble(&spec, &prep.train, &prep.mesh)?;
    let fit = fit_assembled(&am, &spec.inference)?;
    info!(
        "{kind}: {} integration points, fitted in {:.1} s",
        fit.grid.len(),
        started.elapsed().as_secs_f64()
    );
    for w in &fit.warnings {
        warn!("{kind}: {w}");
    }
    let crit = criteria(&fit, &am)?;
    let scaling = prep.train.response_scaling();
    let train = score_with_scaling(&am.y, &fit.fitted.mean, scaling)?;
    let validation = match &prep.valid {
        Some(v) => {
            let (mean, _) = predict_rows(&fit, &am, v)?;
            let (obs, pred): (Vec<f64>, Vec<f64>) = v
                .y
                .iter()
                .zip(&mean)
                .filter_map(|(y, m)| y.map(|y| (y, *m)))
                .unzip();
            if obs.is_empty() {
                None
            } else {
                Some(score_with_scaling(&obs, &pred, scaling)?)
            }
        }
        None => None,
    };
    info!("{kind}: criteria and scores done after {:.1} s", started.elapsed().as_secs_f64());
    Ok(ModelRun {
        am,
        fit,
        criteria: crit,
        train,
        validation,
    })
}

pub fn cmd_simulate(run: &Loaded, out: &mut OutputDir) -> Result<(), CliError> {
    let sim: &SimulationConfig = run
        .cfg
        .simulation
        .as_ref()
        .ok_or_else(|| CliError::config("`simulate` needs a `simulation` section"))?;
    let seed = run.cfg.seed;
    let sites = sim.sites.sites(seed);
    let design = SimulationDesign {
        sites: sites.clone(),
        n_times: sim.n_times,
        year0: sim.year0,
        covariates: sim.covariates.clone(),
    };
    let truth = sim.truth.record(seed);
    let spec = run.spec(truth.kind);
    let s = simulate(&spec, &truth, &design, seed)?;
    let data = run.data_path()?;
    if let Some(parent) = data.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    s.dataset.write_csv(&data)?;
    info!("wrote {} rows to {}", s.dataset.n_rows(), data.display());

    #[derive(Serialize)]
    struct TruthOut<'a> {
        config_hash: &'a str,
        n_vertices: usize,
        truth: &'a spdest::synthetic::TruthRecord,
    }
    out.write_json(
        "truth.json",
        &TruthOut {
            config_hash: &run.hash,
            n_vertices: s.mesh.n_vertices(),
            truth: &s.truth,
        },
    )?;

    if let Some(g) = &sim.grid {
        let path = run
            .grid_path()
            .ok_or_else(|| CliError::config("`simulation.grid` needs `prediction.grid` as its output path"))?;
        write_grid(run, sim, g, &sites, &path)?;
    }
    Ok(())
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Halton (2, 3) points over the site box with covariates for each calendar
/// month of the requested year.
fn write_grid(
    run: &Loaded,
    sim: &SimulationConfig,
    g: &GridGenerator,
    sites: &[GeoPoint],
    path: &Path,
) -> Result<(), CliError> {
    let (lon, lat) = sim.sites.bbox();
    let points: Vec<GeoPoint> = (1..=g.n_points as u64)
        .map(|i| GeoPoint {
            lon: lon[0] + (lon[1] - lon[0]) * radical_inverse(i, 2),
            lat: lat[0] + (lat[1] - lat[0]) * radical_inverse(i, 3),
        })
        .collect();
    let reference = spdest::data_io::centroid(sites);
    let projected = project_coordinates(&points, reference);
    let schema = &run.cfg.schema;
    let names = sim.covariates.names();
    let mut header: Vec<&str> = vec![&schema.lon, &schema.lat, &schema.year, &schema.month];
    header.extend(names.iter().map(String::as_str));
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut w = CsvStream::create(path, &header)?;
    let mut rng = stream_rng(run.cfg.seed, STREAM_GRID);
    let mut cells = Vec::with_capacity(header.len());
    for month in 1..=12u32 {
        for (p, &xy) in points.iter().zip(&projected) {
            cells.clear();
            cells.push(Cell::Num(p.lon));
            cells.push(Cell::Num(p.lat));
            cells.push(Cell::from(g.year));
            cells.push(Cell::from(month));
            cells.extend(sim.covariates.row(xy, &mut rng).into_iter().map(Cell::Num));
            w.row(&cells)?;
        }
    }
    w.finish()?;
    info!("wrote prediction grid of {} points × 12 months to {}", g.n_points, path.display());
    Ok(())
}

/// Posterior mean and sd of the latent field: `(vertex, time)` for the
/// spatiotemporal field, `(vertex, -)` for `ω` and `(-, time)` for `f`.
fn write_latent_marginals(am: &AssembledModel, fit: &FitResult, out: &mut OutputDir) -> Result<(), CliError> {
    let l = am.layout;
    let lat = &fit.latent;
    let mut t = Table::new(&["component", "vertex", "time", "mean", "sd"]);
    match am.kind {
        ModelKind::CovariateOnly => return Ok(()),
        ModelKind::FullSt => {
            for ti in 0..l.n_times {
                for v in 0..l.n_vertices {
                    let k = l.field_index(ti, v);
                    t.push(vec!["xi".into(), v.into(), (ti + 1).into(), lat.mean[k].into(), lat.sd[k].into()]);
                }
            }
        }
        ModelKind::Additive => {
            for v in 0..l.n_vertices {
                t.push(vec!["omega".into(), v.into(), Cell::Missing, lat.mean[v].into(), lat.sd[v].into()]);
            }
            for (ti, k) in l.temporal().enumerate() {
                t.push(vec!["f".into(), Cell::Missing, (ti + 1).into(), lat.mean[k].into(), lat.sd[k].into()]);
            }
        }
    }
    out.write_table("latent_marginals.csv", &t)?;
    Ok(())
}

fn write_model_outputs(run: &Loaded, prep: &Prepared, mr: &ModelRun, out: &mut OutputDir) -> Result<(), CliError> {
    let kind = mr.am.kind;
    let h = run.hash.as_str();
    out.write_json(
        "fit.json",
        &FitArtifact {
            config_hash: run.hash.clone(),
            model: kind,
            n_obs: mr.am.n_obs(),
            n_vertices: prep.mesh.n_vertices(),
            n_times: prep.train.n_times,
            scaling: prep.train.scaling.clone(),
            fit: mr.fit.clone(),
        },
    )?;

    #[derive(Serialize)]
    struct CriteriaOut<'a> {
        config_hash: &'a str,
        model: ModelKind,
        #[serde(flatten)]
        criteria: &'a CriteriaReport,
    }
    out.write_json(
        "criteria.json",
        &CriteriaOut {
            config_hash: h,
            model: kind,
            criteria: &mr.criteria,
        },
    )?;
    out.write_json(
        "scores.json",
        &ScoresOut {
            config_hash: run.hash.clone(),
            model: kind,
            train: mr.train,
            validation: mr.validation,
        },
    )?;

    let mut beta = Table::new(&["model", "name", "mean", "sd", "q025", "q50", "q975", "config_hash"]);
    for b in &mr.fit.beta {
        beta.push(vec![
            kind.label().into(),
            (&b.name).into(),
            b.mean.into(),
            b.sd.into(),
            b.q025.into(),
            b.q50.into(),
            b.q975.into(),
            h.into(),
        ]);
    }
    out.write_table("beta_table.csv", &beta)?;

    let mut hyper = Table::new(&["model", "name", "mean", "sd", "q025", "q50", "q975", "mode", "config_hash"]);
    for p in &mr.fit.hyper {
        hyper.push(vec![
            kind.label().into(),
            (&p.name).into(),
            p.mean.into(),
            p.sd.into(),
            p.q025.into(),
            p.q50.into(),
            p.q975.into(),
            p.mode.into(),
            h.into(),
        ]);
    }
    out.write_table("hyper_table.csv", &hyper)?;

    let ds = &prep.train;
    let mut cpo = Table::new(&[
        "obs", "lon", "lat", "year", "month", "y", "cpo", "pit", "flagged", "config_hash",
    ]);
    for (i, &row) in mr.am.obs_rows.iter().enumerate() {
        let g = ds.sites[ds.site[row]];
        let (year, month) = ds.year_month(ds.time[row]);
        let y = ds.y[row].map(|v| ds.to_response_units(v));
        cpo.push(vec![
            (i + 1).into(),
            g.lon.into(),
            g.lat.into(),
            year.into(),
            month.into(),
            y.into(),
            mr.criteria.cpo[i].into(),
            mr.criteria.pit[i].into(),
            mr.criteria.cpo_flagged[i].into(),
            h.into(),
        ]);
    }
    out.write_table("cpo_pit.csv", &cpo)?;
    out.write_json("scaling.json", &ds.scaling)?;
    prep.mesh.export_csv(&out.root)?;
    out.written.push(out.path("vertices.csv"));
    out.written.push(out.path("triangles.csv"));
    write_latent_marginals(&mr.am, &mr.fit, out)?;

    if ds.names.len() >= 2 {
        #[derive(Serialize)]
        struct CollOut<'a> {
            config_hash: &'a str,
            #[serde(flatten)]
            report: spdest::data_io::CollinearityReport,
        }
        out.write_json(
            "collinearity.json",
            &CollOut {
                config_hash: h,
                report: collinearity_report(ds)?,
            },
        )?;
    }
    Ok(())
}

pub fn cmd_fit(run: &Loaded, out: &mut OutputDir) -> Result<ModelRun, CliError> {
    let prep = prepare(run)?;
    let mr = run_model(run, &prep, run.cfg.model)?;
    write_model_outputs(run, &prep, &mr, out)?;
    Ok(mr)
}

/// One line of the model comparison.
#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub model: ModelKind,
    pub label: &'static str,
    pub status: &'static str,
    pub dic: Option<f64>,
    pub p_dic: Option<f64>,
    pub waic: Option<f64>,
    pub p_waic: Option<f64>,
    pub lcpo: Option<f64>,
    pub log_ml: Option<f64>,
    pub train_r: Option<f64>,
    pub train_rmse: Option<f64>,
    pub train_mae: Option<f64>,
    pub valid_r: Option<f64>,
    pub valid_rmse: Option<f64>,
    pub valid_mae: Option<f64>,
    pub error: Option<String>,
}

pub fn cmd_compare(run: &Loaded, out: &mut OutputDir) -> Result<Vec<CompareRow>, CliError> {
    let models = &run.cfg.models;
    if models.len() < 2 {
        return Err(CliError::new(
            "precondition",
            format!("`compare` needs at least two models, got {}", models.len()),
        ));
    }
    let prep = prepare(run)?;
    let mut rows = Vec::with_capacity(models.len());
    for &kind in models {
        let row = match run_model(run, &prep, kind) {
            Ok(mr) => CompareRow {
                model: kind,
                label: kind.label(),
                status: "ok",
                dic: Some(mr.criteria.dic),
                p_dic: Some(mr.criteria.p_dic),
                waic: Some(mr.criteria.waic),
                p_waic: Some(mr.criteria.p_waic),
                lcpo: Some(mr.criteria.lcpo),
                log_ml: Some(mr.criteria.log_ml),
                train_r: mr.train.response.r,
                train_rmse: Some(mr.train.response.rmse),
                train_mae: Some(mr.train.response.mae),
                valid_r: mr.validation.and_then(|v| v.response.r),
                valid_rmse: mr.validation.map(|v| v.response.rmse),
                valid_mae: mr.validation.map(|v| v.response.mae),
                error: None,
            },
            Err(e) => {
                warn!("{kind} failed: {}", e.message);
                CompareRow {
                    model: kind,
                    label: kind.label(),
                    status: "failed",
                    dic: None,
                    p_dic: None,
                    waic: None,
                    p_waic: None,
                    lcpo: None,
                    log_ml: None,
                    train_r: None,
                    train_rmse: None,
                    train_mae: None,
                    valid_r: None,
                    valid_rmse: None,
                    valid_mae: None,
                    error: Some(format!("{}: {}", e.code, e.message)),
                }
            }
        };
        rows.push(row);
    }
    let mut t = Table::new(&[
        "model",
        "label",
        "status",
        "dic",
        "p_dic",
        "waic",
        "p_waic",
        "lcpo",
        "log_ml",
        "train_r",
        "train_rmse",
        "train_mae",
        "valid_r",
        "valid_rmse",
        "valid_mae",
        "error",
        "config_hash",
    ]);
    for r in &rows {
        let model = r.model.to_string();
        t.push(vec![
            Cell::Text(&model),
            r.label.into(),
            r.status.into(),
            r.dic.into(),
            r.p_dic.into(),
            r.waic.into(),
            r.p_waic.into(),
            r.lcpo.into(),
            r.log_ml.into(),
            r.train_r.into(),
            r.train_rmse.into(),
            r.train_mae.into(),
            r.valid_r.into(),
            r.valid_rmse.into(),
            r.valid_mae.into(),
            r.error.as_deref().map_or(Cell::Missing, Cell::Text),
            run.hash.as_str().into(),
        ]);
    }
    out.write_table("comparison.csv", &t)?;
    #[derive(Serialize)]
    struct CompareOut<'a> {
        config_hash: &'a str,
        rows: &'a [CompareRow],
    }
    out.write_json(
        "comparison.json",
        &CompareOut {
            config_hash: &run.hash,
            rows: &rows,
        },
    )?;
    if let Some(r) = rows.iter().find(|r| r.status == "failed") {
        return Err(CliError::new("model_failed", format!("model {} failed", r.model))
            .with("model", r.model.to_string())
            .with("error", r.error.clone().unwrap_or_default()));
    }
    Ok(rows)
}

/// Prediction grid read from CSV: unique points in file order, sorted
/// times and time-major covariates.
struct GridInput {
    sites: Vec<GeoPoint>,
    times: Vec<usize>,
    covariates: Vec<Vec<f64>>,
}

fn read_grid(path: &Path, train: &Dataset) -> Result<GridInput, CliError> {
    if !path.is_file() {
        return Err(CliError::missing_path("prediction grid", path));
    }
    let csv_err = |e: csv::Error| CliError::new("csv", e.to_string()).with("path", path.display().to_string());
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::from(spdest::Error::MissingColumn(name.to_string())).with("path", path.display().to_string()))
    };
    let s = &train.schema;
    let (ci_lon, ci_lat, ci_year, ci_month) = (col(&s.lon)?, col(&s.lat)?, col(&s.year)?, col(&s.month)?);
    let ci_cov: Vec<usize> = train.names.iter().map(|n| col(n)).collect::<Result<_, _>>()?;
    let parse = |v: &str, column: &str, line: usize| -> Result<f64, CliError> {
        if v.trim().is_empty() {
            return Err(spdest::Error::MissingCovariate {
                column: column.to_string(),
                line,
            }
            .into());
        }
        v.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
            spdest::Error::NonNumeric {
                column: column.to_string(),
                line,
                value: v.to_string(),
            }
            .into()
        })
    };

    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut sites = Vec::new();
    let mut cells: BTreeMap<usize, HashMap<usize, Vec<f64>>> = BTreeMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = k + 2;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let lon = parse(get(ci_lon), &s.lon, line)?;
        let lat = parse(get(ci_lat), &s.lat, line)?;
        let year = parse(get(ci_year), &s.year, line)?;
        let month = parse(get(ci_month), &s.month, line)?;
        if !(1.0..=12.0).contains(&month) || month.fract() != 0.0 || year.fract() != 0.0 {
            return Err(CliError::new("invalid_grid", format!("bad year/month at line {line}")).with("line", line.to_string()));
        }
        let t = 12 * (year as i64 - train.year0 as i64) + month as i64;
        if t < 1 {
            return Err(CliError::new(
                "invalid_grid",
                format!("line {line} is before the first fitted month"),
            )
            .with("line", line.to_string()));
        }
        let z: Vec<f64> = ci_cov
            .iter()
            .zip(&train.names)
            .map(|(&i, n)| {
                let sc = train.scaling.get(n).copied();
                parse(get(i), n, line).map(|v| sc.map_or(v, |sc| sc.apply(v)))
            })
            .collect::<Result<_, _>>()?;
        let key = (lon.to_bits(), lat.to_bits());
        let j = *index.entry(key).or_insert_with(|| {
            sites.push(GeoPoint { lon, lat });
            sites.len() - 1
        });
        if cells.entry(t as usize).or_default().insert(j, z).is_some() {
            return Err(CliError::new("invalid_grid", format!("duplicate grid point and month at line {line}"))
                .with("line", line.to_string()));
        }
    }
    if sites.is_empty() {
        return Err(CliError::new("invalid_grid", "prediction grid is empty").with("path", path.display().to_string()));
    }
    let times: Vec<usize> = cells.keys().copied().collect();
    let mut covariates = Vec::with_capacity(times.len() * sites.len());
    for (t, mut row) in cells {
        for (j, site) in sites.iter().enumerate() {
            let z = row.remove(&j).ok_or_else(|| {
                CliError::new(
                    "invalid_grid",
                    format!("grid point ({}, {}) has no row for month index {t}", site.lon, site.lat),
                )
                .with("path", path.display().to_string())
            })?;
            covariates.push(z);
        }
    }
    Ok(GridInput {
        sites,
        times,
        covariates,
    })
}

fn read_fit(path: &Path) -> Result<FitArtifact, CliError> {
    if !path.is_file() {
        return Err(CliError::missing_path("fit artifact fit.json", path));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::new("json", format!("{}: {e}", path.display())).with("path", path.display().to_string()))
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictSummary {
    pub rows: usize,
    pub points: usize,
    pub times: Vec<usize>,
    pub monthly_latent: bool,
}

pub fn cmd_predict(run: &Loaded, out: &mut OutputDir) -> Result<PredictSummary, CliError> {
    let fit_path = out.path("fit.json");
    let art = read_fit(&fit_path)?;
    if art.config_hash != run.hash {
        warn!("fit.json was written with a different configuration (hash {})", art.config_hash);
    }
    let grid_path = run
        .grid_path()
        .ok_or_else(|| CliError::config("`predict` needs `prediction.grid`"))?;
    let prep = prepare(run)?;
    if prep.mesh.n_vertices() != art.n_vertices || prep.train.n_times != art.n_times {
        return Err(CliError::new(
            "stale_fit",
            "fit.json does not match the data and mesh of this configuration",
        )
        .with("path", fit_path.display().to_string()));
    }
    let spec = run.spec(art.model);
    let am = assemble(&spec, &prep.train, &prep.mesh)?;
    let started = Instant::now();
    let fit = fit_on_grid(&am, &art.fit.grid)?;
    let grid = read_grid(&grid_path, &prep.train)?;
    let points = project_coordinates(&grid.sites, prep.train.reference);
    let pred = predict_surface(
        &fit,
        &am,
        &points,
        &grid.times,
        &grid.covariates,
        prep.train.response_scaling(),
    )?;
    info!(
        "predicted {} rows in {:.1} s",
        pred.n_rows(),
        started.elapsed().as_secs_f64()
    );
    write_predictions(run, &prep.train, &grid.sites, &pred, out)?;

    let monthly = if am.kind == ModelKind::FullSt {
        let ms = monthly_latent_summary(&fit, &am)?;
        write_monthly(run, &prep.train, &am, &ms, out)?;
        true
    } else {
        info!("no monthly latent maps for {}", am.kind);
        false
    };
    Ok(PredictSummary {
        rows: pred.n_rows(),
        points: grid.sites.len(),
        times: grid.times.clone(),
        monthly_latent: monthly,
    })
}

fn season_of<'a>(seasons: &'a [Season], month: u32) -> impl Iterator<Item = usize> + 'a {
    seasons
        .iter()
        .enumerate()
        .filter(move |(_, s)| s.months.contains(&month))
        .map(|(k, _)| k)
}

fn write_predictions(
    run: &Loaded,
    ds: &Dataset,
    sites: &[GeoPoint],
    pred: &PredictionResult,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let path = out.path("predictions.csv");
    let mut w = CsvStream::create(
        &path,
        &["lon", "lat", "t", "year", "month", "mean_sd_units", "sd_sd_units", "mean_DU", "sd_DU"],
    )?;
    let seasons = &run.cfg.seasons;
    let n = sites.len();
    // per season and point: months seen, sum of means, sum of variances
    let mut acc = vec![(0usize, vec![0.0; n], vec![0.0; n]); seasons.len()];
    for (ti, &t) in pred.times.iter().enumerate() {
        let (year, month) = ds.year_month(t);
        let ks: Vec<usize> = season_of(seasons, month).collect();
        for k in &ks {
            acc[*k].0 += 1;
        }
        for (j, g) in sites.iter().enumerate() {
            let i = pred.index(ti, j);
            w.row(&[
                Cell::Num(g.lon),
                Cell::Num(g.lat),
                Cell::from(t),
                Cell::from(year),
                Cell::from(month),
                Cell::Num(pred.mean[i]),
                Cell::Num(pred.sd[i]),
                Cell::Num(pred.mean_response[i]),
                Cell::Num(pred.sd_response[i]),
            ])?;
            for &k in &ks {
                acc[k].1[j] += pred.mean_response[i];
                acc[k].2[j] += pred.sd_response[i] * pred.sd_response[i];
            }
        }
    }
    out.written.push(w.finish()?);

    let path = out.path("seasonal_predictions.csv");
    let mut w = CsvStream::create(&path, &["lon", "lat", "season", "n_months", "mean_DU", "sd_DU"])?;
    for (s, (count, sum, sq)) in seasons.iter().zip(&acc) {
        if *count == 0 {
            continue;
        }
        let c = *count as f64;
        for (j, g) in sites.iter().enumerate() {
            w.row(&[
                Cell::Num(g.lon),
                Cell::Num(g.lat),
                Cell::Text(&s.name),
                Cell::from(*count),
                Cell::Num(sum[j] / c),
                Cell::Num((sq[j] / c).sqrt()),
            ])?;
        }
    }
    out.written.push(w.finish()?);
    Ok(())
}

fn write_monthly(
    run: &Loaded,
    ds: &Dataset,
    am: &AssembledModel,
    ms: &MonthlySummary,
    out: &mut OutputDir,
) -> Result<(), CliError> {
    let spread = ds.response_scaling().map_or(1.0, |s| s.sd);
    let geo: Vec<GeoPoint> = am.mesh.vertices.iter().map(|&v| unproject(v, ds.reference)).collect();
    let path = out.path("monthly_latent.csv");
    let mut w = CsvStream::create(&path, &["lon", "lat", "month", "mean", "sd", "mean_DU", "sd_DU"])?;
    for (c, &month) in ms.months.iter().enumerate() {
        for (v, g) in geo.iter().enumerate() {
            let (m, s) = (ms.mean[c][v], ms.sd[c][v]);
            w.row(&[
                Cell::Num(g.lon),
                Cell::Num(g.lat),
                Cell::from(month),
                Cell::Num(m),
                Cell::Num(s),
                Cell::Num(m * spread),
                Cell::Num(s * spread),
            ])?;
        }
    }
    out.written.push(w.finish()?);

    let path = out.path("seasonal_latent.csv");
    let mut w = CsvStream::create(&path, &["lon", "lat", "season", "n_months", "mean", "sd", "mean_DU", "sd_DU"])?;
    for s in &run.cfg.seasons {
        let cs: Vec<usize> = (0..ms.months.len()).filter(|&c| s.months.contains(&ms.months[c])).collect();
        if cs.is_empty() {
            continue;
        }
        let k = cs.len() as f64;
        for (v, g) in geo.iter().enumerate() {
            let m = cs.iter().map(|&c| ms.mean[c][v]).sum::<f64>() / k;
            let sd = (cs.iter().map(|&c| ms.sd[c][v].powi(2)).sum::<f64>() / k).sqrt();
            w.row(&[
                Cell::Num(g.lon),
                Cell::Num(g.lat),
                Cell::Text(&s.name),
                Cell::from(cs.len()),
                Cell::Num(m),
                Cell::Num(sd),
                Cell::Num(m * spread),
                Cell::Num(sd * spread),
            ])?;
        }
    }
    out.written.push(w.finish()?);
    Ok(())
}

fn md(v: Option<f64>) -> String {
    v.map_or_else(|| "–".to_string(), |x| format!("{x:.4}"))
}

/// Simulate (when configured), fit, compare (when two or more models are
/// listed), predict (when a grid is configured) and summarize in
/// `report.md`.
pub fn cmd_report(run: &Loaded, out: &mut OutputDir) -> Result<PathBuf, CliError> {
    let mut text = String::new();
    text.push_str("# spdest run report\n\n");
    text.push_str(&format!("- config hash: `{}`\n- seed: {}\n- model: {} ({})\n", run.hash, run.cfg.seed, run.cfg.model, run.cfg.model.label()));
    if run.cfg.simulation.is_some() {
        cmd_simulate(run, out)?;
        text.push_str("- data: simulated (see `truth.json`)\n");
    }
    let mr = cmd_fit(run, out)?;
    text.push_str(&format!(
        "- observations: {}, mesh vertices: {}, integration points: {}\n\n",
        mr.am.n_obs(),
        mr.am.mesh.n_vertices(),
        mr.fit.grid.len()
    ));

    text.push_str("## Fixed effects\n\n| name | mean | sd | 2.5% | 50% | 97.5% |\n|---|---|---|---|---|---|\n");
    for b in &mr.fit.beta {
        text.push_str(&format!(
            "| {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |\n",
            b.name, b.mean, b.sd, b.q025, b.q50, b.q975
        ));
    }
    text.push_str("\n## Hyperparameters\n\n| name | mean | sd | 2.5% | 50% | 97.5% |\n|---|---|---|---|---|---|\n");
    for h in &mr.fit.hyper {
        text.push_str(&format!(
            "| {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |\n",
            h.name, h.mean, h.sd, h.q025, h.q50, h.q975
        ));
    }
    let c = &mr.criteria;
    text.push_str(&format!(
        "\n## Criteria\n\n| DIC | pD | WAIC | pW | LCPO | log ML |\n|---|---|---|---|---|---|\n| {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |\n\n",
        c.dic, c.p_dic, c.waic, c.p_waic, c.lcpo, c.log_ml
    ));
    text.push_str(&format!(
        "PIT: KS statistic {:.4}, p-value {:.4}; {} CPO values flagged.\n\n",
        c.pit_ks.statistic, c.pit_ks.p_value, c.n_cpo_flagged
    ));
    text.push_str("## Scores (response units)\n\n| block | n | r | RMSE | MAE |\n|---|---|---|---|---|\n");
    let mut score_line = |name: &str, s: &ScoreReport| {
        text.push_str(&format!(
            "| {name} | {} | {} | {:.4} | {:.4} |\n",
            s.n,
            md(s.response.r),
            s.response.rmse,
            s.response.mae
        ));
    };
    score_line("train", &mr.train);
    if let Some(v) = &mr.validation {
        score_line("validation", v);
    }

    if run.cfg.models.len() >= 2 {
        let rows = cmd_compare(run, out)?;
        text.push_str("\n## Model comparison\n\n| model | DIC | WAIC | LCPO | train r | valid RMSE | valid MAE | valid r |\n|---|---|---|---|---|---|---|---|\n");
        for r in &rows {
            text.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} | {} |\n",
                r.label,
                md(r.dic),
                md(r.waic),
                md(r.lcpo),
                md(r.train_r),
                md(r.valid_rmse),
                md(r.valid_mae),
                md(r.valid_r)
            ));
        }
    }
    if run.cfg.prediction.is_some() {
        let p = cmd_predict(run, out)?;
        text.push_str(&format!(
            "\n## Prediction\n\n{} rows ({} points × {} months) in `predictions.csv`.",
            p.rows,
            p.points,
            p.times.len()
        ));
        if p.monthly_latent {
            text.push_str(" Monthly and seasonal latent maps in `monthly_latent.csv` and `seasonal_latent.csv`.");
        }
        text.push('\n');
    }
    out.write_text("report.md", &text)
}
