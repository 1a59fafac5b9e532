//! Ingestion of gridded monthly observation tables: projection,
//! standardization, collinearity screening and the temporal holdout split.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kilometres per degree of latitude used by the equirectangular projection.
pub const KM_PER_DEGREE: f64 = 111.32;

/// Pairwise correlation at or above which two covariates are flagged.
pub const CORR_FLAG: f64 = 0.75;
/// Variance inflation factor at or above which a covariate is flagged.
pub const VIF_FLAG: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidParameter(format!("coordinates ({lon}, {lat}) out of range")));
        }
        Ok(Self { lon, lat })
    }
}

/// Planar location in km east/north of a reference point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialPoint {
    pub x: f64,
    pub y: f64,
}

impl SpatialPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &SpatialPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: f64,
    pub sd: f64,
}

impl Scaling {
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.sd
    }

    pub fn invert(&self, v: f64) -> f64 {
        self.mean + v * self.sd
    }
}

/// Column mapping of the input table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub lon: String,
    pub lat: String,
    pub year: String,
    pub month: String,
    pub response: String,
    /// Covariate columns; empty means every remaining column.
    pub covariates: Vec<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            lon: "lon".into(),
            lat: "lat".into(),
            year: "year".into(),
            month: "month".into(),
            response: "tco".into(),
            covariates: Vec::new(),
        }
    }
}

/// Observation table grouped by site.
///
/// `z` holds one row per observation with an all-ones intercept in column 0
/// followed by the covariates named in `names`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: Schema,
    pub sites: Vec<GeoPoint>,
    pub points: Vec<SpatialPoint>,
    pub reference: GeoPoint,
    pub year0: i32,
    pub n_times: usize,
    pub site: Vec<usize>,
    pub time: Vec<usize>,
    pub y: Vec<Option<f64>>,
    pub z: Vec<Vec<f64>>,
    pub names: Vec<String>,
    /// Per-column scaling keyed by column name (response included); empty
    /// while the data are on the raw scale.
    pub scaling: BTreeMap<String, Scaling>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    /// Number of coefficients including the intercept.
    pub fn n_coef(&self) -> usize {
        self.names.len() + 1
    }

    pub fn is_standardized(&self) -> bool {
        !self.scaling.is_empty()
    }

    pub fn response_scaling(&self) -> Option<Scaling> {
        self.scaling.get(&self.schema.response).copied()
    }

    /// Back-transforms a standardized response value to the original units.
    pub fn to_response_units(&self, v: f64) -> f64 {
        self.response_scaling().map_or(v, |s| s.invert(v))
    }

    /// Back-transforms a standardized-scale spread (sd, rmse, ...).
    pub fn to_response_spread(&self, v: f64) -> f64 {
        self.response_scaling().map_or(v, |s| v * s.sd)
    }

    pub fn year_month(&self, t: usize) -> (i32, u32) {
        let k = t as i32 - 1;
        (self.year0 + k.div_euclid(12), (k.rem_euclid(12) + 1) as u32)
    }

    fn subset(&self, keep: impl Fn(usize) -> bool) -> Dataset {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| keep(i)).collect();
        Dataset {
            site: idx.iter().map(|&i| self.site[i]).collect(),
            time: idx.iter().map(|&i| self.time[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            z: idx.iter().map(|&i| self.z[i].clone()).collect(),
            ..self.clone()
        }
    }

    /// Writes the table in the ingestion schema (raw scale expected).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut header = vec![
            self.schema.lon.clone(),
            self.schema.lat.clone(),
            self.schema.year.clone(),
            self.schema.month.clone(),
            self.schema.response.clone(),
        ];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(|e| csv_err(path, e))?;
        for i in 0..self.n_rows() {
            let g = self.sites[self.site[i]];
            let (year, month) = self.year_month(self.time[i]);
            let mut rec = vec![
                g.lon.to_string(),
                g.lat.to_string(),
                year.to_string(),
                month.to_string(),
                self.y[i].map(|v| v.to_string()).unwrap_or_default(),
            ];
            rec.extend(self.z[i][1..].iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn parse_num(value: &str, column: &str, line: usize) -> Result<f64> {
    value.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::NonNumeric {
        column: column.to_string(),
        line,
        value: value.to_string(),
    })
}

/// Reads an observation table.
///
/// Month index is `12·(year − year₀) + month` with `year₀` the earliest year
/// in the file. Rows are grouped by site (first-appearance order) and sorted
/// by time within a site. Coordinates are projected about the site centroid.
pub fn load_dataset(path: &Path, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string())),
            _ => csv_err(path, e),
        })?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (ilon, ilat, iyear, imonth, iresp) = (
        col(&schema.lon)?,
        col(&schema.lat)?,
        col(&schema.year)?,
        col(&schema.month)?,
        col(&schema.response)?,
    );
    let fixed = [ilon, ilat, iyear, imonth, iresp];
    let names: Vec<String> = if schema.covariates.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|(i, _)| !fixed.contains(i))
            .map(|(_, h)| h.trim().to_string())
            .collect()
    } else {
        schema.covariates.clone()
    };
    let icov: Vec<usize> = names.iter().map(|n| col(n)).collect::<Result<_>>()?;

    struct Raw {
        lon: f64,
        lat: f64,
        year: i32,
        month: u32,
        y: Option<f64>,
        z: Vec<f64>,
    }
    let mut raws = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let lon = parse_num(get(ilon), &schema.lon, line)?;
        let lat = parse_num(get(ilat), &schema.lat, line)?;
        let year = parse_num(get(iyear), &schema.year, line)?;
        let month = parse_num(get(imonth), &schema.month, line)?;
        if year.fract() != 0.0 || month.fract() != 0.0 || !(1.0..=12.0).contains(&month) {
            return Err(Error::NonNumeric {
                column: schema.month.clone(),
                line,
                value: format!("{year}-{month}"),
            });
        }
        GeoPoint::new(lon, lat)?;
        let yv = get(iresp).trim();
        let y = if yv.is_empty() {
            None
        } else {
            Some(parse_num(yv, &schema.response, line)?)
        };
        let mut z = Vec::with_capacity(icov.len());
        for (&i, name) in icov.iter().zip(&names) {
            let v = get(i).trim();
            if v.is_empty() {
                return Err(Error::MissingCovariate {
                    column: name.clone(),
                    line,
                });
            }
            z.push(parse_num(v, name, line)?);
        }
        raws.push(Raw {
            lon,
            lat,
            year: year as i32,
            month: month as u32,
            y,
            z,
        });
    }
    if raws.is_empty() {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }

    let year0 = raws.iter().map(|r| r.year).min().unwrap();
    let mut site_of: HashMap<(u64, u64), usize> = HashMap::new();
    let mut sites = Vec::new();
    let mut rows = Vec::with_capacity(raws.len());
    for r in raws {
        let key = (r.lon.to_bits(), r.lat.to_bits());
        let s = *site_of.entry(key).or_insert_with(|| {
            sites.push(GeoPoint { lon: r.lon, lat: r.lat });
            sites.len() - 1
        });
        let t = (12 * (r.year - year0) + r.month as i32) as usize;
        rows.push((s, t, r));
    }
    rows.sort_by_key(|(s, t, _)| (*s, *t));
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
            let r = &w[1].2;
            return Err(Error::DuplicateKey {
                lon: r.lon,
                lat: r.lat,
                year: r.year,
                month: r.month,
            });
        }
    }
    let n_times = rows.iter().map(|(_, t, _)| *t).max().unwrap();
    let reference = centroid(&sites);
    let points = project_coordinates(&sites, reference);
    let mut ds = Dataset {
        schema: Schema {
            covariates: names.clone(),
            ..schema.clone()
        },
        sites,
        points,
        reference,
        year0,
        n_times,
        site: Vec::with_capacity(rows.len()),
        time: Vec::with_capacity(rows.len()),
        y: Vec::with_capacity(rows.len()),
        z: Vec::with_capacity(rows.len()),
        names,
        scaling: BTreeMap::new(),
    };
    for (s, t, r) in rows {
        ds.site.push(s);
        ds.time.push(t);
        ds.y.push(r.y);
        let mut z = Vec::with_capacity(r.z.len() + 1);
        z.push(1.0);
        z.extend(r.z);
        ds.z.push(z);
    }
    Ok(ds)
}

pub fn centroid(points: &[GeoPoint]) -> GeoPoint {
    let n = points.len().max(1) as f64;
    GeoPoint {
        lon: points.iter().map(|p| p.lon).sum::<f64>() / n,
        lat: points.iter().map(|p| p.lat).sum::<f64>() / n,
    }
}

/// Equirectangular projection to km about `reference`.
pub fn project_coordinates(points: &[GeoPoint], reference: GeoPoint) -> Vec<SpatialPoint> {
    let c = centroid(points);
    if !points.is_empty() && ((c.lon - reference.lon).abs() > 1.0 || (c.lat - reference.lat).abs() > 1.0) {
        log::warn!(
            "projection reference ({}, {}) is more than 1 degree from the centroid ({}, {})",
            reference.lon,
            reference.lat,
            c.lon,
            c.lat
        );
    }
    let kx = KM_PER_DEGREE * reference.lat.to_radians().cos();
    points
        .iter()
        .map(|p| SpatialPoint {
            x: kx * (p.lon - reference.lon),
            y: KM_PER_DEGREE * (p.lat - reference.lat),
        })
        .collect()
}

/// Inverse of [`project_coordinates`].
pub fn unproject(p: SpatialPoint, reference: GeoPoint) -> GeoPoint {
    let kx = KM_PER_DEGREE * reference.lat.to_radians().cos();
    GeoPoint {
        lon: reference.lon + p.x / kx,
        lat: reference.lat + p.y / KM_PER_DEGREE,
    }
}

fn mean_sd(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = values.collect();
    let n = v.len();
    if n < 2 {
        return (v.first().copied().unwrap_or(0.0), 0.0, n);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let ss = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    (mean, (ss / (n - 1) as f64).sqrt(), n)
}

/// Scaling of the response and each covariate computed on non-missing rows
/// with the sample (n−1) standard deviation.
pub fn compute_scaling(ds: &Dataset) -> Result<BTreeMap<String, Scaling>> {
    let mut out = BTreeMap::new();
    let (mean, sd, _) = mean_sd(ds.y.iter().flatten().copied());
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance(ds.schema.response.clone()));
    }
    out.insert(ds.schema.response.clone(), Scaling { mean, sd });
    let observed: Vec<usize> = (0..ds.n_rows()).filter(|&i| ds.y[i].is_some()).collect();
    for (j, name) in ds.names.iter().enumerate() {
        let (mean, sd, _) = mean_sd(observed.iter().map(|&i| ds.z[i][j + 1]));
        if !(sd > 1e-300) || !((sd / mean.abs().max(1.0)) > 1e-13) {
            return Err(Error::ZeroVariance(name.clone()));
        }
        out.insert(name.clone(), Scaling { mean, sd });
    }
    Ok(out)
}

/// Applies a previously computed scaling; the intercept column is untouched.
pub fn apply_scaling(ds: &Dataset, scaling: &BTreeMap<String, Scaling>) -> Result<Dataset> {
    if ds.is_standardized() {
        return Err(Error::InvalidParameter("dataset is already standardized".into()));
    }
    let get = |name: &str| scaling.get(name).copied().ok_or_else(|| Error::MissingColumn(name.to_string()));
    let ys = get(&ds.schema.response)?;
    let zs: Vec<Scaling> = ds.names.iter().map(|n| get(n)).collect::<Result<_>>()?;
    let mut out = ds.clone();
    for v in out.y.iter_mut().flatten() {
        *v = ys.apply(*v);
    }
    for row in out.z.iter_mut() {
        for (j, s) in zs.iter().enumerate() {
            row[j + 1] = s.apply(row[j + 1]);
        }
    }
    out.scaling = scaling.clone();
    Ok(out)
}

/// Standardizes response and covariates to mean 0, sd 1.
pub fn standardize(ds: &Dataset) -> Result<Dataset> {
    let scaling = compute_scaling(ds)?;
    apply_scaling(ds, &scaling)
}

/// Undoes [`standardize`].
pub fn destandardize(ds: &Dataset) -> Dataset {
    let mut out = ds.clone();
    if let Some(ys) = ds.response_scaling() {
        for v in out.y.iter_mut().flatten() {
            *v = ys.invert(*v);
        }
    }
    for (j, name) in ds.names.iter().enumerate() {
        if let Some(s) = ds.scaling.get(name) {
            for row in out.z.iter_mut() {
                row[j + 1] = s.invert(row[j + 1]);
            }
        }
    }
    out.scaling.clear();
    out
}

pub fn write_scaling_json(scaling: &BTreeMap<String, Scaling>, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(scaling)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CollinearityFlag {
    Pair { a: String, b: String, corr: f64 },
    Vif { column: String, vif: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollinearityReport {
    pub names: Vec<String>,
    pub corr: Vec<Vec<f64>>,
    /// `f64::INFINITY` marks exact linear dependence.
    pub vif: Vec<f64>,
    pub flags: Vec<CollinearityFlag>,
}

/// Pairwise correlations and variance inflation factors of the covariates.
pub fn collinearity_report(ds: &Dataset) -> Result<CollinearityReport> {
    let p = ds.names.len();
    if p < 2 {
        return Err(Error::InvalidParameter("collinearity screening needs at least two covariates".into()));
    }
    let n = ds.n_rows();
    let cols: Vec<Vec<f64>> = (0..p).map(|j| ds.z.iter().map(|r| r[j + 1]).collect()).collect();
    let stats: Vec<(f64, f64)> = cols
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / n as f64;
            (m, c.iter().map(|v| (v - m).powi(2)).sum::<f64>().sqrt())
        })
        .collect();
    let mut corr = vec![vec![0.0; p]; p];
    for a in 0..p {
        corr[a][a] = 1.0;
        for b in a + 1..p {
            let num: f64 = (0..n).map(|i| (cols[a][i] - stats[a].0) * (cols[b][i] - stats[b].0)).sum();
            let r = (num / (stats[a].1 * stats[b].1)).clamp(-1.0, 1.0);
            corr[a][b] = r;
            corr[b][a] = r;
        }
    }

    let mut vif = Vec::with_capacity(p);
    for j in 0..p {
        let x = DMatrix::from_fn(n, p, |i, k| if k == 0 { 1.0 } else { cols[if k <= j { k - 1 } else { k }][i] });
        let y = DVector::from_column_slice(&cols[j]);
        let svd = x.clone().svd(true, true);
        let beta = svd.solve(&y, 1e-12).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let resid = &y - &x * beta;
        let sst = stats[j].1 * stats[j].1;
        let r2 = 1.0 - resid.norm_squared() / sst;
        let v = if 1.0 - r2 < 1e-10 { f64::INFINITY } else { 1.0 / (1.0 - r2) };
        vif.push(v.max(1.0));
    }

    let mut flags = Vec::new();
    for a in 0..p {
        for b in a + 1..p {
            if corr[a][b].abs() >= CORR_FLAG {
                flags.push(CollinearityFlag::Pair {
                    a: ds.names[a].clone(),
                    b: ds.names[b].clone(),
                    corr: corr[a][b],
                });
            }
        }
    }
    for (j, &v) in vif.iter().enumerate() {
        if v >= VIF_FLAG {
            flags.push(CollinearityFlag::Vif {
                column: ds.names[j].clone(),
                vif: v,
            });
        }
    }
    Ok(CollinearityReport {
        names: ds.names.clone(),
        corr,
        vif,
        flags,
    })
}

/// Splits a raw-scale dataset at `cutoff` (train `t ≤ cutoff`) and
/// standardizes both halves with statistics from the training rows.
pub fn split_train_validation(ds: &Dataset, cutoff: usize) -> Result<(Dataset, Dataset)> {
    if cutoff < 1 || cutoff >= ds.n_times {
        return Err(Error::CutoffOutOfRange {
            cutoff,
            max: ds.n_times.saturating_sub(1),
        });
    }
    let raw = if ds.is_standardized() { destandardize(ds) } else { ds.clone() };
    let mut train = raw.subset(|i| raw.time[i] <= cutoff);
    train.n_times = cutoff;
    let valid = raw.subset(|i| raw.time[i] > cutoff);
    let scaling = compute_scaling(&train)?;
    Ok((apply_scaling(&train, &scaling)?, apply_scaling(&valid, &scaling)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn single_row_dataset() {
        let f = write("lon,lat,year,month,tco,temp\n39,9,2012,1,266.1,299.3\n");
        let ds = load_dataset(f.path(), &Schema::default()).unwrap();
        assert_eq!(ds.n_sites(), 1);
        assert_eq!(ds.n_times, 1);
        assert_eq!(ds.z[0], vec![1.0, 299.3]);
        assert_eq!(ds.points[0], SpatialPoint::new(0.0, 0.0));
    }

    #[test]
    fn duplicate_key_rejected() {
        let f = write("lon,lat,year,month,tco,temp\n39,9,2012,1,266.1,1\n40,9,2012,1,260,2\n39,9,2012,1,250,3\n");
        assert!(matches!(
            load_dataset(f.path(), &Schema::default()),
            Err(Error::DuplicateKey { year: 2012, month: 1, .. })
        ));
    }

    #[test]
    fn missing_column_and_bad_cells() {
        let f = write("lon,lat,year,month,temp\n39,9,2012,1,1\n");
        assert!(matches!(load_dataset(f.path(), &Schema::default()), Err(Error::MissingColumn(c)) if c == "tco"));
        let f = write("lon,lat,year,month,tco,temp\n39,9,2012,1,abc,1\n");
        assert!(matches!(load_dataset(f.path(), &Schema::default()), Err(Error::NonNumeric { .. })));
        let f = write("lon,lat,year,month,tco,temp\n39,9,2012,1,200,\n");
        assert!(matches!(load_dataset(f.path(), &Schema::default()), Err(Error::MissingCovariate { .. })));
    }

    #[test]
    fn missing_response_allowed_and_time_index() {
        let f = write("lon,lat,year,month,tco,temp\n39,9,2013,2,,1\n39,9,2012,12,260,2\n");
        let ds = load_dataset(f.path(), &Schema::default()).unwrap();
        assert_eq!(ds.time, vec![12, 14]);
        assert_eq!(ds.y, vec![Some(260.0), None]);
        assert_eq!(ds.year_month(14), (2013, 2));
    }

    #[test]
    fn projection_examples() {
        let r = GeoPoint { lon: 39.0, lat: 9.0 };
        let p = project_coordinates(&[GeoPoint { lon: 40.0, lat: 9.0 }, GeoPoint { lon: 39.0, lat: 10.0 }], r);
        assert!((p[0].x - 109.95).abs() < 0.01 && p[0].y == 0.0);
        assert!(p[1].x == 0.0 && (p[1].y - 111.32).abs() < 1e-12);
        let back = unproject(p[0], r);
        assert!((back.lon - 40.0).abs() < 1e-12);
    }

    fn tiny(cols: &[&[f64]], y: &[f64]) -> Dataset {
        let n = y.len();
        Dataset {
            schema: Schema::default(),
            sites: (0..n).map(|i| GeoPoint { lon: i as f64, lat: 0.0 }).collect(),
            points: (0..n).map(|i| SpatialPoint::new(i as f64, 0.0)).collect(),
            reference: GeoPoint { lon: 0.0, lat: 0.0 },
            year0: 2012,
            n_times: 1,
            site: (0..n).collect(),
            time: vec![1; n],
            y: y.iter().map(|&v| Some(v)).collect(),
            z: (0..n)
                .map(|i| std::iter::once(1.0).chain(cols.iter().map(|c| c[i])).collect())
                .collect(),
            names: (0..cols.len()).map(|j| format!("c{j}")).collect(),
            scaling: BTreeMap::new(),
        }
    }

    #[test]
    fn standardize_examples() {
        let ds = tiny(&[&[2.0, 4.0, 6.0]], &[1.0, 2.0, 4.0]);
        let s = standardize(&ds).unwrap();
        assert_eq!(s.z.iter().map(|r| r[1]).collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
        assert!(s.z.iter().all(|r| r[0] == 1.0));
        let back = destandardize(&s);
        for (a, b) in back.y.iter().zip(&ds.y) {
            assert!((a.unwrap() - b.unwrap()).abs() < 1e-12);
        }

        let constant = tiny(&[&[5.0, 5.0, 5.0]], &[1.0, 2.0, 4.0]);
        assert!(matches!(standardize(&constant), Err(Error::ZeroVariance(c)) if c == "c0"));
    }

    #[test]
    fn intercept_back_transform() {
        let s = Scaling { mean: 266.1, sd: 11.5 };
        assert!((s.invert(0.199) - 268.3885).abs() < 1e-9);
        assert_eq!(format!("{:.1}", s.invert(0.199)), "268.4");
    }

    #[test]
    fn collinearity_examples() {
        let ortho = tiny(&[&[1.0, -1.0, 1.0, -1.0], &[1.0, 1.0, -1.0, -1.0]], &[0.0; 4]);
        let r = collinearity_report(&ortho).unwrap();
        assert!(r.vif.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(r.flags.is_empty());

        let dup = tiny(&[&[1.0, 2.0, 3.0, 5.0], &[1.0, 2.0, 3.0, 5.0]], &[0.0; 4]);
        let r = collinearity_report(&dup).unwrap();
        assert!(r.vif.iter().all(|v| v.is_infinite()));

        let a = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [0.3, 0.7, 2.4, 2.6, 4.9, 4.4];
        let corr_ds = tiny(&[&a, &b], &[0.0; 6]);
        let r = collinearity_report(&corr_ds).unwrap();
        assert!(r.corr[0][1] > 0.9);
        assert!(r
            .flags
            .iter()
            .any(|f| matches!(f, CollinearityFlag::Pair { corr, .. } if *corr >= CORR_FLAG)));
    }

    #[test]
    fn split_uses_training_statistics() {
        let mut ds = tiny(&[&[1.0, 2.0, 3.0, 7.0]], &[1.0, 2.0, 3.0, 10.0]);
        ds.time = vec![1, 1, 2, 2];
        ds.site = vec![0, 1, 0, 1];
        ds.n_times = 2;
        let (train, valid) = split_train_validation(&ds, 1).unwrap();
        assert_eq!(train.n_rows(), 2);
        assert_eq!(valid.n_rows(), 2);
        let tm: f64 = train.y.iter().flatten().sum::<f64>() / 2.0;
        let vm: f64 = valid.y.iter().flatten().sum::<f64>() / 2.0;
        assert!(tm.abs() < 1e-12);
        assert!(vm.abs() > 1.0);
        assert!(matches!(split_train_validation(&ds, 2), Err(Error::CutoffOutOfRange { .. })));
        assert!(matches!(split_train_validation(&ds, 0), Err(Error::CutoffOutOfRange { .. })));
    }
}
