use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::fem::{fem_matrices, FemMatrices};
use crate::mesh::{make_projector, ProjectorMatrix, TriangleMesh};
use crate::priors::{HyperParams, ModelKind, PriorConfig};
use crate::sparse::{CholeskyFactor, CscMatrix, SparseRow, SymbolicCholesky, TripletBuilder};
use crate::spde::{convert_params, MaternParams, SpdeOperator};
use crate::temporal::{ar1_logdet, Ar1Components, StLayout};

use super::ModelSpec;

/// Position of each latent block inside the stacked vector `x`.
///
/// FullSt: `x = (ξ_1, …, ξ_T, β)` with each `ξ_t` of length `m`.
/// Additive: `x = (ω, f_1, …, f_T, β)`. CovariateOnly: `x = β`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentLayout {
    pub kind: ModelKind,
    pub n_vertices: usize,
    pub n_times: usize,
    pub n_coef: usize,
}

impl LatentLayout {
    pub fn field(&self) -> Range<usize> {
        match self.kind {
            ModelKind::CovariateOnly => 0..0,
            ModelKind::Additive => 0..self.n_vertices,
            ModelKind::FullSt => 0..self.n_vertices * self.n_times,
        }
    }

    pub fn temporal(&self) -> Range<usize> {
        let s = self.field().end;
        match self.kind {
            ModelKind::Additive => s..s + self.n_times,
            _ => s..s,
        }
    }

    pub fn beta(&self) -> Range<usize> {
        let s = self.temporal().end;
        s..s + self.n_coef
    }

    pub fn dim(&self) -> usize {
        self.beta().end
    }

    pub fn st(&self) -> StLayout {
        StLayout::new(self.n_vertices, self.n_times)
    }

    /// Index of vertex `v` of the spatial field at 0-based time `t`.
    pub fn field_index(&self, t: usize, v: usize) -> usize {
        match self.kind {
            ModelKind::FullSt => self.st().index(t, v),
            ModelKind::Additive => v,
            ModelKind::CovariateOnly => panic!("no spatial field in the covariate-only model"),
        }
    }
}

/// Natural-scale model parameters at one θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaParams {
    pub tau_eps: f64,
    pub matern: Option<MaternParams<f64>>,
    pub phi: Option<f64>,
    pub sigma_f: Option<f64>,
    pub phi_f: Option<f64>,
}

impl ThetaParams {
    pub fn from_hyper(h: &HyperParams) -> Result<Self> {
        let n = h.natural();
        let matern = match (n.range_r, n.sigma_omega) {
            (Some(r), Some(s)) => Some(convert_params(r, s)?),
            _ => None,
        };
        let check = |v: Option<f64>| -> Result<Option<f64>> {
            match v {
                Some(p) if !(p.abs() < 1.0) => Err(Error::InvalidParameter(format!("correlation {p} reached ±1"))),
                _ => Ok(v),
            }
        };
        if !(n.tau_eps > 0.0 && n.tau_eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise precision {}", n.tau_eps)));
        }
        if let Some(s) = n.sigma_f {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("sigma_f {s}")));
            }
        }
        Ok(Self {
            tau_eps: n.tau_eps,
            matern,
            phi: check(n.phi)?,
            sigma_f: n.sigma_f,
            phi_f: check(n.phi_f)?,
        })
    }
}

/// A model bound to data and a mesh: observation matrix, response and the
/// θ-invariant sparsity structure of the posterior precision.
#[derive(Debug, Clone)]
pub struct AssembledModel {
    pub kind: ModelKind,
    pub prior: PriorConfig,
    pub layout: LatentLayout,
    pub mesh: Arc<TriangleMesh>,
    pub fem: FemMatrices<f64>,
    pub spde: SpdeOperator<f64>,
    spde_symbolic: Arc<SymbolicCholesky>,
    /// Projector of every dataset site onto the mesh.
    pub site_projector: ProjectorMatrix<f64>,
    /// `n × dim(x)` observation matrix.
    pub b: CscMatrix<f64>,
    pub b_rows: Vec<SparseRow<f64>>,
    pub y: Vec<f64>,
    yty: f64,
    bty: Vec<f64>,
    /// Dataset row of each observation.
    pub obs_rows: Vec<usize>,
    /// Fixed-effect names, intercept first.
    pub coef_names: Vec<String>,
    /// Posterior precision pattern (values unused).
    pattern: CscMatrix<f64>,
    /// Prior precision pieces on `pattern`, paired with [`Self::coefficients`].
    components: Vec<Vec<f64>>,
    btb: Vec<f64>,
    beta_diag: Vec<f64>,
    symbolic: Arc<SymbolicCholesky>,
}

/// Binds `ds` to `mesh` for model `spec.kind`.
pub fn assemble(spec: &ModelSpec, ds: &Dataset, mesh: &TriangleMesh) -> Result<AssembledModel> {
    spec.validate()?;
    let kind = spec.kind;
    let m = mesh.n_vertices();
    let t_len = ds.n_times;
    let p = ds.n_coef();
    let layout = LatentLayout {
        kind,
        n_vertices: m,
        n_times: t_len,
        n_coef: p,
    };
    let dim = layout.dim();
    if dim > spec.inference.dim_cap {
        return Err(Error::DimensionCap {
            dim,
            cap: spec.inference.dim_cap,
        });
    }
    let site_projector = make_projector::<f64>(mesh, &ds.points)?;
    let fem = fem_matrices::<f64>(mesh)?;
    let spde = SpdeOperator::new(&fem)?;
    let spde_symbolic = Arc::new(SymbolicCholesky::analyze(spde.pattern())?);

    let obs_rows: Vec<usize> = (0..ds.n_rows()).filter(|&i| ds.y[i].is_some()).collect();
    let n = obs_rows.len();
    let y: Vec<f64> = obs_rows.iter().map(|&i| ds.y[i].unwrap()).collect();
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite response {v}")));
    }
    let beta0 = layout.beta().start;
    let mut b_rows = Vec::with_capacity(n);
    for &i in &obs_rows {
        let t = ds.time[i];
        if t == 0 || t > t_len {
            return Err(Error::Dimension(format!("time index {t} outside 1..={t_len}")));
        }
        let mut row: SparseRow<f64> = Vec::with_capacity(3 + p + 1);
        match kind {
            ModelKind::FullSt => {
                for &(v, w) in &site_projector.rows[ds.site[i]] {
                    row.push((layout.field_index(t - 1, v), w));
                }
            }
            ModelKind::Additive => {
                for &(v, w) in &site_projector.rows[ds.site[i]] {
                    row.push((v, w));
                }
                row.push((layout.temporal().start + t - 1, 1.0));
            }
            ModelKind::CovariateOnly => {}
        }
        for (k, &z) in ds.z[i].iter().enumerate() {
            if z != 0.0 {
                row.push((beta0 + k, z));
            }
        }
        b_rows.push(row);
    }
    if n > 0 {
        check_rank(ds, &obs_rows)?;
    }
    let mut bb = TripletBuilder::with_capacity(n, dim, b_rows.iter().map(Vec::len).sum());
    for (r, row) in b_rows.iter().enumerate() {
        for &(c, v) in row {
            bb.push(r, c, v);
        }
    }
    let b = bb.build();
    let bty = b.tr_mul_vec(&y);
    let yty = y.iter().map(|v| v * v).sum();
    let btb_matrix = b.transpose().mul(&b)?;

    // prior pieces, each a full dim × dim matrix
    let mut pieces: Vec<CscMatrix<f64>> = Vec::new();
    let spatial_pieces = || -> Vec<CscMatrix<f64>> {
        spde.components()
            .iter()
            .map(|vals| spde.pattern().with_values(vals.to_vec()))
            .collect()
    };
    match kind {
        ModelKind::FullSt => {
            let ar = Ar1Components::<f64>::new(t_len);
            let temporal = [&ar.identity, &ar.inner, &ar.offdiag];
            let spatial = spatial_pieces();
            for tv in temporal {
                let tm = ar.pattern.with_values(tv.clone());
                for s in &spatial {
                    pieces.push(embed(&tm.kron(s), 0, dim));
                }
            }
        }
        ModelKind::Additive => {
            for s in spatial_pieces() {
                pieces.push(embed(&s, 0, dim));
            }
            let ar = Ar1Components::<f64>::new(t_len);
            for tv in [&ar.identity, &ar.inner, &ar.offdiag] {
                pieces.push(embed(&ar.pattern.with_values(tv.clone()), layout.temporal().start, dim));
            }
        }
        ModelKind::CovariateOnly => {}
    }
    let beta_matrix = {
        let mut d = vec![0.0; dim];
        d[layout.beta()].iter_mut().for_each(|v| *v = 1.0);
        let mut tb = TripletBuilder::with_capacity(dim, dim, p);
        for k in layout.beta() {
            tb.push(k, k, d[k]);
        }
        tb.build()
    };

    // union pattern, with global columns coupled to every latent node so
    // that prediction covariances are available from the selected inverse
    let mut tb = TripletBuilder::with_capacity(dim, dim, btb_matrix.nnz() + 2 * p * dim);
    for piece in pieces.iter().chain([&btb_matrix, &beta_matrix]) {
        for (r, c, _) in piece.iter() {
            tb.push(r, c, 0.0);
        }
    }
    for g in layout.beta().chain(layout.temporal()) {
        for j in 0..dim {
            tb.push(g, j, 0.0);
            tb.push(j, g, 0.0);
        }
    }
    for j in 0..dim {
        tb.push(j, j, 0.0);
    }
    let pattern = tb.build();
    let components = pieces.iter().map(|pc| pc.values_on(&pattern)).collect::<Result<Vec<_>>>()?;
    let btb = btb_matrix.values_on(&pattern)?;
    let beta_diag = beta_matrix.values_on(&pattern)?;
    let symbolic = Arc::new(SymbolicCholesky::analyze(&pattern)?);
    log::debug!(
        "assembled {kind}: dim {dim}, n {n}, nnz(Q) {}, nnz(L) {}",
        pattern.nnz(),
        symbolic.nnz_l()
    );
    Ok(AssembledModel {
        kind,
        prior: spec.prior,
        layout,
        mesh: Arc::new(mesh.clone()),
        fem,
        spde,
        spde_symbolic,
        site_projector,
        b,
        b_rows,
        y,
        yty,
        bty,
        obs_rows,
        coef_names: std::iter::once("intercept".to_string()).chain(ds.names.iter().cloned()).collect(),
        pattern,
        components,
        btb,
        beta_diag,
        symbolic,
    })
}

/// Places `a` at `(offset, offset)` in a `dim × dim` matrix.
fn embed(a: &CscMatrix<f64>, offset: usize, dim: usize) -> CscMatrix<f64> {
    let mut tb = TripletBuilder::with_capacity(dim, dim, a.nnz());
    a.scatter_into(&mut tb, offset, offset);
    tb.build()
}

fn check_rank(ds: &Dataset, rows: &[usize]) -> Result<()> {
    let p = ds.n_coef();
    if rows.len() < p {
        return Err(Error::RankDeficient(format!(
            "{} observations for {p} fixed effects",
            rows.len()
        )));
    }
    let mut ztz = DMatrix::<f64>::zeros(p, p);
    for &i in rows {
        let z = &ds.z[i];
        for a in 0..p {
            for b in 0..p {
                ztz[(a, b)] += z[a] * z[b];
            }
        }
    }
    // scale-free check on the correlation-like normalization
    let d: Vec<f64> = (0..p).map(|a| ztz[(a, a)].sqrt().max(1e-300)).collect();
    for a in 0..p {
        for b in 0..p {
            ztz[(a, b)] /= d[a] * d[b];
        }
    }
    let eig = SymmetricEigen::new(ztz);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < 1e-10 {
        let mut names = vec!["intercept".to_string()];
        names.extend(ds.names.iter().cloned());
        return Err(Error::RankDeficient(format!(
            "design matrix columns {names:?} are linearly dependent (smallest normalized eigenvalue {min:.3e})"
        )));
    }
    Ok(())
}

impl AssembledModel {
    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    pub fn yty(&self) -> f64 {
        self.yty
    }

    /// `Bᵀ y`.
    pub fn bty(&self) -> &[f64] {
        &self.bty
    }

    /// Weights of the stored prior pieces at `theta`.
    fn coefficients(&self, p: &ThetaParams) -> Vec<f64> {
        match self.kind {
            ModelKind::CovariateOnly => Vec::new(),
            ModelKind::FullSt => {
                let mp = p.matern.expect("FullSt has a Matérn field");
                let s = SpdeOperator::<f64>::coefficients(mp.kappa, mp.tau);
                let t = Ar1Components::<f64>::coefficients(p.phi.expect("FullSt has phi"));
                t.iter().flat_map(|&a| s.iter().map(move |&b| a * b)).collect()
            }
            ModelKind::Additive => {
                let mp = p.matern.expect("Additive has a Matérn field");
                let s = SpdeOperator::<f64>::coefficients(mp.kappa, mp.tau);
                let sf = p.sigma_f.expect("Additive has sigma_f");
                let t = Ar1Components::<f64>::coefficients(p.phi_f.expect("Additive has phi_f"));
                s.iter().copied().chain(t.iter().map(|&a| a / (sf * sf))).collect()
            }
        }
    }

    fn combine(&self, p: &ThetaParams, tau_eps: f64) -> CscMatrix<f64> {
        let w = self.coefficients(p);
        let mut values: Vec<f64> = self.beta_diag.iter().map(|v| v * self.prior.beta_prec).collect();
        for (c, comp) in w.iter().zip(&self.components) {
            for (v, &x) in values.iter_mut().zip(comp) {
                *v += c * x;
            }
        }
        if tau_eps != 0.0 {
            for (v, &x) in values.iter_mut().zip(&self.btb) {
                *v += tau_eps * x;
            }
        }
        self.pattern.with_values(values)
    }

    /// Prior precision `Q_x(θ)` laid out on the posterior pattern.
    pub fn prior_precision(&self, p: &ThetaParams) -> CscMatrix<f64> {
        self.combine(p, 0.0)
    }

    /// `Q_c = Q_x(θ) + τ_ε BᵀB`.
    pub fn posterior_precision(&self, p: &ThetaParams) -> CscMatrix<f64> {
        self.combine(p, p.tau_eps)
    }

    /// Spatial precision `Q_s` at `p`, factorized.
    pub fn spatial_factor(&self, p: &ThetaParams) -> Result<Option<CholeskyFactor<f64>>> {
        match p.matern {
            None => Ok(None),
            Some(mp) => {
                let q = self.spde.precision(&mp);
                Ok(Some(CholeskyFactor::factorize(Arc::clone(&self.spde_symbolic), &q)?))
            }
        }
    }

    /// `log det Q_x(θ)` from the block and Kronecker structure.
    pub fn prior_logdet(&self, p: &ThetaParams, qs: Option<&CholeskyFactor<f64>>) -> f64 {
        let l = &self.layout;
        let beta = l.n_coef as f64 * self.prior.beta_prec.ln();
        match self.kind {
            ModelKind::CovariateOnly => beta,
            ModelKind::FullSt => {
                let ls = qs.expect("spatial factor").logdet();
                l.n_vertices as f64 * ar1_logdet(p.phi.unwrap()) + l.n_times as f64 * ls + beta
            }
            ModelKind::Additive => {
                let ls = qs.expect("spatial factor").logdet();
                let sf = p.sigma_f.unwrap();
                let lt = ar1_logdet(p.phi_f.unwrap()) - l.n_times as f64 * (sf * sf).ln();
                ls + lt + beta
            }
        }
    }
}
