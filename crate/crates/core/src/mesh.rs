//! Triangulation of the study domain and barycentric projection onto it.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, Point2, Triangulation};

use crate::data_io::SpatialPoint;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sparse::{CscMatrix, TripletBuilder};

/// Mesh resolution, all lengths in the projected unit (km).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub max_edge_inner: f64,
    pub max_edge_outer: f64,
    pub extension: f64,
    /// Minimum distance between distinct mesh vertices.
    pub cutoff: f64,
}

impl MeshConfig {
    /// Inner edge `range/5`, outer edge twice that, extension one range.
    pub fn from_range(range_guess: f64) -> Self {
        let inner = range_guess / 5.0;
        Self {
            max_edge_inner: inner,
            max_edge_outer: 2.0 * inner,
            extension: range_guess,
            cutoff: inner / 8.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_pos = [self.max_edge_inner, self.max_edge_outer, self.extension, self.cutoff]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !all_pos || self.max_edge_outer < self.max_edge_inner {
            return Err(Error::InvalidParameter(format!("invalid mesh configuration {self:?}")));
        }
        Ok(())
    }
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self::from_range(600.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<SpatialPoint>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
    locator: Locator,
}

/// Uniform bucket grid over triangle bounding boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Locator {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn build(vertices: &[SpatialPoint], triangles: &[[usize; 3]]) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for v in vertices {
            x0 = x0.min(v.x);
            y0 = y0.min(v.y);
            x1 = x1.max(v.x);
            y1 = y1.max(v.y);
        }
        let nt = triangles.len().max(1);
        let span = (x1 - x0).max(y1 - y0).max(1e-12);
        let per_side = ((nt as f64).sqrt().ceil() as usize).max(1);
        let cell = span / per_side as f64 * (1.0 + 1e-9);
        let nx = (((x1 - x0) / cell).floor() as usize + 1).max(1);
        let ny = (((y1 - y0) / cell).floor() as usize + 1).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (t, tri) in triangles.iter().enumerate() {
            let xs = tri.map(|i| vertices[i].x);
            let ys = tri.map(|i| vertices[i].y);
            let cx0 = ((xs.iter().cloned().fold(f64::MAX, f64::min) - x0) / cell).floor() as usize;
            let cx1 = ((xs.iter().cloned().fold(f64::MIN, f64::max) - x0) / cell).floor() as usize;
            let cy0 = ((ys.iter().cloned().fold(f64::MAX, f64::min) - y0) / cell).floor() as usize;
            let cy1 = ((ys.iter().cloned().fold(f64::MIN, f64::max) - y0) / cell).floor() as usize;
            for cy in cy0..=cy1.min(ny - 1) {
                for cx in cx0..=cx1.min(nx - 1) {
                    buckets[cy * nx + cx].push(t);
                }
            }
        }
        Self {
            x0,
            y0,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    fn candidates(&self, p: SpatialPoint) -> &[usize] {
        let fx = (p.x - self.x0) / self.cell;
        let fy = (p.y - self.y0) / self.cell;
        if !(fx >= 0.0 && fy >= 0.0) {
            return &[];
        }
        let (cx, cy) = (fx.floor() as usize, fy.floor() as usize);
        if cx >= self.nx || cy >= self.ny {
            return &[];
        }
        &self.buckets[cy * self.nx + cx]
    }
}

fn cross(o: SpatialPoint, a: SpatialPoint, b: SpatialPoint) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Convex hull in counter-clockwise order (monotone chain), collinear points dropped.
pub fn convex_hull(points: &[SpatialPoint]) -> Vec<SpatialPoint> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<SpatialPoint> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &SpatialPoint>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Distance from `p` to a counter-clockwise convex polygon (zero inside).
pub fn distance_to_convex(poly: &[SpatialPoint], p: SpatialPoint) -> f64 {
    let n = poly.len();
    let inside = (0..n).all(|i| cross(poly[i], poly[(i + 1) % n], p) >= 0.0);
    if inside {
        return 0.0;
    }
    (0..n)
        .map(|i| segment_distance(poly[i], poly[(i + 1) % n], p))
        .fold(f64::MAX, f64::min)
}

fn segment_distance(a: SpatialPoint, b: SpatialPoint, p: SpatialPoint) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a.x + t * dx - p.x).hypot(a.y + t * dy - p.y)
}

/// Triangular lattice with spacing `h` covering the box `[x0,x1]×[y0,y1]`.
fn lattice(x0: f64, x1: f64, y0: f64, y1: f64, h: f64) -> Vec<SpatialPoint> {
    let dy = h * 3f64.sqrt() / 2.0;
    let ny = ((y1 - y0) / dy).ceil() as usize;
    let nx = ((x1 - x0) / h).ceil() as usize;
    let mut out = Vec::with_capacity((nx + 2) * (ny + 1));
    for j in 0..=ny {
        let shift = if j % 2 == 1 { h / 2.0 } else { 0.0 };
        for i in 0..=nx + 1 {
            out.push(SpatialPoint::new(x0 - h / 2.0 + shift + i as f64 * h, y0 + j as f64 * dy));
        }
    }
    out
}

/// Offset curve of a convex polygon at distance `r`, sampled at spacing `h`.
fn offset_boundary(hull: &[SpatialPoint], r: f64, h: f64) -> Vec<SpatialPoint> {
    let n = hull.len();
    let mut out = Vec::new();
    let normal = |a: SpatialPoint, b: SpatialPoint| {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let l = dx.hypot(dy);
        (dy / l, -dx / l)
    };
    for i in 0..n {
        let (a, b) = (hull[i], hull[(i + 1) % n]);
        let prev = hull[(i + n - 1) % n];
        let n_prev = normal(prev, a);
        let n_cur = normal(a, b);
        // corner arc from the previous edge normal to this one
        let a0 = n_prev.1.atan2(n_prev.0);
        let mut a1 = n_cur.1.atan2(n_cur.0);
        while a1 < a0 {
            a1 += std::f64::consts::TAU;
        }
        let steps = ((a1 - a0) * r / h).ceil().max(1.0) as usize;
        for s in 0..steps {
            let ang = a0 + (a1 - a0) * s as f64 / steps as f64;
            out.push(SpatialPoint::new(a.x + r * ang.cos(), a.y + r * ang.sin()));
        }
        let len = (b.x - a.x).hypot(b.y - a.y);
        let steps = (len / h).ceil().max(1.0) as usize;
        for s in 0..steps {
            let t = s as f64 / steps as f64;
            out.push(SpatialPoint::new(
                a.x + t * (b.x - a.x) + r * n_cur.0,
                a.y + t * (b.y - a.y) + r * n_cur.1,
            ));
        }
    }
    out
}

impl TriangleMesh {
    /// Builds a mesh from explicit vertices and counter-clockwise triangles.
    pub fn from_parts(vertices: Vec<SpatialPoint>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let m = vertices.len();
        if triangles.iter().any(|t| t.iter().any(|&i| i >= m)) {
            return Err(Error::Dimension("triangle references a missing vertex".into()));
        }
        let mut triangles = triangles;
        for t in triangles.iter_mut() {
            if cross(vertices[t[0]], vertices[t[1]], vertices[t[2]]) < 0.0 {
                t.swap(1, 2);
            }
        }
        // boundary: edges used by exactly one triangle
        let mut edges: Vec<(usize, usize)> = triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k].min(t[(k + 1) % 3]), t[k].max(t[(k + 1) % 3]))))
            .collect();
        edges.sort_unstable();
        let mut boundary = vec![false; m];
        let mut i = 0;
        while i < edges.len() {
            let mut j = i;
            while j < edges.len() && edges[j] == edges[i] {
                j += 1;
            }
            if j - i == 1 {
                boundary[edges[i].0] = true;
                boundary[edges[i].1] = true;
            }
            i = j;
        }
        let locator = Locator::build(&vertices, &triangles);
        Ok(Self {
            vertices,
            triangles,
            boundary,
            locator,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * cross(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.signed_area(t)).sum()
    }

    /// Vertex adjacency lists (sorted).
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_vertices()];
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        let adj = self.adjacency();
        let m = self.n_vertices();
        if m == 0 {
            return true;
        }
        let mut seen = vec![false; m];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Barycentric coordinates of `p` in triangle `t`.
    pub fn barycentric(&self, t: usize, p: SpatialPoint) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        let area = cross(a, b, c);
        [cross(p, b, c) / area, cross(a, p, c) / area, cross(a, b, p) / area]
    }

    /// Containing triangle, lowest index on shared edges and vertices.
    pub fn locate(&self, p: SpatialPoint) -> Option<(usize, [f64; 3])> {
        const EPS: f64 = 1e-10;
        let mut cands = self.locator.candidates(p).to_vec();
        cands.sort_unstable();
        for t in cands {
            let w = self.barycentric(t, p);
            if w.iter().all(|&v| v >= -EPS) {
                return Some((t, w));
            }
        }
        None
    }

    /// Midpoint subdivision of every triangle into four.
    pub fn refine_uniform(&self) -> Result<Self> {
        let mut vertices = self.vertices.clone();
        let mut mid = std::collections::HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<SpatialPoint>| -> usize {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push(SpatialPoint::new(0.5 * (p.x + q.x), 0.5 * (p.y + q.y)));
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.n_triangles());
        for &[a, b, c] in &self.triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        Self::from_parts(vertices, triangles)
    }

    /// Writes `vertices.csv` (id,x,y,boundary) and `triangles.csv` (v0,v1,v2).
    pub fn export_csv(&self, dir: &Path) -> Result<()> {
        let vpath = dir.join("vertices.csv");
        let mut v = std::io::BufWriter::new(std::fs::File::create(&vpath).map_err(|e| Error::io(&vpath, e))?);
        let io = |e| Error::io(&vpath, e);
        writeln!(v, "id,x,y,boundary").map_err(io)?;
        for (i, p) in self.vertices.iter().enumerate() {
            writeln!(v, "{},{:.16e},{:.16e},{}", i, p.x, p.y, u8::from(self.boundary[i])).map_err(io)?;
        }
        v.flush().map_err(io)?;
        let tpath = dir.join("triangles.csv");
        let mut t = std::io::BufWriter::new(std::fs::File::create(&tpath).map_err(|e| Error::io(&tpath, e))?);
        let io = |e| Error::io(&tpath, e);
        writeln!(t, "v0,v1,v2").map_err(io)?;
        for tri in &self.triangles {
            writeln!(t, "{},{},{}", tri[0], tri[1], tri[2]).map_err(io)?;
        }
        t.flush().map_err(io)
    }
}

/// Builds a Delaunay mesh: data sites (merged within `cutoff`), a triangular
/// lattice of spacing `max_edge_inner` over the site hull plus one inner edge
/// of margin, and a coarser lattice ring of width `extension` closed by a
/// sampled offset boundary.
pub fn build_mesh(sites: &[SpatialPoint], cfg: &MeshConfig) -> Result<TriangleMesh> {
    cfg.validate()?;
    if sites.len() < 3 {
        return Err(Error::DegenerateSites(format!("{} sites, need at least 3", sites.len())));
    }
    let hull = convex_hull(sites);
    let hull_area: f64 = if hull.len() >= 3 {
        0.5 * (0..hull.len())
            .map(|i| {
                let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
    } else {
        0.0
    };
    let diameter = hull
        .iter()
        .flat_map(|a| hull.iter().map(move |b| a.dist(b)))
        .fold(0.0, f64::max);
    if hull.len() < 3 || hull_area <= 1e-12 * diameter * diameter {
        return Err(Error::DegenerateSites("sites are collinear".into()));
    }
    if cfg.cutoff >= diameter {
        return Err(Error::DegenerateSites(format!(
            "cutoff {} exceeds domain extent {diameter}",
            cfg.cutoff
        )));
    }

    let mut points: Vec<SpatialPoint> = Vec::new();
    let too_close = |points: &[SpatialPoint], p: SpatialPoint, d: f64| points.iter().any(|q| q.dist(&p) < d);
    for &s in sites {
        if !too_close(&points, s, cfg.cutoff) {
            points.push(s);
        }
    }
    let n_site_vertices = points.len();

    let h_in = cfg.max_edge_inner;
    let margin = h_in;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in &hull {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let site_clearance = cfg.cutoff.max(0.45 * h_in);
    for p in lattice(x0 - margin, x1 + margin, y0 - margin, y1 + margin, h_in) {
        if distance_to_convex(&hull, p) <= margin && !too_close(&points[..n_site_vertices], p, site_clearance) {
            points.push(p);
        }
    }

    let h_out = cfg.max_edge_outer;
    let outer_r = margin + cfg.extension;
    let pad = outer_r + h_out;
    for p in lattice(x0 - pad, x1 + pad, y0 - pad, y1 + pad, h_out) {
        let d = distance_to_convex(&hull, p);
        if d > margin + 0.75 * h_out.min(cfg.extension) && d < outer_r - 0.5 * h_out {
            points.push(p);
        }
    }
    points.extend(offset_boundary(&hull, outer_r, h_out));

    let mut dt: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    let mut index_of = Vec::with_capacity(points.len());
    let mut vertices: Vec<SpatialPoint> = Vec::with_capacity(points.len());
    for p in &points {
        let h = dt
            .insert(Point2::new(p.x, p.y))
            .map_err(|e| Error::DegenerateSites(format!("triangulation failed: {e:?}")))?;
        let idx = h.index();
        if idx == vertices.len() {
            vertices.push(*p);
        }
        index_of.push(idx);
    }
    // collinear points on the outer boundary leave slivers on the hull
    let min_area = 1e-6 * h_out * h_out;
    let mut triangles: Vec<[usize; 3]> = dt
        .inner_faces()
        .map(|f| f.vertices().map(|v| v.fix().index()))
        .filter(|t| cross(vertices[t[0]], vertices[t[1]], vertices[t[2]]).abs() > 2.0 * min_area)
        .collect();
    let mut used = vec![false; vertices.len()];
    triangles.iter().flatten().for_each(|&i| used[i] = true);
    if used.iter().any(|u| !u) {
        let mut new_index = vec![usize::MAX; vertices.len()];
        let mut kept = Vec::with_capacity(vertices.len());
        for (i, v) in vertices.iter().enumerate() {
            if used[i] {
                new_index[i] = kept.len();
                kept.push(*v);
            }
        }
        triangles.iter_mut().flatten().for_each(|i| *i = new_index[*i]);
        vertices = kept;
    }
    let mesh = TriangleMesh::from_parts(vertices, triangles)?;
    for s in sites {
        if mesh.locate(*s).is_none() {
            return Err(Error::OutsideMesh { x: s.x, y: s.y });
        }
    }
    Ok(mesh)
}

/// Sparse `n × m` barycentric interpolation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorMatrix<T> {
    pub matrix: CscMatrix<T>,
    /// Per target: `(vertex, weight)` pairs with nonzero weight.
    pub rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> ProjectorMatrix<T> {
    pub fn n_targets(&self) -> usize {
        self.rows.len()
    }

    pub fn interpolate(&self, values: &[T]) -> Vec<T> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(i, w)| w * values[i]).sum())
            .collect()
    }
}

/// Projector rows for `targets`, each holding the barycentric weights of the
/// containing triangle (clamped to `[0, 1]` and renormalized).
pub fn make_projector<T: Real>(mesh: &TriangleMesh, targets: &[SpatialPoint]) -> Result<ProjectorMatrix<T>> {
    let mut rows = Vec::with_capacity(targets.len());
    let mut b = TripletBuilder::with_capacity(targets.len(), mesh.n_vertices(), 3 * targets.len());
    for (q, &p) in targets.iter().enumerate() {
        let (t, w) = mesh.locate(p).ok_or(Error::OutsideMesh { x: p.x, y: p.y })?;
        let w = w.map(|v| v.max(0.0));
        let s: f64 = w.iter().sum();
        let mut row = Vec::with_capacity(3);
        for k in 0..3 {
            let wk = w[k] / s;
            if wk > 0.0 {
                let v = T::from_f64(wk).unwrap();
                row.push((mesh.triangles[t][k], v));
                b.push(q, mesh.triangles[t][k], v);
            }
        }
        row.sort_by_key(|e| e.0);
        rows.push(row);
    }
    Ok(ProjectorMatrix { matrix: b.build(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_sites(nx: usize, ny: usize, h: f64) -> Vec<SpatialPoint> {
        (0..ny)
            .flat_map(|j| (0..nx).map(move |i| SpatialPoint::new(i as f64 * h, j as f64 * h)))
            .collect()
    }

    #[test]
    fn minimal_triangle_mesh() {
        let sites = vec![
            SpatialPoint::new(0.0, 0.0),
            SpatialPoint::new(10.0, 0.0),
            SpatialPoint::new(0.0, 10.0),
        ];
        let cfg = MeshConfig {
            max_edge_inner: 100.0,
            max_edge_outer: 100.0,
            extension: 10.0,
            cutoff: 0.1,
        };
        let mesh = build_mesh(&sites, &cfg).unwrap();
        assert!(mesh.n_vertices() >= 3);
        assert!(mesh.is_connected());
        for s in &sites {
            assert!(mesh.locate(*s).is_some());
        }
    }

    #[test]
    fn coincident_sites_merge() {
        let mut sites = grid_sites(3, 3, 50.0);
        sites.push(SpatialPoint::new(0.3, 0.0));
        let cfg = MeshConfig {
            max_edge_inner: 40.0,
            max_edge_outer: 80.0,
            extension: 100.0,
            cutoff: 1.0,
        };
        let mesh = build_mesh(&sites, &cfg).unwrap();
        let near: usize = mesh.vertices.iter().filter(|v| v.dist(&SpatialPoint::new(0.0, 0.0)) < 1.0).count();
        assert_eq!(near, 1);
    }

    #[test]
    fn collinear_sites_rejected() {
        let sites: Vec<_> = (0..5).map(|i| SpatialPoint::new(i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(build_mesh(&sites, &MeshConfig::from_range(10.0)), Err(Error::DegenerateSites(_))));
    }

    #[test]
    fn sites_strictly_inside_and_ccw() {
        let sites = grid_sites(6, 5, 100.0);
        let mesh = build_mesh(&sites, &MeshConfig::from_range(300.0)).unwrap();
        assert!(mesh.is_connected());
        for t in 0..mesh.n_triangles() {
            assert!(mesh.signed_area(t) > 0.0);
        }
        for s in &sites {
            let (idx, _) = mesh
                .vertices
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.dist(s)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(!mesh.boundary[idx]);
        }
    }

    #[test]
    fn projector_vertex_centroid_and_outside() {
        let mesh = TriangleMesh::from_parts(
            vec![
                SpatialPoint::new(0.0, 0.0),
                SpatialPoint::new(1.0, 0.0),
                SpatialPoint::new(0.0, 1.0),
                SpatialPoint::new(1.0, 1.0),
            ],
            vec![[0, 1, 2], [1, 3, 2]],
        )
        .unwrap();
        let a: ProjectorMatrix<f64> = make_projector(
            &mesh,
            &[SpatialPoint::new(1.0, 0.0), SpatialPoint::new(1.0 / 3.0, 1.0 / 3.0)],
        )
        .unwrap();
        assert_eq!(a.rows[0], vec![(1, 1.0)]);
        for &(_, w) in &a.rows[1] {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(matches!(
            make_projector::<f64>(&mesh, &[SpatialPoint::new(2.0, 2.0)]),
            Err(Error::OutsideMesh { .. })
        ));
        // shared edge point resolves to the lower triangle index
        let (t, _) = mesh.locate(SpatialPoint::new(0.5, 0.5)).unwrap();
        assert_eq!(t, 0);
    }

    #[test]
    fn export_writes_headers() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = build_mesh(&grid_sites(3, 3, 10.0), &MeshConfig::from_range(20.0)).unwrap();
        mesh.export_csv(dir.path()).unwrap();
        let v = std::fs::read_to_string(dir.path().join("vertices.csv")).unwrap();
        assert!(v.starts_with("id,x,y,boundary\n"));
        let t = std::fs::read_to_string(dir.path().join("triangles.csv")).unwrap();
        assert_eq!(t.lines().count(), mesh.n_triangles() + 1);
    }
}
