//! Piecewise-linear finite element matrices on a triangle mesh.

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::scalar::{lit, Real};
use crate::sparse::{CscMatrix, TripletBuilder};

/// Lumped mass matrix `C` (diagonal) and stiffness matrix `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct FemMatrices<T> {
    /// Diagonal of the lumped mass matrix.
    pub c: Vec<T>,
    pub g: CscMatrix<T>,
}

impl<T: Real> FemMatrices<T> {
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn c_matrix(&self) -> CscMatrix<T> {
        CscMatrix::diagonal(&self.c)
    }

    /// `G C⁻¹ G`.
    pub fn gcg(&self) -> CscMatrix<T> {
        let cinv: Vec<T> = self.c.iter().map(|&v| T::one() / v).collect();
        let scaled = CscMatrix::diagonal(&cinv).mul(&self.g).expect("square");
        self.g.mul(&scaled).expect("square")
    }
}

/// Assembles `C` (area/3 lumped to each corner) and `G` (gradient inner
/// products of the linear hat functions).
pub fn fem_matrices<T: Real>(mesh: &TriangleMesh) -> Result<FemMatrices<T>> {
    let m = mesh.n_vertices();
    let mut c = vec![T::zero(); m];
    let mut g = TripletBuilder::with_capacity(m, m, 9 * mesh.n_triangles());
    let scale = mesh
        .vertices
        .iter()
        .map(|v| v.x.abs().max(v.y.abs()))
        .fold(1e-300, f64::max);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = tri.map(|i| mesh.vertices[i]);
        let area = mesh.signed_area(t);
        if area.abs() <= 1e-14 * scale * scale {
            return Err(Error::ZeroAreaTriangle {
                index: t,
                corners: p.map(|q| (q.x, q.y)),
            });
        }
        let area = area.abs();
        // edge opposite to each corner
        let e: [(f64, f64); 3] = std::array::from_fn(|k| {
            let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
            (b.x - a.x, b.y - a.y)
        });
        let third: T = lit(area / 3.0);
        for k in 0..3 {
            c[tri[k]] += third;
            for l in 0..3 {
                let v = (e[k].0 * e[l].0 + e[k].1 * e[l].1) / (4.0 * area);
                g.push(tri[k], tri[l], lit(v));
            }
        }
    }
    Ok(FemMatrices { c, g: g.build() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::SpatialPoint;

    fn right_triangle() -> TriangleMesh {
        TriangleMesh::from_parts(
            vec![
                SpatialPoint::new(0.0, 0.0),
                SpatialPoint::new(1.0, 0.0),
                SpatialPoint::new(0.0, 1.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn unit_right_triangle() {
        let fem = fem_matrices::<f64>(&right_triangle()).unwrap();
        for &v in &fem.c {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
        // analytic stiffness on the reference triangle
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((fem.g.get(i, j) - expect[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_area_rejected() {
        let mesh = TriangleMesh::from_parts(
            vec![
                SpatialPoint::new(0.0, 0.0),
                SpatialPoint::new(1.0, 1.0),
                SpatialPoint::new(2.0, 2.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(fem_matrices::<f64>(&mesh), Err(Error::ZeroAreaTriangle { index: 0, .. })));
    }

    #[test]
    fn refinement_conserves_area() {
        let mesh = right_triangle();
        let fine = mesh.refine_uniform().unwrap().refine_uniform().unwrap();
        let a: f64 = fem_matrices::<f64>(&mesh).unwrap().c.iter().sum();
        let b: f64 = fem_matrices::<f64>(&fine).unwrap().c.iter().sum();
        assert!((a - 0.5).abs() < 1e-15 && (b - 0.5).abs() < 1e-14);
    }
}
