mod common;

use spdest::data_io::SpatialPoint;
use spdest::fem::fem_matrices;
use spdest::spde::{convert_params, matern_correlation, spatial_precision, MaternParams};

struct Calibration {
    max_corr_err: f64,
    max_var_rel_err: f64,
    n_pairs: usize,
}

/// Correlations and variances of the discretized field on a lattice over
/// `[0, 10]²`, compared with the continuous Matérn field.
fn calibrate(h: f64, range: f64, sigma: f64) -> Calibration {
    let n = (10.0 / h).round() as usize + 1;
    let mesh = common::lattice_mesh(n, n, h);
    let fem = fem_matrices::<f64>(&mesh).unwrap();
    let params = convert_params(range, sigma).unwrap();
    let q = spatial_precision(&fem, &params).unwrap();
    let var = q.selected_inverse().unwrap().diag();

    let centre = SpatialPoint::new(5.0, 5.0);
    let refs: Vec<usize> = (0..mesh.n_vertices())
        .filter(|&i| mesh.vertices[i].dist(&centre) <= 0.6)
        .collect();
    assert!(!refs.is_empty());

    let mut max_corr_err: f64 = 0.0;
    let mut n_pairs = 0;
    for &i in &refs {
        let mut e = vec![0.0; mesh.n_vertices()];
        e[i] = 1.0;
        let col = q.solve(&e).unwrap();
        for (j, p) in mesh.vertices.iter().enumerate() {
            let d = p.dist(&mesh.vertices[i]);
            if !(0.5..=3.0).contains(&d) {
                continue;
            }
            let emp = col[j] / (var[i] * var[j]).sqrt();
            max_corr_err = max_corr_err.max((emp - matern_correlation(d, &params)).abs());
            n_pairs += 1;
        }
    }

    let interior = |p: &SpatialPoint| (3.0..=7.0).contains(&p.x) && (3.0..=7.0).contains(&p.y);
    let max_var_rel_err = mesh
        .vertices
        .iter()
        .zip(&var)
        .filter(|(p, _)| interior(p))
        .map(|(_, v)| (v / (sigma * sigma) - 1.0).abs())
        .fold(0.0, f64::max);
    Calibration {
        max_corr_err,
        max_var_rel_err,
        n_pairs,
    }
}

#[test]
fn fine_mesh_matches_matern() {
    let c = calibrate(0.25, 2.0, 1.0);
    println!(
        "max |corr error| {:.4} over {} pairs, max variance error {:.4}",
        c.max_corr_err, c.n_pairs, c.max_var_rel_err
    );
    assert!(c.n_pairs > 1000);
    assert!(c.max_corr_err < 0.05);
    assert!(c.max_var_rel_err < 0.10);
}

#[test]
fn coarser_mesh_is_less_accurate() {
    let fine = calibrate(0.25, 2.0, 1.0);
    let coarse = calibrate(1.0, 2.0, 1.0);
    assert!(coarse.max_corr_err > fine.max_corr_err);
}

#[test]
fn variance_scales_with_sigma_squared() {
    let mesh = common::lattice_mesh(15, 15, 0.5);
    let fem = fem_matrices::<f64>(&mesh).unwrap();
    let v1 = spatial_precision(&fem, &convert_params(2.0, 1.0).unwrap())
        .unwrap()
        .selected_inverse()
        .unwrap()
        .diag();
    let v3 = spatial_precision(&fem, &convert_params(2.0, 3.0).unwrap())
        .unwrap()
        .selected_inverse()
        .unwrap()
        .diag();
    for (a, b) in v1.iter().zip(&v3) {
        assert!((b / a - 9.0).abs() < 1e-9);
    }
}

#[test]
fn kappa_tau_round_trip() {
    for &(r, s) in &[(0.1f64, 0.2f64), (2.0, 1.0), (800.0, 6.0), (1419.84, 18.0)] {
        let p = convert_params(r, s).unwrap();
        let q = MaternParams::from_kappa_tau(p.kappa, p.tau).unwrap();
        assert!((q.range_r / r - 1.0).abs() < 1e-12);
        assert!((q.sigma_omega / s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn correlation_at_range_is_near_point_one() {
    let p = convert_params(3.0f64, 1.0).unwrap();
    let rho = matern_correlation(3.0, &p);
    // √8 K₁(√8)
    assert!((rho - 0.13966).abs() < 1e-4, "{rho}");
}
