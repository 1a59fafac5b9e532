mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use spdest::fem::fem_matrices;
use spdest::spde::{convert_params, spatial_precision};
use spdest::temporal::{ar1_logdet, ar1_precision, kronecker_precision, Ar1Params, StLayout};

/// Tridiagonal closed form: `1` at both ends, `1 + φ²` inside, `−φ` off the
/// diagonal.
fn closed_form(phi: f64, n: usize) -> Vec<Vec<f64>> {
    let mut q = vec![vec![0.0; n]; n];
    if n == 1 {
        q[0][0] = 1.0 - phi * phi;
        return q;
    }
    for (i, row) in q.iter_mut().enumerate() {
        row[i] = if i == 0 || i == n - 1 { 1.0 } else { 1.0 + phi * phi };
        if i > 0 {
            row[i - 1] = -phi;
        }
        if i + 1 < n {
            row[i + 1] = -phi;
        }
    }
    q
}

#[test]
fn ar1_entries_are_exact() {
    for &phi in &[-0.95, -0.3, 0.0, 0.5, 0.75, 0.999] {
        for n in 1..=9 {
            let q = ar1_precision(&Ar1Params::new(phi, n).unwrap()).unwrap();
            assert_eq!(q.matrix().to_dense(), closed_form(phi, n), "phi {phi}, T {n}");
        }
    }
}

#[test]
fn ar1_inverse_is_stationary_covariance() {
    let phi: f64 = 0.6;
    let n = 7;
    let q = ar1_precision(&Ar1Params::new(phi, n).unwrap()).unwrap();
    let cov = common::dense(q.matrix()).try_inverse().unwrap();
    for i in 0..n {
        for j in 0..n {
            let want = phi.powi((i as i32 - j as i32).abs()) / (1.0 - phi * phi);
            assert!((cov[(i, j)] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn kronecker_logdet_splits() {
    let mesh = common::lattice_mesh(5, 4, 1.0);
    let fem = fem_matrices::<f64>(&mesh).unwrap();
    let qs = spatial_precision(&fem, &convert_params(2.5, 1.3).unwrap()).unwrap();
    let m = qs.dim();
    for &(phi, n) in &[(0.75, 6usize), (-0.4, 3), (0.2, 1)] {
        let qt = ar1_precision(&Ar1Params::new(phi, n).unwrap()).unwrap();
        let q = kronecker_precision(&qt, &qs, usize::MAX).unwrap();
        let lhs = q.logdet().unwrap();
        let rhs = m as f64 * qt.logdet().unwrap() + n as f64 * qs.logdet().unwrap();
        assert!((lhs - rhs).abs() < 1e-9 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
        assert!((qt.logdet().unwrap() - ar1_logdet(phi)).abs() < 1e-12);

        let dense_q = common::dense(q.matrix());
        let dense_logdet = 2.0 * dense_q.cholesky().unwrap().l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        assert!((lhs - dense_logdet).abs() < 1e-9 * dense_logdet.abs().max(1.0));
    }
}

#[test]
fn kronecker_blocks_follow_layout() {
    let mesh = common::lattice_mesh(3, 3, 1.0);
    let fem = fem_matrices::<f64>(&mesh).unwrap();
    let qs = spatial_precision(&fem, &convert_params(2.0, 1.0).unwrap()).unwrap();
    let qt = ar1_precision(&Ar1Params::new(0.5, 4).unwrap()).unwrap();
    let q = kronecker_precision(&qt, &qs, usize::MAX).unwrap();
    let layout = StLayout::new(qs.dim(), 4);
    let (dt, ds) = (common::dense(qt.matrix()), common::dense(qs.matrix()));
    let dq: DMatrix<f64> = common::dense(q.matrix());
    for a in 0..layout.len() {
        for b in 0..layout.len() {
            let (t, i) = layout.split(a);
            let (s, j) = layout.split(b);
            assert_eq!(dq[(a, b)], dt[(t, s)] * ds[(i, j)]);
        }
    }
}

#[test]
fn dimension_cap_is_enforced() {
    let mesh = common::lattice_mesh(3, 3, 1.0);
    let fem = fem_matrices::<f64>(&mesh).unwrap();
    let qs = spatial_precision(&fem, &convert_params(2.0, 1.0).unwrap()).unwrap();
    let qt = ar1_precision(&Ar1Params::new(0.5, 4).unwrap()).unwrap();
    assert!(kronecker_precision(&qt, &qs, 35).is_err());
    assert!(kronecker_precision(&qt, &qs, 36).is_ok());
}

#[test]
fn rejects_non_stationary_phi() {
    assert!(Ar1Params::new(1.0, 3).is_err());
    assert!(Ar1Params::new(-1.0, 3).is_err());
    assert!(Ar1Params::new(f64::NAN, 3).is_err());
    assert!(Ar1Params::new(0.5, 0).is_err());
}

proptest! {
    #[test]
    fn ar1_logdet_is_independent_of_length(phi in -0.99f64..0.99, n in 1usize..40) {
        let q = ar1_precision(&Ar1Params::new(phi, n).unwrap()).unwrap();
        prop_assert!((q.logdet().unwrap() - (1.0 - phi * phi).ln()).abs() < 1e-9);
    }

    #[test]
    fn layout_index_round_trips(m in 1usize..50, n in 1usize..20, k in 0usize..1000) {
        let layout = StLayout::new(m, n);
        let k = k % layout.len();
        let (t, v) = layout.split(k);
        prop_assert_eq!(layout.index(t, v), k);
        prop_assert!(layout.block(t).contains(&k));
    }
}
