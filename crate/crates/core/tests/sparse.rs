mod common;

use proptest::prelude::*;
use rand::Rng;

use spdest::sparse::{
    invert, minimum_degree, nested_dissection, reverse_cuthill_mckee, CholeskyFactor, CscMatrix, SparseSpd,
    SymbolicCholesky, TripletBuilder,
};
use std::sync::Arc;

/// Random symmetric diagonally dominant matrix with about `k` off-diagonal
/// entries per column.
fn random_spd(n: usize, k: usize, seed: u64) -> CscMatrix<f64> {
    let mut r = common::rng(seed);
    let mut b = TripletBuilder::new(n, n);
    let mut diag = vec![1.0; n];
    for i in 0..n {
        for _ in 0..k {
            let j = r.random_range(0..n);
            if j == i {
                continue;
            }
            let v: f64 = r.random_range(-1.0..1.0);
            b.push(i, j, v);
            b.push(j, i, v);
            diag[i] += v.abs();
            diag[j] += v.abs();
        }
    }
    for (i, d) in diag.into_iter().enumerate() {
        b.push(i, i, d);
    }
    b.build()
}

fn is_permutation(p: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    p.len() == n && p.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
}

#[test]
fn orderings_are_permutations_on_a_grid() {
    let mesh = common::lattice_mesh(30, 25, 1.0);
    let fem = spdest::fem::fem_matrices::<f64>(&mesh).unwrap();
    let q = spdest::spde::SpdeOperator::new(&fem).unwrap();
    let a = q.pattern();
    let n = a.nrows();
    let orders = [
        nested_dissection(n, a.col_ptr(), a.row_idx()),
        reverse_cuthill_mckee(n, a.col_ptr(), a.row_idx()),
        minimum_degree(n, a.col_ptr(), a.row_idx()),
    ];
    let natural = SymbolicCholesky::analyze_with_perm(a, (0..n).collect()).unwrap();
    for p in orders {
        assert!(is_permutation(&p, n));
        let s = SymbolicCholesky::analyze_with_perm(a, p).unwrap();
        assert!(s.flops() <= natural.flops());
    }
    let best = SymbolicCholesky::analyze(a).unwrap();
    assert!(best.flops() <= natural.flops());
}

#[test]
fn shared_symbolic_gives_identical_factor() {
    let a = random_spd(60, 3, 2);
    let sym = Arc::new(SymbolicCholesky::analyze(&a).unwrap());
    let f1 = CholeskyFactor::factorize(sym.clone(), &a).unwrap();
    let f2 = CholeskyFactor::factorize(sym, &a.scale(2.0)).unwrap();
    let expect = f1.logdet() + 60.0 * 2f64.ln();
    assert!((f2.logdet() - expect).abs() < 1e-10);
}

#[test]
fn indefinite_matrix_is_rejected() {
    let a = CscMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
    let sym = Arc::new(SymbolicCholesky::analyze(&a).unwrap());
    assert!(CholeskyFactor::factorize_exact(sym, &a).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn factor_matches_dense_oracle(n in 2usize..70, k in 0usize..5, seed in 0u64..10_000) {
        let a = random_spd(n, k, seed);
        let dense = common::dense(&a);
        let mut spd = SparseSpd::new(a.clone());
        spd.factorize().unwrap();

        let ch = dense.clone().cholesky().unwrap();
        let logdet = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        prop_assert!((spd.logdet().unwrap() - logdet).abs() < 1e-9 * logdet.abs().max(1.0));

        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = spd.solve(&b).unwrap();
        let want = ch.solve(&nalgebra::DVector::from_vec(b));
        prop_assert!(common::max_abs_diff(&x, want.as_slice()) < 1e-10);

        let inv = dense.try_inverse().unwrap();
        let sel = spd.selected_inverse().unwrap();
        for (i, j, _) in a.iter() {
            let v = sel.get(i, j).expect("entry on the pattern");
            prop_assert!((v - inv[(i, j)]).abs() < 1e-10);
        }
    }

    #[test]
    fn orderings_are_permutations(n in 1usize..120, k in 0usize..4, seed in 0u64..10_000) {
        let a = random_spd(n, k, seed);
        for p in [
            nested_dissection(n, a.col_ptr(), a.row_idx()),
            reverse_cuthill_mckee(n, a.col_ptr(), a.row_idx()),
            minimum_degree(n, a.col_ptr(), a.row_idx()),
        ] {
            prop_assert!(is_permutation(&p, n));
            let pinv = invert(&p);
            prop_assert!((0..n).all(|i| pinv[p[i]] == i));
        }
    }
}
