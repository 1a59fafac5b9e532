mod common;

use proptest::prelude::*;

use spdest::data_io::{load_dataset, GeoPoint, Schema, SpatialPoint};
use spdest::mesh::{build_mesh, convex_hull, distance_to_convex, make_projector, MeshConfig};
use spdest::model::{ModelKind, ModelSpec};
use spdest::synthetic::{random_sites, simulate, site_lattice, CovariateGenerator, SimulationDesign, TruthRecord};

fn full_st_truth() -> TruthRecord {
    TruthRecord {
        kind: ModelKind::FullSt,
        beta: vec![270.0, 3.0, -2.0, 5.0],
        sigma_eps: 2.0,
        range_r: Some(500.0),
        sigma_omega: Some(4.0),
        phi: Some(0.75),
        sigma_f: None,
        phi_f: None,
        latent: Vec::new(),
        seed: 0,
    }
}

fn spec() -> ModelSpec {
    let mut spec = ModelSpec::new(ModelKind::FullSt);
    spec.mesh_cfg = MeshConfig {
        max_edge_inner: 200.0,
        max_edge_outer: 400.0,
        extension: 300.0,
        cutoff: 30.0,
    };
    spec
}

fn design(n_times: usize) -> SimulationDesign {
    SimulationDesign {
        sites: site_lattice((35.0, 42.0), (5.0, 12.0), 5, 4),
        n_times,
        year0: 2019,
        covariates: CovariateGenerator::default(),
    }
}

#[test]
fn simulated_table_round_trips_through_csv() {
    let sim = simulate(&spec(), &full_st_truth(), &design(14), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    sim.dataset.write_csv(&path).unwrap();
    let back = load_dataset(&path, &Schema::default()).unwrap();

    assert_eq!(back.n_sites(), 20);
    assert_eq!(back.n_times, 14);
    assert_eq!(back.n_rows(), sim.dataset.n_rows());
    assert_eq!(back.year0, 2019);
    assert_eq!(back.names, vec!["x1", "x2", "sheet"]);
    assert_eq!(back.y, sim.dataset.y);
    assert_eq!(back.z, sim.dataset.z);
    assert_eq!(back.time, sim.dataset.time);
    assert!(common::max_abs_diff(
        &back.points.iter().flat_map(|p| [p.x, p.y]).collect::<Vec<_>>(),
        &sim.dataset.points.iter().flat_map(|p| [p.x, p.y]).collect::<Vec<_>>()
    ) < 1e-9);
}

#[test]
fn simulation_is_reproducible_per_seed() {
    let a = simulate(&spec(), &full_st_truth(), &design(6), 11).unwrap();
    let b = simulate(&spec(), &full_st_truth(), &design(6), 11).unwrap();
    let c = simulate(&spec(), &full_st_truth(), &design(6), 12).unwrap();
    assert_eq!(a.dataset.y, b.dataset.y);
    assert_eq!(a.truth.latent, b.truth.latent);
    assert_ne!(a.dataset.y, c.dataset.y);
    assert_eq!(a.truth.latent.len(), a.mesh.n_vertices() * 6);
}

#[test]
fn simulated_field_has_ar1_dependence() {
    let t_len = 300;
    let sim = simulate(&spec(), &full_st_truth(), &design(t_len), 5).unwrap();
    let m = sim.mesh.n_vertices();
    let x = &sim.truth.latent;
    let (mut num, mut den) = (0.0, 0.0);
    for v in 0..m {
        for t in 1..t_len {
            num += x[t * m + v] * x[(t - 1) * m + v];
            den += x[(t - 1) * m + v] * x[(t - 1) * m + v];
        }
    }
    let phi_hat = num / den;
    assert!((phi_hat - 0.75).abs() < 0.05, "{phi_hat}");
}

#[test]
fn truth_must_match_covariates() {
    let mut t = full_st_truth();
    t.beta.pop();
    assert!(simulate(&spec(), &t, &design(3), 1).is_err());
    let mut t = full_st_truth();
    t.phi = Some(1.2);
    assert!(simulate(&spec(), &t, &design(3), 1).is_err());
}

#[test]
fn mesh_covers_sites_and_respects_cutoff() {
    let sites = random_sites((33.0, 48.0), (3.0, 15.0), 40, 9);
    let reference = GeoPoint { lon: 40.5, lat: 9.0 };
    let pts = spdest::data_io::project_coordinates(&sites, reference);
    let cfg = spec().mesh_cfg;
    let mesh = build_mesh(&pts, &cfg).unwrap();
    assert!(mesh.is_connected());
    for p in &pts {
        assert!(mesh.locate(*p).is_some());
    }
    for t in 0..mesh.n_triangles() {
        assert!(mesh.signed_area(t) > 0.0);
    }
    let hull = convex_hull(&pts);
    let inside: Vec<SpatialPoint> = mesh
        .vertices
        .iter()
        .copied()
        .filter(|p| distance_to_convex(&hull, *p) == 0.0)
        .collect();
    assert!(inside.len() >= 20);
    for (i, a) in inside.iter().enumerate() {
        for b in &inside[i + 1..] {
            assert!(a.dist(b) >= cfg.cutoff * 0.999);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projector_rows_are_convex_weights(px in 0.0f64..6.0, py in 0.0f64..4.0) {
        let mesh = common::lattice_mesh(7, 5, 1.0);
        let proj = make_projector::<f64>(&mesh, &[SpatialPoint::new(px, py)]).unwrap();
        let row = &proj.rows[0];
        let sum: f64 = row.iter().map(|&(_, w)| w).sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(row.iter().all(|&(_, w)| w >= -1e-12));
        let x: f64 = row.iter().map(|&(v, w)| w * mesh.vertices[v].x).sum();
        let y: f64 = row.iter().map(|&(v, w)| w * mesh.vertices[v].y).sum();
        prop_assert!((x - px).abs() < 1e-9 && (y - py).abs() < 1e-9);
    }

    #[test]
    fn projection_round_trips(lon in 30.0f64..50.0, lat in 0.0f64..18.0) {
        let reference = GeoPoint { lon: 40.0, lat: 9.0 };
        let p = spdest::data_io::project_coordinates(&[GeoPoint { lon, lat }], reference)[0];
        let g = spdest::data_io::unproject(p, reference);
        prop_assert!((g.lon - lon).abs() < 1e-9 && (g.lat - lat).abs() < 1e-9);
    }
}
