use proptest::prelude::*;

use spdest::priors::{
    log_prior, log_prior_ar1, log_prior_noise, log_prior_sigma, log_prior_spatial, phi_from_internal, phi_to_internal,
    HyperParams, ModelKind, NaturalHyper, PriorConfig,
};

/// Trapezoidal rule on `n` intervals of `[a, b]`.
fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|k| f(a + k as f64 * h)).sum();
    h * (inner + 0.5 * (f(a) + f(b)))
}

#[test]
fn spatial_prior_integrates_to_one_and_matches_calibration() {
    let cfg = PriorConfig::default();
    let (lr0, lr1) = (cfg.range0.ln() - 12.0, cfg.range0.ln() + 25.0);
    let (ls0, ls1) = (-30.0, 6.0);
    // separable: integrate the product by nested rules on a coarse outer grid
    let total = trapezoid(
        |lr| trapezoid(|ls| log_prior_spatial(lr, ls, &cfg).exp(), ls0, ls1, 4000),
        lr0,
        lr1,
        4000,
    );
    assert!((total - 1.0).abs() < 1e-4, "{total}");

    let range_mass = |upper: f64| {
        trapezoid(
            |lr| trapezoid(|ls| log_prior_spatial(lr, ls, &cfg).exp(), ls0, ls1, 2000),
            lr0,
            upper,
            4000,
        )
    };
    let p_small = range_mass(cfg.range0.ln());
    assert!((p_small - cfg.alpha_range).abs() < 1e-4, "{p_small}");
}

#[test]
fn sigma_tail_matches_calibration() {
    let cfg = PriorConfig::default();
    let tail = trapezoid(|ls| log_prior_sigma(ls, &cfg).exp(), cfg.sigma0.ln(), 8.0, 20_000);
    assert!((tail - cfg.alpha_sigma).abs() < 1e-6, "{tail}");
}

#[test]
fn ar1_priors_integrate_and_calibrate() {
    for toward_one in [false, true] {
        let cfg = PriorConfig {
            phi_toward_one: toward_one,
            phi_u: 0.5,
            phi_alpha: if toward_one { 0.9 } else { 0.5 },
            ..PriorConfig::default()
        };
        cfg.validate().unwrap();
        let f = |t: f64| log_prior_ar1(t, &cfg).exp();
        // the symmetric prior has a heavy tail in θ
        let (edge, n) = if toward_one { (60.0, 100_000) } else { (400.0, 1_000_000) };
        let total = trapezoid(f, -edge, edge, n);
        assert!((total - 1.0).abs() < 1e-5, "toward_one {toward_one}: {total}");
        let cut = phi_to_internal(cfg.phi_u);
        let tail = if toward_one {
            trapezoid(f, cut, edge, n / 2)
        } else {
            2.0 * trapezoid(f, cut, edge, n / 2)
        };
        assert!((tail - cfg.phi_alpha).abs() < 1e-5, "toward_one {toward_one}: {tail}");
    }
}

#[test]
fn ar1_prior_is_symmetric_and_finite_at_zero() {
    let cfg = PriorConfig::default();
    for &t in &[1e-12, 1e-6, 0.1, 1.0, 5.0, 30.0] {
        let a = log_prior_ar1(t, &cfg);
        assert!(a.is_finite());
        assert!((a - log_prior_ar1(-t, &cfg)).abs() < 1e-10);
    }
    assert!(log_prior_ar1(0.0, &cfg).is_finite());
    let near = log_prior_ar1(1e-7, &cfg);
    assert!((near - log_prior_ar1(0.0, &cfg)).abs() < 1e-5);
}

#[test]
fn noise_prior_integrates_to_one() {
    let cfg = PriorConfig {
        noise_shape: 2.0,
        noise_rate: 0.5,
        ..PriorConfig::default()
    };
    let total = trapezoid(|lt| log_prior_noise(lt, &cfg).exp(), -30.0, 8.0, 50_000);
    assert!((total - 1.0).abs() < 1e-6, "{total}");
}

#[test]
fn joint_prior_adds_components() {
    let cfg = PriorConfig::default();
    let h = HyperParams::from_natural(
        ModelKind::FullSt,
        &NaturalHyper {
            tau_eps: 4.0,
            range_r: Some(900.0),
            sigma_omega: Some(2.0),
            phi: Some(0.7),
            ..NaturalHyper::default()
        },
    )
    .unwrap();
    let t = &h.theta;
    let want = log_prior_noise(t[0], &cfg) + log_prior_spatial(t[1], t[2], &cfg) + log_prior_ar1(t[3], &cfg);
    assert!((log_prior(&h, &cfg) - want).abs() < 1e-12);
}

#[test]
fn invalid_calibrations_are_rejected() {
    let bad = PriorConfig {
        alpha_range: 1.5,
        ..PriorConfig::default()
    };
    assert!(bad.validate().is_err());
    let unattainable = PriorConfig {
        phi_toward_one: true,
        phi_u: 0.5,
        phi_alpha: 0.3,
        ..PriorConfig::default()
    };
    assert!(unattainable.validate().is_err());
}

proptest! {
    #[test]
    fn phi_transform_round_trips(phi in -0.999f64..0.999) {
        let t = phi_to_internal(phi);
        prop_assert!((phi_from_internal(t) - phi).abs() < 1e-12);
    }

    #[test]
    fn natural_round_trip(tau in 0.01f64..100.0, r in 1.0f64..5000.0, s in 0.01f64..50.0, phi in -0.99f64..0.99) {
        let nat = NaturalHyper {
            tau_eps: tau,
            range_r: Some(r),
            sigma_omega: Some(s),
            phi: Some(phi),
            ..NaturalHyper::default()
        };
        let back = HyperParams::from_natural(ModelKind::FullSt, &nat).unwrap().natural();
        prop_assert!((back.tau_eps / tau - 1.0).abs() < 1e-10);
        prop_assert!((back.range_r.unwrap() / r - 1.0).abs() < 1e-10);
        prop_assert!((back.sigma_omega.unwrap() / s - 1.0).abs() < 1e-10);
        prop_assert!((back.phi.unwrap() - phi).abs() < 1e-10);
    }
}
