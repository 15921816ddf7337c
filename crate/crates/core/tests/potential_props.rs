use okalab_core::builtin_with;
use okalab_core::complex::{complex_tangent_real_part, pseudoconvexity_check, ComplexStructure};
use okalab_core::dist::sample_boundary_points;
use okalab_core::potential::{
    jensen_lower_bound_neg_log, laplacian_neg_log_distance_closed, laplacian_power_distance_closed,
    power_distance_floor, upper_laplace_parameter, DistancePotential, FnField, LadderSpec, PotentialKind,
    QuadratureSpec,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn closed_forms_dominate_jensen_floors(
        kappas in prop::collection::vec(-3.0f64..3.0, 1..6),
        t in 0.0f64..1.0,
    ) {
        let kmax = kappas.iter().copied().fold(0.0f64, f64::max);
        // stay strictly before the first focal point
        let d = 0.01 + t * if kmax > 0.0 { 0.9 / kmax } else { 1.0 };
        prop_assume!(kappas.iter().all(|k| 1.0 - d * k > 1e-3));
        let m = kappas.len() + 1;
        let sum: f64 = kappas.iter().sum();
        let lap = laplacian_neg_log_distance_closed(d, &kappas).unwrap();
        let floor = jensen_lower_bound_neg_log(d, sum, m).unwrap();
        prop_assert!(lap >= floor - 1e-9 * lap.abs().max(1.0), "{lap} < {floor}");
        if m > 2 {
            let lap = laplacian_power_distance_closed(d, &kappas, m).unwrap();
            let floor = power_distance_floor(d, sum, m).unwrap();
            prop_assert!(lap >= floor - 1e-9 * lap.abs().max(1.0));
            prop_assert!(floor > 0.0);
        }
    }
}

#[test]
fn focal_points_are_rejected() {
    assert!(laplacian_neg_log_distance_closed(1.0, &[1.0, 0.5]).is_err());
    assert!(laplacian_power_distance_closed(0.5, &[3.0], 2).is_err());
    assert!(jensen_lower_bound_neg_log(1.0, 2.0, 3).is_err());
}

fn estimate(u: &FnField, x: &[f64]) -> okalab_core::potential::LaplacianEstimate {
    upper_laplace_parameter(u, x, &LadderSpec::default(), &QuadratureSpec::default(), 4.0).unwrap()
}

#[test]
fn estimator_is_exact_on_quadratics() {
    for m in 2..=5 {
        let u = FnField::new(m, |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() + 3.0 * x[0] * x[1]);
        let x = vec![0.3; m];
        let e = estimate(&u, &x);
        assert!((e.value() - 2.0 * m as f64).abs() < 1e-8 * 2.0 * m as f64, "m={m}: {}", e.value());
    }
}

#[test]
fn estimator_on_negative_distance_to_a_point() {
    // Δ(−‖x − w‖) = −(m−1)/‖x − w‖
    for m in 2..=4 {
        let w = vec![1.0; m];
        let u = FnField::new(m, move |x: &[f64]| -x.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .with_reach(|x: &[f64]| x.iter().map(|v| (v - 1.0) * (v - 1.0)).sum::<f64>().sqrt());
        let x = vec![0.0; m];
        let r = (m as f64).sqrt();
        let e = estimate(&u, &x);
        let exact = -(m as f64 - 1.0) / r;
        assert!((e.value() - exact).abs() < 1e-6 * exact.abs(), "m={m}: {} vs {exact}", e.value());
    }
}

#[test]
fn estimator_matches_closed_form_in_the_ball() {
    let dom = builtin_with("ball", &[("m", 3.0), ("R", 1.0)]).unwrap();
    for (kind, exact) in [
        (PotentialKind::NegLogD, laplacian_neg_log_distance_closed(0.4, &[1.0, 1.0]).unwrap()),
        (PotentialKind::DPow, laplacian_power_distance_closed(0.4, &[1.0, 1.0], 3).unwrap()),
    ] {
        let u = DistancePotential::new(&dom, kind);
        let e = upper_laplace_parameter(&u, &[0.36, 0.0, 0.48], &LadderSpec::default(), &QuadratureSpec::default(), dom.diam()).unwrap();
        assert!((e.value() - exact).abs() < 1e-6 * exact.abs(), "{kind:?}: {} vs {exact}", e.value());
    }
}

#[test]
fn powersum_is_the_annulus() {
    let ps = builtin_with("powersum", &[("m", 3.0), ("r", 0.5), ("d", -2.0)]).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    while checked < 1000 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.45..1.45)).collect();
        let rho = norm(&x);
        if rho >= 1.45 || (rho - 0.5).abs() < 1e-9 || (rho - 1.0).abs() < 1e-9 {
            continue;
        }
        assert_eq!(ps.contains(&x).unwrap(), rho > 0.5 && rho < 1.0, "{x:?}");
        checked += 1;
    }
}

#[test]
fn complex_tangent_splitting_dimensions() {
    for (name, params, n) in [
        ("ball", vec![("m", 4.0)], 2),
        ("ball", vec![("m", 6.0)], 3),
        ("complex_egg", vec![("n", 2.0)], 2),
        ("complex_egg", vec![("n", 3.0)], 3),
    ] {
        let dom = builtin_with(name, &params).unwrap();
        let cs = ComplexStructure::new(n);
        for q in sample_boundary_points(&dom, 8, 2).unwrap() {
            let s = complex_tangent_real_part(&dom, &q, &cs).unwrap();
            assert_eq!(s.basis.len(), n - 1);
            assert!(s.defect < 1e-12);
            let l = pseudoconvexity_check(&dom, &q, &cs).unwrap();
            assert!(l.pseudoconvex && l.hermitian_defect < 1e-12);
        }
    }
}

#[test]
fn closed_form_worked_values() {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-10 * b.abs().max(1.0);
    // ball in ℝ³ at ‖x‖ = 0.5
    assert!(close(laplacian_neg_log_distance_closed(0.5, &[1.0, 1.0]).unwrap(), 12.0));
    // annulus in ℝ³ at ‖x‖ = 0.3
    assert!(close(laplacian_neg_log_distance_closed(0.2, &[-10.0, -10.0]).unwrap(), -25.0 / 3.0));
    assert!(close(jensen_lower_bound_neg_log(0.2, -20.0, 3).unwrap(), -25.0 / 3.0));
    assert!(close(laplacian_power_distance_closed(0.5, &[1.0, 1.0], 3).unwrap(), 32.0));
    // 250 − 166.67, tight against the Jensen floor for equal curvatures
    assert!(close(laplacian_power_distance_closed(0.2, &[-10.0, -10.0], 3).unwrap(), 250.0 / 3.0));
    assert!(close(power_distance_floor(0.2, -20.0, 3).unwrap(), 250.0 / 3.0));
    for m in 2..6 {
        assert!(close(jensen_lower_bound_neg_log(0.4, 0.0, m).unwrap(), 1.0 / 0.16));
    }
}
