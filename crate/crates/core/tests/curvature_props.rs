use nalgebra::DMatrix;
use okalab_core::curvature::{method_agreement, sherman_morrison_inverse};
use okalab_core::dist::{distance_hessian_closed_form, distance_hessian_numeric, sample_boundary_points};
use okalab_core::linalg::symmetric_eigen;
use okalab_core::{boundary_frame, builtin_with};
use proptest::prelude::*;

#[test]
fn three_routes_agree_on_ellipsoid() {
    let dom = builtin_with("ellipsoid", &[("a", 2.0), ("b", 1.0), ("c", 0.6)]).unwrap();
    for w in sample_boundary_points(&dom, 40, 11).unwrap() {
        let (frame, agree) = method_agreement(&dom, &w).unwrap();
        assert!(agree.max_spread < 1e-8 * frame.mean_curv.abs().max(1.0), "{w:?}: {agree:?}");
        for (a, b) in frame.kappas.iter().zip(&agree.graph_kappas) {
            assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
        }
    }
}

#[test]
fn curvatures_scale_inversely() {
    let dom = builtin_with("ellipsoid", &[("a", 2.0), ("b", 1.0), ("c", 0.6)]).unwrap();
    for rho in [0.5, 3.0] {
        let big = dom.scaled(rho).unwrap();
        for w in sample_boundary_points(&dom, 10, 5).unwrap() {
            let k = boundary_frame(&dom, &w).unwrap().kappas;
            let ws: Vec<f64> = w.iter().map(|v| v * rho).collect();
            let ks = boundary_frame(&big, &ws).unwrap().kappas;
            for (a, b) in k.iter().zip(&ks) {
                assert!((a / rho - b).abs() < 1e-9 * a.abs().max(1.0));
            }
        }
    }
}

#[test]
fn negation_flips_signs() {
    let dom = builtin_with("ellipsoid", &[("a", 2.0), ("b", 1.0), ("c", 0.6)]).unwrap();
    let neg = dom.negated();
    for w in sample_boundary_points(&dom, 10, 6).unwrap() {
        let f = boundary_frame(&dom, &w).unwrap();
        let g = boundary_frame(&neg, &w).unwrap();
        assert!((f.mean_curv + g.mean_curv).abs() < 1e-12 * f.mean_curv.abs().max(1.0));
        let mut flipped: Vec<f64> = f.kappas.iter().map(|k| -k).collect();
        flipped.reverse();
        for (a, b) in flipped.iter().zip(&g.kappas) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn numeric_distance_hessian_matches_closed_form() {
    let dom = builtin_with("ellipsoid", &[("a", 2.0), ("b", 1.0), ("c", 0.6)]).unwrap();
    for w in sample_boundary_points(&dom, 6, 9).unwrap() {
        let f = boundary_frame(&dom, &w).unwrap();
        let t = 0.05;
        let x: Vec<f64> = w.iter().zip(&f.nu).map(|(a, n)| a + t * n).collect();
        let h = distance_hessian_numeric(&dom, &x).unwrap();
        let mut exact = distance_hessian_closed_form(&f.kappas, t).unwrap();
        // rotate the closed form out of principal coordinates
        let mut basis = DMatrix::zeros(3, 3);
        for (k, v) in f.principal_vecs().iter().enumerate() {
            basis.set_column(k, v);
        }
        basis.set_column(2, &f.nu_vec());
        exact = &basis * exact * basis.transpose();
        let err = (&h - &exact).abs().max();
        assert!(err < 1e-5 * exact.abs().max().max(1.0), "err {err}");
    }
}

proptest! {
    #[test]
    fn jacobi_agrees_with_nalgebra(entries in prop::collection::vec(-5.0f64..5.0, 25)) {
        let a = DMatrix::from_row_slice(5, 5, &entries);
        let s = (&a + a.transpose()) * 0.5;
        let ours = symmetric_eigen(&s);
        let mut theirs: Vec<f64> = s.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        let scale = s.abs().max().max(1.0);
        for (a, b) in ours.values.iter().zip(&theirs) {
            prop_assert!((a - b).abs() < 1e-12 * scale * 10.0);
        }
        let resid = &s * &ours.vectors - &ours.vectors * DMatrix::from_diagonal(&ours.values.clone().into());
        prop_assert!(resid.abs().max() < 1e-11 * scale);
        let ortho = ours.vectors.transpose() * &ours.vectors - DMatrix::identity(5, 5);
        prop_assert!(ortho.abs().max() < 1e-12);
    }

    #[test]
    fn sherman_morrison_inverts(v in prop::collection::vec(-3.0f64..3.0, 4)) {
        let v = nalgebra::DVector::from_vec(v);
        let a = DMatrix::identity(4, 4) + &v * v.transpose();
        let prod = a * sherman_morrison_inverse(&v);
        prop_assert!((prod - DMatrix::identity(4, 4)).abs().max() < 1e-12);
    }
}
