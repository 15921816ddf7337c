use okalab_core::{eval_jet2, parse_expression};
use proptest::prelude::*;

const FIELDS: &[&str] = &[
    "x1^2 + x2^2 + x3^2 - 1",
    "x1*x2*x3 + exp(x1) - log(2 + x2^2)",
    "sqrt(1 + x1^2 + x2^2) / (2 + x3^2)",
    "(x1 - 0.5)^3 - 2*x2*x3^2 + 4",
];

fn fields() -> impl Iterator<Item = &'static str> {
    FIELDS.iter().copied()
}

fn central_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut q = x.to_vec();
            p[i] += h;
            q[i] -= h;
            (f(&p) - f(&q)) / (2.0 * h)
        })
        .collect()
}

proptest! {
    #[test]
    fn jet_matches_finite_differences(x in prop::collection::vec(-1.0f64..1.0, 3)) {
        for src in fields() {
            let e = parse_expression(src, 3).unwrap();
            let jet = eval_jet2(&e, &x).unwrap();
            let f = |y: &[f64]| e.value(y).unwrap();
            let h = 1e-4;
            let g = central_grad(&f, &x, h);
            for i in 0..3 {
                let scale = 1.0 + jet.gradient[i].abs();
                prop_assert!((g[i] - jet.gradient[i]).abs() < 1e-6 * scale, "{src} grad {i}");
                let gi = |y: &[f64]| eval_jet2(&e, y).unwrap().gradient[i];
                let hrow = central_grad(&gi, &x, h);
                for j in 0..3 {
                    let scale = 1.0 + jet.hessian[(i, j)].abs();
                    prop_assert!((hrow[j] - jet.hessian[(i, j)]).abs() < 1e-6 * scale, "{src} hess {i}{j}");
                }
            }
            prop_assert!((jet.value - f(&x)).abs() <= 1e-15 * (1.0 + jet.value.abs()));
        }
    }

    #[test]
    fn evaluation_is_deterministic(x in prop::collection::vec(-1.0f64..1.0, 3)) {
        for src in fields() {
            let a = parse_expression(src, 3).unwrap();
            let b = parse_expression(src, 3).unwrap();
            let ja = eval_jet2(&a, &x).unwrap();
            let jb = eval_jet2(&b, &x).unwrap();
            prop_assert_eq!(ja.value.to_bits(), jb.value.to_bits());
            prop_assert!(ja == jb);
        }
    }

    #[test]
    fn display_round_trips(x in prop::collection::vec(-1.0f64..1.0, 3)) {
        for src in fields() {
            let e = parse_expression(src, 3).unwrap();
            let again = parse_expression(&e.to_string(), 3).unwrap();
            prop_assert!(e == again, "{src} -> {e}");
            prop_assert_eq!(e.value(&x).unwrap().to_bits(), again.value(&x).unwrap().to_bits());
        }
    }
}

#[test]
fn domain_errors_are_reported() {
    let e = parse_expression("log(x1)", 1).unwrap();
    assert!(eval_jet2(&e, &[-1.0]).is_err());
    assert!(eval_jet2(&e, &[0.0]).is_err());
    let e = parse_expression("1/x1", 1).unwrap();
    assert!(eval_jet2(&e, &[0.0]).is_err());
    assert!(parse_expression("x4", 3).is_err());
    assert!(parse_expression("x1 +", 1).is_err());
    assert!(parse_expression("foo(x1)", 1).is_err());
}
