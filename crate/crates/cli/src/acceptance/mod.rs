//! Reproduction of the acceptance criteria. Each criterion returns a list of
//! named checks; a criterion passes when all of its checks pass.

pub mod wirtinger;

use std::time::Instant;

use anyhow::Result;
use nalgebra::DMatrix;
use okalab_core::complex::{curvature_selection_check, levi_form, ComplexStructure, KAPPA_TOL};
use okalab_core::curvature::method_agreement;
use okalab_core::dist::{distance_hessian_numeric, project, sample_boundary_points, stencil_field, fd_step};
use okalab_core::grid::GridSpec;
use okalab_core::linalg::symmetric_eigen;
use okalab_core::potential::{
    plurisubharmonicity_scan, subharmonicity_scan, upper_laplace_parameter, DistancePotential, FnField, LadderSpec,
    PotentialKind, QuadratureSpec, ScanOptions, ScanReport,
};
use okalab_core::{boundary_frame, builtin_with, parse_expression, ImplicitDomain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
    /// The check is known to be unattainable as stated.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub expected_red: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    /// Every failing check is an expected red one.
    pub acceptable: bool,
    pub checks: Vec<Check>,
    pub within_budget: bool,
    #[serde(skip)]
    pub elapsed_s: f64,
    pub budget_s: f64,
}

impl CriterionOutcome {
    /// One line: id, verdict, runtime and the failing checks.
    pub fn line(&self) -> String {
        let verdict = match (self.passed, self.acceptable) {
            (true, _) => "PASS",
            (false, true) => "FAIL (expected)",
            (false, false) => "FAIL",
        };
        let mut s = format!(
            "criterion {:>2}: {verdict} [{:.1}s of {:.0}s] {}",
            self.id, self.elapsed_s, self.budget_s, self.title
        );
        let failed: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}={:.6e} (limit {:.1e})", c.name, c.value, c.limit))
            .collect();
        if !self.within_budget {
            s.push_str("; over budget");
        }
        if !failed.is_empty() {
            s.push_str(&format!("; failed: {}", failed.join(", ")));
        }
        s
    }
}

pub const CRITERIA: [u8; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

pub fn run_criterion(id: u8) -> Result<CriterionOutcome> {
    let start = Instant::now();
    let (title, budget, checks) = match id {
        1 => ("annulus counterexample for -log d", 30.0, criterion_1()?),
        2 => ("d^(2-m) subharmonic on annulus and ellipsoid", 60.0, criterion_2()?),
        3 => ("distance Hessian against principal curvatures", 60.0, criterion_3()?),
        4 => ("mean curvature by implicit, frame and graph routes", 30.0, criterion_4()?),
        5 => ("curvature selection on pseudoconvex boundaries", 60.0, criterion_5()?),
        6 => ("plurisubharmonicity of -log d", 120.0, criterion_6()?),
        7 => ("mean convexity through -d", 30.0, criterion_7()?),
        8 => ("ball-mean Laplacian calibration", 30.0, criterion_8()?),
        9 => ("family lower bounds for -log d and -d", 60.0, criterion_9()?),
        10 => ("Levi form against a Wirtinger oracle", 5.0, criterion_10()?),
        _ => anyhow::bail!("no criterion {id}; valid ids are 1 to 10"),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let within_budget = elapsed < budget;
    Ok(CriterionOutcome {
        id,
        title,
        passed: within_budget && checks.iter().all(|c| c.passed),
        acceptable: within_budget && checks.iter().all(|c| c.passed || c.expected_red),
        checks,
        within_budget,
        elapsed_s: elapsed,
        budget_s: budget,
    })
}

fn check(name: impl Into<String>, value: f64, limit: f64, passed: bool) -> Check {
    Check {
        name: name.into(),
        value,
        limit,
        passed,
        expected_red: false,
    }
}

fn at_most(name: &str, value: f64, limit: f64) -> Check {
    check(name, value, limit, value <= limit)
}

fn at_least(name: &str, value: f64, limit: f64) -> Check {
    check(name, value, limit, value >= limit)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|t| t * t).sum::<f64>().sqrt()
}

fn annulus3() -> Result<ImplicitDomain> {
    Ok(builtin_with("annulus", &[("m", 3.0), ("r", 0.1)])?)
}

/// Generic direction for radial grids.
pub const RADIAL_DIRECTION: [f64; 3] = [0.48, 0.6, 0.64];

/// Shells of the radial grid whose sign disagrees with the closed-form
/// prediction `margin < 0 ⟺ a < ‖x‖ < b`, ignoring shells within one
/// width of `a` or `b`.
pub fn shell_mismatches(report: &ScanReport, a: f64, b: f64, width: f64) -> Vec<f64> {
    report
        .points
        .iter()
        .filter_map(|p| {
            let rho = norm(&p.x);
            if (rho - a).abs() <= width || (rho - b).abs() <= width {
                return None;
            }
            let predicted = rho > a && rho < b;
            (predicted != (p.margin < 0.0)).then_some(rho)
        })
        .collect()
}

fn criterion_1() -> Result<Vec<Check>> {
    let dom = annulus3()?;
    let (m, r) = (3.0, 0.1);
    let shells = 200;
    let grid = GridSpec::radial(r, 1.0, shells, RADIAL_DIRECTION.to_vec());
    let rep = subharmonicity_scan(&dom, PotentialKind::NegLogD, &grid, &ScanOptions::default())?;
    let width = (1.0 - r) / shells as f64;
    let (a, b) = ((m - 1.0) * r / (m - 2.0), (1.0 + r) / 2.0);
    let mismatches = shell_mismatches(&rep, a, b, width);

    let x: Vec<f64> = RADIAL_DIRECTION.iter().map(|t| 0.3 * t).collect();
    let f = DistancePotential::new(&dom, PotentialKind::NegLogD);
    let est = upper_laplace_parameter(&f, &x, &LadderSpec::default(), &QuadratureSpec::default(), dom.diam())?;
    let closed = ((m - 1.0) * r - (m - 2.0) * 0.3) / (0.3 * (0.3 - r) * (0.3 - r));
    let rel = (est.value() - closed).abs() / closed.abs();
    Ok(vec![
        at_most("shells_with_wrong_sign", mismatches.len() as f64, 0.0),
        at_most("skipped_shells", rep.n_skips as f64, 0.0),
        at_most("rel_error_at_0.3", rel, 0.02),
    ])
}

fn criterion_2() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (name, dom) in [
        ("annulus", annulus3()?),
        ("ellipsoid", builtin_with("ellipsoid", &[("a1", 2.0), ("a2", 1.0), ("a3", 1.0)])?),
    ] {
        let grid = GridSpec::uniform(&dom, 15);
        let rep = subharmonicity_scan(&dom, PotentialKind::DPow, &grid, &ScanOptions::default())?;
        checks.push(at_least(&format!("{name}_points"), rep.points.len() as f64, 1000.0));
        checks.push(at_most(&format!("{name}_violations"), rep.n_violations as f64, 0.0));
    }
    Ok(checks)
}

/// Numerical distance Hessian against `Σ −κ/(1−dκ) e eᵀ` at `x`; returns the
/// eigenvalue error relative to the largest closed-form eigenvalue.
pub fn hessian_error(dom: &ImplicitDomain, x: &[f64]) -> Result<f64> {
    let numeric = distance_hessian_numeric(dom, x)?;
    let proj = project(dom, x)?;
    let foot = &proj.nearest()[0].w;
    let frame = boundary_frame(dom, foot)?;
    let m = dom.dim();
    let mut closed = DMatrix::zeros(m, m);
    for (k, e) in frame.kappas.iter().zip(frame.principal_vecs()) {
        closed += &e * e.transpose() * (-k / (1.0 - proj.d * k));
    }
    let a = symmetric_eigen(&numeric).values;
    let b = symmetric_eigen(&closed).values;
    let scale = b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let err = a.iter().zip(&b).fold(0.0f64, |s, (p, q)| s.max((p - q).abs()));
    Ok(err / scale)
}

fn criterion_3() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (name, dom) in [
        ("annulus", annulus3()?),
        ("ellipsoid", builtin_with("ellipsoid", &[("a1", 2.0), ("a2", 1.0), ("a3", 1.0)])?),
    ] {
        let (lo, hi) = dom.bbox();
        let (lo, hi) = (lo.to_vec(), hi.to_vec());
        let mut worst = 0.0f64;
        let mut count = 0;
        let mut attempts = 0;
        while count < 100 && attempts < 10_000 {
            attempts += 1;
            let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.gen_range(*a..*b)).collect();
            if !dom.contains(&x)? {
                continue;
            }
            let Ok(d) = project(&dom, &x).map(|p| p.d) else { continue };
            if stencil_field(&dom, &x, fd_step(d)).is_err() {
                continue;
            }
            worst = worst.max(hessian_error(&dom, &x)?);
            count += 1;
        }
        checks.push(at_least(&format!("{name}_points"), count as f64, 100.0));
        checks.push(at_most(&format!("{name}_max_rel_error"), worst, 1e-4));
    }
    Ok(checks)
}

pub fn catalog() -> Result<Vec<(&'static str, ImplicitDomain)>> {
    Ok(vec![
        ("ball", builtin_with("ball", &[("m", 3.0), ("R", 2.0)])?),
        ("annulus", annulus3()?),
        ("ellipsoid", builtin_with("ellipsoid", &[("a1", 2.0), ("a2", 1.0), ("a3", 1.0)])?),
        ("complex_egg", builtin_with("complex_egg", &[])?),
        ("powersum", builtin_with("powersum", &[("m", 3.0), ("r", 0.5), ("d", -2.0)])?),
    ])
}

fn criterion_4() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (i, (name, dom)) in catalog()?.into_iter().enumerate() {
        let pts = sample_boundary_points(&dom, 50, 40 + i as u64)?;
        let mut worst = 0.0f64;
        let mut sphere_err = 0.0f64;
        for w in &pts {
            let (_, ag) = method_agreement(&dom, w)?;
            worst = worst.max(ag.max_spread / ag.implicit.abs().max(1.0));
            if name == "ball" {
                for h in [ag.implicit, ag.frame, ag.graph] {
                    sphere_err = sphere_err.max((h - 0.5).abs());
                }
            }
        }
        checks.push(at_most(&format!("{name}_spread"), worst, 1e-6));
        if name == "ball" {
            checks.push(at_most("sphere_H_error", sphere_err, 1e-8));
        }
    }
    Ok(checks)
}

fn criterion_5() -> Result<Vec<Check>> {
    let cs = ComplexStructure::new(2);
    let mut checks = Vec::new();
    for (name, dom, seed) in [
        ("ball", builtin_with("ball", &[("m", 4.0)])?, 51),
        ("egg", builtin_with("complex_egg", &[])?, 52),
    ] {
        let pts = sample_boundary_points(&dom, 200, seed)?;
        let mut failures = 0;
        let mut worst_drop = f64::INFINITY;
        for q in &pts {
            let r = curvature_selection_check(&dom, q, &cs)?;
            worst_drop = worst_drop.min(r.drop_min_sum);
            if !r.holds || !r.strict_holds {
                failures += 1;
            }
        }
        checks.push(at_least(&format!("{name}_points"), pts.len() as f64, 200.0));
        checks.push(at_least(&format!("{name}_worst_drop_min_sum"), worst_drop, -KAPPA_TOL));
        checks.push(at_most(&format!("{name}_failures"), failures as f64, 0.0));
    }
    let ann = builtin_with("annulus", &[("m", 4.0), ("r", 0.1)])?;
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let mut detected = 0;
    let total = 50;
    for _ in 0..total {
        let g: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm(&g);
        let q: Vec<f64> = g.iter().map(|t| 0.1 * t / n).collect();
        let r = curvature_selection_check(&ann, &q, &cs)?;
        if r.drop_min_sum < -KAPPA_TOL {
            detected += 1;
        }
    }
    checks.push(at_least("annulus_inner_wall_violations", detected as f64, total as f64));
    Ok(checks)
}

fn criterion_6() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (name, dom) in [
        ("ball", builtin_with("ball", &[("m", 4.0)])?),
        ("egg", builtin_with("complex_egg", &[])?),
    ] {
        let rep = plurisubharmonicity_scan(&dom, &GridSpec::uniform(&dom, 10), 1e-4)?;
        checks.push(at_least(&format!("{name}_points"), rep.points.len() as f64, 500.0));
        checks.push(at_least(&format!("{name}_min_margin"), rep.min_margin, -1e-4));
    }
    let ann = builtin_with("annulus", &[("m", 4.0), ("r", 0.1)])?;
    let rep = plurisubharmonicity_scan(&ann, &GridSpec::uniform(&ann, 10), 1e-4)?;
    let shell: Vec<f64> = rep
        .points
        .iter()
        .filter(|p| {
            let rho = norm(&p.x);
            rho > 0.15 && rho < 0.55
        })
        .map(|p| p.margin)
        .collect();
    checks.push(at_least("annulus_shell_points", shell.len() as f64, 1.0));
    let max_shell = shell.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    checks.push(check("annulus_shell_max_margin", max_shell, 0.0, max_shell < 0.0));
    Ok(checks)
}

fn criterion_7() -> Result<Vec<Check>> {
    let ball = builtin_with("ball", &[("m", 3.0)])?;
    let rep = subharmonicity_scan(&ball, PotentialKind::NegD, &GridSpec::uniform(&ball, 11), &ScanOptions::default())?;
    let mut checks = vec![at_most("ball_violations", rep.n_violations as f64, 0.0)];

    let ann = annulus3()?;
    let grid = GridSpec::radial(0.1, 1.0, 200, RADIAL_DIRECTION.to_vec());
    let rep = subharmonicity_scan(&ann, PotentialKind::NegD, &grid, &ScanOptions::default())?;
    let mut worst = 0.0f64;
    let mut inner = 0;
    let mut positive = 0;
    for p in rep.points.iter().filter(|p| !p.flagged && norm(&p.x) < 0.55) {
        let rho = norm(&p.x);
        let want = -2.0 / rho;
        worst = worst.max((p.margin - want).abs() / want.abs());
        inner += 1;
        if p.margin >= 0.0 {
            positive += 1;
        }
    }
    checks.push(at_least("annulus_inner_shells", inner as f64, 50.0));
    checks.push(at_most("annulus_nonnegative_inner_shells", positive as f64, 0.0));
    checks.push(at_most("annulus_rel_error", worst, 0.02));
    checks.push(check("annulus_verdict_fails", rep.n_violations as f64, 1.0, !rep.verdict));
    Ok(checks)
}

fn criterion_8() -> Result<Vec<Check>> {
    let m = 3;
    let w = [2.5, 1.0, -0.5];
    let quad = QuadratureSpec::default();
    let ladder = LadderSpec::default();
    let sq = FnField::new(m, |y: &[f64]| y.iter().map(|t| t * t).sum());
    let kernel = FnField::new(m, move |y: &[f64]| {
        let r: f64 = y.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        r.powi(2 - m as i32)
    })
    .with_reach(move |y: &[f64]| y.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
    // Smooth but not polynomial, so the ladder carries a genuine r² term.
    let expo = FnField::new(m, |y: &[f64]| y[0].exp());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut sq_err, mut k_err, mut exp_err) = (0.0f64, 0.0f64, 0.0f64);
    let mut orders = Vec::new();
    for _ in 0..50 {
        let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e_sq = upper_laplace_parameter(&sq, &x, &ladder, &quad, 2.0)?;
        sq_err = sq_err.max((e_sq.value() - 2.0 * m as f64).abs() / (2.0 * m as f64));
        let e_k = upper_laplace_parameter(&kernel, &x, &ladder, &quad, 2.0)?;
        k_err = k_err.max(e_k.value().abs());
        for e in [&e_sq, &e_k] {
            // `None` means the quotients agree to noise: exact.
            if let Some(p) = e.observed_order {
                orders.push(p);
            }
        }
        let e = upper_laplace_parameter(&expo, &x, &ladder, &quad, 2.0)?;
        exp_err = exp_err.max((e.value() - x[0].exp()).abs() / x[0].exp());
        orders.push(e.observed_order.unwrap_or(f64::NEG_INFINITY));
    }
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(vec![
        at_most("quadratic_rel_error", sq_err, 1e-3),
        at_most("kernel_abs_error", k_err, 1e-3),
        at_most("exp_rel_error", exp_err, 1e-3),
        at_least("min_observed_order", min_order, 1.9),
        at_least("observed_orders", orders.len() as f64, 50.0),
    ])
}

fn criterion_9() -> Result<Vec<Check>> {
    let dom = annulus3()?;
    let grid = GridSpec::uniform(&dom, 10);
    let opts = ScanOptions::default();
    let log = subharmonicity_scan(&dom, PotentialKind::NegLogD, &grid, &opts)?;
    let neg_d = subharmonicity_scan(&dom, PotentialKind::NegD, &grid, &opts)?;
    let lb = log.family_bound.as_ref().expect("neg_log_d scans carry a family bound");
    let db = neg_d.family_bound.as_ref().expect("neg_d scans carry a family bound");
    Ok(vec![
        at_most("skipped", (log.n_skips + neg_d.n_skips) as f64, 0.0),
        // The floor -(m-2)/d is not a lower bound; see `neg_log_d_vs_-(m-2)/d^2`.
        Check {
            expected_red: true,
            ..at_least("neg_log_d_vs_-(m-2)/d", lb.min_margin, -1e-3)
        },
        at_least("neg_d_vs_-(m-1)/d", db.min_margin, -1e-3),
        at_least(
            "neg_log_d_vs_-(m-2)/d^2",
            lb.corrected_min_margin.unwrap_or(f64::NEG_INFINITY),
            -1e-3,
        ),
    ])
}

fn criterion_10() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    let mut worst_im = 0.0f64;
    for i in 0..100 {
        let n = 1 + i % 3;
        let poly = wirtinger::RealPoly::random(n, 8, 4, &mut rng);
        let expr = parse_expression(&poly.to_source(), 2 * n)?;
        let x: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nv: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cs = ComplexStructure::new(n);
        let jet = okalab_core::eval_jet2(&expr, &x)?;
        let ours = levi_form(&jet, &nv, &cs)?;
        let oracle = poly.to_complex().levi(&x, &nv);
        worst = worst.max((ours - oracle.re).abs());
        worst_im = worst_im.max(oracle.im.abs());
    }
    Ok(vec![
        at_most("max_abs_difference", worst, 1e-10),
        at_most("oracle_imaginary_part", worst_im, 1e-10),
    ])
}
