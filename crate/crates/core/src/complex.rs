//! Complex structure on `ℝ^{2n}`, Levi forms and the curvature selection
//! checks for domains in `ℂⁿ`.
//!
//! Coordinates are ordered `(x1, y1, …, xn, yn)` with `z_j = x_j + i·y_j`,
//! so `J(∂/∂x_j) = ∂/∂y_j` and `J(∂/∂y_j) = −∂/∂x_j`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::domain::{boundary_frame, BoundaryFrame, ImplicitDomain};
use crate::error::{Error, Result};
use crate::expr::Jet2;
use crate::linalg::{gram_schmidt, hermitian_min_eigenvalue, orthonormality_defect, symmetric_eigen};

/// Tolerance on Levi eigenvalues when classifying a boundary point.
pub const LEVI_TOL: f64 = 1e-7;
/// Tolerance on principal-curvature sums.
pub const KAPPA_TOL: f64 = 1e-7;
/// Levi eigenvalue above which the selected curvature sum must be positive.
pub const STRICT_LEVI: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ComplexStructure {
    pub n: usize,
}

impl ComplexStructure {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    /// Structure on `ℝ^m`; `m` must be even.
    pub fn for_dim(m: usize) -> Result<Self> {
        if m == 0 || m % 2 == 1 {
            return Err(Error::OddDimension(m));
        }
        Ok(Self { n: m / 2 })
    }

    pub fn real_dim(&self) -> usize {
        2 * self.n
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for j in 0..self.n {
            out[2 * j] = -v[2 * j + 1];
            out[2 * j + 1] = v[2 * j];
        }
        out
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let m = self.real_dim();
        let mut j = DMatrix::zeros(m, m);
        for k in 0..self.n {
            j[(2 * k + 1, 2 * k)] = 1.0;
            j[(2 * k, 2 * k + 1)] = -1.0;
        }
        j
    }
}

pub fn apply_j(cs: &ComplexStructure, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != cs.real_dim() {
        return Err(Error::DimensionMismatch {
            expected: cs.real_dim(),
            got: v.len(),
        });
    }
    Ok(cs.apply(&DVector::from_column_slice(v)).iter().copied().collect())
}

/// `¼(𝓗(N,N) + 𝓗(JN,JN))`, the Levi form of the jet's function on the
/// `(1,0)` vector whose real part is `N`.
pub fn levi_form(jet: &Jet2, n: &[f64], cs: &ComplexStructure) -> Result<f64> {
    if jet.dim() != cs.real_dim() || n.len() != cs.real_dim() {
        return Err(Error::DimensionMismatch {
            expected: cs.real_dim(),
            got: if jet.dim() != cs.real_dim() { jet.dim() } else { n.len() },
        });
    }
    let v = DVector::from_column_slice(n);
    Ok(levi_bilinear(&jet.hessian, &v, &v, cs))
}

/// Symmetric part `S(a,b) = ¼(𝓗(a,b) + 𝓗(Ja,Jb))` of the Levi form.
pub fn levi_bilinear(h: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>, cs: &ComplexStructure) -> f64 {
    let ja = cs.apply(a);
    let jb = cs.apply(b);
    0.25 * (a.dot(&(h * b)) + ja.dot(&(h * jb)))
}

/// Splitting of `ℝ^{2n}` at a boundary point: `X = −Jν`, `JX = ν`, and an
/// orthonormal `U` with `U ⊥ JU` spanning the complex tangent space together
/// with `JU`.
#[derive(Debug, Clone, Serialize)]
pub struct ComplexSplitting {
    pub q: Vec<f64>,
    pub x: Vec<f64>,
    pub jx: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    pub j_basis: Vec<Vec<f64>>,
    /// Dimension of `span{∂/∂x_j} ∩ {ν, Jν}^⊥`.
    pub standard_real_part_dim: usize,
    /// Orthonormality defect of `{U, JU, X, JX}`.
    pub defect: f64,
}

impl ComplexSplitting {
    pub fn basis_vecs(&self) -> Vec<DVector<f64>> {
        self.basis.iter().map(|v| DVector::from_column_slice(v)).collect()
    }
}

pub fn complex_tangent_real_part(dom: &ImplicitDomain, q: &[f64], cs: &ComplexStructure) -> Result<ComplexSplitting> {
    let frame = boundary_frame(dom, q)?;
    splitting_from_frame(&frame, cs)
}

/// Builds `U` greedily: at each step the coordinate axis with the largest
/// residual against `{ν, Jν}` and the vectors chosen so far (with their
/// `J`-images) is orthonormalized and added.
pub fn splitting_from_frame(frame: &BoundaryFrame, cs: &ComplexStructure) -> Result<ComplexSplitting> {
    let m = cs.real_dim();
    if frame.w.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: frame.w.len(),
        });
    }
    let nu = frame.nu_vec();
    let jnu = cs.apply(&nu);
    let x = -&jnu;
    let mut against = vec![nu.clone(), x.clone()];
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for _ in 1..cs.n {
        let mut best: Option<DVector<f64>> = None;
        let mut best_norm = 0.0;
        for k in 0..m {
            let mut e = DVector::zeros(m);
            e[k] = 1.0;
            let r = project_out(e, &against);
            let nr = r.norm();
            if nr > best_norm + 1e-12 {
                best_norm = nr;
                best = Some(r);
            }
        }
        let Some(r) = best.filter(|_| best_norm > 1e-6) else {
            return Err(Error::CriticalBoundaryPoint { grad_norm: best_norm });
        };
        let u = gram_schmidt([r], &against, 1e-9)
            .pop()
            .ok_or(Error::CriticalBoundaryPoint { grad_norm: best_norm })?;
        let ju = cs.apply(&u);
        against.push(u.clone());
        against.push(ju);
        basis.push(u);
    }
    let j_basis: Vec<DVector<f64>> = basis.iter().map(|u| cs.apply(u)).collect();
    let mut all = basis.clone();
    all.extend(j_basis.iter().cloned());
    all.push(x.clone());
    all.push(nu.clone());
    let defect = orthonormality_defect(&all);

    let mut rows = DMatrix::zeros(2, cs.n);
    for j in 0..cs.n {
        rows[(0, j)] = nu[2 * j];
        rows[(1, j)] = jnu[2 * j];
    }
    let gram = &rows * rows.transpose();
    let rank = symmetric_eigen(&gram).values.iter().filter(|&&v| v > 1e-18).count();

    Ok(ComplexSplitting {
        q: frame.w.clone(),
        x: x.iter().copied().collect(),
        jx: nu.iter().copied().collect(),
        basis: basis.iter().map(|v| v.iter().copied().collect()).collect(),
        j_basis: j_basis.iter().map(|v| v.iter().copied().collect()).collect(),
        standard_real_part_dim: cs.n - rank,
        defect,
    })
}

fn project_out(mut v: DVector<f64>, against: &[DVector<f64>]) -> DVector<f64> {
    for _ in 0..2 {
        for b in against {
            let p = b.dot(&v);
            v.axpy(-p, b, 1.0);
        }
    }
    v
}

/// Levi form of the defining function on the complex tangent space.
#[derive(Debug, Clone, Serialize)]
pub struct LeviEval {
    pub q: Vec<f64>,
    /// Real parts `W_s` of the complex tangent vectors `V_s = W_s − iJW_s`.
    pub basis: Vec<Vec<f64>>,
    pub levi_re: Vec<Vec<f64>>,
    pub levi_im: Vec<Vec<f64>>,
    /// `+∞` (serialized as null) when the complex tangent space is trivial.
    pub min_eig: f64,
    pub hermitian_defect: f64,
    pub tol: f64,
    pub pseudoconvex: bool,
}

/// The Levi matrix uses the domain's defining function as written, without
/// normalizing its gradient.
pub fn pseudoconvexity_check(dom: &ImplicitDomain, q: &[f64], cs: &ComplexStructure) -> Result<LeviEval> {
    let frame = boundary_frame(dom, q)?;
    let split = splitting_from_frame(&frame, cs)?;
    let jet = dom.jet(q)?;
    Ok(levi_eval(&jet, &split, cs))
}

pub fn levi_eval(jet: &Jet2, split: &ComplexSplitting, cs: &ComplexStructure) -> LeviEval {
    let u = split.basis_vecs();
    let k = u.len();
    let mut re = DMatrix::zeros(k, k);
    let mut im = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            re[(a, b)] = levi_bilinear(&jet.hessian, &u[a], &u[b], cs);
            im[(a, b)] = levi_bilinear(&jet.hessian, &u[a], &cs.apply(&u[b]), cs);
        }
    }
    let defect = (&re - re.transpose()).amax().max((&im + im.transpose()).amax());
    let min_eig = hermitian_min_eigenvalue(&re, &im);
    let to_rows = |m: &DMatrix<f64>| (0..k).map(|i| m.row(i).iter().copied().collect()).collect();
    LeviEval {
        q: split.q.clone(),
        basis: split.basis.clone(),
        levi_re: to_rows(&re),
        levi_im: to_rows(&im),
        min_eig,
        hermitian_defect: defect,
        tol: LEVI_TOL,
        pseudoconvex: min_eig >= -LEVI_TOL,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureSelection {
    pub q: Vec<f64>,
    pub kappas: Vec<f64>,
    /// `Σκ − min κ`.
    pub drop_min_sum: f64,
    pub nonneg_count: usize,
    pub required_nonneg: usize,
    pub levi_min_eig: f64,
    /// Both inequalities hold at tolerance.
    pub holds: bool,
    /// The Levi form is definite enough that a strictly positive sum is expected.
    pub strict_expected: bool,
    pub strict_holds: bool,
}

/// Reports the curvature inequalities at `q`; violations are findings, not errors.
pub fn curvature_selection_check(dom: &ImplicitDomain, q: &[f64], cs: &ComplexStructure) -> Result<CurvatureSelection> {
    let frame = boundary_frame(dom, q)?;
    let split = splitting_from_frame(&frame, cs)?;
    let jet = dom.jet(q)?;
    let levi = levi_eval(&jet, &split, cs);
    Ok(selection_from_kappas(q, &frame.kappas, cs, levi.min_eig))
}

pub fn selection_from_kappas(q: &[f64], kappas: &[f64], cs: &ComplexStructure, levi_min_eig: f64) -> CurvatureSelection {
    let mut k = kappas.to_vec();
    k.sort_by(f64::total_cmp);
    let sum: f64 = k.iter().sum();
    let drop_min_sum = match k.first() {
        Some(min) => sum - min,
        None => 0.0,
    };
    let nonneg_count = k.iter().filter(|&&v| v >= -KAPPA_TOL).count();
    let required_nonneg = cs.n.saturating_sub(1);
    let strict_expected = levi_min_eig > STRICT_LEVI && levi_min_eig.is_finite();
    CurvatureSelection {
        q: q.to_vec(),
        kappas: k,
        drop_min_sum,
        nonneg_count,
        required_nonneg,
        levi_min_eig,
        holds: drop_min_sum >= -KAPPA_TOL && nonneg_count >= required_nonneg,
        strict_expected,
        strict_holds: !strict_expected || drop_min_sum > 0.0,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KyFan {
    /// `2·max_j Σ_{i≠j} κ_i`.
    pub lhs: f64,
    /// `tr Bᵀ·diag(K,K)·B`.
    pub rhs: f64,
    pub slack: f64,
    /// Diagonal of `Bᵀ·diag(K,K)·B`.
    pub diagonal: Vec<f64>,
    pub holds: bool,
}

/// Trace comparison in principal coordinates. `principal_dirs` are the
/// ambient principal directions for `kappas`; `basis` holds `e_1 … e_{n−1}`.
/// `B` has columns `(e_s, Je_s)` and `(Je_s, e_s)` with each block written
/// in principal coordinates.
pub fn ky_fan_trace_check(
    kappas: &[f64],
    principal_dirs: &[DVector<f64>],
    basis: &[DVector<f64>],
    cs: &ComplexStructure,
) -> Result<KyFan> {
    let p = kappas.len();
    if principal_dirs.len() != p || p + 1 != cs.real_dim() {
        return Err(Error::DimensionMismatch {
            expected: cs.real_dim() - 1,
            got: principal_dirs.len(),
        });
    }
    let coords = |v: &DVector<f64>| DVector::from_fn(p, |i, _| principal_dirs[i].dot(v));
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(2 * basis.len());
    for e in basis {
        let a = coords(e);
        let b = coords(&cs.apply(e));
        let mut c1 = DVector::zeros(2 * p);
        let mut c2 = DVector::zeros(2 * p);
        c1.rows_mut(0, p).copy_from(&a);
        c1.rows_mut(p, p).copy_from(&b);
        c2.rows_mut(0, p).copy_from(&b);
        c2.rows_mut(p, p).copy_from(&a);
        cols.push(c1);
        cols.push(c2);
    }
    // BᵀB = 2·I for an admissible basis
    let scaled: Vec<DVector<f64>> = cols.iter().map(|c| c / 2f64.sqrt()).collect();
    let defect = orthonormality_defect(&scaled);
    if defect > 1e-8 {
        return Err(Error::NonOrthonormalBasis(defect));
    }
    let diagonal: Vec<f64> = cols
        .iter()
        .map(|c| (0..2 * p).map(|i| kappas[i % p] * c[i] * c[i]).sum())
        .collect();
    let rhs: f64 = diagonal.iter().sum();
    let lhs = if p == 0 {
        0.0
    } else {
        let min = kappas.iter().copied().fold(f64::INFINITY, f64::min);
        2.0 * (kappas.iter().sum::<f64>() - min)
    };
    let scale = 1.0 + kappas.iter().map(|k| k.abs()).sum::<f64>();
    Ok(KyFan {
        lhs,
        rhs,
        slack: lhs - rhs,
        diagonal,
        holds: lhs >= rhs - 1e-12 * scale,
    })
}

/// `II(e,e) + II(Je,Je)` for each `e` of the splitting basis. For
/// `J`-paired principal directions these are sums of curvature pairs.
pub fn kappa_pair_sums(frame: &BoundaryFrame, jet: &Jet2, split: &ComplexSplitting, cs: &ComplexStructure) -> Vec<f64> {
    split
        .basis_vecs()
        .iter()
        .map(|e| 4.0 * levi_bilinear(&jet.hessian, e, e, cs) / frame.grad_norm)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::builtin_with;
    use crate::expr::{eval_jet2, parse_expression};

    fn jet(src: &str, at: &[f64]) -> Jet2 {
        let e = parse_expression(src, at.len()).unwrap();
        eval_jet2(&e, at).unwrap()
    }

    #[test]
    fn j_action() {
        let c1 = ComplexStructure::new(1);
        assert_eq!(apply_j(&c1, &[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
        let c2 = ComplexStructure::new(2);
        assert_eq!(apply_j(&c2, &[0.0, 0.0, 1.0, 0.0]).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        let v = DVector::from_vec(vec![0.3, -1.2, 2.0, 0.7]);
        assert_eq!(c2.apply(&c2.apply(&v)), -&v);
        let j = c2.matrix();
        assert_eq!(&j * &j, -DMatrix::<f64>::identity(4, 4));
        assert_eq!(&j * j.transpose(), DMatrix::<f64>::identity(4, 4));
        assert!(apply_j(&c2, &[1.0]).is_err());
        assert!(ComplexStructure::for_dim(3).is_err());
    }

    #[test]
    fn levi_form_examples() {
        let cs = ComplexStructure::new(2);
        let p = [0.2, -0.4, 0.1, 0.5];
        let ball = jet("x1^2 + x2^2 + x3^2 + x4^2 - 1", &p);
        assert!((levi_form(&ball, &[1.0, 0.0, 0.0, 0.0], &cs).unwrap() - 1.0).abs() < 1e-15);
        let re = jet("x1 + 0*x4", &p);
        assert_eq!(levi_form(&re, &[0.3, 1.0, -2.0, 0.5], &cs).unwrap(), 0.0);
        let hyp = jet("x1^2 + x2^2 - x3^2 - x4^2", &p);
        assert!((levi_form(&hyp, &[0.0, 0.0, 1.0, 0.0], &cs).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn sphere_splitting() {
        let ball = builtin_with("ball", &[("m", 4.0)]).unwrap();
        let cs = ComplexStructure::new(2);
        let s = complex_tangent_real_part(&ball, &[1.0, 0.0, 0.0, 0.0], &cs).unwrap();
        assert_eq!(s.basis.len(), 1);
        assert_eq!(s.basis[0][0], 0.0);
        assert_eq!(s.basis[0][1], 0.0);
        assert!(s.defect < 1e-14);
        assert_eq!(s.standard_real_part_dim, 1);

        let disc = builtin_with("ball", &[("m", 2.0)]).unwrap();
        let s = complex_tangent_real_part(&disc, &[0.0, 1.0], &ComplexStructure::new(1)).unwrap();
        assert!(s.basis.is_empty());
    }

    #[test]
    fn levi_minima() {
        let cs = ComplexStructure::new(2);
        let ball = builtin_with("ball", &[("m", 4.0)]).unwrap();
        let l = pseudoconvexity_check(&ball, &[0.6, 0.0, 0.0, 0.8], &cs).unwrap();
        assert!((l.min_eig - 1.0).abs() < 1e-12 && l.pseudoconvex);

        let egg = builtin_with("complex_egg", &[]).unwrap();
        let l = pseudoconvexity_check(&egg, &[1.0, 0.0, 0.0, 0.0], &cs).unwrap();
        assert!(l.min_eig.abs() < 1e-14);

        let ann = builtin_with("annulus", &[("m", 4.0), ("r", 0.1)]).unwrap();
        let l = pseudoconvexity_check(&ann, &[0.1, 0.0, 0.0, 0.0], &cs).unwrap();
        assert!((l.min_eig + 0.99).abs() < 1e-12 && !l.pseudoconvex);
    }

    #[test]
    fn selection_examples() {
        let cs = ComplexStructure::new(2);
        let ball = builtin_with("ball", &[("m", 4.0)]).unwrap();
        let r = curvature_selection_check(&ball, &[0.0, 1.0, 0.0, 0.0], &cs).unwrap();
        assert!((r.drop_min_sum - 2.0).abs() < 1e-12);
        assert_eq!(r.nonneg_count, 3);
        assert!(r.holds && r.strict_expected && r.strict_holds);

        let ann = builtin_with("annulus", &[("m", 4.0), ("r", 0.1)]).unwrap();
        let r = curvature_selection_check(&ann, &[0.0, 0.0, 0.1, 0.0], &cs).unwrap();
        assert!((r.drop_min_sum + 20.0).abs() < 1e-8 && !r.holds);

        let disc = builtin_with("ball", &[("m", 2.0)]).unwrap();
        let r = curvature_selection_check(&disc, &[1.0, 0.0], &ComplexStructure::new(1)).unwrap();
        assert_eq!(r.drop_min_sum, 0.0);
        assert!(r.holds);
    }

    #[test]
    fn ky_fan_examples() {
        let cs = ComplexStructure::new(2);
        // tangent space span{e1, e2, e3} with ν = e4, complex tangent span{e1, e2}
        let p: Vec<DVector<f64>> = (0..3)
            .map(|i| {
                let mut v = DVector::zeros(4);
                v[i] = 1.0;
                v
            })
            .collect();
        for step in 0..64 {
            let phi = step as f64 * std::f64::consts::TAU / 64.0;
            let e = DVector::from_vec(vec![phi.cos(), phi.sin(), 0.0, 0.0]);
            let k = ky_fan_trace_check(&[1.0, 1.0, 1.0], &p, &[e.clone()], &cs).unwrap();
            assert!((k.lhs - 4.0).abs() < 1e-15 && (k.rhs - 4.0).abs() < 1e-14);
            let k = ky_fan_trace_check(&[2.0, -1.0, -1.0], &p, &[e.clone()], &cs).unwrap();
            // κ₁ + κ₂ on both diagonal entries
            assert!((k.rhs - 2.0).abs() < 1e-14 && (k.lhs - 2.0).abs() < 1e-15);
            let k = ky_fan_trace_check(&[-1.0, 2.0, 3.0], &p, &[e], &cs).unwrap();
            assert!(k.holds && (k.slack - 8.0).abs() < 1e-14);
        }
        let zero = ky_fan_trace_check(&[0.0; 3], &p, &[p[0].clone()], &cs).unwrap();
        assert_eq!((zero.lhs, zero.rhs), (0.0, 0.0));
        let bad = DVector::from_vec(vec![2.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            ky_fan_trace_check(&[1.0; 3], &p, &[bad], &cs),
            Err(Error::NonOrthonormalBasis(_))
        ));
    }

    #[test]
    fn pair_sums_match_curvatures_on_sphere() {
        let cs = ComplexStructure::new(2);
        let ball = builtin_with("ball", &[("m", 4.0)]).unwrap();
        let q = [0.5, 0.5, 0.5, 0.5];
        let frame = boundary_frame(&ball, &q).unwrap();
        let split = splitting_from_frame(&frame, &cs).unwrap();
        let sums = kappa_pair_sums(&frame, &ball.jet(&q).unwrap(), &split, &cs);
        assert!((sums[0] - 2.0).abs() < 1e-12);
        let kf = ky_fan_trace_check(&frame.kappas, &frame.principal_vecs(), &split.basis_vecs(), &cs).unwrap();
        assert!((kf.diagonal[0] - sums[0]).abs() < 1e-12);
    }
}
