//! Implicit domains `{F < 0}`, the builtin catalog, and boundary frames.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{eval_jet2, parse_expression, Expr, Jet2, Node};
use crate::linalg::{gram_schmidt, orient, symmetric_eigen};

/// Below this gradient norm a boundary point is treated as critical.
pub const TOL_GRAD: f64 = 1e-8;

/// A domain `Ω = {F < 0}` with a bounding box that contains its closure.
#[derive(Debug, Clone)]
pub struct ImplicitDomain {
    f: Expr,
    lo: Vec<f64>,
    hi: Vec<f64>,
    label: String,
}

impl ImplicitDomain {
    pub fn new(f: Expr, lo: Vec<f64>, hi: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let m = f.dim();
        if lo.len() != m || hi.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: lo.len().min(hi.len()),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidParameter("bbox needs min < max on every axis".into()));
        }
        Ok(Self {
            f,
            lo,
            hi,
            label: label.into(),
        })
    }

    /// Domain from expression text and a box given as `[min1, max1, min2, max2, ...]`.
    pub fn from_source(source: &str, dim: usize, bbox: &[f64]) -> Result<Self> {
        if bbox.len() != 2 * dim {
            return Err(Error::InvalidParameter(format!(
                "bbox needs {} numbers, got {}",
                2 * dim,
                bbox.len()
            )));
        }
        let f = parse_expression(source, dim)?;
        let lo = bbox.iter().step_by(2).copied().collect();
        let hi = bbox.iter().skip(1).step_by(2).copied().collect();
        Self::new(f, lo, hi, source.to_string())
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn expr(&self) -> &Expr {
        &self.f
    }

    pub fn bbox(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    /// Length of the bounding-box diagonal.
    pub fn diam(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn in_bbox(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.f.value(x)
    }

    pub fn jet(&self, x: &[f64]) -> Result<Jet2> {
        eval_jet2(&self.f, x)
    }

    /// Value with gradient and row-major Hessian into caller buffers.
    pub fn eval_into(&self, x: &[f64], g: &mut [f64], h: &mut [f64]) -> Result<f64> {
        self.f.eval_into(x, g, h)
    }

    /// `F(x) < 0`. Boundary points are not contained.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        Ok(self.f.value(x)? < 0.0)
    }

    /// Same point set with inside and outside exchanged (`F ↦ −F`).
    pub fn negated(&self) -> Self {
        let root = Node::Neg(Box::new(self.f.root().clone()));
        Self {
            f: Expr::from_node(root, self.dim()).expect("same variables"),
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            label: format!("-({})", self.label),
        }
    }

    /// The image of the domain under `x ↦ ρx`.
    pub fn scaled(&self, rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidParameter("scale factor must be positive".into()));
        }
        let inv = 1.0 / rho;
        let root = self
            .f
            .root()
            .map_vars(&|i| Node::Mul(Box::new(Node::Const(inv)), Box::new(Node::Var(i))));
        Self::new(
            Expr::from_node(root, self.dim())?,
            self.lo.iter().map(|v| v * rho).collect(),
            self.hi.iter().map(|v| v * rho).collect(),
            format!("{}*({})", rho, self.label),
        )
    }

    /// Tolerance on `|F(w)|` for accepting `w` as a boundary point.
    pub fn tol_f(&self, grad_norm: f64) -> f64 {
        1e-10 * (1.0 + grad_norm * 0.5 * self.diam())
    }
}

/// Builtin catalog: `ball`, `annulus`, `ellipsoid`, `complex_egg`, `powersum`.
///
/// Parameters:
/// - `ball`: `m`, `R` (default 1)
/// - `annulus`: `m`, `r` with `0 < r < 1`
/// - `ellipsoid`: semi-axes `a1, a2, ...` (or `a, b, c`), optional `m`
/// - `complex_egg`: `n` (default 2), exponents `p1..pn` (defaults `1, 2, 1, ...`);
///   `Σ |z_j|^(2 p_j) < 1` in ℂⁿ with coordinates `(x1, y1, ..., xn, yn)`
/// - `powersum`: `m`, `r`, `d < 2 − m`; `‖x‖^d + (1 + r − ‖x‖)^d < 1 + r^d`
pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<ImplicitDomain> {
    let get = |k: &str| params.get(k).copied();
    let dim_param = |k: &str| -> Result<usize> {
        let v = get(k).ok_or_else(|| Error::InvalidParameter(format!("{name} needs `{k}`")))?;
        if v < 1.0 || v.fract() != 0.0 || v > 64.0 {
            return Err(Error::InvalidParameter(format!("`{k}` must be a positive integer")));
        }
        Ok(v as usize)
    };
    let check_keys = |allowed: &dyn Fn(&str) -> bool| -> Result<()> {
        for k in params.keys() {
            if !allowed(k) {
                return Err(Error::InvalidParameter(format!("unknown parameter `{k}` for {name}")));
            }
        }
        Ok(())
    };
    let cube = |m: usize, h: f64| (vec![-h; m], vec![h; m]);
    let c = |v: f64| Box::new(Node::Const(v));

    match name {
        "ball" => {
            check_keys(&|k| k == "m" || k == "R")?;
            let m = dim_param("m")?;
            let r = get("R").unwrap_or(1.0);
            if !(r > 0.0) {
                return Err(Error::InvalidParameter("ball needs R > 0".into()));
            }
            let root = Node::Sub(Box::new(Node::NormSq(0, m - 1)), c(r * r));
            let (lo, hi) = cube(m, 1.1 * r);
            ImplicitDomain::new(Expr::from_node(root, m)?, lo, hi, format!("ball(m={m}, R={r})"))
        }
        "annulus" => {
            check_keys(&|k| k == "m" || k == "r")?;
            let m = dim_param("m")?;
            let r = get("r").ok_or_else(|| Error::InvalidParameter("annulus needs `r`".into()))?;
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidParameter("annulus needs 0 < r < 1".into()));
            }
            let s = || Box::new(Node::NormSq(0, m - 1));
            let root = Node::Mul(
                Box::new(Node::Sub(s(), c(1.0))),
                Box::new(Node::Sub(s(), c(r * r))),
            );
            let (lo, hi) = cube(m, 1.1);
            ImplicitDomain::new(Expr::from_node(root, m)?, lo, hi, format!("annulus(m={m}, r={r})"))
        }
        "ellipsoid" => {
            let mut axes: Vec<f64> = Vec::new();
            if params.keys().any(|k| k.starts_with('a') && k.len() > 1 && k[1..].parse::<usize>().is_ok()) {
                check_keys(&|k| k == "m" || (k.starts_with('a') && k[1..].parse::<usize>().is_ok()))?;
                let mut i = 1;
                while let Some(v) = get(&format!("a{i}")) {
                    axes.push(v);
                    i += 1;
                }
                if axes.len() != params.keys().filter(|k| k.starts_with('a')).count() {
                    return Err(Error::InvalidParameter("semi-axes must be a1, a2, ... without gaps".into()));
                }
            } else {
                check_keys(&|k| matches!(k, "m" | "a" | "b" | "c"))?;
                for k in ["a", "b", "c"] {
                    match get(k) {
                        Some(v) => axes.push(v),
                        None => break,
                    }
                }
            }
            if let Some(m) = get("m") {
                if m != axes.len() as f64 {
                    return Err(Error::InvalidParameter(format!(
                        "ellipsoid has {} semi-axes but m = {m}",
                        axes.len()
                    )));
                }
            }
            if axes.is_empty() || axes.iter().any(|a| !(*a > 0.0)) {
                return Err(Error::InvalidParameter("ellipsoid needs positive semi-axes".into()));
            }
            let m = axes.len();
            let mut root: Option<Node> = None;
            for (i, a) in axes.iter().enumerate() {
                let term = Node::Mul(c(1.0 / (a * a)), Box::new(Node::Pow(Box::new(Node::Var(i)), 2.0)));
                root = Some(match root {
                    None => term,
                    Some(r) => Node::Add(Box::new(r), Box::new(term)),
                });
            }
            let root = Node::Sub(Box::new(root.expect("non-empty")), c(1.0));
            let lo = axes.iter().map(|a| -1.1 * a).collect();
            let hi = axes.iter().map(|a| 1.1 * a).collect();
            let label = format!(
                "ellipsoid({})",
                axes.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
            );
            ImplicitDomain::new(Expr::from_node(root, m)?, lo, hi, label)
        }
        "complex_egg" => {
            check_keys(&|k| k == "n" || (k.starts_with('p') && k[1..].parse::<usize>().is_ok()))?;
            let n = if params.contains_key("n") { dim_param("n")? } else { 2 };
            let mut root: Option<Node> = None;
            let mut exps = Vec::with_capacity(n);
            for j in 0..n {
                let default = if j == 1 { 2.0 } else { 1.0 };
                let p = get(&format!("p{}", j + 1)).unwrap_or(default);
                if !(p >= 1.0) {
                    return Err(Error::InvalidParameter("egg exponents must be at least 1".into()));
                }
                exps.push(p);
                let z = Node::NormSq(2 * j, 2 * j + 1);
                let term = if p == 1.0 { z } else { Node::Pow(Box::new(z), p) };
                root = Some(match root {
                    None => term,
                    Some(r) => Node::Add(Box::new(r), Box::new(term)),
                });
            }
            if params.keys().any(|k| k.starts_with('p') && k[1..].parse::<usize>().map_or(true, |i| i == 0 || i > n)) {
                return Err(Error::InvalidParameter("egg exponent index exceeds n".into()));
            }
            let root = Node::Sub(Box::new(root.expect("n >= 1")), c(1.0));
            let (lo, hi) = cube(2 * n, 1.1);
            let label = format!(
                "complex_egg(n={n}, p=[{}])",
                exps.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ")
            );
            ImplicitDomain::new(Expr::from_node(root, 2 * n)?, lo, hi, label)
        }
        "powersum" => {
            check_keys(&|k| matches!(k, "m" | "r" | "d"))?;
            let m = dim_param("m")?;
            let r = get("r").ok_or_else(|| Error::InvalidParameter("powersum needs `r`".into()))?;
            let d = get("d").ok_or_else(|| Error::InvalidParameter("powersum needs `d`".into()))?;
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidParameter("powersum needs 0 < r < 1".into()));
            }
            if !(d < 2.0 - m as f64) {
                return Err(Error::InvalidParameter(format!("powersum needs d < {}", 2 - m as i64)));
            }
            // Powers are written through exp/log so that points with
            // ‖x‖ ≥ 1 + r raise a domain error instead of an even power
            // silently reporting them as inside.
            let s = || Box::new(Node::NormSq(0, m - 1));
            let t1 = Node::Exp(Box::new(Node::Mul(c(0.5 * d), Box::new(Node::Log(s())))));
            let rho = Box::new(Node::Sqrt(s()));
            let t2 = Node::Exp(Box::new(Node::Mul(
                c(d),
                Box::new(Node::Log(Box::new(Node::Sub(c(1.0 + r), rho)))),
            )));
            let root = Node::Sub(
                Box::new(Node::Add(Box::new(t1), Box::new(t2))),
                c(1.0 + r.powf(d)),
            );
            let (lo, hi) = cube(m, 1.1);
            ImplicitDomain::new(
                Expr::from_node(root, m)?,
                lo,
                hi,
                format!("powersum(m={m}, r={r}, d={d})"),
            )
        }
        _ => Err(Error::UnknownDomain(name.to_string())),
    }
}

/// Shorthand for `builtin` with literal parameters.
pub fn builtin_with(name: &str, params: &[(&str, f64)]) -> Result<ImplicitDomain> {
    let map = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    builtin(name, &map)
}

/// Orthonormal frame and curvature data at a boundary point.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryFrame {
    pub w: Vec<f64>,
    /// Unit inward normal `−∇F/‖∇F‖`.
    pub nu: Vec<f64>,
    pub tangent: Vec<Vec<f64>>,
    pub first_form: Vec<Vec<f64>>,
    pub second_form: Vec<Vec<f64>>,
    /// Ascending.
    pub kappas: Vec<f64>,
    pub principal_dirs: Vec<Vec<f64>>,
    pub mean_curv: f64,
    pub grad_norm: f64,
    pub residual: f64,
}

impl BoundaryFrame {
    pub fn nu_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.nu)
    }

    pub fn tangent_vecs(&self) -> Vec<DVector<f64>> {
        self.tangent.iter().map(|t| DVector::from_column_slice(t)).collect()
    }

    pub fn principal_vecs(&self) -> Vec<DVector<f64>> {
        self.principal_dirs.iter().map(|t| DVector::from_column_slice(t)).collect()
    }
}

/// Coordinate directions least aligned with `nu`, orthonormalized against it.
pub fn tangent_frame(nu: &DVector<f64>) -> Vec<DVector<f64>> {
    let m = nu.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| nu[a].abs().total_cmp(&nu[b].abs()).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = idx[..m.saturating_sub(1)].to_vec();
    chosen.sort_unstable();
    let seeds = chosen.iter().map(|&i| {
        let mut e = DVector::zeros(m);
        e[i] = 1.0;
        e
    });
    gram_schmidt(seeds, std::slice::from_ref(nu), 1e-8)
}

/// Normal, tangent frame, fundamental forms and principal curvatures at `w`.
pub fn boundary_frame(dom: &ImplicitDomain, w: &[f64]) -> Result<BoundaryFrame> {
    let jet = dom.jet(w)?;
    frame_from_jet(dom, w, &jet)
}

pub(crate) fn frame_from_jet(dom: &ImplicitDomain, w: &[f64], jet: &Jet2) -> Result<BoundaryFrame> {
    let m = dom.dim();
    let gn = jet.gradient.norm();
    if gn < TOL_GRAD {
        return Err(Error::CriticalBoundaryPoint { grad_norm: gn });
    }
    let tol = dom.tol_f(gn);
    if jet.value.abs() > tol {
        return Err(Error::NotOnBoundary {
            residual: jet.value.abs(),
            tol,
        });
    }
    let nu = -&jet.gradient / gn;
    let tangent = tangent_frame(&nu);
    let k = tangent.len();
    let mut ii = DMatrix::<f64>::zeros(k, k);
    for a in 0..k {
        let ht = &jet.hessian * &tangent[a];
        for b in 0..k {
            ii[(a, b)] = tangent[b].dot(&ht) / gn;
        }
    }
    let ii = (&ii + ii.transpose()) * 0.5;
    let eig = symmetric_eigen(&ii);
    let mut dirs = Vec::with_capacity(k);
    for c in 0..k {
        let mut v = DVector::<f64>::zeros(m);
        for (a, t) in tangent.iter().enumerate() {
            v.axpy(eig.vectors[(a, c)], t, 1.0);
        }
        orient(&mut v);
        dirs.push(v);
    }
    let mean_curv = if k == 0 {
        0.0
    } else {
        eig.values.iter().sum::<f64>() / k as f64
    };
    let rows = |mat: &DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..mat.nrows()).map(|i| mat.row(i).iter().copied().collect()).collect()
    };
    Ok(BoundaryFrame {
        w: w.to_vec(),
        nu: nu.iter().copied().collect(),
        tangent: tangent.iter().map(|t| t.iter().copied().collect()).collect(),
        first_form: rows(&DMatrix::identity(k, k)),
        second_form: rows(&ii),
        kappas: eig.values,
        principal_dirs: dirs.iter().map(|t| t.iter().copied().collect()).collect(),
        mean_curv,
        grad_norm: gn,
        residual: jet.value.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_bboxes() {
        let a = builtin_with("annulus", &[("m", 3.0), ("r", 0.1)]).unwrap();
        assert_eq!(a.bbox().0, &[-1.1, -1.1, -1.1]);
        assert_eq!(a.bbox().1, &[1.1, 1.1, 1.1]);
        assert!(a.contains(&[0.3, 0.0, 0.0]).unwrap());
        assert!(!a.contains(&[0.05, 0.0, 0.0]).unwrap());
        let b = builtin_with("ball", &[("m", 2.0), ("R", 1.0)]).unwrap();
        assert!(!b.contains(&[1.0, 0.0]).unwrap());
        let e = builtin_with("ellipsoid", &[("a", 2.0), ("b", 1.0)]).unwrap();
        assert_eq!(e.dim(), 2);
        assert!((e.bbox().1[0] - 2.2).abs() < 1e-15);
    }

    #[test]
    fn bad_parameters() {
        assert!(matches!(builtin_with("torus", &[]), Err(Error::UnknownDomain(_))));
        assert!(builtin_with("annulus", &[("m", 3.0), ("r", 1.5)]).is_err());
        assert!(builtin_with("annulus", &[("m", 3.0), ("r", 0.1), ("q", 1.0)]).is_err());
        assert!(builtin_with("powersum", &[("m", 3.0), ("r", 0.1), ("d", -0.5)]).is_err());
        assert!(builtin_with("ellipsoid", &[("a1", 2.0), ("a3", 1.0)]).is_err());
        assert!(builtin_with("complex_egg", &[("n", 2.0), ("p3", 1.0)]).is_err());
    }

    #[test]
    fn sphere_frame() {
        let b = builtin_with("ball", &[("m", 3.0)]).unwrap();
        let fr = boundary_frame(&b, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(fr.nu, vec![-1.0, 0.0, 0.0]);
        assert!(fr.kappas.iter().all(|k| (k - 1.0).abs() < 1e-14));
        assert!((fr.mean_curv - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inner_wall_is_concave() {
        let a = builtin_with("annulus", &[("m", 3.0), ("r", 0.1)]).unwrap();
        let fr = boundary_frame(&a, &[0.1, 0.0, 0.0]).unwrap();
        assert!((fr.nu[0] - 1.0).abs() < 1e-14);
        for k in &fr.kappas {
            assert!((k + 10.0).abs() < 1e-10, "{k}");
        }
    }

    #[test]
    fn ellipsoid_tip() {
        let e = builtin_with("ellipsoid", &[("a1", 2.0), ("a2", 1.0), ("a3", 1.0)]).unwrap();
        let fr = boundary_frame(&e, &[2.0, 0.0, 0.0]).unwrap();
        // x = 2·sqrt(1 − y² − z²) ≈ 2 − y² − z² near the tip: curvature a/b² = 2
        for k in &fr.kappas {
            assert!((k - 2.0).abs() < 1e-12, "{k}");
        }
    }

    #[test]
    fn frame_refusals() {
        let b = builtin_with("ball", &[("m", 2.0)]).unwrap();
        assert!(matches!(
            boundary_frame(&b, &[0.5, 0.0]),
            Err(Error::NotOnBoundary { .. })
        ));
        let cone = ImplicitDomain::from_source("x1^2 - x2^2", 2, &[-1.0, 1.0, -1.0, 1.0]).unwrap();
        assert!(matches!(
            boundary_frame(&cone, &[0.0, 0.0]),
            Err(Error::CriticalBoundaryPoint { .. })
        ));
    }

    #[test]
    fn negation_and_scaling() {
        let b = builtin_with("ball", &[("m", 3.0)]).unwrap();
        let w = [0.0, 0.6, 0.8];
        let neg = boundary_frame(&b.negated(), &w).unwrap();
        assert!((neg.mean_curv + 1.0).abs() < 1e-13);
        let big = b.scaled(2.0).unwrap();
        let fr = boundary_frame(&big, &[0.0, 1.2, 1.6]).unwrap();
        assert!((fr.mean_curv - 0.5).abs() < 1e-13);
    }
}
