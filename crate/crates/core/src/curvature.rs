//! Fundamental forms and mean curvature through the orthonormal-frame,
//! graph and implicit representations.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::domain::{boundary_frame, BoundaryFrame, ImplicitDomain, TOL_GRAD};
use crate::error::{Error, Result};
use crate::expr::Jet2;
use crate::linalg::{reflection_to_last_axis, symmetric_eigen};

/// `II_jk = 𝓗F(T_j, T_k)/‖∇F‖` in the frame's tangent basis.
pub fn second_form_implicit(dom: &ImplicitDomain, frame: &BoundaryFrame) -> Result<DMatrix<f64>> {
    let jet = dom.jet(&frame.w)?;
    let gn = jet.gradient.norm();
    if gn < TOL_GRAD {
        return Err(Error::CriticalBoundaryPoint { grad_norm: gn });
    }
    let t = frame.tangent_vecs();
    let k = t.len();
    let mut ii = DMatrix::zeros(k, k);
    for a in 0..k {
        let ha = &jet.hessian * &t[a];
        for b in 0..k {
            ii[(a, b)] = t[b].dot(&ha) / gn;
        }
    }
    Ok(ii)
}

/// `H = ∇Fᵀ(ΔF·I − 𝓗F)∇F / ((m−1)‖∇F‖³)`.
pub fn mean_curvature_implicit(dom: &ImplicitDomain, w: &[f64]) -> Result<f64> {
    let jet = dom.jet(w)?;
    mean_curvature_from_jet(&jet)
}

pub fn mean_curvature_from_jet(jet: &Jet2) -> Result<f64> {
    let m = jet.dim();
    let g = &jet.gradient;
    let gn = g.norm();
    if gn < TOL_GRAD {
        return Err(Error::CriticalBoundaryPoint { grad_norm: gn });
    }
    if m == 1 {
        return Ok(0.0);
    }
    let lap = jet.hessian.trace();
    let num = lap * g.dot(g) - g.dot(&(&jet.hessian * g));
    Ok(num / ((m - 1) as f64 * gn * gn * gn))
}

/// Height function `ψ` of a local graph, with the epigraph inside the domain.
#[derive(Debug, Clone)]
pub struct GraphJet {
    pub psi: Jet2,
    pub ambient_dim: usize,
}

/// `(Σ_ij (δ_ij − ψ_iψ_j/(1+|∇ψ|²)) ψ_ij) / ((m−1)·√(1+|∇ψ|²))`.
pub fn mean_curvature_graph(g: &GraphJet) -> f64 {
    let k = g.psi.gradient.len();
    if k == 0 {
        return 0.0;
    }
    let p = &g.psi.gradient;
    let q = 1.0 + p.dot(p);
    let mut s = 0.0;
    for i in 0..k {
        for j in 0..k {
            let delta = if i == j { 1.0 } else { 0.0 };
            s += (delta - p[i] * p[j] / q) * g.psi.hessian[(i, j)];
        }
    }
    s / (k as f64 * q.sqrt())
}

/// `(I + vvᵀ)⁻¹ = I − vvᵀ/(1 + ‖v‖²)`.
pub fn sherman_morrison_inverse(v: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    DMatrix::identity(n, n) - (v * v.transpose()) / (1.0 + v.dot(v))
}

/// The same inverse written through the defining function of the graph:
/// `I − G'G'ᵀ/‖∇G‖²` with `G'` the first `m−1` gradient components.
pub fn sherman_morrison_from_gradient(grad: &DVector<f64>) -> DMatrix<f64> {
    let m = grad.len();
    let gp = grad.rows(0, m - 1).into_owned();
    DMatrix::identity(m - 1, m - 1) - (&gp * gp.transpose()) / grad.dot(grad)
}

/// A boundary point written as a graph over a tilted hyperplane.
#[derive(Debug, Clone)]
pub struct LocalGraph {
    pub jet: GraphJet,
    /// Orthogonal map taking the graph's up-direction to the last axis.
    pub rotation: DMatrix<f64>,
    pub up: DVector<f64>,
    pub origin: DVector<f64>,
    /// Height at `t = 0`.
    pub height: f64,
    /// Gradient of `G(t, s) = F(origin + Qᵀ(t, s))` at the graph point.
    pub grad_g: DVector<f64>,
}

/// Graph of `∂Ω` near `w` over the hyperplane orthogonal to
/// `e = cos θ·ν + sin θ·T₁`. The height is solved by 1-D Newton from
/// `0` starting at `origin = w − offset·e`; derivatives of `ψ` come from
/// implicit differentiation of `G(t, ψ(t)) = 0`.
pub fn local_graph(dom: &ImplicitDomain, frame: &BoundaryFrame, theta: f64, offset: f64) -> Result<LocalGraph> {
    let m = dom.dim();
    if m < 2 {
        return Err(Error::Unsupported("graph representation needs m ≥ 2".into()));
    }
    let nu = frame.nu_vec();
    let t1 = DVector::from_column_slice(&frame.tangent[0]);
    let up = &nu * theta.cos() + &t1 * theta.sin();
    let q = reflection_to_last_axis(&up);
    let w = DVector::from_column_slice(&frame.w);
    let origin = &w - &up * offset;

    let mut s = 0.0;
    let mut g = vec![0.0; m];
    let mut h = vec![0.0; m * m];
    let mut converged = false;
    for _ in 0..100 {
        let p: Vec<f64> = (&origin + &up * s).iter().copied().collect();
        let f = dom.eval_into(&p, &mut g, &mut h)?;
        let fs: f64 = g.iter().zip(up.iter()).map(|(a, b)| a * b).sum();
        if fs.abs() < TOL_GRAD {
            return Err(Error::NonConvergence("graph height derivative vanished".into()));
        }
        let ds = f / fs;
        s -= ds;
        if ds.abs() < 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence("graph height solve".into()));
    }
    let p: Vec<f64> = (&origin + &up * s).iter().copied().collect();
    let jet = dom.jet(&p)?;
    let gg = &q * &jet.gradient;
    let hg = &q * &jet.hessian * &q;
    let k = m - 1;
    let gs = gg[k];
    if gs.abs() < TOL_GRAD {
        return Err(Error::CriticalBoundaryPoint { grad_norm: gs.abs() });
    }
    let psi_g = DVector::from_fn(k, |i, _| -gg[i] / gs);
    let psi_h = DMatrix::from_fn(k, k, |i, j| {
        -(hg[(i, j)] + hg[(i, k)] * psi_g[j] + hg[(j, k)] * psi_g[i] + hg[(k, k)] * psi_g[i] * psi_g[j]) / gs
    });
    Ok(LocalGraph {
        jet: GraphJet {
            psi: Jet2 {
                value: s,
                gradient: psi_g,
                hessian: (&psi_h + psi_h.transpose()) * 0.5,
            },
            ambient_dim: m,
        },
        rotation: q,
        up,
        origin,
        height: s,
        grad_g: gg,
    })
}

/// Eigenvalues of `I⁻¹·II` in the graph basis, ascending. `I⁻¹` is taken
/// from the Sherman–Morrison formula and the product is symmetrized as
/// `S^{1/2}·II·S^{1/2}`.
pub fn graph_principal_curvatures(g: &GraphJet) -> Vec<f64> {
    let p = &g.psi.gradient;
    let s = sherman_morrison_inverse(p);
    let ii = &g.psi.hessian / (1.0 + p.dot(p)).sqrt();
    principal_from_forms(&s, &ii)
}

/// Eigenvalues of `S·II` for symmetric positive definite `S`.
pub fn principal_from_forms(s_inv_first: &DMatrix<f64>, ii: &DMatrix<f64>) -> Vec<f64> {
    let e = symmetric_eigen(s_inv_first);
    let k = ii.nrows();
    let root = DMatrix::from_fn(k, k, |i, j| {
        (0..k)
            .map(|c| e.vectors[(i, c)] * e.values[c].max(0.0).sqrt() * e.vectors[(j, c)])
            .sum::<f64>()
    });
    let sym = &root * ii * &root;
    symmetric_eigen(&((&sym + sym.transpose()) * 0.5)).values
}

/// Mean curvature by the three routes at one boundary point.
#[derive(Debug, Clone, Serialize)]
pub struct MethodAgreement {
    pub implicit: f64,
    pub frame: f64,
    pub graph: f64,
    pub max_spread: f64,
    pub graph_kappas: Vec<f64>,
    pub graph_kappas_gradient_form: Vec<f64>,
}

pub const GRAPH_TILT: f64 = 0.25;

pub fn method_agreement(dom: &ImplicitDomain, w: &[f64]) -> Result<(BoundaryFrame, MethodAgreement)> {
    let frame = boundary_frame(dom, w)?;
    let implicit = mean_curvature_implicit(dom, w)?;
    let (graph, graph_kappas, alt) = if dom.dim() >= 2 {
        let lg = local_graph(dom, &frame, GRAPH_TILT, 1e-3 * dom.diam())?;
        let alt = principal_from_forms(
            &sherman_morrison_from_gradient(&lg.grad_g),
            &(&lg.jet.psi.hessian / (1.0 + lg.jet.psi.gradient.norm_squared()).sqrt()),
        );
        (mean_curvature_graph(&lg.jet), graph_principal_curvatures(&lg.jet), alt)
    } else {
        (0.0, Vec::new(), Vec::new())
    };
    let vals = [implicit, frame.mean_curv, graph];
    let spread = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - vals.iter().copied().fold(f64::INFINITY, f64::min);
    let agreement = MethodAgreement {
        implicit,
        frame: frame.mean_curv,
        graph,
        max_spread: spread,
        graph_kappas,
        graph_kappas_gradient_form: alt,
    };
    Ok((frame, agreement))
}
