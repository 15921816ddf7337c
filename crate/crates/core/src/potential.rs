//! Ball means, the generalized upper Laplace parameter, closed-form
//! Laplacians of distance potentials and the scans built on them.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::{levi_bilinear, splitting_from_frame, ComplexStructure};
use crate::dist::{fd_hessian, fd_step, project, sep_min, stencil_field, NearField};
use crate::domain::{boundary_frame, ImplicitDomain};
use crate::error::{Error, Result};
use crate::grid::{lex_cmp, GridSpec};
use crate::linalg::symmetric_eigen;
use crate::sampling::{radial_rule, sphere_directions, DirectionSet};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TOL: f64 = 1e-4;

/// A function that can be sampled on small balls around a point.
pub trait ScalarField: Sync {
    fn dim(&self) -> usize;
    /// Prepares evaluation on balls of radius up to `radius` around `x`.
    fn local<'s>(&'s self, x: &[f64], radius: f64) -> Result<Box<dyn LocalField + 's>>;
    /// Radius below which closed balls around `x` are admissible.
    fn reach(&self, x: &[f64]) -> Result<f64>;
}

pub trait LocalField {
    fn center_value(&self) -> f64;
    /// Values at `x + ρ·u` for ascending `radii`.
    fn ray(&self, u: &[f64], radii: &[f64], out: &mut [f64]) -> Result<()>;
}

type BoxedFn<'f> = Box<dyn Fn(&[f64]) -> f64 + Sync + 'f>;

/// A field given by a closure, admissible on all of `ℝ^m` unless a reach
/// function is attached.
pub struct FnField<'f> {
    dim: usize,
    f: BoxedFn<'f>,
    reach: Option<BoxedFn<'f>>,
}

impl<'f> FnField<'f> {
    pub fn new(dim: usize, f: impl Fn(&[f64]) -> f64 + Sync + 'f) -> Self {
        Self {
            dim,
            f: Box::new(f),
            reach: None,
        }
    }

    pub fn with_reach(mut self, reach: impl Fn(&[f64]) -> f64 + Sync + 'f) -> Self {
        self.reach = Some(Box::new(reach));
        self
    }
}

struct FnLocal<'a, 'f> {
    field: &'a FnField<'f>,
    x: Vec<f64>,
    u0: f64,
}

impl LocalField for FnLocal<'_, '_> {
    fn center_value(&self) -> f64 {
        self.u0
    }

    fn ray(&self, u: &[f64], radii: &[f64], out: &mut [f64]) -> Result<()> {
        let mut y = self.x.clone();
        for (o, r) in out.iter_mut().zip(radii) {
            for j in 0..y.len() {
                y[j] = self.x[j] + r * u[j];
            }
            *o = (self.field.f)(&y);
        }
        Ok(())
    }
}

impl ScalarField for FnField<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn local<'s>(&'s self, x: &[f64], _radius: f64) -> Result<Box<dyn LocalField + 's>> {
        Ok(Box::new(FnLocal {
            field: self,
            x: x.to_vec(),
            u0: (self.f)(x),
        }))
    }

    fn reach(&self, x: &[f64]) -> Result<f64> {
        Ok(self.reach.as_ref().map_or(f64::INFINITY, |r| r(x)))
    }
}

/// Potentials built from the distance to the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// `−log d`.
    NegLogD,
    /// `d^{2−m}`; for `m ≤ 2` this is `−log d`.
    #[serde(alias = "d_pow_2_minus_m")]
    DPow,
    /// `−d`.
    NegD,
}

impl PotentialKind {
    pub fn name(self) -> &'static str {
        match self {
            PotentialKind::NegLogD => "neg_log_d",
            PotentialKind::DPow => "d_pow",
            PotentialKind::NegD => "neg_d",
        }
    }

    pub fn apply(self, d: f64, m: usize) -> f64 {
        match self {
            PotentialKind::NegLogD => -d.ln(),
            PotentialKind::DPow if m <= 2 => -d.ln(),
            PotentialKind::DPow => d.powi(2 - m as i32),
            PotentialKind::NegD => -d,
        }
    }
}

impl std::str::FromStr for PotentialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neg_log_d" => Ok(PotentialKind::NegLogD),
            "d_pow" | "d_pow_2_minus_m" => Ok(PotentialKind::DPow),
            "neg_d" => Ok(PotentialKind::NegD),
            _ => Err(Error::InvalidParameter(format!("unknown potential `{s}`"))),
        }
    }
}

pub struct DistancePotential<'a> {
    pub dom: &'a ImplicitDomain,
    pub kind: PotentialKind,
}

impl<'a> DistancePotential<'a> {
    pub fn new(dom: &'a ImplicitDomain, kind: PotentialKind) -> Self {
        Self { dom, kind }
    }
}

struct DistanceLocal<'a> {
    field: NearField<'a>,
    kind: PotentialKind,
    m: usize,
}

impl LocalField for DistanceLocal<'_> {
    fn center_value(&self) -> f64 {
        self.kind.apply(self.field.center_distance(), self.m)
    }

    fn ray(&self, u: &[f64], radii: &[f64], out: &mut [f64]) -> Result<()> {
        self.field.distances_along_ray(u, radii, out)?;
        for o in out.iter_mut() {
            *o = self.kind.apply(*o, self.m);
        }
        Ok(())
    }
}

impl ScalarField for DistancePotential<'_> {
    fn dim(&self) -> usize {
        self.dom.dim()
    }

    fn local<'s>(&'s self, x: &[f64], radius: f64) -> Result<Box<dyn LocalField + 's>> {
        let proj = project(self.dom, x)?;
        if !proj.inside {
            return Err(Error::InvalidParameter(format!("{x:?} is not inside the domain")));
        }
        Ok(Box::new(DistanceLocal {
            field: NearField::new(self.dom, &proj, radius),
            kind: self.kind,
            m: self.dom.dim(),
        }))
    }

    fn reach(&self, x: &[f64]) -> Result<f64> {
        let proj = project(self.dom, x)?;
        Ok(if proj.inside { proj.d } else { 0.0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Infeasible {
    Shrink,
    Fail,
}

/// Radii `r_k = r_0·2^{−k}`, `k = 0..=k`, with
/// `r_0 = min(r0_frac_d·d(x), r0_frac_diam·diam)` unless `r0` is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LadderSpec {
    pub k: usize,
    pub r0_frac_d: f64,
    pub r0_frac_diam: f64,
    pub r0: Option<f64>,
    pub on_infeasible: Infeasible,
}

impl Default for LadderSpec {
    fn default() -> Self {
        Self {
            k: 6,
            r0_frac_d: 0.2,
            r0_frac_diam: 0.05,
            r0: None,
            on_infeasible: Infeasible::Shrink,
        }
    }
}

impl LadderSpec {
    pub fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| f > 0.0 && f < 1.0;
        if self.k < 2 || !frac_ok(self.r0_frac_d) || !(self.r0_frac_diam > 0.0) {
            return Err(Error::InvalidParameter(format!("bad ladder {self:?}")));
        }
        if let Some(r) = self.r0 {
            if !(r > 0.0) {
                return Err(Error::InvalidParameter("ladder r0 must be positive".into()));
            }
        }
        Ok(())
    }

    /// Descending radii for a point at distance `reach` from the boundary.
    pub fn radii(&self, reach: f64, diam: f64) -> Result<Vec<f64>> {
        let auto = (self.r0_frac_d * reach).min(self.r0_frac_diam * diam);
        let r0 = match self.r0 {
            Some(r) if r < reach => r,
            Some(r) => match self.on_infeasible {
                Infeasible::Shrink => auto,
                Infeasible::Fail => {
                    return Err(Error::BallNotContained {
                        radius: r,
                        distance: reach,
                    })
                }
            },
            None => auto,
        };
        if !(r0 > 0.0) || !r0.is_finite() {
            return Err(Error::BallNotContained {
                radius: r0,
                distance: reach,
            });
        }
        Ok((0..=self.k).map(|i| r0 * 0.5f64.powi(i as i32)).collect())
    }
}

/// Product rule: Gauss–Legendre in the radius times a symmetrized sphere set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    pub radial_nodes: usize,
    /// Only used for `m ≥ 5`.
    pub seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            radial_nodes: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LaplacianEstimate {
    pub x: Vec<f64>,
    pub value_at_x: f64,
    /// Strictly decreasing.
    pub radii: Vec<f64>,
    pub means: Vec<f64>,
    /// `2(m+2)(M_u(x,r_k) − u(x))/r_k²`.
    pub quotients: Vec<f64>,
    /// Constant term of the fit `q ≈ a + b·r² + c·r⁴`.
    pub extrapolated: f64,
    pub fit_residual: f64,
    pub noise_floor: f64,
    /// The fit does not explain the ladder; the function is not `C²` on the balls.
    pub misfit: bool,
    /// Largest quotient over the smallest half of the ladder.
    pub conservative_sup: f64,
    /// `log₂((q₀−q₁)/(q₁−q₂))`; `None` when the differences are below noise.
    pub observed_order: Option<f64>,
}

impl LaplacianEstimate {
    /// The extrapolated value, or `conservative_sup` on misfit.
    pub fn value(&self) -> f64 {
        if self.misfit {
            self.conservative_sup
        } else {
            self.extrapolated
        }
    }
}

/// Precomputed quadrature for one ambient dimension.
pub struct Estimator {
    m: usize,
    diam: f64,
    ladder: LadderSpec,
    dirs: DirectionSet,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Relative rounding level assumed for sampled values.
const VALUE_EPS: f64 = 1e-13;

impl Estimator {
    pub fn new(m: usize, diam: f64, ladder: &LadderSpec, quad: &QuadratureSpec) -> Result<Self> {
        ladder.validate()?;
        if quad.radial_nodes == 0 {
            return Err(Error::InvalidParameter("radial_nodes must be positive".into()));
        }
        let (nodes, weights) = radial_rule(m, quad.radial_nodes);
        Ok(Self {
            m,
            diam,
            ladder: ladder.clone(),
            dirs: sphere_directions(m, quad.seed),
            nodes,
            weights,
        })
    }

    pub fn for_domain(dom: &ImplicitDomain, ladder: &LadderSpec, quad: &QuadratureSpec) -> Result<Self> {
        Self::new(dom.dim(), dom.diam(), ladder, quad)
    }

    pub fn directions(&self) -> &DirectionSet {
        &self.dirs
    }

    /// Ball means for each radius, sharing one continuation per direction.
    pub fn ball_means(&self, local: &dyn LocalField, radii: &[f64]) -> Result<Vec<f64>> {
        let nr = self.nodes.len();
        let mut flat: Vec<(f64, usize, usize)> = Vec::with_capacity(radii.len() * nr);
        for (k, r) in radii.iter().enumerate() {
            for (j, rho) in self.nodes.iter().enumerate() {
                flat.push((r * rho, k, j));
            }
        }
        flat.sort_by(|a, b| a.0.total_cmp(&b.0));
        let sorted: Vec<f64> = flat.iter().map(|t| t.0).collect();
        let mut out = vec![0.0; sorted.len()];
        let mut sums = vec![0.0; radii.len()];
        for u in self.dirs.iter() {
            local.ray(u, &sorted, &mut out)?;
            for (v, &(_, k, j)) in out.iter().zip(&flat) {
                sums[k] += self.weights[j] * v;
            }
        }
        let n = self.dirs.len() as f64;
        Ok(sums.into_iter().map(|s| s / n).collect())
    }

    pub fn ball_mean(&self, u: &dyn ScalarField, x: &[f64], r: f64) -> Result<f64> {
        check_dim(u, x)?;
        let reach = u.reach(x)?;
        if !(r < reach) {
            return Err(Error::BallNotContained { radius: r, distance: reach });
        }
        let local = u.local(x, r)?;
        Ok(self.ball_means(local.as_ref(), &[r])?[0])
    }

    pub fn estimate(&self, u: &dyn ScalarField, x: &[f64]) -> Result<LaplacianEstimate> {
        check_dim(u, x)?;
        let reach = u.reach(x)?;
        let radii = self.ladder.radii(reach, self.diam)?;
        if !(radii[0] < reach) {
            return Err(Error::BallNotContained {
                radius: radii[0],
                distance: reach,
            });
        }
        let local = u.local(x, radii[0])?;
        let u0 = local.center_value();
        let means = self.ball_means(local.as_ref(), &radii)?;
        Ok(summarize(self.m, x, u0, radii, means))
    }
}

fn check_dim(u: &dyn ScalarField, x: &[f64]) -> Result<()> {
    if x.len() != u.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

fn summarize(m: usize, x: &[f64], u0: f64, radii: Vec<f64>, means: Vec<f64>) -> LaplacianEstimate {
    let c = 2.0 * (m as f64 + 2.0);
    let quotients: Vec<f64> = radii
        .iter()
        .zip(&means)
        .map(|(r, mu)| c * (mu - u0) / (r * r))
        .collect();
    let scale = 1.0 + u0.abs() + means.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let noise: Vec<f64> = radii.iter().map(|r| c * VALUE_EPS * scale / (r * r)).collect();
    let noise_floor = noise.iter().copied().fold(0.0, f64::max);

    let r0 = radii[0];
    let n = radii.len();
    let design = DMatrix::from_fn(n, 3, |i, j| (radii[i] / r0).powi(2 * j as i32));
    let rhs = DVector::from_column_slice(&quotients);
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .unwrap_or_else(|_| DVector::from_element(3, f64::NAN));
    let fitted = &design * &coef;
    let fit_residual = (&fitted - &rhs).amax();
    let spread = quotients.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - quotients.iter().copied().fold(f64::INFINITY, f64::min);
    let misfit = !coef[0].is_finite() || fit_residual > 0.05 * spread + noise_floor;

    let half = (n / 2).max(1);
    let conservative_sup = quotients[n - half..].iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let observed_order = if n >= 3 {
        let d01 = quotients[0] - quotients[1];
        let d12 = quotients[1] - quotients[2];
        let floor = noise[0] + noise[1] + noise[1] + noise[2];
        if d01.abs() > floor && d12.abs() > floor && d01 / d12 > 0.0 {
            Some((d01 / d12).log2())
        } else {
            None
        }
    } else {
        None
    };
    LaplacianEstimate {
        x: x.to_vec(),
        value_at_x: u0,
        radii,
        means,
        quotients,
        extrapolated: coef[0],
        fit_residual,
        noise_floor,
        misfit,
        conservative_sup,
        observed_order,
    }
}

/// Mean of `u` over the ball `B(x, r)`, which must lie inside the field's reach.
pub fn ball_mean(u: &dyn ScalarField, x: &[f64], r: f64, quad: &QuadratureSpec) -> Result<f64> {
    let est = Estimator::new(u.dim(), 1.0, &LadderSpec::default(), quad)?;
    est.ball_mean(u, x, r)
}

/// `Δ̄u(x)` estimated on the radii ladder. `diam` bounds the largest radius
/// through `ladder.r0_frac_diam`.
pub fn upper_laplace_parameter(
    u: &dyn ScalarField,
    x: &[f64],
    ladder: &LadderSpec,
    quad: &QuadratureSpec,
    diam: f64,
) -> Result<LaplacianEstimate> {
    Estimator::new(u.dim(), diam, ladder, quad)?.estimate(u, x)
}

fn focal_check(d: f64, kappas: &[f64]) -> Result<()> {
    for k in kappas {
        let den = 1.0 - d * k;
        if !(den > 0.0) {
            return Err(Error::FocalPoint { denominator: den });
        }
    }
    Ok(())
}

/// `Δ(−log d) = 1/d² + Σ κ_i/(d(1 − dκ_i))`.
pub fn laplacian_neg_log_distance_closed(d: f64, kappas: &[f64]) -> Result<f64> {
    focal_check(d, kappas)?;
    Ok(1.0 / (d * d) + kappas.iter().map(|k| k / (d * (1.0 - d * k))).sum::<f64>())
}

/// `Δ(d^{2−m}) = (m−2)(m−1)/d^m + (m−2)Σ κ_i/(d^{m−1}(1 − dκ_i))`.
pub fn laplacian_power_distance_closed(d: f64, kappas: &[f64], m: usize) -> Result<f64> {
    if m <= 2 {
        return Err(Error::InvalidParameter(format!("power potential needs m > 2, got {m}")));
    }
    focal_check(d, kappas)?;
    let mf = m as f64;
    let dm = d.powi(m as i32);
    let sum: f64 = kappas.iter().map(|k| k / (1.0 - d * k)).sum();
    Ok((mf - 2.0) * (mf - 1.0) / dm + (mf - 2.0) * sum / d.powi(m as i32 - 1))
}

/// `(m−2)(m−1)²/(d^m(m−1−dΣκ))`, the Jensen floor for `Δ(d^{2−m})`.
pub fn power_distance_floor(d: f64, sum_kappa: f64, m: usize) -> Result<f64> {
    if m <= 2 {
        return Err(Error::InvalidParameter(format!("power potential needs m > 2, got {m}")));
    }
    let mf = m as f64;
    let den = mf - 1.0 - d * sum_kappa;
    if !(den > 0.0) {
        return Err(Error::FocalPoint { denominator: den });
    }
    Ok((mf - 2.0) * (mf - 1.0) * (mf - 1.0) / (d.powi(m as i32) * den))
}

/// `(m−1 + (m−2)dΣκ)/(d²(m−1−dΣκ))`; its sign is the sign of `1 + (m−2)dH`.
pub fn jensen_lower_bound_neg_log(d: f64, sum_kappa: f64, m: usize) -> Result<f64> {
    let mf = m as f64;
    let den = mf - 1.0 - d * sum_kappa;
    if !(den > 0.0) {
        return Err(Error::FocalPoint { denominator: den });
    }
    Ok((mf - 1.0 + (mf - 2.0) * d * sum_kappa) / (d * d * den))
}

#[derive(Debug, Clone, Serialize)]
pub struct PseudoconvexSplit {
    /// `1/(d(1 − dκ_min))`, the same floor short one power of `d`.
    pub floor_single_power: f64,
    /// `1/(d²(1 − dκ_min))`, what the split actually yields.
    pub floor: f64,
    /// `floor + Σ_{i≠min} κ_i/d`.
    pub two_term: f64,
    pub laplacian: f64,
    pub drop_min_sum: f64,
    /// `laplacian ≥ two_term ≥ floor` when `drop_min_sum ≥ 0`.
    pub holds: bool,
}

/// Splits off the smallest curvature in `Δ(−log d)` for a domain in `ℂⁿ`.
pub fn pseudoconvex_split_bound(d: f64, kappas: &[f64], n: usize) -> Result<PseudoconvexSplit> {
    if kappas.len() + 1 != 2 * n {
        return Err(Error::DimensionMismatch {
            expected: 2 * n - 1,
            got: kappas.len(),
        });
    }
    focal_check(d, kappas)?;
    let lap = laplacian_neg_log_distance_closed(d, kappas)?;
    let (imin, kmin) = kappas
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, 0.0));
    let rest: f64 = kappas.iter().enumerate().filter(|(i, _)| *i != imin).map(|(_, k)| k).sum();
    let floor = 1.0 / (d * d * (1.0 - d * kmin));
    let two_term = floor + rest / d;
    let slack = 1e-12 * (1.0 + lap.abs());
    Ok(PseudoconvexSplit {
        floor_single_power: 1.0 / (d * (1.0 - d * kmin)),
        floor,
        two_term,
        laplacian: lap,
        drop_min_sum: rest,
        holds: rest < 0.0 || (lap >= two_term - slack && two_term >= floor - slack),
    })
}

/// One `(W, α)` direction for the certificate; `W` must be orthogonal to
/// `X` and `JX`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OkaDirection {
    pub w: Vec<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OkaRecord {
    pub w: Vec<f64>,
    pub alpha: f64,
    /// `𝓗(W+αX, W+αX) + 𝓗(JW+αJX, JW+αJX)` of `−log d` in principal coordinates.
    pub a: f64,
    /// The same quantity from a finite-difference Hessian of `−log d`.
    pub a_numeric: f64,
    /// `Σ ω²κ/(d(1−dκ)) + Σ w²κ/d` after completing the square.
    pub bound_square: f64,
    /// `Σ (w²+ω²)κ/d` after `κ/(1−dκ) ≥ κ`.
    pub bound_relaxed: f64,
    /// `(𝓗F(W,W) + 𝓗F(JW,JW))/(‖∇F‖·d)`, i.e. `4𝓛(V,V)/d` for the
    /// unit-gradient defining function.
    pub levi_term: f64,
    pub chain_holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OkaCertificate {
    pub schema_version: u32,
    pub p: Vec<f64>,
    pub foot: Vec<f64>,
    pub d: f64,
    pub kappas: Vec<f64>,
    pub levi_min_eig: f64,
    pub records: Vec<OkaRecord>,
    /// Every chain holds, and the Levi term is nonnegative when the foot is pseudoconvex.
    pub holds: bool,
}

/// Default directions: each `U` basis vector with `α ∈ {0, ½, 1, −1}`, and `W = 0, α = 1`.
pub fn oka_certificate(
    dom: &ImplicitDomain,
    p: &[f64],
    cs: &ComplexStructure,
    directions: &[OkaDirection],
) -> Result<OkaCertificate> {
    let m = cs.real_dim();
    if dom.dim() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: dom.dim(),
        });
    }
    let proj = project(dom, p)?;
    if !proj.inside {
        return Err(Error::InvalidParameter(format!("{p:?} is not inside the domain")));
    }
    let d = proj.d;
    let h = fd_step(d);
    let field = stencil_field(dom, p, h)?;
    let hess = fd_hessian(&mut |y| field.distance(y).map(|t| -t.ln()), p, h)?;
    let foot = proj.nearest()[0].w.clone();
    let frame = boundary_frame(dom, &foot)?;
    let split = splitting_from_frame(&frame, cs)?;
    let jet = dom.jet(&foot)?;
    let levi = crate::complex::levi_eval(&jet, &split, cs);
    let nu = frame.nu_vec();
    let x = DVector::from_column_slice(&split.x);
    let jx = DVector::from_column_slice(&split.jx);
    let e = frame.principal_vecs();
    let kappas = frame.kappas.clone();
    for k in &kappas {
        if !(1.0 - d * k > 0.0) {
            return Err(Error::FocalPoint { denominator: 1.0 - d * k });
        }
    }

    let defaults;
    let dirs: &[OkaDirection] = if directions.is_empty() {
        let mut v = Vec::new();
        for b in &split.basis {
            for alpha in [0.0, 0.5, 1.0, -1.0] {
                v.push(OkaDirection { w: b.clone(), alpha });
            }
        }
        v.push(OkaDirection {
            w: vec![0.0; m],
            alpha: 1.0,
        });
        defaults = v;
        &defaults
    } else {
        directions
    };

    let mut records = Vec::with_capacity(dirs.len());
    for dir in dirs {
        if dir.w.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: dir.w.len(),
            });
        }
        let w = DVector::from_column_slice(&dir.w);
        let wn = w.norm();
        if w.dot(&x).abs() > 1e-9 * (1.0 + wn) || w.dot(&nu).abs() > 1e-9 * (1.0 + wn) {
            return Err(Error::InvalidParameter("W must be orthogonal to X and JX".into()));
        }
        let jw = cs.apply(&w);
        let alpha = dir.alpha;
        let mut a = alpha * alpha / (d * d);
        let mut bound_square = 0.0;
        let mut bound_relaxed = 0.0;
        for (s, es) in e.iter().enumerate() {
            let k = kappas[s];
            let ws = w.dot(es);
            let om = jw.dot(es);
            let chi = x.dot(es);
            let f = k / (d * (1.0 - d * k));
            a += ((ws + alpha * chi).powi(2) + om * om) * f;
            bound_square += om * om * f + ws * ws * k / d;
            bound_relaxed += (ws * ws + om * om) * k / d;
        }
        let v = &w + &x * alpha;
        let jv = &jw + &jx * alpha;
        let a_numeric = v.dot(&(&hess * &v)) + jv.dot(&(&hess * &jv));
        let levi_term = 4.0 * levi_bilinear(&jet.hessian, &w, &w, cs) / (frame.grad_norm * d);
        let slack = 1e-9 * (1.0 + a.abs());
        records.push(OkaRecord {
            w: dir.w.clone(),
            alpha,
            a,
            a_numeric,
            bound_square,
            bound_relaxed,
            levi_term,
            chain_holds: a >= bound_square - slack && bound_square >= bound_relaxed - slack,
        });
    }
    let pseudoconvex = levi.min_eig >= -crate::complex::LEVI_TOL;
    let holds = records
        .iter()
        .all(|r| r.chain_holds && (!pseudoconvex || r.levi_term >= -crate::complex::LEVI_TOL));
    Ok(OkaCertificate {
        schema_version: SCHEMA_VERSION,
        p: p.to_vec(),
        foot,
        d,
        kappas,
        levi_min_eig: levi.min_eig,
        records,
        holds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateSource {
    Extrapolated,
    ConservativeSup,
    FiniteDifference,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanPoint {
    pub x: Vec<f64>,
    pub d: f64,
    pub margin: f64,
    pub source: EstimateSource,
    /// The ladder's balls reach a competing nearest point.
    pub flagged: bool,
    pub violation: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conservative_sup: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed_order: Option<f64>,
    /// `conservative_sup − floor` for the family lower bound, when one applies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family_margin: Option<f64>,
    /// Same, against `−(m−2)/d²` for `−log d`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family_margin_corrected: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedPoint {
    pub x: Vec<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyBound {
    /// Floor as a formula in `m` and `d`.
    pub floor: String,
    pub min_margin: f64,
    pub violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrected_floor: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrected_min_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrected_violations: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub schema_version: u32,
    pub scan: String,
    pub domain: String,
    pub potential: String,
    pub dim: usize,
    pub grid: GridSpec,
    pub n_grid: usize,
    pub n_exterior: usize,
    pub n_interior: usize,
    pub tol: f64,
    pub ladder: Option<LadderSpec>,
    pub quadrature: Option<QuadratureSpec>,
    pub min_margin: f64,
    pub argmin: Option<Vec<f64>>,
    pub n_violations: usize,
    pub n_passes: usize,
    pub n_skips: usize,
    pub n_flagged: usize,
    pub skipped: Vec<SkippedPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family_bound: Option<FamilyBound>,
    /// `true` when no violations were found.
    pub verdict: bool,
    pub points: Vec<ScanPoint>,
}

impl ScanReport {
    /// `x…,d,margin,flag` rows; `flag` is `medial`, `violation` or `ok`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 1..=self.dim {
            s.push_str(&format!("x{i},"));
        }
        s.push_str("d,margin,flag\n");
        for p in &self.points {
            for v in &p.x {
                s.push_str(&format!("{v},"));
            }
            let flag = if p.violation {
                "violation"
            } else if p.flagged {
                "medial"
            } else {
                "ok"
            };
            s.push_str(&format!("{},{},{}\n", p.d, p.margin, flag));
        }
        for p in &self.skipped {
            for v in &p.x {
                s.push_str(&format!("{v},"));
            }
            s.push_str(",,skipped\n");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanOptions {
    pub tol: f64,
    pub ladder: LadderSpec,
    pub quadrature: QuadratureSpec,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            ladder: LadderSpec::default(),
            quadrature: QuadratureSpec::default(),
        }
    }
}

enum Outcome {
    Exterior,
    Skip(SkippedPoint),
    Point(ScanPoint),
}

/// Generalized Laplacian of a distance potential at every interior grid point.
pub fn subharmonicity_scan(
    dom: &ImplicitDomain,
    kind: PotentialKind,
    grid: &GridSpec,
    opts: &ScanOptions,
) -> Result<ScanReport> {
    grid.validate(dom.dim())?;
    let est = Estimator::for_domain(dom, &opts.ladder, &opts.quadrature)?;
    let m = dom.dim();
    let mf = m as f64;
    let sep = sep_min(dom);
    let outcomes: Vec<Outcome> = grid
        .points()
        .into_par_iter()
        .map(|x| {
            match dom.contains(&x) {
                Ok(true) => {}
                Ok(false) => return Outcome::Exterior,
                Err(e) => return skip(x, e),
            }
            let proj = match project(dom, &x) {
                Ok(p) => p,
                Err(e) => return skip(x, e),
            };
            let d = proj.d;
            let radii = match opts.ladder.radii(d, dom.diam()) {
                Ok(r) => r,
                Err(e) => return skip(x, e),
            };
            let local = DistanceLocal {
                field: NearField::new(dom, &proj, radii[0]),
                kind,
                m,
            };
            let flagged = proj.is_medial(sep)
                || local
                    .field
                    .competitor_distance()
                    .is_some_and(|c| c <= d + 2.0 * radii[0]);
            let u0 = local.center_value();
            let means = match est.ball_means(&local, &radii) {
                Ok(v) => v,
                Err(e) => return skip(x, e),
            };
            let le = summarize(m, &x, u0, radii, means);
            let (margin, source) = if flagged || le.misfit {
                (le.conservative_sup, EstimateSource::ConservativeSup)
            } else {
                (le.extrapolated, EstimateSource::Extrapolated)
            };
            let (family_margin, family_margin_corrected) = match kind {
                PotentialKind::NegLogD => (
                    Some(le.conservative_sup + (mf - 2.0) / d),
                    Some(le.conservative_sup + (mf - 2.0) / (d * d)),
                ),
                PotentialKind::NegD => (Some(le.conservative_sup + (mf - 1.0) / d), None),
                PotentialKind::DPow => (None, None),
            };
            Outcome::Point(ScanPoint {
                violation: margin < -opts.tol,
                x,
                d,
                margin,
                source,
                flagged,
                conservative_sup: Some(le.conservative_sup),
                observed_order: le.observed_order,
                family_margin,
                family_margin_corrected,
            })
        })
        .collect();

    let family_tol = 1e-3;
    let mut report = assemble(
        dom,
        "subharmonicity",
        kind.name(),
        grid,
        opts.tol,
        Some(opts),
        outcomes,
    );
    let fm = |f: fn(&ScanPoint) -> Option<f64>| {
        let vals: Vec<f64> = report.points.iter().filter_map(f).collect();
        (
            vals.iter().copied().fold(f64::INFINITY, f64::min),
            vals.iter().filter(|&&v| v < -family_tol).count(),
        )
    };
    report.family_bound = match kind {
        PotentialKind::NegLogD => {
            let (lit, nlit) = fm(|p| p.family_margin);
            let (cor, ncor) = fm(|p| p.family_margin_corrected);
            Some(FamilyBound {
                floor: "-(m-2)/d".into(),
                min_margin: lit,
                violations: nlit,
                corrected_floor: Some("-(m-2)/d^2".into()),
                corrected_min_margin: Some(cor),
                corrected_violations: Some(ncor),
            })
        }
        PotentialKind::NegD => {
            let (lit, nlit) = fm(|p| p.family_margin);
            Some(FamilyBound {
                floor: "-(m-1)/d".into(),
                min_margin: lit,
                violations: nlit,
                corrected_floor: None,
                corrected_min_margin: None,
                corrected_violations: None,
            })
        }
        PotentialKind::DPow => None,
    };
    Ok(report)
}

fn skip(x: Vec<f64>, e: Error) -> Outcome {
    Outcome::Skip(SkippedPoint { x, reason: e.to_string() })
}

fn assemble(
    dom: &ImplicitDomain,
    scan: &str,
    potential: &str,
    grid: &GridSpec,
    tol: f64,
    opts: Option<&ScanOptions>,
    outcomes: Vec<Outcome>,
) -> ScanReport {
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    let mut n_exterior = 0;
    for o in outcomes {
        match o {
            Outcome::Exterior => n_exterior += 1,
            Outcome::Skip(s) => skipped.push(s),
            Outcome::Point(p) => points.push(p),
        }
    }
    points.sort_by(|a, b| lex_cmp(&a.x, &b.x));
    skipped.sort_by(|a, b| lex_cmp(&a.x, &b.x));
    let (min_margin, argmin) = points
        .iter()
        .min_by(|a, b| a.margin.total_cmp(&b.margin))
        .map_or((f64::INFINITY, None), |p| (p.margin, Some(p.x.clone())));
    let n_violations = points.iter().filter(|p| p.violation).count();
    ScanReport {
        schema_version: SCHEMA_VERSION,
        scan: scan.into(),
        domain: dom.label().into(),
        potential: potential.into(),
        dim: dom.dim(),
        grid: grid.clone(),
        n_grid: grid.len(),
        n_exterior,
        n_interior: points.len() + skipped.len(),
        tol,
        ladder: opts.map(|o| o.ladder.clone()),
        quadrature: opts.map(|o| o.quadrature.clone()),
        min_margin,
        argmin,
        n_violations,
        n_passes: points.len() - n_violations,
        n_skips: skipped.len(),
        n_flagged: points.iter().filter(|p| p.flagged).count(),
        skipped,
        family_bound: None,
        verdict: n_violations == 0,
        points,
    }
}

/// Smallest eigenvalue of `¼(𝓗 + Jᵀ𝓗J)`, the complex Hessian of a function
/// with real Hessian `𝓗`, as a form on all of `ℂⁿ`.
pub fn complex_hessian_min_eigenvalue(h: &DMatrix<f64>, cs: &ComplexStructure) -> f64 {
    let j = cs.matrix();
    let p = (h + j.transpose() * h * &j) * 0.25;
    symmetric_eigen(&((&p + p.transpose()) * 0.5)).values[0]
}

/// Complex-Hessian margins of `−log d` from finite differences; stencils that
/// reach a competing nearest point are skipped.
pub fn plurisubharmonicity_scan(dom: &ImplicitDomain, grid: &GridSpec, tol: f64) -> Result<ScanReport> {
    let cs = ComplexStructure::for_dim(dom.dim())?;
    grid.validate(dom.dim())?;
    let outcomes: Vec<Outcome> = grid
        .points()
        .into_par_iter()
        .map(|x| {
            match dom.contains(&x) {
                Ok(true) => {}
                Ok(false) => return Outcome::Exterior,
                Err(e) => return skip(x, e),
            }
            let d = match project(dom, &x) {
                Ok(p) => p.d,
                Err(e) => return skip(x, e),
            };
            let h = fd_step(d);
            let field = match stencil_field(dom, &x, h) {
                Ok(f) => f,
                Err(e) => return skip(x, e),
            };
            let hess = match fd_hessian(&mut |y| field.distance(y).map(|t| -t.ln()), &x, h) {
                Ok(hm) => hm,
                Err(e) => return skip(x, e),
            };
            let margin = complex_hessian_min_eigenvalue(&hess, &cs);
            Outcome::Point(ScanPoint {
                violation: margin < -tol,
                x,
                d,
                margin,
                source: EstimateSource::FiniteDifference,
                flagged: false,
                conservative_sup: None,
                observed_order: None,
                family_margin: None,
                family_margin_corrected: None,
            })
        })
        .collect();
    Ok(assemble(dom, "plurisubharmonicity", "neg_log_d", grid, tol, None, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::builtin_with;

    fn quad() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn ball_mean_examples() {
        let c = FnField::new(3, |_| 2.5);
        assert!((ball_mean(&c, &[0.1, 0.2, 0.3], 0.1, &quad()).unwrap() - 2.5).abs() < 1e-14);
        let x0 = [0.1, -0.2, 0.3];
        let sq = FnField::new(3, move |y: &[f64]| y.iter().zip(&x0).map(|(a, b)| (a - b) * (a - b)).sum());
        let v = ball_mean(&sq, &x0, 0.1, &quad()).unwrap();
        assert!((v - 0.006).abs() < 1e-15, "{v}");
        let aff = FnField::new(3, |y: &[f64]| 1.0 + 2.0 * y[0] - y[1] + 0.5 * y[2]);
        let v = ball_mean(&aff, &x0, 0.2, &quad()).unwrap();
        assert!((v - (1.0 + 0.2 + 0.2 + 0.15)).abs() < 1e-14);
        let near = FnField::new(3, |_| 0.0).with_reach(|_| 0.05);
        assert!(matches!(
            ball_mean(&near, &x0, 0.1, &quad()),
            Err(Error::BallNotContained { .. })
        ));
    }

    #[test]
    fn estimator_on_quadratic() {
        let sq = FnField::new(3, |y: &[f64]| y.iter().map(|t| t * t).sum());
        let e = upper_laplace_parameter(&sq, &[0.3, 0.1, -0.2], &LadderSpec::default(), &quad(), 2.0).unwrap();
        assert!((e.extrapolated - 6.0).abs() < 1e-6, "{e:?}");
        assert!(!e.misfit);
        assert!(e.radii.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn neg_log_d_examples() {
        let ball = builtin_with("ball", &[("m", 3.0)]).unwrap();
        let f = DistancePotential::new(&ball, PotentialKind::NegLogD);
        let e = upper_laplace_parameter(&f, &[0.5, 0.0, 0.0], &LadderSpec::default(), &quad(), ball.diam()).unwrap();
        assert!((e.value() - 12.0).abs() < 0.02 * 12.0, "{e:?}");

        let ann = builtin_with("annulus", &[("m", 3.0), ("r", 0.1)]).unwrap();
        let f = DistancePotential::new(&ann, PotentialKind::NegLogD);
        let e = upper_laplace_parameter(&f, &[0.3, 0.0, 0.0], &LadderSpec::default(), &quad(), ann.diam()).unwrap();
        let want = (2.0 * 0.1 - 0.3) / (0.3 * 0.2 * 0.2);
        assert!((e.value() - want).abs() < 0.02 * want.abs(), "{e:?}");
    }

    #[test]
    fn closed_forms() {
        assert!((laplacian_neg_log_distance_closed(0.5, &[1.0, 1.0]).unwrap() - 12.0).abs() < 1e-12);
        assert!((laplacian_neg_log_distance_closed(0.3, &[0.0, 0.0]).unwrap() - 1.0 / 0.09).abs() < 1e-12);
        let v = laplacian_neg_log_distance_closed(0.2, &[-10.0, -10.0]).unwrap();
        assert!((v + 25.0 / 3.0).abs() < 1e-12);
        assert!(matches!(
            laplacian_neg_log_distance_closed(0.5, &[2.0]),
            Err(Error::FocalPoint { .. })
        ));

        assert!((laplacian_power_distance_closed(0.5, &[1.0, 1.0], 3).unwrap() - 32.0).abs() < 1e-12);
        let v = laplacian_power_distance_closed(0.2, &[-10.0, -10.0], 3).unwrap();
        // direct: Δ(1/(ρ−r)) = 2/(ρ−r)³ − (2/ρ)/(ρ−r)² at ρ = 0.3
        let direct = 2.0 / 0.008 - (2.0 / 0.3) / 0.04;
        assert!((v - direct).abs() < 1e-9);
        let floor = power_distance_floor(0.2, -20.0, 3).unwrap();
        assert!((floor - direct).abs() < 1e-9);
        assert!(laplacian_power_distance_closed(0.2, &[1.0], 2).is_err());

        // flat boundary: (m−1)/(d²(m−1)) = 1/d²
        assert!((jensen_lower_bound_neg_log(0.4, 0.0, 3).unwrap() - 1.0 / 0.16).abs() < 1e-12);
        let j = jensen_lower_bound_neg_log(0.2, -20.0, 3).unwrap();
        assert!((j + 25.0 / 3.0).abs() < 1e-12);
        // H = −1/((m−2)R) with R = 0.45 and d = 0.3: numerator 2(1 − d/R)
        let h = -1.0 / 0.45;
        let j = jensen_lower_bound_neg_log(0.3, 2.0 * h, 3).unwrap();
        let num = j * 0.09 * (2.0 - 0.3 * 2.0 * h);
        assert!((num - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn split_examples() {
        let s = pseudoconvex_split_bound(0.5, &[1.0, 1.0, 1.0], 2).unwrap();
        assert!((s.floor_single_power - 4.0).abs() < 1e-12);
        assert!((s.floor - 8.0).abs() < 1e-12);
        assert!((s.laplacian - 16.0).abs() < 1e-12 && s.holds);
        let s = pseudoconvex_split_bound(0.25, &[0.0; 3], 2).unwrap();
        assert!((s.floor_single_power - 4.0).abs() < 1e-12);
        let s = pseudoconvex_split_bound(0.1, &[-2.0, 1.0, 1.0], 2).unwrap();
        assert!((s.floor_single_power - 1.0 / 0.12).abs() < 1e-12);
        assert!(s.holds && s.laplacian >= s.floor);
    }

    #[test]
    fn oka_ball_example() {
        let ball = builtin_with("ball", &[("m", 4.0)]).unwrap();
        let cs = ComplexStructure::new(2);
        let c = oka_certificate(&ball, &[0.5, 0.0, 0.0, 0.0], &cs, &[]).unwrap();
        let r0 = &c.records[0];
        assert_eq!(r0.alpha, 0.0);
        assert!((r0.a - 8.0).abs() < 1e-9, "{r0:?}");
        assert!((r0.bound_relaxed - 4.0).abs() < 1e-9);
        assert!((r0.levi_term - 4.0).abs() < 1e-9);
        assert!((r0.a_numeric - 8.0).abs() < 1e-5);
        assert!(c.holds);
        let last = c.records.last().unwrap();
        assert!(last.a > 0.0 && (last.a - last.a_numeric).abs() < 1e-4);
    }

    #[test]
    fn oka_flat_example() {
        let half = ImplicitDomain::from_source("-x2", 2, &[-1.0, 1.0, -1.0, 1.0]).unwrap();
        let cs = ComplexStructure::new(1);
        for alpha in [0.0, 1.0, 2.0] {
            let c = oka_certificate(&half, &[0.0, 0.5], &cs, &[OkaDirection { w: vec![0.0, 0.0], alpha }]).unwrap();
            assert!((c.records[0].a - alpha * alpha / 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn complex_hessian_examples() {
        let cs = ComplexStructure::new(2);
        assert!((complex_hessian_min_eigenvalue(&(DMatrix::identity(4, 4) * 2.0), &cs) - 1.0).abs() < 1e-14);
        // Re(z1²) = x1² − y1² is pluriharmonic
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -2.0, 0.0, 0.0]));
        assert!(complex_hessian_min_eigenvalue(&h, &cs).abs() < 1e-14);
    }
}
