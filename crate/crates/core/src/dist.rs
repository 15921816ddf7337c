//! Distance to the boundary: nearest points, medial-axis detection, inradius
//! and Hessians of the distance function.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{tangent_frame, ImplicitDomain};
use crate::error::{Error, Result};
use crate::grid::{lex_cmp, GridSpec};
use crate::linalg::{solve_in_place, symmetric_eigen};
use crate::sampling::{axis_directions, sphere_directions};

/// Relative slack for declaring two minimizers equally near.
pub const TOL_MULTI: f64 = 1e-6;
pub const K_MAX: usize = 8;

/// Separation above which two nearest points count as distinct.
pub fn sep_min(dom: &ImplicitDomain) -> f64 {
    1e-3 * dom.diam()
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceResult {
    pub x: Vec<f64>,
    pub d: f64,
    /// Negative inside.
    pub signed: f64,
    pub nearest: Vec<Vec<f64>>,
    /// `None` on the medial axis or on the boundary.
    pub grad: Option<Vec<f64>>,
    pub medial_axis: bool,
    /// More than `k_max` equidistant points were found; the list is truncated.
    pub saturated: bool,
}

/// A solution of the Lagrange system for `min ‖w − x‖` subject to `F(w) = 0`.
#[derive(Debug, Clone)]
pub struct Stationary {
    pub w: Vec<f64>,
    pub dist: f64,
    pub local_min: bool,
}

/// All stationary points discovered from `x`, sorted by distance.
#[derive(Debug, Clone)]
pub struct Projection {
    pub x: Vec<f64>,
    pub inside: bool,
    pub d: f64,
    pub stationary: Vec<Stationary>,
}

impl Projection {
    /// Local minima at distance within `(1 + TOL_MULTI)·d`, deduplicated.
    pub fn nearest(&self) -> Vec<&Stationary> {
        let lim = self.d * (1.0 + TOL_MULTI) + 1e-14;
        self.stationary
            .iter()
            .filter(|s| s.local_min && s.dist <= lim)
            .collect()
    }

    pub fn is_medial(&self, sep: f64) -> bool {
        let near = self.nearest();
        near.iter()
            .enumerate()
            .any(|(i, a)| near[i + 1..].iter().any(|b| dist(&a.w, &b.w) > sep))
    }

    /// Smallest `dist − d` over local minima whose foot is farther than `sep`
    /// from the nearest foot.
    pub fn second_gap(&self, sep: f64) -> Option<f64> {
        let first = self.stationary.iter().find(|s| s.local_min)?;
        self.stationary
            .iter()
            .filter(|s| s.local_min && dist(&s.w, &first.w) > sep)
            .map(|s| s.dist - self.d)
            .next()
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Scratch buffers for the Lagrange–Newton iteration.
pub(crate) struct NewtonWork {
    m: usize,
    g: Vec<f64>,
    h: Vec<f64>,
    g2: Vec<f64>,
    h2: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    w: Vec<f64>,
    wt: Vec<f64>,
    /// `F(w)`; with `g` and `h` it is the jet at `w`.
    f: f64,
}

impl NewtonWork {
    pub(crate) fn new(m: usize) -> Self {
        Self {
            m,
            g: vec![0.0; m],
            h: vec![0.0; m * m],
            g2: vec![0.0; m],
            h2: vec![0.0; m * m],
            a: vec![0.0; (m + 1) * (m + 1)],
            b: vec![0.0; m + 1],
            w: vec![0.0; m],
            wt: vec![0.0; m],
            f: 0.0,
        }
    }
}

fn residual_sq(y: &[f64], w: &[f64], g: &[f64], lambda: f64, f: f64) -> f64 {
    let mut r = f * f;
    for i in 0..w.len() {
        let t = w[i] - y[i] + lambda * g[i];
        r += t * t;
    }
    r
}

/// Newton on `w − y + λ∇F(w) = 0, F(w) = 0` from `w0`. On success the
/// stationary point is left in `work.w`, and `work.g`/`work.h` hold the jet
/// there; returns `λ`.
pub(crate) fn lagrange_newton(
    dom: &ImplicitDomain,
    y: &[f64],
    w0: &[f64],
    step_tol: f64,
    work: &mut NewtonWork,
) -> Option<f64> {
    work.w.copy_from_slice(w0);
    work.f = dom.eval_into(&work.w, &mut work.g, &mut work.h).ok()?;
    newton_from_jet(dom, y, step_tol, work)
}

/// As [`lagrange_newton`], starting from the point and jet already held in
/// `work` (the previous solution when continuing along a path).
pub(crate) fn newton_from_jet(dom: &ImplicitDomain, y: &[f64], step_tol: f64, work: &mut NewtonWork) -> Option<f64> {
    let m = work.m;
    let n = m + 1;
    let scale = dom.diam();
    let mut f = work.f;
    let gg: f64 = work.g.iter().map(|t| t * t).sum();
    if !(gg > 0.0) {
        return None;
    }
    let mut lambda = -work
        .w
        .iter()
        .zip(y)
        .zip(&work.g)
        .map(|((wi, yi), gi)| (wi - yi) * gi)
        .sum::<f64>()
        / gg;
    let mut merit = residual_sq(y, &work.w, &work.g, lambda, f);

    for _ in 0..60 {
        let gn = work.g.iter().map(|t| t * t).sum::<f64>().sqrt();
        let tol_f = dom.tol_f(gn);
        let stat: f64 = (0..m)
            .map(|i| {
                let t = work.w[i] - y[i] + lambda * work.g[i];
                t * t
            })
            .sum::<f64>()
            .sqrt();
        if stat <= 1e-15 * scale && f.abs() <= 1e-3 * tol_f {
            return Some(lambda);
        }
        for i in 0..m {
            for j in 0..m {
                work.a[i * n + j] = lambda * work.h[i * m + j] + if i == j { 1.0 } else { 0.0 };
            }
            work.a[i * n + m] = work.g[i];
            work.a[m * n + i] = work.g[i];
            work.b[i] = -(work.w[i] - y[i] + lambda * work.g[i]);
        }
        work.a[m * n + m] = 0.0;
        work.b[m] = -f;
        if !solve_in_place(&mut work.a, &mut work.b, n) {
            return if stat <= 1e-12 * scale && f.abs() <= tol_f {
                Some(lambda)
            } else {
                None
            };
        }
        let step_norm = work.b[..m].iter().map(|t| t * t).sum::<f64>().sqrt();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..m {
                work.wt[i] = work.w[i] + t * work.b[i];
            }
            let lt = lambda + t * work.b[m];
            if let Ok(ft) = dom.eval_into(&work.wt, &mut work.g2, &mut work.h2) {
                let mt = residual_sq(y, &work.wt, &work.g2, lt, ft);
                if mt < merit || (t == 1.0 && step_norm < step_tol && mt <= merit * 4.0) {
                    std::mem::swap(&mut work.w, &mut work.wt);
                    std::mem::swap(&mut work.g, &mut work.g2);
                    std::mem::swap(&mut work.h, &mut work.h2);
                    lambda = lt;
                    f = ft;
                    work.f = ft;
                    merit = mt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            let gn = work.g.iter().map(|t| t * t).sum::<f64>().sqrt();
            return if stat <= 1e-10 * scale && f.abs() <= dom.tol_f(gn) {
                Some(lambda)
            } else {
                None
            };
        }
        if t * step_norm < step_tol {
            let gn = work.g.iter().map(|t| t * t).sum::<f64>().sqrt();
            return if f.abs() <= dom.tol_f(gn) { Some(lambda) } else { None };
        }
    }
    None
}

/// Second-order test: `I + λ𝓗F` restricted to the tangent space is PSD.
fn is_local_min(work: &NewtonWork, lambda: f64) -> bool {
    let m = work.m;
    let gn = work.g.iter().map(|t| t * t).sum::<f64>().sqrt();
    let nu = nalgebra::DVector::from_iterator(m, work.g.iter().map(|t| -t / gn));
    let tangent = tangent_frame(&nu);
    let k = tangent.len();
    if k == 0 {
        return true;
    }
    let l = DMatrix::from_fn(m, m, |i, j| {
        lambda * work.h[i * m + j] + if i == j { 1.0 } else { 0.0 }
    });
    let mut red = DMatrix::<f64>::zeros(k, k);
    for a in 0..k {
        let la = &l * &tangent[a];
        for b in 0..k {
            red[(a, b)] = tangent[b].dot(&la);
        }
    }
    symmetric_eigen(&red).values[0] >= -1e-7
}

/// First sign change of `F` along `x + t·u`, `0 < t ≤ t_max`, refined by
/// Illinois regula falsi.
fn march(dom: &ImplicitDomain, x: &[f64], f0: f64, u: &[f64], step: f64, t_max: f64, buf: &mut [f64]) -> Option<f64> {
    let m = x.len();
    let at = |t: f64, buf: &mut [f64]| -> Option<f64> {
        for i in 0..m {
            buf[i] = x[i] + t * u[i];
        }
        dom.value(buf).ok()
    };
    let s0 = f0 > 0.0;
    let mut t_prev = 0.0;
    let mut f_prev = f0;
    let mut t = step;
    while t_prev < t_max {
        let tc = t.min(t_max);
        let fc = at(tc, buf)?;
        if fc == 0.0 {
            return Some(tc);
        }
        if (fc > 0.0) != s0 {
            let (mut a, mut fa, mut b, mut fb) = (t_prev, f_prev, tc, fc);
            let mut side = 0i8;
            for _ in 0..200 {
                let c = (a * fb - b * fa) / (fb - fa);
                let fcc = at(c, buf)?;
                if fcc == 0.0 || (b - a).abs() < 1e-15 * (1.0 + b) {
                    return Some(c);
                }
                if (fcc > 0.0) == (fb > 0.0) {
                    b = c;
                    fb = fcc;
                    if side == 1 {
                        fa *= 0.5;
                    }
                    side = 1;
                } else {
                    a = c;
                    fa = fcc;
                    if side == -1 {
                        fb *= 0.5;
                    }
                    side = -1;
                }
            }
            return Some(0.5 * (a + b));
        }
        t_prev = tc;
        f_prev = fc;
        t += step;
    }
    None
}

fn bbox_exit(dom: &ImplicitDomain, x: &[f64], u: &[f64]) -> f64 {
    let (lo, hi) = dom.bbox();
    let mut t = f64::INFINITY;
    for i in 0..x.len() {
        if u[i] > 0.0 {
            t = t.min((hi[i] - x[i]) / u[i]);
        } else if u[i] < 0.0 {
            t = t.min((lo[i] - x[i]) / u[i]);
        }
    }
    t.max(0.0)
}

/// Multistart search for every stationary point of `‖w − x‖` on `∂Ω` that
/// lies within 1.5 times the nearest ray hit.
///
/// Rays are marched from `x` along `±∇F(x)`, the coordinate axes and a
/// symmetric direction set; each boundary hit seeds a Newton solve of the
/// Lagrange system.
pub fn project(dom: &ImplicitDomain, x: &[f64]) -> Result<Projection> {
    let m = dom.dim();
    if x.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: x.len(),
        });
    }
    let f0 = dom.value(x)?;
    if f0 == 0.0 {
        return Ok(Projection {
            x: x.to_vec(),
            inside: false,
            d: 0.0,
            stationary: vec![Stationary {
                w: x.to_vec(),
                dist: 0.0,
                local_min: true,
            }],
        });
    }
    let scale = dom.diam();
    let step = scale / 128.0;
    let mut buf = vec![0.0; m];
    let mut hits: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut best = f64::INFINITY;
    let axes = axis_directions(m);
    let sphere = sphere_directions(m, 0);
    // ±∇F(x) catches small features that the fixed set can straddle.
    let mut grad_dirs: Vec<Vec<f64>> = Vec::new();
    if let Some(jet) = dom.jet(x).ok().filter(|j| j.gradient.norm() > 0.0 && j.gradient.norm().is_finite()) {
        let gn = jet.gradient.norm();
        let g: Vec<f64> = jet.gradient.iter().map(|t| t / gn).collect();
        grad_dirs.push(g.iter().map(|t| -t).collect());
        grad_dirs.push(g);
    }
    for u in grad_dirs.iter().map(Vec::as_slice).chain(axes.iter()).chain(sphere.iter()) {
        let t_max = bbox_exit(dom, x, u).min(1.5 * best);
        if let Some(t) = march(dom, x, f0, u, step, t_max, &mut buf) {
            best = best.min(t);
            hits.push((t, x.iter().zip(u).map(|(a, b)| a + t * b).collect()));
        }
    }
    if hits.is_empty() {
        return Err(Error::NonConvergence(format!(
            "no boundary crossing found from {x:?} inside the bounding box"
        )));
    }
    hits.retain(|(t, _)| *t <= 1.5 * best);

    let mut work = NewtonWork::new(m);
    let dedupe = 1e-6 * scale;
    let mut stationary: Vec<Stationary> = Vec::new();
    for (_, w0) in &hits {
        let Some(lambda) = lagrange_newton(dom, x, w0, 1e-12 * scale, &mut work) else {
            continue;
        };
        let w = work.w.clone();
        if stationary.iter().any(|s| dist(&s.w, &w) < dedupe) {
            continue;
        }
        let local_min = is_local_min(&work, lambda);
        stationary.push(Stationary {
            dist: dist(&w, x),
            w,
            local_min,
        });
    }
    stationary.sort_by(|a, b| a.dist.total_cmp(&b.dist).then_with(|| lex_cmp(&a.w, &b.w)));
    let d = stationary
        .iter()
        .find(|s| s.local_min)
        .map(|s| s.dist)
        .ok_or_else(|| Error::NonConvergence(format!("no local minimizer found from {x:?}")))?;
    if d > best * (1.0 + 1e-8) + 1e-12 * scale {
        return Err(Error::NonConvergence(format!(
            "projection from {x:?} ended above a ray hit ({d} > {best})"
        )));
    }
    Ok(Projection {
        x: x.to_vec(),
        inside: f0 < 0.0,
        d,
        stationary,
    })
}

/// Distance, nearest points and medial-axis status for a point of the box.
pub fn nearest_boundary_points(dom: &ImplicitDomain, x: &[f64], k_max: usize) -> Result<DistanceResult> {
    if k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be at least 1".into()));
    }
    let proj = project(dom, x)?;
    Ok(result_from_projection(dom, &proj, k_max))
}

pub fn result_from_projection(dom: &ImplicitDomain, proj: &Projection, k_max: usize) -> DistanceResult {
    let mut near: Vec<Vec<f64>> = proj.nearest().iter().map(|s| s.w.clone()).collect();
    near.sort_by(|a, b| lex_cmp(a, b));
    let medial = proj.is_medial(sep_min(dom));
    let saturated = near.len() > k_max;
    near.truncate(k_max);
    let grad = if medial || proj.d == 0.0 {
        None
    } else {
        Some(proj.x.iter().zip(&near[0]).map(|(a, b)| (a - b) / proj.d).collect())
    };
    DistanceResult {
        x: proj.x.clone(),
        d: proj.d,
        signed: if proj.inside { -proj.d } else { proj.d },
        nearest: near,
        grad,
        medial_axis: medial,
        saturated,
    }
}

/// Negative inside `Ω`, positive outside.
pub fn signed_distance(dom: &ImplicitDomain, x: &[f64]) -> Result<f64> {
    let p = project(dom, x)?;
    Ok(if p.inside { -p.d } else { p.d })
}

/// `n` boundary points: nearest feet of seeded uniform samples in the
/// bounding box. Samples whose projection fails are redrawn.
pub fn sample_boundary_points(dom: &ImplicitDomain, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = dom.bbox();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        if attempts > 20 * n + 100 {
            return Err(Error::NonConvergence("boundary sampling kept failing".into()));
        }
        let y: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..*b)).collect();
        if let Ok(p) = project(dom, &y) {
            if let Some(s) = p.stationary.iter().find(|s| s.local_min) {
                out.push(s.w.clone());
            }
        }
    }
    Ok(out)
}

/// Distances near a centre point, computed by continuing the centre's
/// local minimizers with Newton instead of a fresh multistart search.
pub struct NearField<'a> {
    dom: &'a ImplicitDomain,
    pub(crate) x: Vec<f64>,
    pub(crate) d: f64,
    feet: Vec<Vec<f64>>,
    others: Vec<f64>,
    step_tol: f64,
}

/// Continuation tries at most this many candidate feet per query.
const NEAR_CANDIDATES: usize = 4;

impl<'a> NearField<'a> {
    /// Keeps stationary points within `d + 2·radius` of `x`.
    pub fn new(dom: &'a ImplicitDomain, proj: &Projection, radius: f64) -> Self {
        let reach = proj.d + 2.0 * radius + 1e-12;
        let nearest = proj.stationary.iter().find(|s| s.local_min);
        let sep = sep_min(dom);
        let feet = proj
            .stationary
            .iter()
            .filter(|s| s.local_min && s.dist <= reach)
            .map(|s| s.w.clone())
            .collect();
        let others = proj
            .stationary
            .iter()
            .filter(|s| nearest.is_some_and(|n| dist(&n.w, &s.w) > sep))
            .map(|s| s.dist)
            .collect();
        Self {
            dom,
            x: proj.x.clone(),
            d: proj.d,
            feet,
            others,
            step_tol: 1e-9 * dom.diam(),
        }
    }

    pub fn center(&self) -> &[f64] {
        &self.x
    }

    pub fn center_distance(&self) -> f64 {
        self.d
    }

    /// Distance from `x` to the nearest stationary point other than the foot.
    pub fn competitor_distance(&self) -> Option<f64> {
        self.others.iter().copied().reduce(f64::min)
    }

    fn ranked_feet(&self, y: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.feet.len()).collect();
        if idx.len() > NEAR_CANDIDATES {
            idx.sort_by(|&a, &b| dist(&self.feet[a], y).total_cmp(&dist(&self.feet[b], y)).then(a.cmp(&b)));
            idx.truncate(NEAR_CANDIDATES);
        }
        idx
    }

    /// Unsigned distance at `y`.
    pub fn distance(&self, y: &[f64]) -> Result<f64> {
        let mut work = NewtonWork::new(self.dom.dim());
        let mut best = f64::INFINITY;
        for i in self.ranked_feet(y) {
            if lagrange_newton(self.dom, y, &self.feet[i], self.step_tol, &mut work).is_some() {
                best = best.min(dist(&work.w, y));
            }
        }
        if best.is_finite() {
            Ok(best)
        } else {
            Ok(project(self.dom, y)?.d)
        }
    }

    /// Distances at `x + ρ·u` for ascending `radii`, continuing each foot
    /// from one radius to the next.
    pub fn distances_along_ray(&self, u: &[f64], radii: &[f64], out: &mut [f64]) -> Result<()> {
        let m = self.dom.dim();
        let mut work = NewtonWork::new(m);
        let mut y = vec![0.0; m];
        let far: Vec<f64> = self
            .x
            .iter()
            .zip(u)
            .map(|(a, b)| a + radii.last().copied().unwrap_or(0.0) * b)
            .collect();
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        for i in self.ranked_feet(&far) {
            for (k, rho) in radii.iter().enumerate() {
                for j in 0..m {
                    y[j] = self.x[j] + rho * u[j];
                }
                let solved = if k == 0 {
                    lagrange_newton(self.dom, &y, &self.feet[i], self.step_tol, &mut work)
                } else {
                    newton_from_jet(self.dom, &y, self.step_tol, &mut work)
                };
                if solved.is_none() {
                    break;
                }
                out[k] = out[k].min(dist(&work.w, &y));
            }
        }
        // Where every foot was lost, project afresh and continue from the
        // new foot.
        for k in 0..radii.len() {
            if out[k].is_finite() {
                continue;
            }
            for j in 0..m {
                y[j] = self.x[j] + radii[k] * u[j];
            }
            let proj = project(self.dom, &y)?;
            out[k] = proj.d;
            let Some(foot) = proj.stationary.iter().find(|s| s.local_min) else {
                continue;
            };
            if lagrange_newton(self.dom, &y, &foot.w, self.step_tol, &mut work).is_none() {
                continue;
            }
            for (kk, rho) in radii.iter().enumerate().skip(k + 1) {
                for j in 0..m {
                    y[j] = self.x[j] + rho * u[j];
                }
                if newton_from_jet(self.dom, &y, self.step_tol, &mut work).is_none() {
                    break;
                }
                out[kk] = out[kk].min(dist(&work.w, &y));
            }
        }
        Ok(())
    }
}

/// Central-difference Hessian with one Richardson level (`h` and `h/2`).
pub fn fd_hessian(f: &mut dyn FnMut(&[f64]) -> Result<f64>, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let coarse = fd_hessian_once(f, x, h)?;
    let fine = fd_hessian_once(f, x, 0.5 * h)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

fn fd_hessian_once(f: &mut dyn FnMut(&[f64]) -> Result<f64>, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let m = x.len();
    let f0 = f(x)?;
    let mut y = x.to_vec();
    let mut eval = |offs: &[(usize, f64)], y: &mut Vec<f64>| -> Result<f64> {
        y.copy_from_slice(x);
        for &(i, s) in offs {
            y[i] += s;
        }
        f(y)
    };
    let mut hm = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        let fp = eval(&[(i, h)], &mut y)?;
        let fm = eval(&[(i, -h)], &mut y)?;
        hm[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let pp = eval(&[(i, h), (j, h)], &mut y)?;
            let pm = eval(&[(i, h), (j, -h)], &mut y)?;
            let mp = eval(&[(i, -h), (j, h)], &mut y)?;
            let mm = eval(&[(i, -h), (j, -h)], &mut y)?;
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            hm[(i, j)] = v;
            hm[(j, i)] = v;
        }
    }
    Ok(hm)
}

/// Finite-difference step used for distance Hessians at distance `d`.
pub fn fd_step(d: f64) -> f64 {
    (1e-3 * d).max(1e-4)
}

/// Builds the near field at `x` and refuses it when the stencil of half-width
/// `√2·h` could reach a competing minimizer.
pub fn stencil_field<'a>(dom: &'a ImplicitDomain, x: &[f64], h: f64) -> Result<NearField<'a>> {
    let proj = project(dom, x)?;
    if proj.is_medial(sep_min(dom)) {
        return Err(Error::MedialStencil(x.to_vec()));
    }
    let field = NearField::new(dom, &proj, 2.0 * h);
    if let Some(c) = field.competitor_distance() {
        if c <= proj.d + 2.0 * std::f64::consts::SQRT_2 * h {
            return Err(Error::MedialStencil(x.to_vec()));
        }
    }
    Ok(field)
}

/// Hessian of `d` at an interior point off the medial axis.
pub fn distance_hessian_numeric(dom: &ImplicitDomain, x: &[f64]) -> Result<DMatrix<f64>> {
    if !dom.contains(x)? {
        return Err(Error::InvalidParameter(format!("{x:?} is not inside the domain")));
    }
    let d0 = project(dom, x)?.d;
    let h = fd_step(d0);
    let field = stencil_field(dom, x, h)?;
    fd_hessian(&mut |y| field.distance(y), x, h)
}

/// `diag(−κ_i/(1 − tκ_i), 0)` in principal coordinates.
pub fn distance_hessian_closed_form(kappas: &[f64], t: f64) -> Result<DMatrix<f64>> {
    let m = kappas.len() + 1;
    let mut h = DMatrix::zeros(m, m);
    for (i, k) in kappas.iter().enumerate() {
        let den = 1.0 - t * k;
        if den <= 0.0 {
            return Err(Error::FocalPoint { denominator: den });
        }
        h[(i, i)] = -k / den;
    }
    Ok(h)
}

#[derive(Debug, Clone, Serialize)]
pub struct MedialPoint {
    pub x: Vec<f64>,
    pub d: f64,
    pub n_nearest: usize,
    /// Distance gap to the next separated local minimizer, if any.
    pub gap: Option<f64>,
    pub medial_axis: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverFailure {
    pub x: Vec<f64>,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct MedialScan {
    pub cell_diag: f64,
    pub sep_min: f64,
    pub n_grid: usize,
    pub n_interior: usize,
    pub points: Vec<MedialPoint>,
    pub failures: Vec<SolverFailure>,
    pub n_flagged: usize,
    pub fraction_flagged: f64,
}

impl MedialScan {
    pub fn flagged(&self) -> impl Iterator<Item = &MedialPoint> {
        self.points.iter().filter(|p| p.medial_axis)
    }

    /// CSV with header `x1,...,xm,d,medial_axis,n_nearest`.
    pub fn to_csv(&self, m: usize) -> String {
        let mut s = String::new();
        for i in 1..=m {
            s.push_str(&format!("x{i},"));
        }
        s.push_str("d,medial_axis,n_nearest\n");
        for p in &self.points {
            for v in &p.x {
                s.push_str(&format!("{v},"));
            }
            s.push_str(&format!("{},{},{}\n", p.d, p.medial_axis, p.n_nearest));
        }
        s
    }
}

/// Flags interior grid points within one cell of the medial axis: a second
/// local minimizer, separated by more than `sep_min`, is no farther than the
/// cell diagonal beyond the first.
pub fn medial_axis_scan(dom: &ImplicitDomain, grid: &GridSpec) -> Result<MedialScan> {
    grid.validate(dom.dim())?;
    let cell = grid.cell_diag();
    let sep = sep_min(dom);
    let pts = grid.points();
    let n_grid = pts.len();
    let results: Vec<Option<std::result::Result<MedialPoint, SolverFailure>>> = pts
        .par_iter()
        .map(|x| match dom.contains(x) {
            Ok(false) | Err(_) => None,
            Ok(true) => Some(match project(dom, x) {
                Ok(p) => {
                    let gap = p.second_gap(sep);
                    Ok(MedialPoint {
                        x: x.clone(),
                        d: p.d,
                        n_nearest: p.nearest().len(),
                        gap,
                        medial_axis: p.is_medial(sep) || gap.is_some_and(|g| g <= cell),
                    })
                }
                Err(e) => Err(SolverFailure {
                    x: x.clone(),
                    error: e.to_string(),
                }),
            }),
        })
        .collect();
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for r in results.into_iter().flatten() {
        match r {
            Ok(p) => points.push(p),
            Err(f) => failures.push(f),
        }
    }
    points.sort_by(|a, b| lex_cmp(&a.x, &b.x));
    failures.sort_by(|a, b| lex_cmp(&a.x, &b.x));
    let n_interior = points.len() + failures.len();
    if n_interior == 0 {
        return Err(Error::EmptyGrid);
    }
    let n_flagged = points.iter().filter(|p| p.medial_axis).count();
    Ok(MedialScan {
        cell_diag: cell,
        sep_min: sep,
        n_grid,
        n_interior,
        fraction_flagged: n_flagged as f64 / points.len().max(1) as f64,
        n_flagged,
        points,
        failures,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DomainMetrics {
    pub inradius: f64,
    pub incenter: Vec<f64>,
    pub grid_resolution: f64,
    pub grid_max: f64,
}

/// Largest interior distance: grid maximum refined by compass search.
pub fn inradius(dom: &ImplicitDomain, grid: &GridSpec) -> Result<DomainMetrics> {
    grid.validate(dom.dim())?;
    let pts = grid.points();
    let vals: Vec<Option<(Vec<f64>, f64)>> = pts
        .par_iter()
        .map(|x| match dom.contains(x) {
            Ok(true) => project(dom, x).ok().map(|p| (x.clone(), p.d)),
            _ => None,
        })
        .collect();
    let mut interior: Vec<(Vec<f64>, f64)> = vals.into_iter().flatten().collect();
    if interior.is_empty() {
        return Err(Error::EmptyGrid);
    }
    interior.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| lex_cmp(&a.0, &b.0)));
    let grid_max = interior[0].1;
    let cell = grid.cell_diag();
    let seeds: Vec<(Vec<f64>, f64)> = interior.into_iter().take(4).collect();
    let refined: Vec<(Vec<f64>, f64)> = seeds
        .par_iter()
        .map(|(x, d)| compass_max(dom, x, *d, cell))
        .collect();
    let (incenter, r) = refined
        .into_iter()
        .reduce(|a, b| if b.1 > a.1 { b } else { a })
        .expect("non-empty");
    Ok(DomainMetrics {
        inradius: r,
        incenter,
        grid_resolution: cell,
        grid_max,
    })
}

fn compass_max(dom: &ImplicitDomain, x0: &[f64], d0: f64, cell: f64) -> (Vec<f64>, f64) {
    let m = x0.len();
    let mut x = x0.to_vec();
    let mut d = d0;
    let mut step = 0.5 * cell.max(1e-3 * dom.diam());
    let stop = 1e-7 * dom.diam();
    while step > stop {
        let mut moved = false;
        for i in 0..m {
            for s in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] += s * step;
                if let Ok(true) = dom.contains(&y) {
                    if let Ok(p) = project(dom, &y) {
                        if p.d > d {
                            x = y;
                            d = p.d;
                            moved = true;
                        }
                    }
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (x, d)
}
