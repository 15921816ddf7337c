//! Independent Levi-form oracle for real polynomials on `ℝ^{2n}`.
//!
//! A polynomial in `(x1, y1, …)` is rewritten in `z, z̄` by substituting
//! `x = (z + z̄)/2`, `y = (z − z̄)/(2i)` and the mixed derivatives
//! `∂²ρ/∂z_j∂z̄_k` are taken monomial by monomial.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;

/// `coef · Π x_j^{a_j} y_j^{b_j}`.
#[derive(Debug, Clone)]
pub struct RealTerm {
    pub coef: f64,
    pub x_exp: Vec<u32>,
    pub y_exp: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct RealPoly {
    pub n: usize,
    pub terms: Vec<RealTerm>,
}

/// Exponents of `z` and `z̄`.
type Key = (Vec<u32>, Vec<u32>);

pub struct ComplexPoly {
    n: usize,
    terms: BTreeMap<Key, Complex64>,
}

impl RealPoly {
    /// Random polynomial of total degree at most `max_deg` with three-decimal coefficients.
    pub fn random(n: usize, n_terms: usize, max_deg: u32, rng: &mut impl Rng) -> Self {
        let terms = (0..n_terms)
            .map(|_| {
                let deg = rng.gen_range(0..=max_deg);
                let mut exps = vec![0u32; 2 * n];
                for _ in 0..deg {
                    exps[rng.gen_range(0..2 * n)] += 1;
                }
                let coef = rng.gen_range(-1000i32..=1000) as f64 / 1000.0;
                RealTerm {
                    coef,
                    x_exp: (0..n).map(|j| exps[2 * j]).collect(),
                    y_exp: (0..n).map(|j| exps[2 * j + 1]).collect(),
                }
            })
            .collect();
        Self { n, terms }
    }

    /// Source text for the expression parser.
    pub fn to_source(&self) -> String {
        let mut parts = Vec::new();
        for t in &self.terms {
            let mut s = format!("({:?})", t.coef);
            for j in 0..self.n {
                for (e, var) in [(t.x_exp[j], 2 * j + 1), (t.y_exp[j], 2 * j + 2)] {
                    if e > 0 {
                        s.push_str(&format!("*x{var}^{e}"));
                    }
                }
            }
            parts.push(s);
        }
        parts.join(" + ")
    }

    pub fn to_complex(&self) -> ComplexPoly {
        let mut out = ComplexPoly {
            n: self.n,
            terms: BTreeMap::new(),
        };
        for t in &self.terms {
            // expand factor by factor
            let mut acc: BTreeMap<Key, Complex64> = BTreeMap::new();
            acc.insert((vec![0; self.n], vec![0; self.n]), Complex64::new(t.coef, 0.0));
            for j in 0..self.n {
                let fx = binomial_expansion(t.x_exp[j], Complex64::new(0.5, 0.0), Complex64::new(0.5, 0.0));
                // y = (z − z̄)/(2i) = −i/2·z + i/2·z̄
                let fy = binomial_expansion(t.y_exp[j], Complex64::new(0.0, -0.5), Complex64::new(0.0, 0.5));
                for f in [fx, fy] {
                    let mut next: BTreeMap<Key, Complex64> = BTreeMap::new();
                    for ((za, zb), c) in &acc {
                        for &(p, q, c2) in &f {
                            let mut a = za.clone();
                            let mut b = zb.clone();
                            a[j] += p;
                            b[j] += q;
                            *next.entry((a, b)).or_default() += c * c2;
                        }
                    }
                    acc = next;
                }
            }
            for (k, c) in acc {
                *out.terms.entry(k).or_default() += c;
            }
        }
        out
    }
}

/// `(α z + β z̄)^e` as `(power of z, power of z̄, coefficient)`.
fn binomial_expansion(e: u32, alpha: Complex64, beta: Complex64) -> Vec<(u32, u32, Complex64)> {
    let mut out = Vec::with_capacity(e as usize + 1);
    let mut binom = 1.0;
    for p in 0..=e {
        let q = e - p;
        out.push((p, q, alpha.powu(p) * beta.powu(q) * binom));
        binom = binom * (e - p) as f64 / (p + 1) as f64;
    }
    out
}

impl ComplexPoly {
    /// `∂²ρ/∂z_j∂z̄_k` at `z`.
    pub fn mixed(&self, j: usize, k: usize, z: &[Complex64]) -> Complex64 {
        let zb: Vec<Complex64> = z.iter().map(|v| v.conj()).collect();
        let mut s = Complex64::new(0.0, 0.0);
        for ((a, b), c) in &self.terms {
            if a[j] == 0 || b[k] == 0 {
                continue;
            }
            let mut t = *c * a[j] as f64 * b[k] as f64;
            for i in 0..self.n {
                let pa = a[i] - u32::from(i == j);
                let pb = b[i] - u32::from(i == k);
                t *= z[i].powu(pa) * zb[i].powu(pb);
            }
            s += t;
        }
        s
    }

    /// `Σ ρ_{jk̄} c_j c̄_k` with `c_j = N_{x_j} + i·N_{y_j}`.
    pub fn levi(&self, point: &[f64], n_vec: &[f64]) -> Complex64 {
        let z: Vec<Complex64> = (0..self.n).map(|j| Complex64::new(point[2 * j], point[2 * j + 1])).collect();
        let c: Vec<Complex64> = (0..self.n).map(|j| Complex64::new(n_vec[2 * j], n_vec[2 * j + 1])).collect();
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..self.n {
            for k in 0..self.n {
                s += self.mixed(j, k, &z) * c[j] * c[k].conj();
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_and_hyperbolic_examples() {
        // |z1|² + |z2|²
        let p = RealPoly {
            n: 2,
            terms: vec![
                RealTerm { coef: 1.0, x_exp: vec![2, 0], y_exp: vec![0, 0] },
                RealTerm { coef: 1.0, x_exp: vec![0, 0], y_exp: vec![2, 0] },
                RealTerm { coef: 1.0, x_exp: vec![0, 2], y_exp: vec![0, 0] },
                RealTerm { coef: 1.0, x_exp: vec![0, 0], y_exp: vec![0, 2] },
            ],
        };
        let l = p.to_complex().levi(&[0.3, 0.1, -0.2, 0.5], &[1.0, 0.0, 0.0, 0.0]);
        assert!((l.re - 1.0).abs() < 1e-15 && l.im.abs() < 1e-15);
        // Re z1 is pluriharmonic
        let p = RealPoly {
            n: 1,
            terms: vec![RealTerm { coef: 1.0, x_exp: vec![1], y_exp: vec![0] }],
        };
        assert_eq!(p.to_complex().levi(&[0.3, 0.4], &[0.2, 1.0]).norm(), 0.0);
        // |z|⁴ at z: ∂²/∂z∂z̄ = 4|z|²
        let p = RealPoly {
            n: 1,
            terms: vec![
                RealTerm { coef: 1.0, x_exp: vec![4], y_exp: vec![0] },
                RealTerm { coef: 2.0, x_exp: vec![2], y_exp: vec![2] },
                RealTerm { coef: 1.0, x_exp: vec![0], y_exp: vec![4] },
            ],
        };
        let l = p.to_complex().levi(&[0.3, 0.4], &[1.0, 0.0]);
        assert!((l.re - 4.0 * 0.25).abs() < 1e-14);
    }
}
