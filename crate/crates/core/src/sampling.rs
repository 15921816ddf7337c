//! Quadrature nodes: Gauss–Legendre in the radius and symmetrized
//! low-discrepancy direction sets on the unit sphere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending nodes.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess for the i-th largest root
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
        nodes[i] = -x;
        weights[i] = w;
    }
    (nodes, weights)
}

/// `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}

/// Nodes `ρ_k ∈ (0,1)` and weights for `∫₀¹ g(ρ) m ρ^{m−1} dρ`; weights sum to 1.
pub fn radial_rule(m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mf = m as f64;
    let nodes: Vec<f64> = x.iter().map(|t| 0.5 * (t + 1.0)).collect();
    let weights = nodes
        .iter()
        .zip(&w)
        .map(|(r, wi)| 0.5 * wi * mf * r.powi(m as i32 - 1))
        .collect();
    (nodes, weights)
}

/// Unit directions stored row by row.
#[derive(Debug, Clone)]
pub struct DirectionSet {
    m: usize,
    data: Vec<f64>,
}

impl DirectionSet {
    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.m)
    }
}

/// Number of generators fed through the symmetry orbit.
///
/// | m  | generators | nodes |
/// |----|-----------|-------|
/// | 1  | 1         | 2     |
/// | 2  | 16        | 128   |
/// | 3  | 6         | 144   |
/// | 4  | 2         | 128   |
/// | ≥5 | ⌈128 / (m·2^m)⌉, random | ≥ 128 |
pub fn generator_count(m: usize) -> usize {
    match m {
        1 => 1,
        2 => 16,
        3 => 6,
        4 => 2,
        _ => 128usize.div_ceil(m << m.min(20)).max(1),
    }
}

/// Whether [`sphere_directions`] depends on the seed for this dimension.
pub fn uses_random_generators(m: usize) -> bool {
    m >= 5
}

/// Directions on `S^{m−1}` closed under every sign flip and every cyclic
/// shift of coordinates. The orbit makes all odd moments vanish and the
/// second moments isotropic, so the rule integrates quadratics exactly.
///
/// Generators come from a Halton sequence pushed through Box–Muller for
/// `m ≤ 4`; for `m ≥ 5` they are drawn from a ChaCha stream seeded by `seed`.
pub fn sphere_directions(m: usize, seed: u64) -> DirectionSet {
    assert!(m >= 1);
    let count = generator_count(m);
    let mut gens: Vec<Vec<f64>> = Vec::with_capacity(count);
    if m == 1 {
        gens.push(vec![1.0]);
    } else if !uses_random_generators(m) {
        let pairs = m.div_ceil(2);
        let bases = &PRIMES[..2 * pairs];
        let mut index = 1u64;
        while gens.len() < count {
            let u: Vec<f64> = bases.iter().map(|&b| radical_inverse(index, b)).collect();
            index += 1;
            let mut g = Vec::with_capacity(2 * pairs);
            for p in 0..pairs {
                let (a, b) = box_muller(u[2 * p], u[2 * p + 1]);
                g.push(a);
                g.push(b);
            }
            g.truncate(m);
            if let Some(v) = normalized(g) {
                gens.push(v);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while gens.len() < count {
            let g: Vec<f64> = (0..m)
                .map(|_| {
                    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                    let u2: f64 = rng.gen();
                    box_muller(u1, u2).0
                })
                .collect();
            if let Some(v) = normalized(g) {
                gens.push(v);
            }
        }
    }

    let mut data = Vec::with_capacity(count * m * (1 << m));
    for g in &gens {
        for shift in 0..m {
            for signs in 0u64..(1u64 << m) {
                for j in 0..m {
                    let s = if signs >> j & 1 == 1 { -1.0 } else { 1.0 };
                    data.push(s * g[(j + shift) % m]);
                }
            }
        }
    }
    DirectionSet { m, data }
}

/// `±e_i` for every axis.
pub fn axis_directions(m: usize) -> DirectionSet {
    let mut data = vec![0.0; 2 * m * m];
    for i in 0..m {
        data[(2 * i) * m + i] = 1.0;
        data[(2 * i + 1) * m + i] = -1.0;
    }
    DirectionSet { m, data }
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

fn box_muller(u1: f64, u2: f64) -> (f64, f64) {
    let rad = (-2.0 * u1.ln()).sqrt();
    let th = std::f64::consts::TAU * u2;
    (rad * th.cos(), rad * th.sin())
}

fn normalized(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let n = v.iter().map(|t| t * t).sum::<f64>().sqrt();
    if !(n > 1e-8) || !n.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|t| *t /= n);
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        for p in 0..32 {
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            let q: f64 = x.iter().zip(&w).map(|(t, wi)| wi * t.powi(p)).sum();
            assert!((q - exact).abs() < 1e-14, "degree {p}: {q} vs {exact}");
        }
    }

    #[test]
    fn radial_rule_moments() {
        for m in 1..=5 {
            let (r, w) = radial_rule(m, 16);
            let mf = m as f64;
            let s0: f64 = w.iter().sum();
            let s2: f64 = r.iter().zip(&w).map(|(ri, wi)| wi * ri * ri).sum();
            assert!((s0 - 1.0).abs() < 1e-14);
            assert!((s2 - mf / (mf + 2.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn node_counts() {
        assert_eq!(sphere_directions(1, 0).len(), 2);
        assert_eq!(sphere_directions(2, 0).len(), 128);
        assert_eq!(sphere_directions(3, 0).len(), 144);
        assert_eq!(sphere_directions(4, 0).len(), 128);
        assert!(sphere_directions(5, 0).len() >= 128);
    }

    #[test]
    fn second_moments_are_isotropic() {
        for m in 1..=6 {
            let d = sphere_directions(m, 7);
            let n = d.len() as f64;
            for i in 0..m {
                let first: f64 = d.iter().map(|u| u[i]).sum::<f64>() / n;
                assert!(first.abs() < 1e-15);
                for j in 0..m {
                    let mom: f64 = d.iter().map(|u| u[i] * u[j]).sum::<f64>() / n;
                    let want = if i == j { 1.0 / m as f64 } else { 0.0 };
                    assert!((mom - want).abs() < 1e-14, "m={m} ({i},{j}) {mom}");
                }
            }
        }
    }

    #[test]
    fn seed_matters_only_in_high_dimension() {
        assert_eq!(sphere_directions(3, 1).data, sphere_directions(3, 2).data);
        assert_ne!(sphere_directions(5, 1).data, sphere_directions(5, 2).data);
        assert_eq!(sphere_directions(5, 9).data, sphere_directions(5, 9).data);
    }
}
