//! Sample grids for scans.

use serde::{Deserialize, Serialize};

use crate::domain::ImplicitDomain;
use crate::error::{Error, Result};

/// One axis of a tensor grid: `n` equispaced values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    /// Tensor grid, one entry per coordinate.
    Axes(Vec<AxisSpec>),
    /// `n` cell-centred shells `r_min + (i + ½)(r_max − r_min)/n` along `direction`.
    Radial(RadialSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialSpec {
    pub r_min: f64,
    pub r_max: f64,
    pub n: usize,
    pub direction: Vec<f64>,
}

impl GridSpec {
    /// `n` points per axis across the bounding box.
    pub fn uniform(dom: &ImplicitDomain, n: usize) -> Self {
        let (lo, hi) = dom.bbox();
        GridSpec::Axes(
            lo.iter()
                .zip(hi)
                .map(|(a, b)| AxisSpec { min: *a, max: *b, n })
                .collect(),
        )
    }

    pub fn radial(r_min: f64, r_max: f64, n: usize, direction: Vec<f64>) -> Self {
        GridSpec::Radial(RadialSpec {
            r_min,
            r_max,
            n,
            direction,
        })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            GridSpec::Axes(axes) => {
                if axes.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: axes.len(),
                    });
                }
                for a in axes {
                    if a.n == 0 || !(a.min <= a.max) || (a.n > 1 && a.min == a.max) {
                        return Err(Error::InvalidParameter(format!("bad grid axis {a:?}")));
                    }
                }
            }
            GridSpec::Radial(r) => {
                if r.direction.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: r.direction.len(),
                    });
                }
                let norm = r.direction.iter().map(|t| t * t).sum::<f64>().sqrt();
                if r.n == 0 || !(r.r_min < r.r_max) || !(norm > 0.0) {
                    return Err(Error::InvalidParameter("bad radial grid".into()));
                }
            }
        }
        Ok(())
    }

    /// Points in lexicographic index order (last axis fastest).
    pub fn points(&self) -> Vec<Vec<f64>> {
        match self {
            GridSpec::Axes(axes) => {
                let vals: Vec<Vec<f64>> = axes.iter().map(linspace).collect();
                let total: usize = vals.iter().map(Vec::len).product();
                let mut out = Vec::with_capacity(total);
                let mut idx = vec![0usize; axes.len()];
                for _ in 0..total {
                    out.push(idx.iter().enumerate().map(|(k, &i)| vals[k][i]).collect());
                    for k in (0..idx.len()).rev() {
                        idx[k] += 1;
                        if idx[k] < vals[k].len() {
                            break;
                        }
                        idx[k] = 0;
                    }
                }
                out
            }
            GridSpec::Radial(r) => {
                let norm = r.direction.iter().map(|t| t * t).sum::<f64>().sqrt();
                let step = (r.r_max - r.r_min) / r.n as f64;
                (0..r.n)
                    .map(|i| {
                        let rho = r.r_min + (i as f64 + 0.5) * step;
                        r.direction.iter().map(|t| rho * t / norm).collect()
                    })
                    .collect()
            }
        }
    }

    /// Diagonal of one grid cell (the shell width for radial grids).
    pub fn cell_diag(&self) -> f64 {
        match self {
            GridSpec::Axes(axes) => axes
                .iter()
                .map(|a| {
                    if a.n > 1 {
                        let h = (a.max - a.min) / (a.n - 1) as f64;
                        h * h
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
                .sqrt(),
            GridSpec::Radial(r) => (r.r_max - r.r_min) / r.n as f64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            GridSpec::Axes(axes) => axes.iter().map(|a| a.n).product(),
            GridSpec::Radial(r) => r.n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn linspace(a: &AxisSpec) -> Vec<f64> {
    if a.n == 1 {
        return vec![0.5 * (a.min + a.max)];
    }
    let h = (a.max - a.min) / (a.n - 1) as f64;
    (0..a.n)
        .map(|i| if i + 1 == a.n { a.max } else { a.min + i as f64 * h })
        .collect()
}

/// Lexicographic order on coordinate vectors.
pub fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_grid_is_inclusive() {
        let g = GridSpec::Axes(vec![
            AxisSpec { min: -1.0, max: 1.0, n: 3 },
            AxisSpec { min: 0.0, max: 1.0, n: 2 },
        ]);
        let p = g.points();
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![-1.0, 0.0]);
        assert_eq!(p[5], vec![1.0, 1.0]);
        assert!((g.cell_diag() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn radial_shells_are_centred() {
        let g = GridSpec::radial(0.1, 1.0, 200, vec![2.0, 0.0, 0.0]);
        let p = g.points();
        assert!((p[0][0] - 0.10225).abs() < 1e-15);
        assert!((p[199][0] - 0.99775).abs() < 1e-12);
    }

    #[test]
    fn config_shape() {
        let g: GridSpec = serde_json::from_str(r#"[{"min":-1,"max":1,"n":5}]"#).unwrap();
        assert_eq!(g.len(), 5);
    }
}
