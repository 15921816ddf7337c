//! Small dense linear algebra: cyclic Jacobi eigensolver and the handful of
//! helpers the geometry code needs (frames, reflections, tiny solves).

use nalgebra::{DMatrix, DVector};

/// Off-diagonal Frobenius norm at which a Jacobi sweep stops, relative to
/// `max(1, ‖A‖_F)`.
pub const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 64;

/// Eigen-decomposition of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: DMatrix<f64>,
    pub sweeps: usize,
}

/// Cyclic Jacobi rotations on a symmetric matrix.
///
/// Only the upper triangle is read. Eigenvalues come back sorted ascending
/// with eigenvectors permuted to match; every eigenvector is oriented so its
/// first component of magnitude above `1e-12` is positive.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> SymmetricEigen {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = a[(i, j)];
            m[(j, i)] = a[(i, j)];
        }
    }
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.norm().max(1.0);
    let mut sweeps = 0;

    while sweeps < JACOBI_MAX_SWEEPS {
        let off = off_diagonal_norm(&m);
        if off < JACOBI_TOL * scale {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let mut e = v.column(i).into_owned();
        orient(&mut e);
        vectors.set_column(col, &e);
    }
    SymmetricEigen {
        values,
        vectors,
        sweeps,
    }
}

fn off_diagonal_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Flips `v` so that its first component with magnitude above `1e-12` is positive.
pub fn orient(v: &mut DVector<f64>) {
    if let Some(first) = v.iter().copied().find(|c| c.abs() > 1e-12) {
        if first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Smallest eigenvalue of the Hermitian matrix `re + i·im` via its real
/// symmetric embedding `[[re, -im], [im, re]]`.
pub fn hermitian_min_eigenvalue(re: &DMatrix<f64>, im: &DMatrix<f64>) -> f64 {
    let k = re.nrows();
    if k == 0 {
        return f64::INFINITY;
    }
    let mut big = DMatrix::<f64>::zeros(2 * k, 2 * k);
    for i in 0..k {
        for j in 0..k {
            big[(i, j)] = re[(i, j)];
            big[(i + k, j + k)] = re[(i, j)];
            big[(i, j + k)] = -im[(i, j)];
            big[(i + k, j)] = im[(i, j)];
        }
    }
    symmetric_eigen(&big).values[0]
}

/// Gram–Schmidt: orthonormalizes `candidates` against `against` (assumed
/// orthonormal) and against each other, dropping vectors whose residual norm
/// falls below `drop_tol`. Two passes of projection are applied.
pub fn gram_schmidt(
    candidates: impl IntoIterator<Item = DVector<f64>>,
    against: &[DVector<f64>],
    drop_tol: f64,
) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for mut c in candidates {
        for _ in 0..2 {
            for b in against.iter().chain(out.iter()) {
                let p = b.dot(&c);
                c.axpy(-p, b, 1.0);
            }
        }
        let n = c.norm();
        if n > drop_tol {
            out.push(c / n);
        }
    }
    out
}

/// Householder reflection `Q = I − 2vvᵀ/‖v‖²` with `Q·e = e_last` for a unit
/// vector `e`. `Q` is symmetric and orthogonal.
pub fn reflection_to_last_axis(e: &DVector<f64>) -> DMatrix<f64> {
    let m = e.len();
    let mut target = DVector::<f64>::zeros(m);
    target[m - 1] = 1.0;
    let v = e - &target;
    let vv = v.dot(&v);
    if vv < 1e-30 {
        return DMatrix::identity(m, m);
    }
    DMatrix::identity(m, m) - (&v * v.transpose()) * (2.0 / vv)
}

/// Largest deviation of `BᵀB` from the identity for the columns in `basis`.
pub fn orthonormality_defect(basis: &[DVector<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a.dot(b) - target).abs());
        }
    }
    worst
}

/// In-place Gaussian elimination with partial pivoting on a row-major `n×n`
/// system. Returns `false` when a pivot vanishes.
pub(crate) fn solve_in_place(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for row in (col + 1)..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best < 1e-300 || !best.is_finite() {
            return false;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for row in (col + 1)..n {
            let f = a[row * n + col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in (col + 1)..n {
            s -= a[col * n + k] * b[k];
        }
        b[col] = s / a[col * n + col];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::close;

    mod approx_eq {
        pub fn close(a: f64, b: f64, tol: f64) -> bool {
            (a - b).abs() <= tol
        }
    }

    #[test]
    fn jacobi_diagonal_is_noop() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 2.0]));
        let e = symmetric_eigen(&a);
        assert_eq!(e.values, vec![-1.0, 2.0, 3.0]);
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn jacobi_matches_nalgebra_on_fixed_matrix() {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                4.0, 1.0, -2.0, 0.5, 1.0, 3.0, 0.0, 1.5, -2.0, 0.0, 1.0, 0.25, 0.5, 1.5, 0.25, -2.0,
            ],
        );
        let ours = symmetric_eigen(&a);
        let mut theirs: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        for (x, y) in ours.values.iter().zip(&theirs) {
            assert!(close(*x, *y, 1e-12), "{x} vs {y}");
        }
        // A V = V Λ
        for k in 0..4 {
            let v = ours.vectors.column(k);
            let r = &a * v - v * ours.values[k];
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn degenerate_eigenvectors_are_oriented() {
        let a = DMatrix::<f64>::identity(3, 3) * 2.0;
        let e = symmetric_eigen(&a);
        for k in 0..3 {
            let col = e.vectors.column(k);
            let first = col.iter().find(|c| c.abs() > 1e-12).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn hermitian_embedding_recovers_eigenvalues() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3.
        let re = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let im = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(close(hermitian_min_eigenvalue(&re, &im), 1.0, 1e-13));
    }

    #[test]
    fn reflection_sends_vector_to_last_axis() {
        let e = DVector::from_vec(vec![0.6, 0.0, 0.8]);
        let q = reflection_to_last_axis(&e);
        let img = &q * &e;
        assert!((img - DVector::from_vec(vec![0.0, 0.0, 1.0])).norm() < 1e-15);
        assert!((&q * q.transpose() - DMatrix::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn small_solve() {
        let mut a = vec![0.0, 2.0, 1.0, 1.0];
        let mut b = vec![4.0, 3.0];
        assert!(solve_in_place(&mut a, &mut b, 2));
        assert!(close(b[0], 1.0, 1e-15) && close(b[1], 2.0, 1e-15));
    }
}
