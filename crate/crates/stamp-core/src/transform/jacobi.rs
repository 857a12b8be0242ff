//! Cyclic Jacobi eigensolver for dense symmetric matrices.

use crate::error::{Result, StampError};
use crate::tensor::ActivationMatrix;

const MAX_SWEEPS: usize = 100;
const OFF_DIAG_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-9;

/// Eigenvalues in descending order with eigenvectors as matching columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: ActivationMatrix,
}

impl EigenDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Orthogonal matrix whose column `k` is the eigenvector for eigenvalue `k`.
    pub fn eigenvectors(&self) -> &ActivationMatrix {
        &self.eigenvectors
    }
}

/// Diagonalize a symmetric matrix with cyclic Jacobi rotations.
///
/// Iterates sweeps until the largest off-diagonal magnitude drops below
/// 1e-12 times the largest input magnitude, then sorts eigenpairs by
/// descending eigenvalue and fixes each eigenvector's sign so its
/// largest-magnitude component is positive.
pub fn jacobi_eigh(s_matrix: &ActivationMatrix) -> Result<EigenDecomposition> {
    let n = s_matrix.rows();
    if s_matrix.cols() != n {
        return Err(StampError::Dimension(format!(
            "eigensolver needs a square matrix, got {}x{}",
            n,
            s_matrix.cols()
        )));
    }
    if n > 4096 {
        return Err(StampError::Config(format!(
            "eigensolver limited to 4096, got {n}"
        )));
    }
    let scale = s_matrix.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            if (s_matrix.get(i, j) - s_matrix.get(j, i)).abs() > SYMMETRY_TOL * scale.max(1e-300) {
                return Err(StampError::Data(format!(
                    "matrix is not symmetric at ({i},{j})"
                )));
            }
        }
    }

    // Work on the symmetrized copy so tiny asymmetries cannot bias rotations.
    let mut a: Vec<f64> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            0.5 * (s_matrix.get(i, j) + s_matrix.get(j, i))
        })
        .collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let tol = OFF_DIAG_TOL * scale;
    let mut converged = scale == 0.0 || n < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            let worst = max_off_diag(&a, n);
            return Err(StampError::Numerical(format!(
                "Jacobi did not converge after {MAX_SWEEPS} sweeps (max off-diagonal {worst:e})"
            )));
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= tol {
                    continue;
                }
                let tau = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, n, p, q, c, s, t, apq);
            }
        }
        sweeps += 1;
        converged = max_off_diag(&a, n) < tol;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));

    let eigenvalues: Vec<f64> = order.iter().map(|&k| a[k * n + k]).collect();
    let mut cols = vec![0.0; n * n];
    for (new, &old) in order.iter().enumerate() {
        // Sign convention: largest-magnitude component positive.
        let mut peak = 0usize;
        for i in 1..n {
            if v[i * n + old].abs() > v[peak * n + old].abs() {
                peak = i;
            }
        }
        let flip = if v[peak * n + old] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            cols[i * n + new] = flip * v[i * n + old];
        }
    }

    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors: ActivationMatrix::from_vec(n, n, cols)?,
    })
}

#[allow(clippy::too_many_arguments)]
fn rotate(
    a: &mut [f64],
    v: &mut [f64],
    n: usize,
    p: usize,
    q: usize,
    c: f64,
    s: f64,
    t: f64,
    apq: f64,
) {
    a[p * n + p] -= t * apq;
    a[q * n + q] += t * apq;
    a[p * n + q] = 0.0;
    a[q * n + p] = 0.0;
    for i in 0..n {
        if i == p || i == q {
            continue;
        }
        let aip = a[i * n + p];
        let aiq = a[i * n + q];
        a[i * n + p] = c * aip - s * aiq;
        a[p * n + i] = a[i * n + p];
        a[i * n + q] = s * aip + c * aiq;
        a[q * n + i] = a[i * n + q];
    }
    for i in 0..n {
        let vip = v[i * n + p];
        let viq = v[i * n + q];
        v[i * n + p] = c * vip - s * viq;
        v[i * n + q] = s * vip + c * viq;
    }
}

fn max_off_diag(a: &[f64], n: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max(a[i * n + j].abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::CounterRng;
    use crate::tensor::matmul;

    fn random_symmetric(seed: u64, n: usize) -> ActivationMatrix {
        let rng = CounterRng::new(seed);
        let m = ActivationMatrix::from_fn(n, n, |i, j| rng.normal((i * n + j) as u64)).unwrap();
        ActivationMatrix::from_fn(n, n, |i, j| 0.5 * (m.get(i, j) + m.get(j, i))).unwrap()
    }

    #[test]
    fn diagonal_matrix_is_sorted_and_permuted() {
        let s = ActivationMatrix::from_rows(&[
            vec![3.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ])
        .unwrap();
        let eig = jacobi_eigh(&s).unwrap();
        assert_eq!(eig.eigenvalues(), &[3.0, 2.0, 1.0]);
        let u = eig.eigenvectors();
        // Columns are unit vectors picking out the sorted diagonal entries.
        let expected_cols = [0usize, 2, 1];
        for (k, &src) in expected_cols.iter().enumerate() {
            for i in 0..3 {
                let want = if i == src { 1.0 } else { 0.0 };
                assert!((u.get(i, k) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        let s = ActivationMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let eig = jacobi_eigh(&s).unwrap();
        assert!((eig.eigenvalues()[0] - 3.0).abs() < 1e-12);
        assert!((eig.eigenvalues()[1] - 1.0).abs() < 1e-12);
        let u = eig.eigenvectors();
        let r = 0.5f64.sqrt();
        assert!((u.get(0, 0) - r).abs() < 1e-12);
        assert!((u.get(1, 0) - r).abs() < 1e-12);
        assert!((u.get(0, 1).abs() - r).abs() < 1e-12);
        assert!((u.get(1, 1).abs() - r).abs() < 1e-12);
        // Sign convention on the second vector: largest-magnitude entry positive.
        assert!(u.get(0, 1) > 0.0 || u.get(1, 1) > 0.0);
    }

    #[test]
    fn reconstructs_random_symmetric_matrix() {
        let s = random_symmetric(4, 16);
        let eig = jacobi_eigh(&s).unwrap();
        let u = eig.eigenvectors();
        let scale = s.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // U Lambda U^T == S
        let ul =
            ActivationMatrix::from_fn(16, 16, |i, k| u.get(i, k) * eig.eigenvalues()[k]).unwrap();
        let rec = matmul(&ul, &u.transpose()).unwrap();
        assert!(rec.max_abs_diff(&s) < 1e-8 * scale);
        // U^T U == I
        let utu = matmul(&u.transpose(), u).unwrap();
        assert!(utu.max_abs_diff(&ActivationMatrix::identity(16)) < 1e-10);
    }

    #[test]
    fn handles_repeated_eigenvalues() {
        // 2*I + v v^T has spectrum {2 + |v|^2, 2, 2}.
        let v = [1.0, 2.0, -2.0];
        let s =
            ActivationMatrix::from_fn(3, 3, |i, j| v[i] * v[j] + if i == j { 2.0 } else { 0.0 })
                .unwrap();
        let eig = jacobi_eigh(&s).unwrap();
        assert!((eig.eigenvalues()[0] - 11.0).abs() < 1e-10);
        assert!((eig.eigenvalues()[1] - 2.0).abs() < 1e-10);
        assert!((eig.eigenvalues()[2] - 2.0).abs() < 1e-10);
        let u = eig.eigenvectors();
        let utu = matmul(&u.transpose(), u).unwrap();
        assert!(utu.max_abs_diff(&ActivationMatrix::identity(3)) < 1e-10);
    }

    #[test]
    fn rejects_non_symmetric_input() {
        let s = ActivationMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(jacobi_eigh(&s).is_err());
    }

    #[test]
    fn zero_matrix_is_trivial() {
        let eig = jacobi_eigh(&ActivationMatrix::zeros(3, 3)).unwrap();
        assert_eq!(eig.eigenvalues(), &[0.0, 0.0, 0.0]);
    }
}
