//! Cyclic Jacobi diagonalization for small dense Hermitian matrices.
//!
//! Each pivot `(p, q)` is annihilated by a unitary built from a phase
//! rotation (making `a[p][q]` real) followed by a real Givens rotation.
//! Sweeps repeat until the off-diagonal Frobenius norm drops below a
//! threshold relative to the full matrix norm.

use num_complex::Complex64;
use thiserror::Error;

/// Maximum number of full sweeps before reporting failure.
pub const MAX_SWEEPS: usize = 100;
/// Off-diagonal norm threshold, relative to the Frobenius norm of the input.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("matrix is not Hermitian: |H[{row}][{col}] - conj(H[{col}][{row}])| = {deviation:e}")]
    NotHermitian { row: usize, col: usize, deviation: f64 },
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NotConverged { sweeps: usize, off_norm: f64 },
}

/// Eigenvalues (ascending) and the matching unit eigenvectors stored as
/// columns: `vectors[i][k]` is component `i` of eigenvector `k`.
#[derive(Debug, Clone)]
pub struct Eigen<const N: usize> {
    pub values: [f64; N],
    pub vectors: [[Complex64; N]; N],
    pub sweeps: usize,
}

fn frobenius<const N: usize>(a: &[[Complex64; N]; N]) -> f64 {
    a.iter()
        .flat_map(|row| row.iter())
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn off_diagonal<const N: usize>(a: &[[Complex64; N]; N]) -> f64 {
    let mut s = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, z) in row.iter().enumerate() {
            if i != j {
                s += z.norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Checks Hermiticity to within `tol` absolute.
pub fn check_hermitian<const N: usize>(
    a: &[[Complex64; N]; N],
    tol: f64,
) -> Result<(), EigenError> {
    for i in 0..N {
        for j in 0..N {
            if !a[i][j].re.is_finite() || !a[i][j].im.is_finite() {
                return Err(EigenError::NonFinite { row: i, col: j });
            }
        }
    }
    for i in 0..N {
        for j in i..N {
            let deviation = (a[i][j] - a[j][i].conj()).norm();
            if deviation > tol {
                return Err(EigenError::NotHermitian {
                    row: i,
                    col: j,
                    deviation,
                });
            }
        }
    }
    Ok(())
}

/// Diagonalizes a Hermitian matrix. The input must already be Hermitian;
/// only the upper triangle's consistency is checked via [`check_hermitian`]
/// by callers that need it.
pub fn jacobi_hermitian<const N: usize>(
    input: &[[Complex64; N]; N],
) -> Result<Eigen<N>, EigenError> {
    let mut a = *input;
    let mut v = [[Complex64::new(0.0, 0.0); N]; N];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = Complex64::new(1.0, 0.0);
    }

    let norm = frobenius(&a);
    let threshold = OFF_DIAGONAL_TOL * norm;
    let mut sweeps = 0;

    while off_diagonal(&a) > threshold {
        if sweeps == MAX_SWEEPS {
            return Err(EigenError::NotConverged {
                sweeps,
                off_norm: off_diagonal(&a),
            });
        }
        sweeps += 1;
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = a[p][q];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                // Phase e^{-i phi} on column q makes the pivot real and positive.
                let phase = apq.conj() / mag;
                let app = a[p][p].re;
                let aqq = a[q][q].re;
                let theta = (aqq - app) / (2.0 * mag);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // G acts on the (p, q) plane:
                //   G[p][p] = c,          G[p][q] = s
                //   G[q][p] = -s * phase, G[q][q] = c * phase
                let g_pp = Complex64::new(c, 0.0);
                let g_pq = Complex64::new(s, 0.0);
                let g_qp = -phase * s;
                let g_qq = phase * c;

                // A <- A G (columns)
                for row in a.iter_mut() {
                    let x = row[p];
                    let y = row[q];
                    row[p] = x * g_pp + y * g_qp;
                    row[q] = x * g_pq + y * g_qq;
                }
                // A <- G^H A (rows)
                for k in 0..N {
                    let x = a[p][k];
                    let y = a[q][k];
                    a[p][k] = g_pp.conj() * x + g_qp.conj() * y;
                    a[q][k] = g_pq.conj() * x + g_qq.conj() * y;
                }
                a[p][q] = Complex64::new(0.0, 0.0);
                a[q][p] = Complex64::new(0.0, 0.0);
                a[p][p].im = 0.0;
                a[q][q].im = 0.0;

                // V <- V G
                for row in v.iter_mut() {
                    let x = row[p];
                    let y = row[q];
                    row[p] = x * g_pp + y * g_qp;
                    row[q] = x * g_pq + y * g_qq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..N).collect();
    order.sort_by(|&i, &j| a[i][i].re.total_cmp(&a[j][j].re));

    let mut values = [0.0; N];
    let mut vectors = [[Complex64::new(0.0, 0.0); N]; N];
    for (k, &src) in order.iter().enumerate() {
        values[k] = a[src][src].re;
        for i in 0..N {
            vectors[i][k] = v[i][src];
        }
    }
    Ok(Eigen {
        values,
        vectors,
        sweeps,
    })
}
