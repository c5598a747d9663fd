//! Dense linear-algebra helpers: Gram deviations, Haar orthogonal sampling
//! and a cyclic Jacobi eigensolver for the singular spectra.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Result};

const JACOBI_MAX_SWEEPS: usize = 64;

/// Gram matrix over the smaller dimension: `A Aᵀ` for wide or square
/// inputs, `Aᵀ A` for tall ones.
pub fn gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() <= a.ncols() {
        a * a.transpose()
    } else {
        a.tr_mul(a)
    }
}

/// `Gram(A) - I` for the smaller dimension.
pub fn gram_deviation(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = gram(a);
    for k in 0..g.nrows() {
        g[(k, k)] -= 1.0;
    }
    g
}

/// Frobenius norm of `Gram(A) - I`.
pub fn orthogonality_score(a: &DMatrix<f64>) -> f64 {
    gram_deviation(a).norm()
}

/// Haar-distributed matrix with orthonormal rows (wide) or columns (tall).
///
/// QR of a Gaussian matrix, with the columns of `Q` flipped so that `R`
/// has a positive diagonal.
pub fn haar_orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..short {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, in
/// descending order. Only the upper triangle needs to be meaningful.
pub fn symmetric_eigenvalues(s: &DMatrix<f64>) -> Vec<f64> {
    let n = s.nrows();
    assert_eq!(n, s.ncols(), "symmetric_eigenvalues needs a square matrix");
    let mut a = s.clone();
    for c in 0..n {
        for r in c + 1..n {
            a[(r, c)] = a[(c, r)];
        }
    }

    let total: f64 = a.iter().map(|v| v * v).sum();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for q in 0..n {
            for p in 0..q {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off <= f64::EPSILON * f64::EPSILON * total * 1e-2 || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                if t == 0.0 {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                // A <- A J
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                // A <- Jᵀ A
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|k| a[(k, k)]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}

/// All `min(rows, cols)` singular values, descending, from the Jacobi
/// eigenvalues of the smaller Gram matrix.
pub fn singular_values(j: &DMatrix<f64>) -> Result<Vec<f64>> {
    if j.iter().any(|v| !v.is_finite()) {
        return domain("singular values of a non-finite matrix");
    }
    Ok(symmetric_eigenvalues(&gram(j))
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect())
}
