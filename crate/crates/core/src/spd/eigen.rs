//! Cyclic Jacobi eigensolver for dense symmetric matrices.
//!
//! Jacobi rotations are slower than tridiagonal QR but deliver small
//! eigenvalues to high relative accuracy, which the affine-invariant
//! distance depends on (it takes logarithms of every eigenvalue).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Returns `(eigenvalues, eigenvectors)` with eigenvalues sorted descending
/// and eigenvectors stored as the matching columns.
pub(crate) fn jacobi_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (values, vectors) = jacobi(m, true)?;
    Ok((values, vectors.expect("vectors requested")))
}

/// Eigenvalues only, sorted descending; skips the rotation accumulation.
pub(crate) fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(jacobi(m, false)?.0)
}

fn jacobi(m: &DMatrix<f64>, want_vectors: bool) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::contract(format!(
            "eigendecomposition input of dimension {n} has non-finite entries"
        )));
    }

    // Row-major working copy; only the strict upper triangle is read for
    // off-diagonal entries but both halves are kept in sync.
    let mut a: Vec<f64> = (0..n * n).map(|k| m[(k / n, k % n)]).collect();
    let mut v = if want_vectors { vec![0.0; n * n] } else { Vec::new() };
    if want_vectors {
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
    }

    let mut converged = n <= 1;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // Relative off-diagonal threshold keeps tiny eigenvalues accurate.
                if apq.abs() <= f64::EPSILON * (app * aqq).abs().sqrt() {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                rotated = true;

                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;

                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    let new_rp = arp - s * (arq + tau * arp);
                    let new_rq = arq + s * (arp - tau * arq);
                    a[r * n + p] = new_rp;
                    a[p * n + r] = new_rp;
                    a[r * n + q] = new_rq;
                    a[q * n + r] = new_rq;
                }
                for r in 0..if want_vectors { n } else { 0 } {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = vrp - s * (vrq + tau * vrp);
                    v[r * n + q] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::EigenFailure { dim: n });
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort on total order keeps the output deterministic under ties.
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));

    let values = DVector::from_iterator(n, order.iter().map(|&i| a[i * n + i]));
    let vectors = want_vectors.then(|| DMatrix::from_fn(n, n, |r, c| v[r * n + order[c]]));
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&m + m.transpose()) * 0.5
    }

    #[test]
    fn reconstructs_and_is_orthogonal() {
        for seed in 0..20 {
            let m = random_symmetric(8, seed);
            let (vals, vecs) = jacobi_eigen(&m).unwrap();
            let recon = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
            assert!((&recon - &m).norm() / m.norm() < 1e-12);
            let gram = vecs.transpose() * &vecs;
            assert!((gram - DMatrix::identity(8, 8)).norm() < 1e-12);
            for k in 1..8 {
                assert!(vals[k - 1] >= vals[k]);
            }
        }
    }

    #[test]
    fn values_only_path_matches_full_decomposition() {
        for seed in 40..45 {
            let m = random_symmetric(9, seed);
            assert_eq!(jacobi_eigenvalues(&m).unwrap(), jacobi_eigen(&m).unwrap().0);
        }
    }

    #[test]
    fn agrees_with_nalgebra_qr_solver() {
        for seed in 100..110 {
            let m = random_symmetric(12, seed);
            let (vals, _) = jacobi_eigen(&m).unwrap();
            let mut reference: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            reference.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in vals.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn tiny_eigenvalues_keep_relative_accuracy() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-14]));
        let (vals, _) = jacobi_eigen(&m).unwrap();
        assert_eq!(vals[1], 1e-14);
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = DMatrix::identity(3, 3);
        m[(1, 1)] = f64::NAN;
        assert!(matches!(jacobi_eigen(&m), Err(Error::Contract(_))));
    }
}
