//! Geometry of the manifold of symmetric positive-definite matrices under the
//! affine-invariant metric.
//!
//! Every covariance-like feature in this crate ends up as an [`SpdMatrix`].
//! The type carries its eigendecomposition, computed once at construction, so
//! matrix functions (`sqrt`, `log`, powers) cost only a reconstruction.
//!
//! ```
//! use riemann_bci::spd::{SpdMatrix, riemann_distance};
//!
//! let a = SpdMatrix::from_diagonal(&[4.0, 1.0]).unwrap();
//! let b = SpdMatrix::identity(2);
//! let d = riemann_distance(&a, &b).unwrap();
//! assert!((d - 4f64.ln()).abs() < 1e-12);
//! ```

mod eigen;
mod mean;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub use mean::{arithmetic_mean, geometric_mean, karcher_residual, MeanConfig, MeanInit};

/// Relative floor used by the positive-definiteness check.
pub const SPD_RELATIVE_FLOOR: f64 = 1e-12;

/// A dense real symmetric matrix. Symmetry is enforced exactly on
/// construction by averaging with the transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    m: DMatrix<f64>,
}

impl SymmetricMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::contract(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::contract("symmetric matrix must have dimension >= 1"));
        }
        Ok(Self::symmetrize(m))
    }

    /// Builds from a row-major slice of `dim * dim` values.
    pub fn from_row_major(dim: usize, values: &[f64]) -> Result<Self> {
        if values.len() != dim * dim {
            return Err(Error::contract(format!(
                "expected {} values for a {dim}x{dim} matrix, got {}",
                dim * dim,
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, values))
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: DMatrix::identity(dim, dim) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::contract("diagonal must be nonempty"));
        }
        Ok(Self {
            m: DMatrix::from_diagonal(&DVector::from_row_slice(diag)),
        })
    }

    pub(crate) fn symmetrize(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut out = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        Self { m: out }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.m[(row, col)]
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let n = self.dim();
        (0..n * n).map(|k| self.m[(k / n, k % n)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    pub fn evd(&self) -> Result<Evd> {
        evd(self)
    }

    /// `WᵀSW` for a square `W` of matching dimension.
    pub fn congruence(&self, w: &DMatrix<f64>) -> Result<SymmetricMatrix> {
        check_square(w, self.dim())?;
        Ok(Self::symmetrize(w.transpose() * &self.m * w))
    }

    /// Matrix exponential; always SPD in exact arithmetic.
    pub fn exp(&self) -> Result<SpdMatrix> {
        let e = self.evd()?;
        SpdMatrix::from_evd(e.map_values(f64::exp))
    }

    /// Checks the SPD condition and wraps the matrix.
    pub fn into_spd(self) -> Result<SpdMatrix> {
        SpdMatrix::new(self)
    }
}

fn check_square(w: &DMatrix<f64>, dim: usize) -> Result<()> {
    if w.nrows() != dim || w.ncols() != dim {
        return Err(Error::contract(format!(
            "transform must be {dim}x{dim}, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    Ok(())
}

/// Eigenvalue decomposition `U Λ Uᵀ` with eigenvalues sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct Evd {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

impl Evd {
    /// Orthogonal matrix whose columns are the eigenvectors.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn reconstruct(&self) -> SymmetricMatrix {
        let scaled = DMatrix::from_fn(self.vectors.nrows(), self.vectors.ncols(), |r, c| {
            self.vectors[(r, c)] * self.values[c]
        });
        SymmetricMatrix::symmetrize(scaled * self.vectors.transpose())
    }

    /// Applies `f` to every eigenvalue, keeping eigenvectors; re-sorts so the
    /// descending invariant survives order-reversing maps such as inversion.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Evd {
        let mapped: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        let n = mapped.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| mapped[j].total_cmp(&mapped[i]));
        if order.iter().enumerate().all(|(k, &i)| k == i) {
            return Evd {
                vectors: self.vectors.clone(),
                values: DVector::from_vec(mapped),
            };
        }
        Evd {
            vectors: DMatrix::from_fn(n, n, |r, c| self.vectors[(r, order[c])]),
            values: DVector::from_iterator(n, order.iter().map(|&i| mapped[i])),
        }
    }
}

/// Eigendecomposition of a symmetric matrix.
pub fn evd(m: &SymmetricMatrix) -> Result<Evd> {
    let (values, vectors) = eigen::jacobi_eigen(&m.m)?;
    Ok(Evd { vectors, values })
}

/// A symmetric positive-definite matrix together with its eigendecomposition.
///
/// Immutable after construction, so it can be shared freely across threads.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    base: SymmetricMatrix,
    eig: Evd,
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base
    }
}

impl SpdMatrix {
    pub fn new(base: SymmetricMatrix) -> Result<Self> {
        let eig = base.evd()?;
        check_spd(&eig)?;
        Ok(Self { base, eig })
    }

    /// Pairs a matrix with a decomposition already known to describe it
    /// (up to rounding), skipping the eigensolve.
    pub(crate) fn with_evd(base: SymmetricMatrix, eig: Evd) -> Result<Self> {
        debug_assert_eq!(base.dim(), eig.values.len());
        check_spd(&eig)?;
        Ok(Self { base, eig })
    }

    /// Builds from a known decomposition, avoiding a second eigensolve.
    pub(crate) fn from_evd(eig: Evd) -> Result<Self> {
        check_spd(&eig)?;
        Ok(Self {
            base: eig.reconstruct(),
            eig,
        })
    }

    pub fn from_row_major(dim: usize, values: &[f64]) -> Result<Self> {
        Self::new(SymmetricMatrix::from_row_major(dim, values)?)
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        Self::new(SymmetricMatrix::new(m)?)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(SymmetricMatrix::from_diagonal(diag)?)
    }

    pub fn identity(dim: usize) -> Self {
        let base = SymmetricMatrix::identity(dim);
        let eig = Evd {
            vectors: DMatrix::identity(dim, dim),
            values: DVector::from_element(dim, 1.0),
        };
        Self { base, eig }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn as_symmetric(&self) -> &SymmetricMatrix {
        &self.base
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.base.as_matrix()
    }

    pub fn evd(&self) -> &Evd {
        &self.eig
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.base.get(row, col)
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        self.base.to_row_major()
    }

    pub fn inverse(&self) -> SpdMatrix {
        self.apply_positive(|x| 1.0 / x)
    }

    pub fn sqrt(&self) -> SpdMatrix {
        self.apply_positive(f64::sqrt)
    }

    pub fn inv_sqrt(&self) -> SpdMatrix {
        self.apply_positive(|x| 1.0 / x.sqrt())
    }

    /// `C^p` for real `p`.
    pub fn powf(&self, p: f64) -> SpdMatrix {
        self.apply_positive(|x| x.powf(p))
    }

    /// Principal matrix logarithm; symmetric, generally indefinite.
    pub fn log(&self) -> SymmetricMatrix {
        self.eig.map_values(f64::ln).reconstruct()
    }

    pub fn congruence(&self, w: &DMatrix<f64>) -> Result<SpdMatrix> {
        self.base.congruence(w)?.into_spd()
    }

    /// Eigenvalue maps that send positive reals to positive reals keep SPD-ness;
    /// the relative floor is not rechecked because it can be lost to a power
    /// (e.g. squaring) without the result ceasing to be positive definite.
    fn apply_positive(&self, f: impl Fn(f64) -> f64) -> SpdMatrix {
        let eig = self.eig.map_values(f);
        SpdMatrix {
            base: eig.reconstruct(),
            eig,
        }
    }
}

pub(crate) fn check_spd(eig: &Evd) -> Result<()> {
    let n = eig.values.len();
    let max = eig.values[0];
    let min = eig.values[n - 1];
    if !(min.is_finite() && max.is_finite()) || min <= n as f64 * max * SPD_RELATIVE_FLOOR || min <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            dim: n,
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    Ok(())
}

/// True when the matrix passes the relative positive-definiteness check.
pub fn is_spd(m: &SymmetricMatrix) -> bool {
    m.evd().map(|e| check_spd(&e).is_ok()).unwrap_or(false)
}

/// Eigenvalue functions available through [`matrix_fn`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatrixFunction {
    Inverse,
    Sqrt,
    InvSqrt,
    Log,
    Power(f64),
}

/// Applies an eigenvalue function to an SPD matrix.
pub fn matrix_fn(c: &SpdMatrix, f: MatrixFunction) -> SymmetricMatrix {
    match f {
        MatrixFunction::Inverse => c.inverse().base,
        MatrixFunction::Sqrt => c.sqrt().base,
        MatrixFunction::InvSqrt => c.inv_sqrt().base,
        MatrixFunction::Log => c.log(),
        MatrixFunction::Power(p) => c.powf(p).base,
    }
}

fn check_same_dim(a: &SpdMatrix, b: &SpdMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::contract(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Whitened matrix `C1^(-1/2) C2 C1^(-1/2)`, symmetric and SPD in exact arithmetic.
fn whiten(c1_inv_sqrt: &DMatrix<f64>, c2: &SpdMatrix) -> SymmetricMatrix {
    SymmetricMatrix::symmetrize(c1_inv_sqrt * c2.as_matrix() * c1_inv_sqrt)
}

/// Eigenvalues of `C1⁻¹C2`, descending.
pub fn generalized_eigenvalues(c1: &SpdMatrix, c2: &SpdMatrix) -> Result<DVector<f64>> {
    check_same_dim(c1, c2)?;
    let w = whiten(c1.inv_sqrt().as_matrix(), c2);
    eigen::jacobi_eigenvalues(w.as_matrix())
}

/// Affine-invariant Riemannian distance `sqrt(Σ ln² wₙ)` where `wₙ` are the
/// eigenvalues of `C1⁻¹C2`.
pub fn riemann_distance(c1: &SpdMatrix, c2: &SpdMatrix) -> Result<f64> {
    let w = generalized_eigenvalues(c1, c2)?;
    distance_from_eigenvalues(&w, c1.dim())
}

/// Distance to several targets sharing one reference point (the whitening is
/// computed once).
pub(crate) fn distances_from(c: &SpdMatrix, targets: &[SpdMatrix]) -> Result<Vec<f64>> {
    let isq = c.inv_sqrt();
    targets
        .iter()
        .map(|t| {
            check_same_dim(c, t)?;
            let w = eigen::jacobi_eigenvalues(whiten(isq.as_matrix(), t).as_matrix())?;
            distance_from_eigenvalues(&w, c.dim())
        })
        .collect()
}

fn distance_from_eigenvalues(w: &DVector<f64>, dim: usize) -> Result<f64> {
    if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::NotPositiveDefinite {
            dim,
            min_eigenvalue: w.min(),
            max_eigenvalue: w.max(),
        });
    }
    Ok(w.iter().map(|x| x.ln().powi(2)).sum::<f64>().sqrt())
}

/// Point at parameter `t ∈ [0, 1]` on the geodesic from `c1` to `c2`:
/// `C1^(1/2) (C1^(-1/2) C2 C1^(-1/2))^t C1^(1/2)`.
pub fn geodesic(c1: &SpdMatrix, c2: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    check_same_dim(c1, c2)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::contract(format!("geodesic parameter {t} outside [0, 1]")));
    }
    if t == 0.0 {
        return Ok(c1.clone());
    }
    if t == 1.0 {
        return Ok(c2.clone());
    }
    let sq = c1.sqrt();
    let isq = c1.inv_sqrt();
    let inner = whiten(isq.as_matrix(), c2).into_spd()?.powf(t);
    SymmetricMatrix::symmetrize(sq.as_matrix() * inner.as_matrix() * sq.as_matrix()).into_spd()
}

/// Draws a random SPD matrix `U diag(λ) Uᵀ` with Haar-like orthogonal `U` and
/// log-uniform eigenvalues spanning exactly the requested condition number.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, dim: usize, condition: f64) -> SpdMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let log_cond = condition.max(1.0).ln();
    let mut values: Vec<f64> = (0..dim)
        .map(|k| match (k, dim) {
            (0, _) => 1.0,
            (k, d) if k == d - 1 => (-log_cond).exp(),
            _ => (-rng.random::<f64>() * log_cond).exp(),
        })
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let scale = (rng.random::<f64>() * 4.0 - 2.0).exp();
    let d = DMatrix::from_diagonal(&DVector::from_iterator(dim, values.iter().map(|v| v * scale)));
    SpdMatrix::from_matrix(&q * d * q.transpose()).expect("construction yields an SPD matrix")
}

/// Draws a random invertible matrix `U diag(σ) Vᵀ` with orthogonal `U`, `V`
/// from Gaussian QR and singular values log-uniform in `[1, max_condition]`,
/// so the condition number never exceeds `max_condition`.
pub fn random_invertible<R: Rng + ?Sized>(rng: &mut R, dim: usize, max_condition: f64) -> DMatrix<f64> {
    let mut orthogonal = || DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q();
    let u = orthogonal();
    let v = orthogonal();
    let log_cond = max_condition.max(1.0).ln();
    let sv = DVector::from_fn(dim, |_, _| (rng.random::<f64>() * log_cond).exp());
    u * DMatrix::from_diagonal(&sv) * v.transpose()
}
