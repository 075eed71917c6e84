use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{SpdMatrix, SymmetricMatrix};
use crate::error::{Error, Result};

/// How the fixed-point iteration is started.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanInit {
    #[default]
    Arithmetic,
    /// Start from the given matrix (e.g. the previous mean when refitting).
    #[serde(skip)]
    Given(SpdMatrix),
}

/// Stopping rule for [`geometric_mean`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanConfig {
    /// Karcher residual threshold; `None` means `1e-8 * dim`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    #[serde(default)]
    pub init: MeanInit,
}

impl Default for MeanConfig {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: 60,
            init: MeanInit::Arithmetic,
        }
    }
}

impl MeanConfig {
    pub fn tolerance(&self, dim: usize) -> f64 {
        self.tol.unwrap_or(1e-8 * dim as f64)
    }
}

fn check_set(set: &[SpdMatrix]) -> Result<usize> {
    let first = set
        .first()
        .ok_or_else(|| Error::contract("mean of an empty set"))?;
    let dim = first.dim();
    if let Some(bad) = set.iter().find(|c| c.dim() != dim) {
        return Err(Error::contract(format!(
            "mean over matrices of different dimensions ({dim} and {})",
            bad.dim()
        )));
    }
    Ok(dim)
}

fn check_weights(weights: Option<&[f64]>, k: usize) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0 / k as f64; k]),
        Some(w) => {
            if w.len() != k {
                return Err(Error::contract(format!("{} weights for {k} matrices", w.len())));
            }
            if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::contract("weights must be finite and nonnegative"));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::contract(format!("weights sum to {sum}, expected 1")));
            }
            Ok(w.to_vec())
        }
    }
}

/// Element-wise average `(1/K) Σ C_k`.
pub fn arithmetic_mean(set: &[SpdMatrix]) -> Result<SpdMatrix> {
    weighted_arithmetic_mean(set, &vec![1.0 / set.len().max(1) as f64; set.len()])
}

fn weighted_arithmetic_mean(set: &[SpdMatrix], weights: &[f64]) -> Result<SpdMatrix> {
    let dim = check_set(set)?;
    let mut acc = DMatrix::zeros(dim, dim);
    for (c, &w) in set.iter().zip(weights) {
        acc += c.as_matrix() * w;
    }
    SymmetricMatrix::symmetrize(acc).into_spd()
}

/// `Σ_k w_k ln(M^(-1/2) C_k M^(-1/2))`, the Riemannian gradient direction at `m`.
fn log_map_sum(m: &SpdMatrix, set: &[SpdMatrix], weights: &[f64]) -> Result<SymmetricMatrix> {
    let isq = m.inv_sqrt();
    let isq = isq.as_matrix();
    let dim = m.dim();
    let mut acc = DMatrix::zeros(dim, dim);
    for (c, &w) in set.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let whitened = SymmetricMatrix::symmetrize(isq * c.as_matrix() * isq).into_spd()?;
        acc += whitened.log().as_matrix() * w;
    }
    Ok(SymmetricMatrix::symmetrize(acc))
}

/// Frobenius norm of the weighted log-map sum at `m`; zero exactly at the
/// Karcher mean.
pub fn karcher_residual(m: &SpdMatrix, set: &[SpdMatrix], weights: Option<&[f64]>) -> Result<f64> {
    let dim = check_set(set)?;
    if m.dim() != dim {
        return Err(Error::contract("candidate mean has the wrong dimension"));
    }
    let w = check_weights(weights, set.len())?;
    Ok(log_map_sum(m, set, &w)?.frobenius_norm())
}

/// Weighted Riemannian (Karcher) mean by the fixed-point iteration
/// `M ← M^(1/2) exp(s Σ_k w_k ln(M^(-1/2) C_k M^(-1/2))) M^(1/2)`.
///
/// The step `s` starts at 1. An update that would increase the residual is
/// rejected and retried with `s/2`; after an accepted update `s` is reset
/// from a secant estimate of the curvature along the step, capped at 1.
pub fn geometric_mean(set: &[SpdMatrix], weights: Option<&[f64]>, cfg: &MeanConfig) -> Result<SpdMatrix> {
    let dim = check_set(set)?;
    let w = check_weights(weights, set.len())?;
    let tol = cfg.tolerance(dim);

    let mut m = match &cfg.init {
        MeanInit::Arithmetic => weighted_arithmetic_mean(set, &w)?,
        MeanInit::Given(m0) => {
            if m0.dim() != dim {
                return Err(Error::contract("initial mean has the wrong dimension"));
            }
            m0.clone()
        }
    };

    let mut direction = log_map_sum(&m, set, &w)?;
    let mut residual = direction.frobenius_norm();
    let mut step = 1.0;
    for _ in 0..cfg.max_iter {
        if residual < tol {
            return Ok(m);
        }
        let sq = m.sqrt();
        let scaled = SymmetricMatrix::symmetrize(direction.as_matrix() * step);
        let e = scaled.exp()?;
        let candidate = SymmetricMatrix::symmetrize(sq.as_matrix() * e.as_matrix() * sq.as_matrix()).into_spd()?;
        let next = log_map_sum(&candidate, set, &w)?;
        let next_residual = next.frobenius_norm();
        if next_residual > residual {
            // Overshoot: stay put and retry with half the step.
            step *= 0.5;
            continue;
        }
        // Secant estimate of the curvature along the last step: for a
        // quadratic with curvature h, the new gradient is (1 - s·h) times the
        // old one, and the best step is 1/h.
        let c = next.as_matrix().dot(direction.as_matrix()) / (residual * residual);
        step = if c < 1.0 { (step / (1.0 - c)).min(1.0) } else { 1.0 };
        m = candidate;
        direction = next;
        residual = next_residual;
    }
    if residual < tol {
        return Ok(m);
    }
    Err(Error::MeanNonConvergence {
        iterations: cfg.max_iter,
        residual,
        class: None,
    })
}
