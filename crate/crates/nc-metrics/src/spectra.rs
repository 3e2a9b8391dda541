//! Symmetric eigendecomposition, policy-governed pseudoinversion, and
//! eigenvalue-spectrum diagnostics.
//!
//! Pseudoinverting a covariance matrix requires deciding which eigenvalues
//! count as zero. No single threshold is safe for the between-class
//! covariance, whose trailing eigenvalues can sit orders of magnitude below
//! the typical scale while still being "real", so the rule is an explicit
//! [`EigenPolicy`] everywhere instead of a hidden default.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::stats::CovarianceSet;

/// Negative eigenvalues within this relative tolerance of the largest one are
/// treated as rounding noise and clamped to zero.
const PSD_CLAMP_REL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum SpectraError {
    #[error("matrix is not symmetric: |s[{row},{col}] - s[{col},{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },
    #[error("matrix is not positive semidefinite: eigenvalue {value:e} below -{tol:e}")]
    NotPositiveSemidefinite { value: f64, tol: f64 },
    #[error("invalid eigen policy: {0}")]
    BadPolicy(String),
}

/// Rule deciding which eigenvalues of a symmetric PSD matrix are retained
/// (treated as nonzero) when pseudoinverting.
#[derive(Debug, Clone, PartialEq)]
pub enum EigenPolicy {
    /// Keep the top `r` eigenvalues that are strictly positive.
    FixedRank(usize),
    /// Keep eigenvalues above `eps * λ_max`, `eps` in (0, 1).
    RelativeTol(f64),
    /// Keep eigenvalues above the absolute threshold `t > 0`.
    AbsoluteTol(f64),
}

impl EigenPolicy {
    pub fn validate(&self) -> Result<(), SpectraError> {
        match *self {
            EigenPolicy::FixedRank(r) if r >= 1 => Ok(()),
            EigenPolicy::FixedRank(r) => {
                Err(SpectraError::BadPolicy(format!("rank must be >= 1, got {r}")))
            }
            EigenPolicy::RelativeTol(eps) if eps > 0.0 && eps < 1.0 => Ok(()),
            EigenPolicy::RelativeTol(eps) => Err(SpectraError::BadPolicy(format!(
                "relative tolerance must be in (0, 1), got {eps}"
            ))),
            EigenPolicy::AbsoluteTol(t) if t > 0.0 && t.is_finite() => Ok(()),
            EigenPolicy::AbsoluteTol(t) => Err(SpectraError::BadPolicy(format!(
                "absolute tolerance must be positive, got {t}"
            ))),
        }
    }

    /// Indices (into a descending eigenvalue list) retained under the policy.
    pub fn retained(&self, eigs_desc: &[f64]) -> Vec<usize> {
        match *self {
            EigenPolicy::FixedRank(r) => (0..eigs_desc.len().min(r))
                .filter(|&i| eigs_desc[i] > 0.0)
                .collect(),
            EigenPolicy::RelativeTol(eps) => {
                let lam_max = eigs_desc.first().copied().unwrap_or(0.0);
                if lam_max <= 0.0 {
                    return Vec::new();
                }
                (0..eigs_desc.len())
                    .filter(|&i| eigs_desc[i] > eps * lam_max)
                    .collect()
            }
            EigenPolicy::AbsoluteTol(t) => {
                (0..eigs_desc.len()).filter(|&i| eigs_desc[i] > t).collect()
            }
        }
    }
}

impl fmt::Display for EigenPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            EigenPolicy::FixedRank(r) => write!(f, "rank:{r}"),
            EigenPolicy::RelativeTol(eps) => write!(f, "rel:{eps:e}"),
            EigenPolicy::AbsoluteTol(t) => write!(f, "abs:{t:e}"),
        }
    }
}

impl FromStr for EigenPolicy {
    type Err = SpectraError;

    /// Grammar: `rank:R`, `rel:EPS`, `abs:T`.
    fn from_str(s: &str) -> Result<Self, SpectraError> {
        let bad = || SpectraError::BadPolicy(format!("expected rank:R, rel:EPS or abs:T, got {s:?}"));
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let policy = match kind {
            "rank" => EigenPolicy::FixedRank(value.parse().map_err(|_| bad())?),
            "rel" => EigenPolicy::RelativeTol(value.parse().map_err(|_| bad())?),
            "abs" => EigenPolicy::AbsoluteTol(value.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        policy.validate()?;
        Ok(policy)
    }
}

/// Clamps eigenvalues in `[-PSD_CLAMP_REL * λ_max, 0)` to zero. Larger
/// negativity is left in place for the caller to reject.
pub(crate) fn clamp_psd_eigenvalues(eigs_desc: &[f64]) -> Vec<f64> {
    let lam_max = eigs_desc.first().copied().unwrap_or(0.0).max(0.0);
    let tol = PSD_CLAMP_REL * lam_max;
    eigs_desc
        .iter()
        .map(|&v| if v < 0.0 && v >= -tol { 0.0 } else { v })
        .collect()
}

/// Eigendecomposition of a symmetric matrix: descending eigenvalues and the
/// matching orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

/// Symmetric eigendecomposition with a symmetry check (1e-8 relative).
pub fn sym_eigendecomp(s: ArrayView2<'_, f64>) -> Result<SymmetricEigen, SpectraError> {
    check_symmetric(s)?;
    let (values, vectors) = linalg::sym_eigen(s);
    Ok(SymmetricEigen { values, vectors })
}

fn check_symmetric(s: ArrayView2<'_, f64>) -> Result<(), SpectraError> {
    let p = s.nrows();
    if p != s.ncols() {
        return Err(SpectraError::NotSymmetric {
            row: 0,
            col: 0,
            diff: f64::INFINITY,
        });
    }
    let scale = s.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let tol = 1e-8 * (1.0 + scale);
    for i in 0..p {
        for j in (i + 1)..p {
            let diff = (s[[i, j]] - s[[j, i]]).abs();
            if diff > tol {
                return Err(SpectraError::NotSymmetric { row: i, col: j, diff });
            }
        }
    }
    Ok(())
}

/// Policy-governed Moore–Penrose pseudoinverse of a symmetric PSD matrix:
/// `V diag(1/λ_i for retained i, else 0) Vᵀ`.
///
/// Eigenvalues must be ≥ `-1e-10 λ_max`; those within the tolerance are
/// clamped to zero before the policy is applied. If the policy retains
/// nothing the zero matrix is returned.
pub fn pseudo_inverse(
    s: ArrayView2<'_, f64>,
    policy: &EigenPolicy,
) -> Result<Array2<f64>, SpectraError> {
    policy.validate()?;
    let eig = sym_eigendecomp(s)?;
    let clamped = check_clamped_psd(eig.values.as_slice().unwrap())?;
    let retained = policy.retained(&clamped);
    let p = s.nrows();
    if retained.is_empty() {
        return Ok(Array2::zeros((p, p)));
    }
    let mut scaled = Array2::<f64>::zeros((p, retained.len()));
    for (col, &idx) in retained.iter().enumerate() {
        let inv = 1.0 / clamped[idx];
        for i in 0..p {
            scaled[[i, col]] = eig.vectors[[i, idx]] * inv;
        }
    }
    let mut sub = Array2::<f64>::zeros((p, retained.len()));
    for (col, &idx) in retained.iter().enumerate() {
        sub.column_mut(col).assign(&eig.vectors.column(idx));
    }
    Ok(scaled.dot(&sub.t()))
}

pub(crate) fn check_clamped_psd(eigs_desc: &[f64]) -> Result<Vec<f64>, SpectraError> {
    let lam_max = eigs_desc.first().copied().unwrap_or(0.0).max(0.0);
    let tol = PSD_CLAMP_REL * lam_max;
    if let Some(&bad) = eigs_desc.iter().find(|&&v| v < -tol) {
        return Err(SpectraError::NotPositiveSemidefinite { value: bad, tol });
    }
    Ok(clamp_psd_eigenvalues(eigs_desc))
}

/// Eigenvalue spectra of `Σ_B` and `Σ_T` with retained counts under a policy
/// pair and the condition number of the retained part of `Σ_T`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SpectrumReport {
    /// Descending eigenvalues of `Σ_B` (length p, unclamped).
    pub eigs_sigma_b: Vec<f64>,
    /// Descending eigenvalues of `Σ_T` (length p, unclamped).
    pub eigs_sigma_t: Vec<f64>,
    pub retained_b: usize,
    pub retained_t: usize,
    /// Largest over smallest retained eigenvalue of `Σ_T`; `null` when the
    /// policy retains nothing.
    pub cond_t: Option<f64>,
    pub policy: String,
}

/// Spectrum diagnostics for a covariance set under `policy` (resolved per
/// matrix, see [`crate::metrics::PolicyChoice`]).
pub fn spectrum_report(
    covs: &CovarianceSet,
    policy: &crate::metrics::PolicyChoice,
) -> SpectrumReport {
    let (eigs_b, _) = linalg::sym_eigen(covs.sigma_b.view());
    let (eigs_t, _) = linalg::sym_eigen(covs.sigma_t.view());
    let b_policy = policy.for_sigma_b(covs.feature_dim(), covs.class_count());
    let t_policy = policy.for_sigma_t(covs.feature_dim());

    let clamped_b = clamp_psd_eigenvalues(eigs_b.as_slice().unwrap());
    let clamped_t = clamp_psd_eigenvalues(eigs_t.as_slice().unwrap());
    let retained_b = b_policy.retained(&clamped_b);
    let retained_t = t_policy.retained(&clamped_t);
    let cond_t = if retained_t.is_empty() {
        None
    } else {
        let max = clamped_t[retained_t[0]];
        let min = clamped_t[*retained_t.last().unwrap()];
        Some(max / min)
    };
    SpectrumReport {
        eigs_sigma_b: eigs_b.to_vec(),
        eigs_sigma_t: eigs_t.to_vec(),
        retained_b: retained_b.len(),
        retained_t: retained_t.len(),
        cond_t,
        policy: policy.to_string(),
    }
}
