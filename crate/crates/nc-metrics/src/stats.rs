//! Class statistics, the within/between/overall covariance triple, and the
//! decomposition of within-class variation into the between-space and its
//! orthogonal complement.

use ndarray::{Array1, Array2, ArrayView2};
use thiserror::Error;

use crate::features::LabeledFeatures;
use crate::linalg;
use crate::spectra::{clamp_psd_eigenvalues, EigenPolicy};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("the between-class covariance has no retained directions under the given policy")]
    EmptyBetweenSpace,
}

/// Per-class and global first moments of a feature set.
#[derive(Debug, Clone)]
pub struct ClassStats {
    /// `p × K`; column `k` is the mean of class `k`.
    pub class_means: Array2<f64>,
    pub global_mean: Array1<f64>,
    /// Samples per class; sums to `n`.
    pub class_counts: Vec<usize>,
}

/// The covariance triple `Σ_W`, `Σ_B`, `Σ_T` of a feature set, together with
/// the class statistics they were derived from. Satisfies `Σ_T = Σ_B + Σ_W`.
///
/// Sample-weighted convention: with `n` total samples and `n_k` samples in
/// class `k`,
///
/// ```text
/// Σ_W = (1/n) Σ_k Σ_i (h_{k,i} − μ_k)(h_{k,i} − μ_k)ᵀ
/// Σ_B = (1/n) Σ_k n_k (μ_k − μ_G)(μ_k − μ_G)ᵀ
/// Σ_T = (1/n) Σ_k Σ_i (h_{k,i} − μ_G)(h_{k,i} − μ_G)ᵀ
/// ```
///
/// For balanced classes (`n_k = N`, `n = KN`) these reduce to the usual
/// `1/KN`, `1/K`, `1/KN` forms, and the weighting preserves the exact
/// decomposition in the imbalanced case.
#[derive(Debug, Clone)]
pub struct CovarianceSet {
    pub sigma_w: Array2<f64>,
    pub sigma_b: Array2<f64>,
    pub sigma_t: Array2<f64>,
    pub stats: ClassStats,
}

impl CovarianceSet {
    pub fn feature_dim(&self) -> usize {
        self.sigma_w.nrows()
    }

    pub fn class_count(&self) -> usize {
        self.stats.class_counts.len()
    }

    /// `min(p, K−1)`, the maximum possible rank of `Σ_B`.
    pub fn rank_bound(&self) -> usize {
        self.feature_dim().min(self.class_count() - 1)
    }
}

/// Class means, global mean, and class counts.
pub fn class_statistics(f: &LabeledFeatures) -> ClassStats {
    let (p, n) = (f.feature_dim(), f.sample_count());
    let k = f.class_count();
    let x = f.features();
    let labels = f.labels();
    let counts = f.class_counts();

    let mut sums = Array2::<f64>::zeros((p, k));
    let mut global = Array1::<f64>::zeros(p);
    for i in 0..p {
        let row = x.row(i);
        let mut total = 0.0;
        for (j, &v) in row.iter().enumerate() {
            sums[[i, labels[j]]] += v;
            total += v;
        }
        global[i] = total / n as f64;
    }
    for c in 0..k {
        let inv = 1.0 / counts[c] as f64;
        for i in 0..p {
            sums[[i, c]] *= inv;
        }
    }
    ClassStats {
        class_means: sums,
        global_mean: global,
        class_counts: counts,
    }
}

/// The covariance triple. Each matrix is accumulated from its own defining
/// sum (no matrix is derived from the other two), so `Σ_T = Σ_B + Σ_W` is a
/// genuine numerical identity of the outputs.
pub fn covariances(f: &LabeledFeatures) -> CovarianceSet {
    let (p, n) = (f.feature_dim(), f.sample_count());
    let stats = class_statistics(f);
    let x = f.features();
    let labels = f.labels();
    let inv_n = 1.0 / n as f64;

    // One centering buffer, reused for the within- and global-centered passes
    // to keep peak memory at ~2x the feature matrix.
    let mut centered = Array2::<f64>::zeros((p, n));
    for i in 0..p {
        let row = x.row(i);
        for j in 0..n {
            centered[[i, j]] = row[j] - stats.class_means[[i, labels[j]]];
        }
    }
    let sigma_w = linalg::gram(centered.view(), inv_n);

    for i in 0..p {
        let row = x.row(i);
        let mu = stats.global_mean[i];
        for j in 0..n {
            centered[[i, j]] = row[j] - mu;
        }
    }
    let sigma_t = linalg::gram(centered.view(), inv_n);
    drop(centered);

    let k = f.class_count();
    let mut weighted_means = Array2::<f64>::zeros((p, k));
    for c in 0..k {
        let w = (stats.class_counts[c] as f64 * inv_n).sqrt();
        for i in 0..p {
            weighted_means[[i, c]] = (stats.class_means[[i, c]] - stats.global_mean[i]) * w;
        }
    }
    let sigma_b = linalg::gram(weighted_means.view(), 1.0);

    CovarianceSet {
        sigma_w,
        sigma_b,
        sigma_t,
        stats,
    }
}

/// An orthonormal basis (columns of a `p × r` matrix) of the between-class
/// space `V_B`: the span of the eigenvectors of `Σ_B` retained under
/// `policy`, additionally capped at the top `min(p, K−1)` directions.
pub fn between_space_basis(
    covs: &CovarianceSet,
    policy: &EigenPolicy,
) -> Result<Array2<f64>, StatsError> {
    let (eigs, vecs) = linalg::sym_eigen(covs.sigma_b.view());
    let clamped = clamp_psd_eigenvalues(eigs.as_slice().unwrap());
    let cap = covs.rank_bound();
    let retained: Vec<usize> = policy
        .retained(&clamped)
        .into_iter()
        .filter(|&i| i < cap)
        .collect();
    if retained.is_empty() {
        return Err(StatsError::EmptyBetweenSpace);
    }
    let p = covs.feature_dim();
    let mut basis = Array2::<f64>::zeros((p, retained.len()));
    for (col, &idx) in retained.iter().enumerate() {
        basis.column_mut(col).assign(&vecs.column(idx));
    }
    Ok(basis)
}

/// Splits the within-class variation `trace(Σ_W)` into the part inside the
/// span of `basis` and the part in its orthogonal complement:
///
/// ```text
/// (1/n) Σ_{k,i} ‖Proj_V (h_{k,i} − μ_k)‖²   and   (1/n) Σ_{k,i} ‖Proj_V⊥ (h_{k,i} − μ_k)‖²
/// ```
///
/// `basis` must have orthonormal columns.
pub fn within_projection_split(f: &LabeledFeatures, basis: ArrayView2<'_, f64>) -> (f64, f64) {
    let (p, n) = (f.feature_dim(), f.sample_count());
    let r = basis.ncols();
    let stats = class_statistics(f);
    let x = f.features();
    let labels = f.labels();

    let mut dev = vec![0.0f64; p];
    let mut coeff = vec![0.0f64; r];
    let mut in_span = 0.0;
    let mut in_complement = 0.0;
    for j in 0..n {
        let class = labels[j];
        for i in 0..p {
            dev[i] = x[[i, j]] - stats.class_means[[i, class]];
        }
        for (c, val) in coeff.iter_mut().enumerate() {
            *val = basis.column(c).iter().zip(&dev).map(|(b, d)| b * d).sum();
        }
        in_span += coeff.iter().map(|c| c * c).sum::<f64>();
        // Residual after removing the projection.
        let mut resid = 0.0;
        for i in 0..p {
            let proj: f64 = (0..r).map(|c| basis[[i, c]] * coeff[c]).sum();
            let d = dev[i] - proj;
            resid += d * d;
        }
        in_complement += resid;
    }
    (in_span / n as f64, in_complement / n as f64)
}

/// Projection split computed from `Σ_W` and a full eigenbasis of `Σ_B`:
/// quadratic forms of the retained eigenvectors give the `V_B` part, the
/// remaining eigenvectors give the complement. Used where per-sample
/// projections would be too slow.
pub(crate) fn projection_split_from_eigvecs(
    sigma_w: &Array2<f64>,
    eigvecs: &Array2<f64>,
    retained: &[usize],
) -> (f64, f64) {
    let p = sigma_w.nrows();
    let prod = sigma_w.dot(eigvecs);
    let mut in_span = 0.0;
    let mut in_complement = 0.0;
    let retained_mask = {
        let mut mask = vec![false; p];
        for &i in retained {
            mask[i] = true;
        }
        mask
    };
    for j in 0..p {
        let q: f64 = eigvecs
            .column(j)
            .iter()
            .zip(prod.column(j).iter())
            .map(|(v, w)| v * w)
            .sum();
        if retained_mask[j] {
            in_span += q;
        } else {
            in_complement += q;
        }
    }
    (in_span, in_complement)
}
