//! The four variability-collapse metrics and the assembled [`MetricReport`].

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::LabeledFeatures;
use crate::linalg;
use crate::spectra::{check_clamped_psd, EigenPolicy, SpectraError};
use crate::stats::{covariances, projection_split_from_eigvecs, CovarianceSet};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("between-class variance is zero (all class means equal)")]
    DegenerateBetweenVariance,
    #[error("sample {sample} has norm <= 1e-12; cosine similarity undefined")]
    ZeroNormFeature { sample: usize },
    #[error(transparent)]
    Spectra(#[from] SpectraError),
}

/// Pseudoinversion policy selection for a full metric evaluation.
///
/// `Auto` resolves per matrix: `Σ_T` gets `RelativeTol(p · ε)` (machine
/// precision; its spectrum is well enough behaved for a generic cutoff) and
/// `Σ_B` gets `FixedRank(min(p, K−1))`, its maximum possible rank. An
/// explicit policy applies to both matrices.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyChoice {
    Auto,
    Explicit(EigenPolicy),
}

impl PolicyChoice {
    pub fn for_sigma_t(&self, p: usize) -> EigenPolicy {
        match self {
            PolicyChoice::Auto => EigenPolicy::RelativeTol(p as f64 * f64::EPSILON),
            PolicyChoice::Explicit(policy) => policy.clone(),
        }
    }

    pub fn for_sigma_b(&self, p: usize, class_count: usize) -> EigenPolicy {
        match self {
            PolicyChoice::Auto => EigenPolicy::FixedRank(p.min(class_count - 1).max(1)),
            PolicyChoice::Explicit(policy) => policy.clone(),
        }
    }
}

impl fmt::Display for PolicyChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyChoice::Auto => write!(f, "rel:auto"),
            PolicyChoice::Explicit(policy) => write!(f, "{policy}"),
        }
    }
}

impl FromStr for PolicyChoice {
    type Err = SpectraError;

    fn from_str(s: &str) -> Result<Self, SpectraError> {
        if s == "rel:auto" {
            Ok(PolicyChoice::Auto)
        } else {
            Ok(PolicyChoice::Explicit(s.parse()?))
        }
    }
}

/// All collapse-metric values for one feature set, plus the projection split
/// and spectral diagnostics. Fields that can be undefined on degenerate
/// input serialize as `null`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricReport {
    pub p: usize,
    pub n: usize,
    pub class_count: usize,
    /// `Tr[Σ_B† Σ_W]` under the `Σ_B` policy; 0 when `Σ_B = 0`.
    pub fuzziness: f64,
    /// Within- over between-class squared deviation; undefined when all
    /// class means coincide.
    pub squared_distance: Option<f64>,
    /// Mean within-class cosine distance; undefined when a sample has
    /// (numerically) zero norm.
    pub cos_within: Option<f64>,
    pub cos_total: Option<f64>,
    /// `1 − cos_within / cos_total`; additionally undefined when
    /// `cos_total < 1e-15`.
    pub class_separation: Option<f64>,
    /// `Tr[Σ_T† Σ_B]` under the `Σ_T` policy; undefined when `Σ_B = 0`.
    pub trace_ratio: Option<f64>,
    /// `1 − trace_ratio / rank_bound`.
    pub vci: Option<f64>,
    /// `min(p, K−1)`.
    pub rank_bound: usize,
    pub proj_vb: f64,
    pub proj_vb_perp: f64,
    pub policy: String,
    pub eigs_sigma_b: Vec<f64>,
    pub eigs_sigma_t: Vec<f64>,
}

/// `Tr[Σ_B† Σ_W]`, the normalized within-class covariance.
pub fn fuzziness(covs: &CovarianceSet, policy: &EigenPolicy) -> f64 {
    fuzziness_from_parts(&covs.sigma_b, &covs.sigma_w, policy)
}

/// Fuzziness of a raw covariance pair. A zero `Σ_B` yields 0 (zero
/// pseudoinverse), not an error.
pub fn fuzziness_from_parts(
    sigma_b: &Array2<f64>,
    sigma_w: &Array2<f64>,
    policy: &EigenPolicy,
) -> f64 {
    pinv_weighted_trace(sigma_b, sigma_w, policy)
}

/// `Tr[pinv(inverted)† other]` computed from quadratic forms of the
/// retained eigenvectors, without materializing the pseudoinverse.
fn pinv_weighted_trace(inverted: &Array2<f64>, other: &Array2<f64>, policy: &EigenPolicy) -> f64 {
    let (eigs, vecs) = linalg::sym_eigen(inverted.view());
    let clamped = check_clamped_psd(eigs.as_slice().unwrap())
        .expect("covariance matrix must be positive semidefinite");
    weighted_trace_from_eigen(&clamped, &vecs, other, policy)
}

/// Same trace given an existing eigendecomposition of the inverted matrix.
fn weighted_trace_from_eigen(
    clamped_eigs: &[f64],
    vectors: &Array2<f64>,
    other: &Array2<f64>,
    policy: &EigenPolicy,
) -> f64 {
    let retained = policy.retained(clamped_eigs);
    if retained.is_empty() {
        return 0.0;
    }
    let prod = other.dot(vectors);
    retained
        .iter()
        .map(|&i| {
            let quad: f64 = vectors
                .column(i)
                .iter()
                .zip(prod.column(i).iter())
                .map(|(v, w)| v * w)
                .sum();
            quad / clamped_eigs[i]
        })
        .sum()
}

/// Within-class over between-class squared deviation:
/// `Σ_k Σ_i ‖h_{k,i} − μ_k‖² / (Σ_k n_k ‖μ_k − μ_G‖²)`.
///
/// Balanced classes recover `Σ‖h−μ_k‖² / (N Σ‖μ_k−μ_G‖²)`, and the value
/// equals `trace(Σ_W)/trace(Σ_B)` under the sample-weighted covariances.
pub fn squared_distance(f: &LabeledFeatures) -> Result<f64, MetricsError> {
    let stats = crate::stats::class_statistics(f);
    let x = f.features();
    let labels = f.labels();
    let (p, n) = (f.feature_dim(), f.sample_count());

    let mut numerator = 0.0;
    for i in 0..p {
        let row = x.row(i);
        for j in 0..n {
            let d = row[j] - stats.class_means[[i, labels[j]]];
            numerator += d * d;
        }
    }
    let mut denominator = 0.0;
    for (k, &count) in stats.class_counts.iter().enumerate() {
        let mut dist = 0.0;
        for i in 0..p {
            let d = stats.class_means[[i, k]] - stats.global_mean[i];
            dist += d * d;
        }
        denominator += count as f64 * dist;
    }
    if denominator == 0.0 {
        return Err(MetricsError::DegenerateBetweenVariance);
    }
    Ok(numerator / denominator)
}

/// Mean cosine distances within classes and overall, plus class separation.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineStats {
    /// `d̄_within`: mean of `1 − sim(h_{k,i}, h_{k,j})` over all ordered
    /// within-class pairs, self-pairs included.
    pub cos_within: f64,
    /// `d̄_total`: the same over all ordered pairs.
    pub cos_total: f64,
    /// `1 − d̄_within / d̄_total`; `None` when `d̄_total < 1e-15`.
    pub class_separation: Option<f64>,
}

/// Cosine-distance statistics. Ordered pair sums reduce to norms of summed
/// unit vectors: `Σ_{i,j} sim(h_i, h_j) = ‖Σ_i h_i/‖h_i‖‖²`, so the
/// computation is linear in the number of samples.
pub fn cosine_stats(f: &LabeledFeatures) -> Result<CosineStats, MetricsError> {
    let x = f.features();
    let (p, n) = (f.feature_dim(), f.sample_count());
    let k = f.class_count();
    let labels = f.labels();
    let counts = f.class_counts();

    let mut sq_norms = vec![0.0f64; n];
    for i in 0..p {
        let row = x.row(i);
        for j in 0..n {
            sq_norms[j] += row[j] * row[j];
        }
    }
    let mut inv_norms = vec![0.0f64; n];
    for j in 0..n {
        let norm = sq_norms[j].sqrt();
        if norm <= 1e-12 {
            return Err(MetricsError::ZeroNormFeature { sample: j });
        }
        inv_norms[j] = 1.0 / norm;
    }

    let mut class_sums = Array2::<f64>::zeros((p, k));
    let mut total_sum = Array1::<f64>::zeros(p);
    for i in 0..p {
        let row = x.row(i);
        for j in 0..n {
            let u = row[j] * inv_norms[j];
            class_sums[[i, labels[j]]] += u;
            total_sum[i] += u;
        }
    }

    let mut within = 0.0;
    for (c, &count) in counts.iter().enumerate() {
        let sq: f64 = class_sums.column(c).iter().map(|v| v * v).sum();
        within += 1.0 - sq / (count * count) as f64;
    }
    let cos_within = within / k as f64;
    let total_sq: f64 = total_sum.iter().map(|v| v * v).sum();
    let cos_total = 1.0 - total_sq / (n * n) as f64;
    let class_separation = if cos_total < 1e-15 {
        None
    } else {
        Some(1.0 - cos_within / cos_total)
    };
    Ok(CosineStats {
        cos_within,
        cos_total,
        class_separation,
    })
}

/// The variability collapse index and its ingredients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VciValues {
    /// `Tr[Σ_T† Σ_B]`.
    pub trace_ratio: f64,
    /// `1 − trace_ratio / rank_bound`.
    pub vci: f64,
    /// `min(p, K−1)`, used regardless of the empirical rank of `Σ_B`.
    pub rank_bound: usize,
}

/// VCI of a covariance set under the given `Σ_T` pseudoinversion policy.
pub fn vci(covs: &CovarianceSet, policy: &EigenPolicy) -> Result<VciValues, MetricsError> {
    if covs.sigma_b.iter().all(|&v| v == 0.0) {
        return Err(MetricsError::DegenerateBetweenVariance);
    }
    let trace_ratio = trace_ratio_from_parts(&covs.sigma_t, &covs.sigma_b, policy);
    let rank_bound = covs.rank_bound();
    Ok(VciValues {
        trace_ratio,
        vci: 1.0 - trace_ratio / rank_bound as f64,
        rank_bound,
    })
}

/// `Tr[Σ_T† Σ_B]` for a raw matrix pair.
pub fn trace_ratio_from_parts(
    sigma_t: &Array2<f64>,
    sigma_b: &Array2<f64>,
    policy: &EigenPolicy,
) -> f64 {
    pinv_weighted_trace(sigma_t, sigma_b, policy)
}

/// Fuzziness across the default `Σ_B` policy and the relative tolerances
/// 1e-3, 1e-6, 1e-9, exposing the metric's threshold sensitivity instead of
/// hiding it behind one cutoff.
pub fn fuzziness_sensitivity(covs: &CovarianceSet) -> Vec<(EigenPolicy, f64)> {
    let mut policies = vec![EigenPolicy::FixedRank(covs.rank_bound().max(1))];
    policies.extend([1e-3, 1e-6, 1e-9].map(EigenPolicy::RelativeTol));
    policies
        .into_iter()
        .map(|policy| {
            let value = fuzziness(covs, &policy);
            (policy, value)
        })
        .collect()
}

/// Computes every metric plus the projection split and spectra for one
/// feature set. Degenerate inputs leave the affected fields undefined
/// rather than failing the whole report.
pub fn evaluate_all(f: &LabeledFeatures, policy: &PolicyChoice) -> MetricReport {
    let covs = covariances(f);
    evaluate_covariances(f, &covs, policy)
}

pub(crate) fn evaluate_covariances(
    f: &LabeledFeatures,
    covs: &CovarianceSet,
    policy: &PolicyChoice,
) -> MetricReport {
    let p = covs.feature_dim();
    let class_count = covs.class_count();
    let b_policy = policy.for_sigma_b(p, class_count);
    let t_policy = policy.for_sigma_t(p);
    let rank_bound = covs.rank_bound();

    let (eigs_b, vecs_b) = linalg::sym_eigen(covs.sigma_b.view());
    let (eigs_t, vecs_t) = linalg::sym_eigen(covs.sigma_t.view());
    let clamped_b = check_clamped_psd(eigs_b.as_slice().unwrap())
        .expect("sigma_b must be positive semidefinite");
    let clamped_t = check_clamped_psd(eigs_t.as_slice().unwrap())
        .expect("sigma_t must be positive semidefinite");

    let retained_b: Vec<usize> = b_policy
        .retained(&clamped_b)
        .into_iter()
        .filter(|&i| i < rank_bound)
        .collect();

    let fuzziness_value =
        weighted_trace_from_eigen(&clamped_b, &vecs_b, &covs.sigma_w, &b_policy);
    let (proj_vb, proj_vb_perp) =
        projection_split_from_eigvecs(&covs.sigma_w, &vecs_b, &retained_b);

    let squared_distance = squared_distance(f).ok();
    let cosine = cosine_stats(f).ok();
    let (cos_within, cos_total, class_separation) = match cosine {
        Some(c) => (Some(c.cos_within), Some(c.cos_total), c.class_separation),
        None => (None, None, None),
    };
    let (trace_ratio, vci_value) = if covs.sigma_b.iter().all(|&v| v == 0.0) {
        (None, None)
    } else {
        let tr = weighted_trace_from_eigen(&clamped_t, &vecs_t, &covs.sigma_b, &t_policy);
        (Some(tr), Some(1.0 - tr / rank_bound as f64))
    };

    MetricReport {
        p,
        n: f.sample_count(),
        class_count,
        fuzziness: fuzziness_value,
        squared_distance,
        cos_within,
        cos_total,
        class_separation,
        trace_ratio,
        vci: vci_value,
        rank_bound,
        proj_vb,
        proj_vb_perp,
        policy: policy.to_string(),
        eigs_sigma_b: eigs_b.to_vec(),
        eigs_sigma_t: eigs_t.to_vec(),
    }
}
