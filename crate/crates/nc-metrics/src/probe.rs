//! Closed-form MSE linear probing and an independent direct-minimization
//! oracle.
//!
//! The probe fits `W h + b` to one-hot targets under the loss
//! `L(W, b, H) = (1/2KN) Σ_{k,i} ‖W h_{k,i} + b − e_k‖²`. For balanced
//! classes the minimum has the closed form
//! `−(1/2K) Tr[Σ_T† Σ_B] + 1/2 − 1/2K`, attained (after centering the
//! features at the global mean) by `W = (1/K)(Σ_k e_k μ̃_kᵀ) Σ_T†` and
//! `b = (1/K)𝟙 − W μ_G`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::LabeledFeatures;
use crate::linalg;
use crate::metrics::PolicyChoice;
use crate::spectra::{pseudo_inverse, EigenPolicy};
use crate::stats::{class_statistics, covariances, CovarianceSet};

#[derive(Debug, Error, PartialEq)]
pub enum ProbeError {
    #[error("closed-form probing requires balanced classes; class counts are {counts:?}")]
    ImbalancedClasses { counts: Vec<usize> },
    #[error("shape mismatch: {detail}")]
    ShapeMismatch { detail: String },
}

/// Weights, bias, and achieved loss of an MSE linear probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSolution {
    /// `K × p` weight matrix.
    pub weights: Array2<f64>,
    /// Length-K bias.
    pub bias: Array1<f64>,
    /// `mse_loss(weights, bias, f)` of the solved instance.
    pub loss: f64,
}

#[derive(Serialize, Deserialize)]
struct ProbeSolutionJson {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    loss: f64,
}

impl Serialize for ProbeSolution {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let weights = self
            .weights
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect();
        ProbeSolutionJson {
            weights,
            bias: self.bias.to_vec(),
            loss: self.loss,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ProbeSolution {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = ProbeSolutionJson::deserialize(deserializer)?;
        let k = raw.weights.len();
        let p = raw.weights.first().map_or(0, Vec::len);
        if raw.weights.iter().any(|r| r.len() != p) {
            return Err(serde::de::Error::custom("ragged weight rows"));
        }
        let mut weights = Array2::zeros((k, p));
        for (i, row) in raw.weights.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                weights[[i, j]] = v;
            }
        }
        Ok(ProbeSolution {
            weights,
            bias: Array1::from_vec(raw.bias),
            loss: raw.loss,
        })
    }
}

fn check_shapes(w: &Array2<f64>, b: &Array1<f64>, f: &LabeledFeatures) -> Result<(), ProbeError> {
    let (k, p) = w.dim();
    if p != f.feature_dim() || k != f.class_count() || b.len() != k {
        return Err(ProbeError::ShapeMismatch {
            detail: format!(
                "weights {k}x{p}, bias {}, features {}x{} with {} classes",
                b.len(),
                f.feature_dim(),
                f.sample_count(),
                f.class_count()
            ),
        });
    }
    Ok(())
}

/// The probing loss `(1/2n) Σ_j ‖W h_j + b − e_{label_j}‖²`.
pub fn mse_loss(w: &Array2<f64>, b: &Array1<f64>, f: &LabeledFeatures) -> Result<f64, ProbeError> {
    mse_loss_with_penalty(w, b, f, 0.0, 0.0)
}

/// Probing loss with optional ridge terms `λ_W/2 ‖W‖_F² + λ_b/2 ‖b‖²`.
pub fn mse_loss_with_penalty(
    w: &Array2<f64>,
    b: &Array1<f64>,
    f: &LabeledFeatures,
    lambda_w: f64,
    lambda_b: f64,
) -> Result<f64, ProbeError> {
    check_shapes(w, b, f)?;
    let logits = w.dot(&f.features());
    let labels = f.labels();
    let n = f.sample_count();
    let k = f.class_count();
    let mut total = 0.0;
    for j in 0..n {
        for c in 0..k {
            let target = if c == labels[j] { 1.0 } else { 0.0 };
            let r = logits[[c, j]] + b[c] - target;
            total += r * r;
        }
    }
    let mut loss = total / (2.0 * n as f64);
    if lambda_w != 0.0 {
        loss += lambda_w / 2.0 * w.iter().map(|v| v * v).sum::<f64>();
    }
    if lambda_b != 0.0 {
        loss += lambda_b / 2.0 * b.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(loss)
}

fn default_t_policy(p: usize) -> EigenPolicy {
    PolicyChoice::Auto.for_sigma_t(p)
}

/// Solves the balanced MSE probe in closed form.
pub fn solve_mse_probe(f: &LabeledFeatures) -> Result<ProbeSolution, ProbeError> {
    if !f.is_balanced() {
        return Err(ProbeError::ImbalancedClasses {
            counts: f.class_counts(),
        });
    }
    let p = f.feature_dim();
    let k = f.class_count();
    let stats = class_statistics(f);
    let covs = covariances(f);
    let pinv_t = pseudo_inverse(covs.sigma_t.view(), &default_t_policy(p))
        .expect("sigma_t is symmetric PSD by construction");

    // Rows of M are the centered class means over K.
    let mut m = Array2::<f64>::zeros((k, p));
    for c in 0..k {
        for i in 0..p {
            m[[c, i]] = (stats.class_means[[i, c]] - stats.global_mean[i]) / k as f64;
        }
    }
    let weights = m.dot(&pinv_t);
    // Bias for the uncentered features: b = 1/K − W μ_G.
    let shift = weights.dot(&stats.global_mean);
    let bias = Array1::from_shape_fn(k, |c| 1.0 / k as f64 - shift[c]);
    let loss = mse_loss(&weights, &bias, f)?;
    Ok(ProbeSolution {
        weights,
        bias,
        loss,
    })
}

/// The theoretical optimum `−(1/2K) Tr[Σ_T† Σ_B] + 1/2 − 1/2K` under the
/// given `Σ_T` pseudoinversion policy.
pub fn predicted_min_loss(covs: &CovarianceSet, policy: &EigenPolicy) -> f64 {
    let k = covs.class_count() as f64;
    let trace = crate::metrics::trace_ratio_from_parts(&covs.sigma_t, &covs.sigma_b, policy);
    -trace / (2.0 * k) + 0.5 - 1.0 / (2.0 * k)
}

/// Minimizes the probing loss directly: minimum-norm least squares on the
/// bias-augmented features `(h; 1)` via the normal equations. Accepts
/// imbalanced input.
pub fn oracle_min_loss(f: &LabeledFeatures) -> f64 {
    let p = f.feature_dim();
    let n = f.sample_count();
    let k = f.class_count();
    let x = f.features();
    let labels = f.labels();

    let mut augmented = Array2::<f64>::zeros((p + 1, n));
    for i in 0..p {
        augmented.row_mut(i).assign(&x.row(i));
    }
    augmented.row_mut(p).fill(1.0);

    let gram = linalg::gram(augmented.view(), 1.0);
    // Y Xᵀ without materializing the one-hot matrix: row k sums the
    // augmented samples of class k.
    let mut yxt = Array2::<f64>::zeros((k, p + 1));
    for j in 0..n {
        let c = labels[j];
        for i in 0..=p {
            yxt[[c, i]] += augmented[[i, j]];
        }
    }
    let pinv = pseudo_inverse(gram.view(), &default_t_policy(p + 1))
        .expect("gram matrix is symmetric PSD by construction");
    let solution = yxt.dot(&pinv);

    let weights = solution.slice(ndarray::s![.., ..p]).to_owned();
    let bias = solution.column(p).to_owned();
    mse_loss(&weights, &bias, f).expect("shapes agree by construction")
}
