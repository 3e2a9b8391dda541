//! Labeled feature matrices and their validity invariants.

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

/// Violations of the [`LabeledFeatures`] invariants.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum FeatureError {
    #[error("non-finite feature value at matrix entry ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("label {label} of sample {sample} is outside [0, {class_count})")]
    LabelOutOfRange {
        sample: usize,
        label: usize,
        class_count: usize,
    },
    #[error("class {class} has no samples")]
    EmptyClass { class: usize },
    #[error("{labels} labels for {samples} samples")]
    LabelCountMismatch { labels: usize, samples: usize },
    #[error("class count must be at least 2, got {class_count}")]
    TooFewClasses { class_count: usize },
    #[error("need at least {class_count} samples (one per class), got {samples}")]
    TooFewSamples { samples: usize, class_count: usize },
    #[error("feature dimension must be at least 1")]
    EmptyFeatureDim,
}

/// A `p × n` feature matrix with a class label per column.
///
/// Column `j` is the feature vector of sample `j`; `labels[j]` is its class
/// index in `[0, class_count)`. Construction enforces that every entry is
/// finite, every class occurs at least once, `n ≥ K ≥ 2`, and `p ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    features: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledFeatures {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self, FeatureError> {
        let (p, n) = features.dim();
        if p == 0 {
            return Err(FeatureError::EmptyFeatureDim);
        }
        if labels.len() != n {
            return Err(FeatureError::LabelCountMismatch {
                labels: labels.len(),
                samples: n,
            });
        }
        if class_count < 2 {
            return Err(FeatureError::TooFewClasses { class_count });
        }
        if n < class_count {
            return Err(FeatureError::TooFewSamples {
                samples: n,
                class_count,
            });
        }
        for (sample, &label) in labels.iter().enumerate() {
            if label >= class_count {
                return Err(FeatureError::LabelOutOfRange {
                    sample,
                    label,
                    class_count,
                });
            }
        }
        let mut counts = vec![0usize; class_count];
        for &label in &labels {
            counts[label] += 1;
        }
        if let Some(class) = counts.iter().position(|&c| c == 0) {
            return Err(FeatureError::EmptyClass { class });
        }
        for ((row, col), &v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(FeatureError::NonFinite { row, col });
            }
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    /// Feature dimension p.
    pub fn feature_dim(&self) -> usize {
        self.features.nrows()
    }

    /// Number of samples n.
    pub fn sample_count(&self) -> usize {
        self.features.ncols()
    }

    /// Number of classes K.
    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// The `p × n` feature matrix; column `j` is sample `j`.
    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Samples per class, indexed by class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_count];
        for &label in &self.labels {
            counts[label] += 1;
        }
        counts
    }

    /// True when every class has the same number of samples.
    pub fn is_balanced(&self) -> bool {
        let counts = self.class_counts();
        counts.iter().all(|&c| c == counts[0])
    }

    pub fn into_parts(self) -> (Array2<f64>, Vec<usize>, usize) {
        (self.features, self.labels, self.class_count)
    }
}
