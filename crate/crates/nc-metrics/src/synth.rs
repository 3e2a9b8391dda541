//! Synthetic feature configurations: collapsed simplices, noise confined to
//! the between space or its complement, null-space inflation, and seeded
//! random transforms.
//!
//! All generators are deterministic in the seed (ChaCha8, a counter-based
//! stream: the same seed yields the same stream on every platform).

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::features::{FeatureError, LabeledFeatures};
use crate::linalg;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("feature dimension {p} too small: {reason}")]
    DimensionTooSmall { p: usize, reason: String },
    #[error("noise level must be positive, got {sigma}")]
    InvalidSigma { sigma: f64 },
    #[error("geometry {got} not valid for this generator")]
    GeometryMismatch { got: String },
    #[error("matrix has no (numerical) null vector; smallest eigenvalue of wᵀw is {min_eig:e}")]
    FullColumnRank { min_eig: f64 },
    #[error("transform is numerically singular (condition above 1e12)")]
    SingularTransform,
    #[error("null-space inflation requires balanced classes")]
    RequiresBalanced,
    #[error("need at least 2 samples per class, got {n}")]
    TooFewSamplesPerClass { n: usize },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Shape of a generated configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// Every sample sits exactly on its class mean; the means form a
    /// centered unit-separated simplex.
    SimplexCollapsed,
    /// Collapsed configuration plus Gaussian noise confined to the
    /// orthogonal complement of the between space.
    VbPerpNoise(f64),
    /// Collapsed configuration plus Gaussian noise confined to the between
    /// space itself.
    VbNoise(f64),
}

impl Geometry {
    fn name(&self) -> &'static str {
        match self {
            Geometry::SimplexCollapsed => "simplex-collapsed",
            Geometry::VbPerpNoise(_) => "vb-perp-noise",
            Geometry::VbNoise(_) => "vb-noise",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub class_count: usize,
    pub feature_dim: usize,
    pub samples_per_class: usize,
    pub geometry: Geometry,
    pub seed: u64,
}

/// Orthonormal basis of the zero-sum subspace of R^K (K−1 vectors, each
/// orthogonal to the all-ones vector).
fn zero_sum_basis(k: usize) -> Array2<f64> {
    let mut basis = Array2::<f64>::zeros((k, k - 1));
    for j in 1..k {
        let norm = (j as f64 * (j + 1) as f64).sqrt();
        for i in 0..j {
            basis[[i, j - 1]] = 1.0 / norm;
        }
        basis[[j, j - 1]] = -(j as f64) / norm;
    }
    basis
}

/// Class means of the centered simplex with unit pairwise distance, embedded
/// in the first `K−1` coordinates of R^p. Returns a `p × K` matrix.
fn simplex_means(k: usize, p: usize) -> Array2<f64> {
    let basis = zero_sum_basis(k);
    let scale = 1.0 / std::f64::consts::SQRT_2;
    let mut means = Array2::<f64>::zeros((p, k));
    for class in 0..k {
        for j in 0..(k - 1) {
            means[[j, class]] = basis[[class, j]] * scale;
        }
    }
    means
}

fn grouped_labels(k: usize, n_per: usize) -> Vec<usize> {
    (0..k * n_per).map(|j| j / n_per).collect()
}

/// A fully collapsed configuration: `Σ_W = 0` exactly, class means on a
/// centered unit-separated simplex.
pub fn collapsed_config(spec: &GeneratorSpec) -> Result<LabeledFeatures, SynthError> {
    if spec.geometry != Geometry::SimplexCollapsed {
        return Err(SynthError::GeometryMismatch {
            got: spec.geometry.name().to_string(),
        });
    }
    collapsed_features(spec)
}

fn collapsed_features(spec: &GeneratorSpec) -> Result<LabeledFeatures, SynthError> {
    let (k, p, n_per) = (spec.class_count, spec.feature_dim, spec.samples_per_class);
    if k < 2 {
        return Err(SynthError::Feature(FeatureError::TooFewClasses {
            class_count: k,
        }));
    }
    if p + 1 < k {
        return Err(SynthError::DimensionTooSmall {
            p,
            reason: format!("a {k}-vertex simplex needs at least {} dimensions", k - 1),
        });
    }
    let means = simplex_means(k, p);
    let n = k * n_per;
    let mut features = Array2::<f64>::zeros((p, n));
    let labels = grouped_labels(k, n_per);
    for (j, &class) in labels.iter().enumerate() {
        features.column_mut(j).assign(&means.column(class));
    }
    Ok(LabeledFeatures::new(features, labels, k)?)
}

/// Collapsed configuration plus seeded Gaussian noise confined to the
/// between space (`vb-noise`) or its orthogonal complement
/// (`vb-perp-noise`).
///
/// With complement-confined noise the class means stay affinely independent
/// inside the between space, so a linear probe still interpolates the
/// targets exactly: the trace ratio stays at `min(p, K−1)` and the VCI at 0
/// no matter how large `‖Σ_W‖` grows.
pub fn noisy_config(spec: &GeneratorSpec) -> Result<LabeledFeatures, SynthError> {
    let (sigma, perp) = match spec.geometry {
        Geometry::VbPerpNoise(sigma) => (sigma, true),
        Geometry::VbNoise(sigma) => (sigma, false),
        Geometry::SimplexCollapsed => {
            return Err(SynthError::GeometryMismatch {
                got: spec.geometry.name().to_string(),
            })
        }
    };
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(SynthError::InvalidSigma { sigma });
    }
    let (k, p) = (spec.class_count, spec.feature_dim);
    if perp && p == k - 1 {
        return Err(SynthError::DimensionTooSmall {
            p,
            reason: "the between space fills R^p; its complement is trivial".to_string(),
        });
    }
    let base = collapsed_features(spec)?;
    let (mut features, labels, class_count) = base.into_parts();
    let coords = if perp { (k - 1)..p } else { 0..(k - 1) };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = features.ncols();
    for j in 0..n {
        for i in coords.clone() {
            let g: f64 = rng.sample(StandardNormal);
            features[[i, j]] += sigma * g;
        }
    }
    Ok(LabeledFeatures::new(features, labels, class_count)?)
}

/// The constructive within-class blow-up: shifts the first sample of every
/// class by `lambda * v` where `v` is a unit null vector of `w`, leaving the
/// logits `w · H` and the between-class covariance unchanged while
/// `‖Σ_W‖_F` grows as `λ²(N−1)/N²`.
///
/// `v` is chosen deterministically as the eigenvector of `wᵀw` with the
/// smallest eigenvalue, sign-fixed so its largest-magnitude entry is
/// positive.
pub fn nullspace_inflate(
    f: &LabeledFeatures,
    w: &Array2<f64>,
    lambda: f64,
) -> Result<LabeledFeatures, SynthError> {
    let p = f.feature_dim();
    assert_eq!(
        w.ncols(),
        p,
        "weight matrix has {} columns for feature dimension {p}",
        w.ncols()
    );
    if !f.is_balanced() {
        return Err(SynthError::RequiresBalanced);
    }
    let n_per = f.sample_count() / f.class_count();
    if n_per < 2 {
        return Err(SynthError::TooFewSamplesPerClass { n: n_per });
    }

    let gram = w.t().dot(w);
    let (eigs, vecs) = linalg::sym_eigen(gram.view());
    let min_eig = eigs[p - 1];
    let tol = 1e-10 * eigs[0].max(1.0);
    if min_eig > tol {
        return Err(SynthError::FullColumnRank { min_eig });
    }
    let mut v = vecs.column(p - 1).to_owned();
    let lead = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    if v[lead] < 0.0 {
        for value in v.iter_mut() {
            *value = -*value;
        }
    }

    let (mut features, labels, class_count) = f.clone().into_parts();
    let mut seen = vec![false; class_count];
    for (j, &label) in labels.iter().enumerate() {
        if !seen[label] {
            seen[label] = true;
            for i in 0..p {
                features[[i, j]] += lambda * v[i];
            }
        }
    }
    Ok(LabeledFeatures::new(features, labels, class_count)?)
}

/// A seeded invertible matrix with condition number exactly `cond_max`
/// (1 gives an orthogonal matrix): rotation · log-spaced diagonal · rotation.
pub fn random_invertible(p: usize, seed: u64, cond_max: f64) -> Array2<f64> {
    assert!(cond_max >= 1.0, "condition bound must be at least 1");
    assert!(p >= 1, "dimension must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaussian = || Array2::from_shape_fn((p, p), |_| rng.sample::<f64, _>(StandardNormal));
    let q1 = linalg::orthogonal_factor(&gaussian());
    let q2 = linalg::orthogonal_factor(&gaussian());
    let spectrum = Array1::from_shape_fn(p, |i| {
        if p == 1 {
            1.0
        } else {
            cond_max.powf(i as f64 / (p - 1) as f64)
        }
    });
    let mut scaled = q1;
    for j in 0..p {
        let s = spectrum[j];
        for i in 0..p {
            scaled[[i, j]] *= s;
        }
    }
    scaled.dot(&q2)
}

/// Applies an invertible `p × p` transform to every feature vector.
pub fn apply_transform(
    f: &LabeledFeatures,
    a: &Array2<f64>,
) -> Result<LabeledFeatures, SynthError> {
    let p = f.feature_dim();
    assert_eq!(a.dim(), (p, p), "transform must be {p}x{p}");
    let gram = a.t().dot(a);
    let (eigs, _) = linalg::sym_eigen(gram.view());
    let max = eigs[0];
    let min = eigs[p - 1];
    if !(min > 0.0) || (max / min).sqrt() > 1e12 {
        return Err(SynthError::SingularTransform);
    }
    let transformed = a.dot(&f.features());
    Ok(LabeledFeatures::new(
        transformed,
        f.labels().to_vec(),
        f.class_count(),
    )?)
}

/// The covariance pair and transform demonstrating that fuzziness is not
/// invariant under general invertible maps: `Tr[Σ_B† Σ_W]` is 1 before and
/// 2 after conjugating both matrices by `U`.
pub fn fuzziness_counterexample() -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let sigma_b = ndarray::array![[1.0, 0.0], [0.0, 0.0]];
    let sigma_w = ndarray::array![[1.0, 0.0], [0.0, 1.0]];
    let u = ndarray::array![[1.0, 1.0], [0.0, 1.0]];
    (sigma_b, sigma_w, u)
}
