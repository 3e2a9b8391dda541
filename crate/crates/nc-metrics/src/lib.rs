//! Variability-collapse analysis for neural-network feature matrices.
//!
//! The input is a feature matrix `H` with one column per sample (p feature
//! dimensions, n samples) and a class label in `[0, K)` per column. From the
//! within-class, between-class, and overall covariance matrices this crate
//! computes four collapse metrics:
//!
//! * **Fuzziness**: `Tr[Σ_B† Σ_W]`, the normalized within-class covariance,
//! * **Squared Distance**: within-class over between-class squared deviation,
//! * **Cosine Similarity**: mean within-class cosine distance `d̄_within`
//!   (with `d̄_total` and class separation as companions),
//! * **VCI**: `1 − Tr[Σ_T† Σ_B] / min(p, K−1)`, the variability collapse
//!   index, invariant under invertible linear transforms of the features.
//!
//! It also solves MSE linear probing in closed form, reports eigenvalue
//! spectra and pseudoinverse-policy sensitivity, generates synthetic feature
//! configurations (collapsed simplices, subspace-confined noise, null-space
//! inflation), and evaluates transferability statistics (mean log odds gain,
//! Pearson correlations) over bundled experiment tables.
//!
//! The `nc-metrics` binary exposes the pipeline as `metrics`, `probe`,
//! `spectrum`, `synth`, and `transfer` subcommands over CSV / NPY feature
//! dumps and JSON reports.

// Link the system OpenBLAS; `blas`/`lapack` calls and ndarray's `dot`
// resolve against it.
extern crate blas_src;

pub mod features;
pub mod io;
mod linalg;
pub mod metrics;
pub mod probe;
pub mod spectra;
pub mod stats;
pub mod synth;
pub mod transfer;

pub use features::{FeatureError, LabeledFeatures};
pub use metrics::{evaluate_all, MetricReport, PolicyChoice};
pub use probe::ProbeSolution;
pub use spectra::{EigenPolicy, SpectrumReport};
pub use stats::{covariances, ClassStats, CovarianceSet};
