//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured values (run with `--nocapture` to see them).
//!
//! Timing-sensitive criteria share a lock so they never contend for cores.

use std::sync::Mutex;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use nc_metrics::features::LabeledFeatures;
use nc_metrics::io;
use nc_metrics::metrics::{self, PolicyChoice};
use nc_metrics::probe;
use nc_metrics::spectra::EigenPolicy;
use nc_metrics::stats::covariances;
use nc_metrics::synth::{self, Geometry, GeneratorSpec};
use nc_metrics::transfer;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Standard-normal features with the given per-class sample counts.
fn gaussian_features(seed: u64, p: usize, counts: &[usize]) -> LabeledFeatures {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = counts.iter().sum();
    let mut labels = Vec::with_capacity(n);
    for (class, &count) in counts.iter().enumerate() {
        labels.extend(std::iter::repeat(class).take(count));
    }
    let features = Array2::from_shape_fn((p, n), |_| rng.sample::<f64, _>(StandardNormal));
    LabeledFeatures::new(features, labels, counts.len()).unwrap()
}

#[test]
fn acceptance_01_covariance_decomposition() {
    let _guard = serial();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for trial in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + trial);
        let p = rng.gen_range(1..=64);
        let k = rng.gen_range(2..=10);
        let counts: Vec<usize> = if trial % 2 == 0 {
            vec![rng.gen_range(1..=20); k]
        } else {
            (0..k).map(|_| rng.gen_range(1..=20)).collect()
        };
        let f = gaussian_features(trial, p, &counts);
        let covs = covariances(&f);
        let residual = &covs.sigma_t - &covs.sigma_b - &covs.sigma_w;
        let rel = frobenius(&residual) / (1.0 + frobenius(&covs.sigma_t));
        worst = worst.max(rel);
        assert!(
            rel <= 1e-10,
            "trial {trial} (p={p}, counts={counts:?}): residual {rel:e}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "criterion 1 (covariance decomposition): PASS - 200 datasets, worst residual {worst:.2e}, {elapsed:.2?}"
    );
}

#[test]
fn acceptance_02_closed_form_probe_loss() {
    let _guard = serial();
    let start = Instant::now();
    let mut worst_gap = 0.0f64;
    let mut worst_grad = 0.0f64;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2_000 + trial);
        let p = rng.gen_range(1..=32);
        let k = rng.gen_range(2..=8);
        let n_per = rng.gen_range(2..=16);
        let f = gaussian_features(10_000 + trial, p, &vec![n_per; k]);

        let solution = probe::solve_mse_probe(&f).unwrap();
        let oracle = probe::oracle_min_loss(&f);
        let covs = covariances(&f);
        let predicted =
            probe::predicted_min_loss(&covs, &PolicyChoice::Auto.for_sigma_t(p));
        let tol = 1e-8 * (1.0 + solution.loss.abs());
        let gap_oracle = (solution.loss - oracle).abs();
        let gap_predicted = (solution.loss - predicted).abs();
        assert!(
            gap_oracle <= tol,
            "trial {trial}: closed form {} vs oracle {oracle}",
            solution.loss
        );
        assert!(
            gap_predicted <= tol,
            "trial {trial}: closed form {} vs predicted {predicted}",
            solution.loss
        );
        worst_gap = worst_gap.max(gap_oracle.max(gap_predicted));

        // Central finite differences on 20 random coordinates.
        let step = 1e-5;
        for _ in 0..20 {
            let mut w_plus = solution.weights.clone();
            let mut w_minus = solution.weights.clone();
            let mut b_plus = solution.bias.clone();
            let mut b_minus = solution.bias.clone();
            if rng.gen_bool(0.75) {
                let i = rng.gen_range(0..k);
                let j = rng.gen_range(0..p);
                w_plus[[i, j]] += step;
                w_minus[[i, j]] -= step;
            } else {
                let i = rng.gen_range(0..k);
                b_plus[i] += step;
                b_minus[i] -= step;
            }
            let up = probe::mse_loss(&w_plus, &b_plus, &f).unwrap();
            let down = probe::mse_loss(&w_minus, &b_minus, &f).unwrap();
            let grad = ((up - down) / (2.0 * step)).abs();
            assert!(
                grad <= 1e-6 * (1.0 + solution.loss.abs()),
                "trial {trial}: gradient {grad:e} at the closed form"
            );
            worst_grad = worst_grad.max(grad);
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "criterion 2 (closed-form probe loss): PASS - 100 instances, worst gap {worst_gap:.2e}, worst gradient {worst_grad:.2e}, {elapsed:.2?}"
    );
}

#[test]
fn acceptance_03_trace_ratio_bound_and_collapse_equality() {
    let _guard = serial();
    // Same suite as criterion 2.
    let mut worst_excess = f64::NEG_INFINITY;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2_000 + trial);
        let p = rng.gen_range(1..=32);
        let k = rng.gen_range(2..=8);
        let n_per = rng.gen_range(2..=16);
        let f = gaussian_features(10_000 + trial, p, &vec![n_per; k]);
        let covs = covariances(&f);
        let (eigs_b, _) = nc_metrics::spectra::sym_eigendecomp(covs.sigma_b.view())
            .map(|e| (e.values, e.vectors))
            .unwrap();
        let lam_max = eigs_b[0].max(0.0);
        let rank = eigs_b.iter().filter(|&&v| v > 1e-10 * lam_max).count();
        let trace_ratio = metrics::trace_ratio_from_parts(
            &covs.sigma_t,
            &covs.sigma_b,
            &PolicyChoice::Auto.for_sigma_t(p),
        );
        let excess = trace_ratio - rank as f64;
        worst_excess = worst_excess.max(excess);
        assert!(
            excess <= 1e-8,
            "trial {trial}: trace ratio {trace_ratio} exceeds rank {rank}"
        );
    }

    let mut worst_gap = 0.0f64;
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3_000 + trial);
        let k = rng.gen_range(2..=8);
        let p = rng.gen_range(k - 1..=24);
        let n_per = rng.gen_range(1..=6);
        let spec = GeneratorSpec {
            class_count: k,
            feature_dim: p,
            samples_per_class: n_per,
            geometry: Geometry::SimplexCollapsed,
            seed: trial,
        };
        let f = synth::collapsed_config(&spec).unwrap();
        let covs = covariances(&f);
        let v = metrics::vci(&covs, &PolicyChoice::Auto.for_sigma_t(p)).unwrap();
        let gap = (v.trace_ratio - v.rank_bound as f64).abs();
        worst_gap = worst_gap.max(gap.max(v.vci.abs()));
        assert!(gap <= 1e-8, "trial {trial} (k={k}, p={p}): gap {gap:e}");
        assert!(v.vci.abs() <= 1e-8, "trial {trial}: vci {}", v.vci);
    }
    println!(
        "criterion 3 (trace-ratio bound, collapse equality): PASS - worst excess {worst_excess:.2e}, worst collapsed gap {worst_gap:.2e}"
    );
}

#[test]
fn acceptance_04_invariance_under_invertible_transforms() {
    let _guard = serial();
    let mut worst_vci = 0.0f64;
    let mut worst_loss = 0.0f64;
    for trial in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4_000 + trial);
        let p = rng.gen_range(2..=16);
        let k = rng.gen_range(2..=6);
        // Oversampled so the overall covariance keeps full rank.
        let n_per = (2 * p + k) / k + 2;
        let f = gaussian_features(20_000 + trial, p, &vec![n_per; k]);
        let covs = covariances(&f);
        let policy = PolicyChoice::Auto.for_sigma_t(p);
        let base_vci = metrics::vci(&covs, &policy).unwrap().vci;
        let base_loss = probe::oracle_min_loss(&f);

        for t in 0..5u64 {
            let a = synth::random_invertible(p, trial * 5 + t, 1e3);
            let transformed = synth::apply_transform(&f, &a).unwrap();
            let moved_vci = metrics::vci(&covariances(&transformed), &policy).unwrap().vci;
            let moved_loss = probe::oracle_min_loss(&transformed);
            let d_vci = (moved_vci - base_vci).abs();
            let d_loss = (moved_loss - base_loss).abs();
            worst_vci = worst_vci.max(d_vci);
            worst_loss = worst_loss.max(d_loss);
            assert!(d_vci <= 1e-6, "trial {trial}/{t}: |Δvci| = {d_vci:e}");
            assert!(d_loss <= 1e-7, "trial {trial}/{t}: |Δloss| = {d_loss:e}");
        }
    }
    println!(
        "criterion 4 (invertible-transform invariance): PASS - 250 transforms, worst |Δvci| {worst_vci:.2e}, worst |Δloss| {worst_loss:.2e}"
    );
}

#[test]
fn acceptance_05_nullspace_inflation() {
    let _guard = serial();
    // Worked example: two collapsed classes at e1, e2 in R^3, N = 2, and a
    // probe whose null space is exactly the e3 axis.
    let features = ndarray::array![
        [1.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 1.0],
        [0.0, 0.0, 0.0, 0.0]
    ];
    let f = LabeledFeatures::new(features, vec![0, 0, 1, 1], 2).unwrap();
    let w = ndarray::array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    let base = covariances(&f);

    for lambda in [1.0, 10.0, 100.0] {
        let inflated = synth::nullspace_inflate(&f, &w, lambda).unwrap();
        let covs = covariances(&inflated);

        let logit_shift = (w.dot(&inflated.features()) - w.dot(&f.features()))
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(logit_shift <= 1e-12, "lambda {lambda}: logits moved {logit_shift:e}");

        let d_sigma_b = frobenius(&(&covs.sigma_b - &base.sigma_b));
        assert!(d_sigma_b <= 1e-10, "lambda {lambda}: sigma_b moved {d_sigma_b:e}");

        let w_norm = frobenius(&covs.sigma_w);
        let expected = lambda * lambda / 4.0;
        assert!(
            (w_norm - expected).abs() <= 1e-10,
            "lambda {lambda}: |sigma_w| = {w_norm}, expected {expected}"
        );
    }

    // A random instance behaves the same way.
    let g = gaussian_features(555, 8, &[4, 4, 4]);
    let wg = {
        let mut rng = ChaCha8Rng::seed_from_u64(556);
        Array2::from_shape_fn((3, 8), |_| rng.sample::<f64, _>(StandardNormal))
    };
    let base_g = covariances(&g);
    for lambda in [1.0, 10.0, 100.0] {
        let inflated = synth::nullspace_inflate(&g, &wg, lambda).unwrap();
        let covs = covariances(&inflated);
        let logit_shift = (wg.dot(&inflated.features()) - wg.dot(&g.features()))
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(logit_shift <= 1e-12);
        assert!(frobenius(&(&covs.sigma_b - &base_g.sigma_b)) <= 1e-10);
    }

    // The within-class norm is unbounded in lambda.
    let big = synth::nullspace_inflate(&f, &w, 100.0 * 20.0).unwrap();
    let norm = frobenius(&covariances(&big).sigma_w);
    assert!(norm > 1e3, "lambda 2000: |sigma_w| = {norm}");
    println!(
        "criterion 5 (null-space inflation): PASS - logits and sigma_b fixed, |sigma_w| = {norm:.3e} at lambda 2000"
    );
}

#[test]
fn acceptance_06_fuzziness_counterexample_and_block_invariance() {
    let _guard = serial();
    let (sigma_b, sigma_w, u) = synth::fuzziness_counterexample();
    let policy = EigenPolicy::FixedRank(1);
    let before = metrics::fuzziness_from_parts(&sigma_b, &sigma_w, &policy);
    assert!((before - 1.0).abs() <= 1e-12, "before = {before}");
    let tb = u.dot(&sigma_b).dot(&u.t());
    let tw = u.dot(&sigma_w).dot(&u.t());
    let after = metrics::fuzziness_from_parts(&tb, &tw, &policy);
    assert!((after - 2.0).abs() <= 1e-12, "after = {after}");

    // Block transforms acting separately on V_B and its complement.
    let mut rng = ChaCha8Rng::seed_from_u64(6_000);
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let p = 7;
        let r = 3;
        let core_factor = synth::random_invertible(r, 6_100 + trial, 5.0);
        let core = core_factor.dot(&core_factor.t());
        let mut b = Array2::<f64>::zeros((p, p));
        for i in 0..r {
            for j in 0..r {
                b[[i, j]] = core[[i, j]];
            }
        }
        let g = Array2::from_shape_fn((p, p), |_| rng.sample::<f64, _>(StandardNormal));
        let w_mat = g.dot(&g.t());

        let u_b = synth::random_invertible(r, 6_200 + trial, 10.0);
        let u_perp = synth::random_invertible(p - r, 6_300 + trial, 10.0);
        let mut block = Array2::<f64>::zeros((p, p));
        for i in 0..r {
            for j in 0..r {
                block[[i, j]] = u_b[[i, j]];
            }
        }
        for i in 0..(p - r) {
            for j in 0..(p - r) {
                block[[r + i, r + j]] = u_perp[[i, j]];
            }
        }

        let policy = EigenPolicy::FixedRank(r);
        let before = metrics::fuzziness_from_parts(&b, &w_mat, &policy);
        let tb = block.dot(&b).dot(&block.t());
        let tw = block.dot(&w_mat).dot(&block.t());
        let after = metrics::fuzziness_from_parts(&tb, &tw, &policy);
        let diff = (before - after).abs();
        worst = worst.max(diff);
        assert!(diff <= 1e-8, "trial {trial}: fuzziness moved by {diff:e}");
    }
    println!(
        "criterion 6 (fuzziness counterexample): PASS - 1 → 2 exact, block-transform drift ≤ {worst:.2e}"
    );
}

#[test]
fn acceptance_07_mean_log_odds_gain_fixtures() {
    let _guard = serial();
    let records = transfer::fixture_records();
    assert_eq!(records.len(), 11);
    let mut worst = 0.0f64;
    for record in &records {
        let gain = transfer::mean_log_odds_gain(&record.downstream_accs, record.pretrain_acc)
            .unwrap();
        let diff = (gain - record.mlog).abs();
        worst = worst.max(diff);
        assert!(
            diff <= 1e-3,
            "{}: recomputed {gain} vs tabulated {}",
            record.setting,
            record.mlog
        );
    }
    let first = &records[0];
    let gain = transfer::mean_log_odds_gain(&first.downstream_accs, first.pretrain_acc).unwrap();
    assert!((gain - 0.3250).abs() <= 5e-4, "tau=0.1 gain {gain}");
    println!(
        "criterion 7 (mean log odds gain): PASS - 11 rows within {worst:.2e}, tau=0.1 gain {gain:.4}"
    );
}

#[test]
fn acceptance_08_correlation_sign_pattern() {
    let _guard = serial();
    let records = transfer::fixture_records();
    let report = transfer::correlation_report(&records, &transfer::fixture_groups()).unwrap();

    for group in ["tau", "lambda", "overall"] {
        let r = report.groups[group]["vci"];
        assert!(r > 0.0, "group {group}: r(vci, mlog) = {r}");
    }
    let flips: Vec<&str> = ["fuzziness", "squared_distance", "cos_sim"]
        .into_iter()
        .filter(|&m| report.groups["tau"][m].signum() != report.groups["lambda"][m].signum())
        .collect();
    assert!(!flips.is_empty(), "no prior metric flipped sign between groups");
    println!(
        "criterion 8 (correlation signs): PASS - r(vci,mlog) = {:.3}/{:.3}/{:.3} (tau/lambda/overall), sign flips: {flips:?}",
        report.groups["tau"]["vci"],
        report.groups["lambda"]["vci"],
        report.groups["overall"]["vci"]
    );
}

/// Dataset whose between-class spectrum has a trailing eigenvalue three
/// orders of magnitude below the typical scale, with isotropic within-class
/// variation: exact eigenvalues (1, 1, 1e-3) for sigma_b and 0.25 I for
/// sigma_w.
fn trailing_eigenvalue_dataset() -> LabeledFeatures {
    let k = 4usize;
    let p = 6usize;
    let targets = [1.0f64, 1.0, 1e-3];

    // Orthonormal zero-sum directions over the classes.
    let mut zero_sum = Array2::<f64>::zeros((k, k - 1));
    for j in 1..k {
        let norm = (j as f64 * (j + 1) as f64).sqrt();
        for i in 0..j {
            zero_sum[[i, j - 1]] = 1.0 / norm;
        }
        zero_sum[[j, j - 1]] = -(j as f64) / norm;
    }
    let mut means = Array2::<f64>::zeros((p, k));
    for class in 0..k {
        for (j, &target) in targets.iter().enumerate() {
            let s = 2.0 * target.sqrt(); // sigma_b eigenvalue s²/K = target
            means[[j, class]] = s * zero_sum[[class, j]];
        }
    }

    // 2p samples per class: mean ± a e_i, giving sigma_w = (a²/p) I.
    let amplitude = 1.5f64.sqrt(); // a²/p = 0.25
    let n_per = 2 * p;
    let n = k * n_per;
    let mut features = Array2::<f64>::zeros((p, n));
    let mut labels = Vec::with_capacity(n);
    for class in 0..k {
        for s in 0..n_per {
            let j = class * n_per + s;
            let axis = s % p;
            let sign = if s < p { 1.0 } else { -1.0 };
            for i in 0..p {
                features[[i, j]] = means[[i, class]];
            }
            features[[axis, j]] += sign * amplitude;
            labels.push(class);
        }
    }
    LabeledFeatures::new(features, labels, k).unwrap()
}

#[test]
fn acceptance_09_policy_sensitivity_demonstration() {
    let _guard = serial();
    let f = trailing_eigenvalue_dataset();
    let covs = covariances(&f);

    // The construction hits its design targets.
    let (eigs_b, _) = nc_metrics::spectra::sym_eigendecomp(covs.sigma_b.view())
        .map(|e| (e.values, e.vectors))
        .unwrap();
    assert!((eigs_b[0] - 1.0).abs() <= 1e-10);
    assert!((eigs_b[2] - 1e-3).abs() <= 1e-12, "trailing eigenvalue {:e}", eigs_b[2]);

    let policies = [
        EigenPolicy::FixedRank(3),
        EigenPolicy::RelativeTol(1e-6),
        EigenPolicy::RelativeTol(1e-2),
    ];
    let fuzz: Vec<f64> = policies
        .iter()
        .map(|policy| metrics::fuzziness(&covs, policy))
        .collect();
    let fuzz_max = fuzz.iter().cloned().fold(f64::MIN, f64::max);
    let fuzz_min = fuzz.iter().cloned().fold(f64::MAX, f64::min);
    assert!(
        fuzz_max >= 10.0 * fuzz_min,
        "fuzziness varies only {fuzz_max}/{fuzz_min}"
    );

    let vcis: Vec<f64> = policies
        .iter()
        .map(|policy| metrics::vci(&covs, policy).unwrap().vci)
        .collect();
    let vci_max = vcis.iter().cloned().fold(f64::MIN, f64::max);
    let vci_min = vcis.iter().cloned().fold(f64::MAX, f64::min);
    let spread = (vci_max - vci_min).abs() / vci_max.abs().max(1e-12);
    assert!(spread <= 0.01, "vci varies by {spread:e} across policies");
    println!(
        "criterion 9 (policy sensitivity): PASS - fuzziness {fuzz_min:.3}..{fuzz_max:.3} ({:.0}x), vci spread {spread:.2e}",
        fuzz_max / fuzz_min
    );
}

fn peak_rss_bytes() -> Option<u64> {
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    if unsafe { libc::getrusage(libc::RUSAGE_SELF, &mut usage) } == 0 && usage.ru_maxrss > 0 {
        return Some(usage.ru_maxrss as u64 * 1024);
    }
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: u64 = rest.trim().trim_end_matches(" kB").trim().parse().ok()?;
            return Some(kb * 1024);
        }
    }
    None
}

#[test]
fn acceptance_10_large_scale_metrics_run() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let features_path = dir.path().join("large.npy");
    let labels_path = dir.path().join("large.labels.npy");

    // p = 2048, K = 1000, N = 50 → n = 50,000.
    let spec = GeneratorSpec {
        class_count: 1000,
        feature_dim: 2048,
        samples_per_class: 50,
        geometry: Geometry::VbPerpNoise(0.5),
        seed: 77,
    };
    let generated = synth::noisy_config(&spec).unwrap();
    io::save_npy_pair(&generated, &features_path, &labels_path).unwrap();
    drop(generated);

    let start = Instant::now();
    let f = io::load_npy_pair(&features_path, &labels_path).unwrap();
    let report = metrics::evaluate_all(&f, &PolicyChoice::Auto);
    io::save_json(&report, &dir.path().join("large_report.json")).unwrap();
    let elapsed = start.elapsed();

    assert_eq!((report.p, report.n, report.class_count), (2048, 50_000, 1000));
    assert_eq!(report.rank_bound, 999);
    let vci = report.vci.unwrap();
    assert!(vci.abs() <= 1e-6, "complement-confined noise keeps vci at 0, got {vci}");
    assert!(report.proj_vb_perp > 0.0);

    assert!(
        elapsed.as_secs_f64() < 60.0,
        "metrics run took {elapsed:?}"
    );
    let peak = peak_rss_bytes().expect("VmHWM available");
    assert!(
        peak < 4 * 1024 * 1024 * 1024,
        "peak memory {} MB",
        peak / (1024 * 1024)
    );
    println!(
        "criterion 10 (large-scale run): PASS - p=2048, K=1000, n=50000 in {elapsed:.1?}, peak RSS {} MB, vci {vci:.2e}",
        peak / (1024 * 1024)
    );
}
