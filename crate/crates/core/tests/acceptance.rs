//! Acceptance suite: one test per criterion, each printing a pass line.
//! Run with `cargo test --test acceptance -- --nocapture --test-threads=1`
//! to see the per-criterion lines and sequential timings.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use eeg_fewshot::attention::{self, AttentionSettings};
use eeg_fewshot::eval::{
    kfold_sessions, pcc, rmse, run_trials, sample_support, split_subjects, SUPPORT_PER_CLASS,
};
use eeg_fewshot::io::{Checkpoint, RunConfig};
use eeg_fewshot::model::{
    DeEpisode, DistanceMetric, ModelConfig, ModelParams, SupportClass,
};
use eeg_fewshot::signal::{
    de_features, differential_entropy, drowsiness_index, gaussian_entropy, ClassLabel, DePool,
    EegEpoch, EpochSynth,
};
use eeg_fewshot::synth::{generate_benchmark, generate_vigilance_subject, BenchmarkSpec, VigilanceSpec};
use eeg_fewshot::tensor::gradcheck::{fd_components, fd_directional, grad_close, rel_err};
use eeg_fewshot::tensor::{Graph, Tensor};
use eeg_fewshot::train::{
    episode_loss, episodic_accuracy, train_episodic, train_vigilance_regressor, EpisodeSampler,
    TrainConfig,
};

const CHANNELS: usize = 4;

fn pass(n: usize, what: &str) {
    println!("acceptance {n:02} ({what}): PASS");
}

/// Synthetic episode with real band-limited epochs reduced to DE features.
fn synth_episode(seed: u64, n_way: usize, k_shot: usize) -> DeEpisode {
    let profiles = [
        [0.8, 0.8, 0.5, 0.6, 0.4],
        [0.8, 0.8, 2.0, 0.6, 0.4],
        [0.8, 0.8, 0.5, 0.6, 1.6],
    ];
    let labels = [ClassLabel::NonDrowsy, ClassLabel::Drowsy, ClassLabel::NonDriving];
    let mut support = Vec::new();
    for class in 0..n_way {
        let synth = EpochSynth::new(profiles[class], CHANNELS, 256, 128.0);
        let shots = (0..k_shot)
            .map(|k| {
                de_features(&synth.generate(seed + class as u64, seed + 100 + (class * 13 + k) as u64))
                    .expect("synthetic epochs satisfy the band preconditions")
            })
            .collect();
        support.push(SupportClass { label: labels[class], shots });
    }
    let query_synth = EpochSynth::new(profiles[0], CHANNELS, 256, 128.0);
    let query = de_features(&query_synth.generate(seed, seed + 999)).unwrap();
    DeEpisode { query, support, query_truth: ClassLabel::NonDrowsy, driving_truth: true }
}

// ── 1. Gradient integrity ───────────────────────────────────────────────────

#[test]
fn criterion_01_gradient_integrity() {
    let start = Instant::now();
    let train_config = TrainConfig::default();
    let mut checked_tensors = 0usize;
    for seed in 0..10u64 {
        let metric = match seed {
            7 => DistanceMetric::StdEuclidean,
            8 => DistanceMetric::Cosine,
            9 => DistanceMetric::Correlation,
            _ => DistanceMetric::Euclidean,
        };
        let config = ModelConfig { channels: CHANNELS, k_shot: 1, metric, ..ModelConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let params = ModelParams::init(&mut rng, &config);
        let episode = synth_episode(40 + seed, 2, 1);

        let loss_value = || {
            let mut g = Graph::new();
            let parts = episode_loss(&mut g, &episode, &params, &config, &train_config)
                .expect("loss builds on a valid episode");
            g.scalar_value(parts.total)
        };

        params.zero_grads();
        let mut g = Graph::new();
        let parts = episode_loss(&mut g, &episode, &params, &config, &train_config).unwrap();
        g.backward(parts.total).unwrap();
        let loss_scale = g.scalar_value(parts.total);

        for (name, p) in params.named_tensors() {
            let analytic = p
                .grad()
                .unwrap_or_else(|| panic!("parameter {name} received no gradient (seed {seed})"));

            // Whole-tensor check: central difference along a random unit
            // direction must match the analytic directional derivative.
            let dir: Vec<f64> = {
                let raw: Vec<f64> =
                    (0..p.numel()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                raw.iter().map(|v| v / norm).collect()
            };
            let analytic_dd: f64 = analytic.iter().zip(&dir).map(|(a, d)| a * d).sum();
            let numeric_dd = fd_directional(&p, &dir, 1e-5, loss_value);
            assert!(
                rel_err(analytic_dd, numeric_dd) < 1e-4
                    || grad_close(analytic_dd, numeric_dd, loss_scale),
                "seed {seed} tensor {name}: directional {analytic_dd} vs {numeric_dd}"
            );

            // Spot-check two random components per tensor.
            let idxs: Vec<usize> =
                (0..2).map(|_| rng.random_range(0..p.numel())).collect();
            let numeric = fd_components(&p, &idxs, 1e-5, loss_value);
            for (&i, &n) in idxs.iter().zip(&numeric) {
                assert!(
                    grad_close(analytic[i], n, loss_scale),
                    "seed {seed} tensor {name} component {i}: {} vs {n}",
                    analytic[i]
                );
            }
            checked_tensors += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 120.0,
        "gradient integrity took {elapsed:?}, budget is 2 minutes"
    );
    assert!(checked_tensors >= 10 * 149, "expected every named tensor checked each seed");
    pass(1, "gradient integrity vs central finite differences");
}

// ── 2. Normalization invariants ─────────────────────────────────────────────

#[test]
fn criterion_02_normalization_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..10_000 {
        // Softmax rows sum to one for any shape.
        let rows = rng.random_range(1..6);
        let cols = rng.random_range(2..40);
        let data: Vec<f64> =
            (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let t = Tensor::matrix(rows, cols, data).unwrap();
        let mut g = Graph::new();
        let x = g.leaf(&t);
        let sm = g.softmax_rows(x).unwrap();
        for row in g.value(sm).chunks(cols) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-6, "case {case}: softmax row sum {sum}");
            assert!(row.iter().all(|&v| v >= 0.0));
        }

        // Layer-norm statistics at the network's operating shape (5×32
        // feature maps of unit-scale entries).
        let data: Vec<f64> = (0..160).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let t = Tensor::matrix(5, 32, data).unwrap();
        let x = g.leaf(&t);
        let ln = g.layer_norm(x).unwrap();
        let y = g.value(ln);
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6, "case {case}: layer-norm mean {mean}");
        assert!((var - 1.0).abs() < 1e-4, "case {case}: layer-norm variance {var}");
    }
    pass(2, "softmax row sums and layer-norm statistics over 10000 cases");
}

// ── 3. Differential-entropy oracle ──────────────────────────────────────────

#[test]
fn criterion_03_differential_entropy_oracle() {
    // Sampled white Gaussian noise, σ = 2, T = 1600.
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(30 + seed);
        let xs: Vec<f64> =
            (0..1600).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let de = differential_entropy(&xs);
        let expected = gaussian_entropy(4.0);
        assert!(
            (de - expected).abs() < 0.05,
            "seed {seed}: sampled DE {de} vs closed form {expected}"
        );
    }

    // Band-limited noise: the generator's per-band σ is recovered through the
    // full band-decomposition + DE path. Longer epochs keep the estimator's
    // sampling noise well inside the 0.05 nat budget.
    let sigma = 1.3;
    let synth = EpochSynth::new([0.0, 0.0, sigma, 0.0, 0.0], 1, 64_000, 200.0);
    let gain = synth.subject_gains(3)[0];
    for seed in 0..5u64 {
        let epoch = synth.generate(3, 300 + seed);
        let de = de_features(&epoch).unwrap();
        let alpha = de.get(eeg_fewshot::signal::ALPHA_BAND, 0);
        let expected = gaussian_entropy((gain * sigma).powi(2));
        assert!(
            (alpha - expected).abs() < 0.05,
            "seed {seed}: band DE {alpha} vs closed form {expected}"
        );
    }

    // Scaling property: DE(a·x) − DE(x) = log(a) ± 1e-6.
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..20 {
        let a: f64 = rng.random_range(0.1..10.0);
        let xs: Vec<f64> = (0..512).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let scaled: Vec<f64> = xs.iter().map(|&v| a * v).collect();
        let delta = differential_entropy(&scaled) - differential_entropy(&xs);
        assert!((delta - a.ln()).abs() < 1e-6, "scale {a}: shift {delta} vs {}", a.ln());
    }
    pass(3, "differential entropy matches the Gaussian closed form");
}

// ── 4. Metric oracles ───────────────────────────────────────────────────────

fn pcc_ref(t: &[f64], p: &[f64]) -> f64 {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let mp = p.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut a = 0.0;
    let mut b = 0.0;
    for i in 0..t.len() {
        num += (t[i] - mt) * (p[i] - mp);
        a += (t[i] - mt).powi(2);
        b += (p[i] - mp).powi(2);
    }
    num / (a.sqrt() * b.sqrt())
}

fn rmse_ref(t: &[f64], p: &[f64]) -> f64 {
    (t.iter().zip(p).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / t.len() as f64).sqrt()
}

fn f1_ref(tp: f64, fp: f64, fn_: f64) -> f64 {
    tp / (tp + 0.5 * (fp + fn_))
}

#[test]
fn criterion_04_metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let n = rng.random_range(2..64);
        let t: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        assert!((pcc(&t, &p).unwrap() - pcc_ref(&t, &p)).abs() <= 1e-9);
        assert!((rmse(&t, &p).unwrap() - rmse_ref(&t, &p)).abs() <= 1e-9);
        let (tp, fp, fn_) =
            (rng.random_range(1..50usize), rng.random_range(0..50usize), rng.random_range(0..50usize));
        let ours = eeg_fewshot::eval::f1_from_counts(tp, fp, fn_).unwrap();
        assert!((ours - f1_ref(tp as f64, fp as f64, fn_ as f64)).abs() <= 1e-9);
    }

    // Worked values, exact to 5 decimals.
    let f1 = eeg_fewshot::eval::f1_from_counts(8, 2, 2).unwrap();
    assert_eq!((f1 * 1e5).round() / 1e5, 0.8);
    let idx = drowsiness_index(2.0);
    assert_eq!((idx * 1e5).round() / 1e5, 0.46212);
    pass(4, "PCC/RMSE/F1 match brute-force references; worked values exact");
}

// ── 5. Overfit check ────────────────────────────────────────────────────────

fn overfit_spec() -> BenchmarkSpec {
    BenchmarkSpec {
        driving_subjects: 3,
        driving_epochs_per_class: 12,
        nd_subjects: 2,
        nd_epochs_per_subject: 10,
        seed: 55,
        ..BenchmarkSpec::desk_default()
    }
}

#[test]
fn criterion_05_overfit_on_separable_data() {
    let start = Instant::now();
    let pool = DePool::from_epochs(&generate_benchmark(&overfit_spec())).unwrap();
    let config = ModelConfig { channels: 6, k_shot: 5, ..ModelConfig::default() };
    // Desk-scale optimizer settings: the reference schedule's 1e-4 ceiling is
    // tuned for far longer runs, so the 500-step budget uses a faster ramp.
    let train_config = TrainConfig {
        batch_size_train: 16,
        epochs_total: 90,
        lr_start: 1e-3,
        lr_end: 3e-3,
        warmup_epochs: 5,
        seed: 5,
        ..TrainConfig::default()
    };
    let sampler = EpisodeSampler::new(&pool, &config).unwrap();
    let steps_per_epoch = sampler.eligible_queries.len().div_ceil(16);
    let epochs = (500 / steps_per_epoch).min(90);
    let train_config = TrainConfig { epochs_total: epochs, ..train_config };

    let outcome = train_episodic(&pool, &config, &train_config, None).unwrap();
    assert!(outcome.steps <= 500, "used {} steps", outcome.steps);
    let accuracy = episodic_accuracy(&pool, &outcome.params, &config, 200, 777).unwrap();
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 300.0,
        "overfit run took {elapsed:?}, budget is 5 minutes"
    );
    assert!(
        accuracy >= 0.95,
        "training-episode accuracy {accuracy} after {} steps",
        outcome.steps
    );
    pass(5, "2-way 5-shot training reaches 95% within 500 steps");
}

// ── 6. Cross-subject surrogate ──────────────────────────────────────────────

fn cross_subject_spec() -> BenchmarkSpec {
    BenchmarkSpec {
        driving_subjects: 7,
        driving_epochs_per_class: 28,
        nd_subjects: 4,
        nd_epochs_per_subject: 20,
        seed: 66,
        ..BenchmarkSpec::desk_default()
    }
}

#[test]
fn criterion_06_cross_subject_f1_trend() {
    let spec = cross_subject_spec();
    let pool = DePool::from_epochs(&generate_benchmark(&spec)).unwrap();
    let train_subjects: Vec<u32> = vec![0, 1, 2, 3, 1000, 1001];
    let eval_subjects: Vec<u32> = vec![4, 5, 6, 1002, 1003];
    let (train_pool, eval_pool) = split_subjects(&pool, &train_subjects, &eval_subjects).unwrap();

    let config = ModelConfig { channels: 6, k_shot: 5, ..ModelConfig::default() };
    let train_config = TrainConfig {
        batch_size_train: 16,
        epochs_total: 20,
        lr_start: 1e-3,
        lr_end: 3e-3,
        warmup_epochs: 5,
        seed: 6,
        ..TrainConfig::default()
    };
    let outcome = train_episodic(&train_pool, &config, &train_config, None).unwrap();

    let mut mean_f1_by_k = Vec::new();
    for k in [1usize, 5, 10, 20] {
        let report = run_trials(&eval_pool, &outcome.params, &config, k, 5, 1234).unwrap();
        assert_eq!(report.trials.len(), 5, "five repeated trials");
        let f1 = report.mean_macro_f1.expect("macro F1 defined on this pool");
        mean_f1_by_k.push((k, f1));
    }
    let f1_20 = mean_f1_by_k.last().unwrap().1;
    assert!(f1_20 >= 0.90, "20-shot macro F1 {f1_20}");

    // Non-decreasing in K, with one allowed inversion of at most 0.01.
    let mut inversions = 0;
    for w in mean_f1_by_k.windows(2) {
        let (ka, a) = w[0];
        let (kb, b) = w[1];
        if b < a {
            inversions += 1;
            assert!(a - b <= 0.01, "F1 dropped {a} → {b} from {ka}- to {kb}-shot");
        }
    }
    assert!(inversions <= 1, "{inversions} inversions in the K trend");
    pass(6, "held-out subjects: macro F1 ≥ 0.90 at 20-shot, trend non-decreasing in K");
}

// ── 7. Ablation directionality ──────────────────────────────────────────────

#[test]
fn criterion_07_ablation_directionality() {
    // 1-shot episodes on a benchmark with heterogeneous anomalies (gamma
    // modes straddling the driving level) and per-band epoch noise: the
    // regime where a single averaged prototype is weakest, mirroring the
    // reference comparisons.
    let k = 1usize;
    let mut det_with = Vec::new();
    let mut det_without = Vec::new();
    let mut sim_with = Vec::new();
    let mut sim_without = Vec::new();

    for seed in 0..5u64 {
        let spec = BenchmarkSpec {
            profiles: eeg_fewshot::synth::ClassProfiles {
                non_drowsy: [0.8, 0.8, 0.7, 0.6, 0.4],
                drowsy: [0.8, 0.8, 1.4, 0.6, 0.4],
                non_driving: [0.8, 0.8, 0.7, 0.6, 0.4],
            },
            amplitude_jitter: 0.35,
            band_jitter: 0.4,
            nd_gamma_spread: 0.25,
            nd_gamma_choices: vec![0.12, 1.6],
            driving_subjects: 6,
            driving_epochs_per_class: 40,
            nd_subjects: 4,
            nd_epochs_per_subject: 26,
            seed: 700 + seed,
            ..BenchmarkSpec::desk_default()
        };
        let pool = DePool::from_epochs(&generate_benchmark(&spec)).unwrap();
        let (train_pool, eval_pool) = split_subjects(
            &pool,
            &[0, 1, 2, 3, 1000, 1001],
            &[4, 5, 1002, 1003],
        )
        .unwrap();

        let base_config =
            ModelConfig { channels: 6, k_shot: k, seed, ..ModelConfig::default() };
        let train_config = TrainConfig {
            batch_size_train: 8,
            epochs_total: 14,
            lr_start: 1e-3,
            lr_end: 3e-3,
            warmup_epochs: 4,
            seed,
            ..TrainConfig::default()
        };

        let full = train_episodic(&train_pool, &base_config, &train_config, None).unwrap();
        let no_det_config =
            ModelConfig { use_determination_block: false, n_way: 3, ..base_config.clone() };
        let no_det = train_episodic(&train_pool, &no_det_config, &train_config, None).unwrap();
        let no_sim_config =
            ModelConfig { use_similarity_block: false, ..base_config.clone() };
        let no_sim = train_episodic(&train_pool, &no_sim_config, &train_config, None).unwrap();

        let trials = 5;
        let with_report =
            run_trials(&eval_pool, &full.params, &base_config, k, trials, 900 + seed).unwrap();
        let nodet_report =
            run_trials(&eval_pool, &no_det.params, &no_det_config, k, trials, 900 + seed).unwrap();
        let nosim_report =
            run_trials(&eval_pool, &no_sim.params, &no_sim_config, k, trials, 900 + seed).unwrap();

        let nd_idx = ClassLabel::NonDriving.index();
        det_with.push(with_report.mean_accuracy[nd_idx].unwrap());
        det_without.push(nodet_report.mean_accuracy[nd_idx].unwrap());

        let driving_acc = |r: &eeg_fewshot::eval::EvalReport| {
            (r.mean_accuracy[0].unwrap() + r.mean_accuracy[1].unwrap()) / 2.0
        };
        sim_with.push(driving_acc(&with_report));
        sim_without.push(driving_acc(&nosim_report));
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let det_gap = mean(&det_with) - mean(&det_without);
    assert!(
        det_gap >= 0.02,
        "determination block should help non-driving accuracy: with {:?} without {:?} gap {det_gap:.4}",
        det_with,
        det_without
    );
    let sim_gap = mean(&sim_with) - mean(&sim_without);
    assert!(
        sim_gap >= 0.02,
        "similarity block should help driving-class accuracy: with {:?} without {:?} gap {sim_gap:.4}",
        sim_with,
        sim_without
    );
    pass(7, "ablations point the right way: determination and similarity blocks help");
}

// ── 8. Vigilance surrogate ──────────────────────────────────────────────────

#[test]
fn criterion_08_vigilance_regression() {
    let spec = VigilanceSpec { epochs_per_subject: 100, seed: 88, ..VigilanceSpec::desk_default() };
    let config = ModelConfig { channels: 6, ..ModelConfig::default() };
    let train_config = TrainConfig {
        batch_size_train: 16,
        epochs_total: 30,
        lr_start: 1e-3,
        lr_end: 3e-3,
        warmup_epochs: 5,
        seed: 8,
        ..TrainConfig::default()
    };
    for subject in [2000u32, 2001] {
        let epochs = generate_vigilance_subject(&spec, subject);
        let pool = DePool::from_epochs(&epochs).unwrap();
        let folds =
            train_vigilance_regressor(&pool.samples, 5, &config, &train_config).unwrap();
        assert_eq!(folds.len(), 5);
        let mut truths = Vec::new();
        let mut preds = Vec::new();
        for f in &folds {
            truths.extend_from_slice(&f.truths);
            preds.extend_from_slice(&f.predictions);
        }
        assert_eq!(truths.len(), 100, "every epoch tested exactly once");
        let r = pcc(&truths, &preds).unwrap();
        let e = rmse(&truths, &preds).unwrap();
        assert!(r >= 0.9, "subject {subject}: PCC {r}");
        assert!(e <= 0.1, "subject {subject}: RMSE {e}");
    }
    pass(8, "5-fold vigilance regression reaches PCC ≥ 0.9, RMSE ≤ 0.1 per subject");
}

// ── 9. Protocol invariants ──────────────────────────────────────────────────

#[test]
fn criterion_09_protocol_invariants() {
    use std::collections::BTreeSet;

    // Support nesting + query disjointness, 100 seeds.
    let spec = BenchmarkSpec {
        driving_subjects: 2,
        driving_epochs_per_class: 24,
        nd_subjects: 1,
        nd_epochs_per_subject: 6,
        amplitude_jitter: 0.0,
        seed: 99,
        ..BenchmarkSpec::desk_default()
    };
    let pool = DePool::from_epochs(&generate_benchmark(&spec)).unwrap();
    for seed in 0..100u64 {
        let plan = sample_support(&pool, SUPPORT_PER_CLASS, false, seed).unwrap();
        for lists in plan.per_subject.values() {
            for list in lists {
                for (k1, k2) in [(1usize, 5usize), (5, 10), (10, 20)] {
                    let small: BTreeSet<usize> = list[..k1].iter().copied().collect();
                    let large: BTreeSet<usize> = list[..k2].iter().copied().collect();
                    assert!(small.is_subset(&large), "seed {seed}: support({k1}) ⊄ support({k2})");
                }
                for q in &plan.queries {
                    assert!(!list.contains(q), "seed {seed}: query inside support");
                }
            }
        }
    }

    // Subject disjointness of random splits, 100 seeds.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let all: Vec<u32> = (0..10).collect();
        let cut = rng.random_range(1..9);
        let (train_ids, eval_ids) = all.split_at(cut);
        let many: Vec<_> = (0..10)
            .flat_map(|s| {
                let base = eeg_fewshot::signal::DeFeature::from_tensor(
                    Tensor::matrix(5, 2, vec![s as f64; 10]).unwrap(),
                )
                .unwrap();
                vec![eeg_fewshot::signal::DeSample {
                    de: base,
                    subject_id: s,
                    class: Some(ClassLabel::NonDrowsy),
                    vigilance: None,
                }]
            })
            .collect();
        let big_pool = DePool { samples: many };
        let (train, eval) = split_subjects(&big_pool, train_ids, eval_ids).unwrap();
        for s in eval.subjects() {
            assert!(train.indices_of_subject(s).is_empty());
        }
    }

    // 5-trial report shape on a minimal model.
    let config = ModelConfig { channels: 6, k_shot: 1, ..ModelConfig::default() };
    let mut prng = ChaCha8Rng::seed_from_u64(91);
    let params = ModelParams::init(&mut prng, &config);
    for seed in [0u64, 1, 2] {
        let report = run_trials(&pool, &params, &config, 1, 5, seed).unwrap();
        assert_eq!(report.trials.len(), 5);
    }

    // Fold partition exactness, 100 random (n, k) pairs.
    for _ in 0..100 {
        let n = rng.random_range(10..1000);
        let k = rng.random_range(2..10.min(n));
        let folds = kfold_sessions(n, k).unwrap();
        let mut seen = vec![false; n];
        for f in folds {
            for i in f {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }
    pass(9, "support nesting, subject disjointness, trial shape, fold exactness");
}

// ── 10. Round-trips ─────────────────────────────────────────────────────────

#[test]
fn criterion_10_round_trips() {
    // Checkpoint: save → load → save byte-identical.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let config = ModelConfig { channels: CHANNELS, ..ModelConfig::default() };
    let params = ModelParams::init(&mut rng, &config);
    let echo = RunConfig::default().emit();
    let ck = Checkpoint::from_named_params(&params.named_tensors(), echo);
    let bytes = ck.to_bytes();
    let reloaded = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(reloaded.to_bytes(), bytes);

    // Epoch file: write → read → write byte-identical.
    let synth = EpochSynth::new([0.5, 0.4, 1.0, 0.6, 0.3], 3, 256, 128.0);
    let mut epoch = synth.generate(1, 2);
    epoch.class_label = Some(ClassLabel::Drowsy);
    epoch.vigilance = Some(0.8);
    let bytes = eeg_fewshot::io::epoch_file::epoch_to_bytes(&epoch);
    let back = eeg_fewshot::io::epoch_file::epoch_from_bytes(&bytes).unwrap();
    assert_eq!(eeg_fewshot::io::epoch_file::epoch_to_bytes(&back), bytes);

    // Config: parse(emit(config)) == config.
    let config = RunConfig {
        seed: 424242,
        eval_shots: vec![1, 3],
        profile_non_driving: [0.7, 0.7, 0.4, 0.5, 2.2],
        ..RunConfig::default()
    };
    let parsed = RunConfig::parse(&config.emit()).unwrap();
    assert_eq!(parsed, config);
    pass(10, "checkpoint, epoch file, and config round-trips are exact");
}

// Keep the attention settings import exercised: the default formulation is
// part of the frozen surface the suite pins down.
#[test]
fn default_attention_settings_match_contract() {
    let s = AttentionSettings::default();
    assert_eq!(s.pe_base, 1000.0);
    assert!(!s.scaled_attention);
    assert!(!s.pe_every_module);
    assert_eq!(s.d_ff, 64);
    assert_eq!(attention::NUM_HEADS, 8);
    assert_eq!(attention::FEATURE_DIM, 32);
    let epoch: EegEpoch = EpochSynth::new([0.5; 5], 2, 256, 128.0).generate(0, 1);
    assert_eq!(epoch.n_samples, 256);
}
