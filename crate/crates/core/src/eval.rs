//! Metrics, split construction, K-shot support sampling, repeated-trial
//! aggregation, and the ablation drivers.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{
    build_pairs_with_prototypes, forward_from_pairs, prototype_maps, DistanceMetric, ModelConfig,
    ModelError, ModelParams, SupportClass,
};
use crate::signal::{ClassLabel, DePool};
use crate::train::{train_episodic, TrainConfig};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Driving classes in fixed order; support sets always carry these two.
pub const DRIVING_CLASSES: [ClassLabel; 2] = [ClassLabel::NonDrowsy, ClassLabel::Drowsy];

/// Shot counts exercised by the evaluation protocol.
pub const EVAL_SHOTS: [usize; 4] = [1, 5, 10, 20];

/// Support samples drawn per class per subject; K-shot support sets are
/// prefixes of this list.
pub const SUPPORT_PER_CLASS: usize = 20;

pub const DEFAULT_TRIALS: usize = 5;

// ── Metrics ─────────────────────────────────────────────────────────────────

/// Pearson correlation coefficient. Constant inputs are an explicit error
/// rather than a silent zero.
pub fn pcc(truth: &[f64], pred: &[f64]) -> Result<f64, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::Invalid(format!(
            "pcc length mismatch: {} vs {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.len() < 2 {
        return Err(EvalError::Invalid("pcc needs at least 2 points".into()));
    }
    let n = truth.len() as f64;
    let mt = truth.iter().sum::<f64>() / n;
    let mp = pred.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dt = 0.0;
    let mut dp = 0.0;
    for (&t, &p) in truth.iter().zip(pred) {
        num += (t - mt) * (p - mp);
        dt += (t - mt) * (t - mt);
        dp += (p - mp) * (p - mp);
    }
    if dt == 0.0 || dp == 0.0 {
        return Err(EvalError::Undefined("pcc of a constant vector".into()));
    }
    Ok(num / (dt.sqrt() * dp.sqrt()))
}

/// Pure RMSE metric (no ε, unlike the training loss).
pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::Invalid(format!(
            "rmse length mismatch: {} vs {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(EvalError::Invalid("rmse of empty vectors".into()));
    }
    let n = truth.len() as f64;
    let sq = truth.iter().zip(pred).map(|(&t, &p)| (p - t) * (p - t)).sum::<f64>() / n;
    Ok(sq.sqrt())
}

/// TP / (TP + ½(FP + FN)); undefined (None) when all counts are zero.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> Option<f64> {
    if tp + fp + fn_ == 0 {
        return None;
    }
    Some(tp as f64 / (tp as f64 + 0.5 * (fp + fn_) as f64))
}

/// 3-class confusion matrix indexed `[truth][prediction]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Confusion {
    counts: [[usize; 3]; 3],
}

impl Confusion {
    pub fn record(&mut self, truth: ClassLabel, pred: ClassLabel) {
        self.counts[truth.index()][pred.index()] += 1;
    }

    pub fn count(&self, truth: ClassLabel, pred: ClassLabel) -> usize {
        self.counts[truth.index()][pred.index()]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Per-class accuracy: correct / total truth count for the class.
    pub fn accuracy(&self, class: ClassLabel) -> Option<f64> {
        let row = &self.counts[class.index()];
        let total: usize = row.iter().sum();
        if total == 0 {
            None
        } else {
            Some(row[class.index()] as f64 / total as f64)
        }
    }

    pub fn f1(&self, class: ClassLabel) -> Option<f64> {
        let c = class.index();
        let tp = self.counts[c][c];
        let fn_: usize = (0..3).filter(|&j| j != c).map(|j| self.counts[c][j]).sum();
        let fp: usize = (0..3).filter(|&i| i != c).map(|i| self.counts[i][c]).sum();
        f1_from_counts(tp, fp, fn_)
    }

    /// Unweighted mean F1 over the classes where it is defined.
    pub fn macro_f1(&self) -> Option<f64> {
        let values: Vec<f64> = [ClassLabel::NonDrowsy, ClassLabel::Drowsy, ClassLabel::NonDriving]
            .into_iter()
            .filter_map(|c| self.f1(c))
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
}

// ── Splits ──────────────────────────────────────────────────────────────────

/// Subject-disjoint train/eval pools; any overlap or an empty side is a
/// configuration error.
pub fn split_subjects(
    pool: &DePool,
    train_subjects: &[u32],
    eval_subjects: &[u32],
) -> Result<(DePool, DePool), EvalError> {
    for t in train_subjects {
        if eval_subjects.contains(t) {
            return Err(EvalError::Invalid(format!("subject {t} appears in both splits")));
        }
    }
    let filter = |ids: &[u32]| DePool {
        samples: pool
            .samples
            .iter()
            .filter(|s| ids.contains(&s.subject_id))
            .cloned()
            .collect(),
    };
    let train = filter(train_subjects);
    let eval = filter(eval_subjects);
    if train.is_empty() {
        return Err(EvalError::Invalid("training split is empty".into()));
    }
    if eval.is_empty() {
        return Err(EvalError::Invalid("evaluation split is empty".into()));
    }
    Ok((train, eval))
}

/// Contiguous session folds: temporal order preserved, sizes differ by at
/// most one, every index tested exactly once.
pub fn kfold_sessions(n: usize, k: usize) -> Result<Vec<Range<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::Invalid(format!("k-fold needs k ≥ 2, got {k}")));
    }
    if n < k {
        return Err(EvalError::Invalid(format!("cannot split {n} epochs into {k} folds")));
    }
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        folds.push(start..start + len);
        start += len;
    }
    Ok(folds)
}

// ── Support sampling ────────────────────────────────────────────────────────

/// Per-subject nested support lists plus the fixed query set. K-shot support
/// sets are prefixes, so support(1) ⊂ support(5) ⊂ support(10) ⊂ support(20),
/// and the query set is identical for every K.
#[derive(Debug, Clone)]
pub struct SupportPlan {
    /// Driving subject → per-class ordered support indices (list per
    /// [`DRIVING_CLASSES`] entry).
    pub per_subject: BTreeMap<u32, Vec<Vec<usize>>>,
    /// Nested non-driving support indices; empty unless the anomaly class is
    /// part of the support set (no-determination ablation).
    pub anomaly_support: Vec<usize>,
    pub queries: Vec<usize>,
    pub max_k: usize,
}

pub fn sample_support(
    pool: &DePool,
    max_k: usize,
    include_anomaly_class: bool,
    seed: u64,
) -> Result<SupportPlan, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subjects = pool.driving_subjects();
    if subjects.is_empty() {
        return Err(EvalError::Invalid("no driving subjects to sample support from".into()));
    }
    let mut per_subject = BTreeMap::new();
    let mut used: Vec<bool> = vec![false; pool.len()];
    for subject in subjects {
        let mut lists = Vec::with_capacity(DRIVING_CLASSES.len());
        for class in DRIVING_CLASSES {
            let candidates = pool.indices_of_subject_class(subject, class);
            if candidates.len() < max_k {
                return Err(EvalError::Invalid(format!(
                    "subject {subject} has only {} {} epochs, needs {max_k}",
                    candidates.len(),
                    class.name()
                )));
            }
            let picks = rand::seq::index::sample(&mut rng, candidates.len(), max_k);
            let ordered: Vec<usize> = picks.iter().map(|p| candidates[p]).collect();
            for &i in &ordered {
                used[i] = true;
            }
            lists.push(ordered);
        }
        per_subject.insert(subject, lists);
    }

    let mut anomaly_support = Vec::new();
    if include_anomaly_class {
        let candidates = pool.indices_of_class(ClassLabel::NonDriving);
        if candidates.len() < max_k {
            return Err(EvalError::Invalid(format!(
                "pool has only {} non-driving epochs, needs {max_k} for anomaly support",
                candidates.len()
            )));
        }
        let picks = rand::seq::index::sample(&mut rng, candidates.len(), max_k);
        anomaly_support = picks.iter().map(|p| candidates[p]).collect();
        for &i in &anomaly_support {
            used[i] = true;
        }
    }

    let queries: Vec<usize> = (0..pool.len())
        .filter(|&i| !used[i] && pool.samples[i].class.is_some())
        .collect();
    if queries.is_empty() {
        return Err(EvalError::Invalid("support sampling left no query epochs".into()));
    }
    Ok(SupportPlan { per_subject, anomaly_support, queries, max_k })
}

// ── Trial evaluation ────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct TrialMetrics {
    pub confusion: Confusion,
    pub macro_f1: Option<f64>,
}

impl TrialMetrics {
    pub fn accuracy(&self, class: ClassLabel) -> Option<f64> {
        self.confusion.accuracy(class)
    }
}

/// Evaluate every query of the plan at one K. Prototype maps are computed
/// once per subject; queries run against their own subject's support, and
/// non-driving queries borrow a seeded driving subject. Queries are processed
/// one at a time (evaluation batch size 1).
pub fn evaluate_trial(
    pool: &DePool,
    plan: &SupportPlan,
    k: usize,
    params: &ModelParams,
    config: &ModelConfig,
    seed: u64,
) -> Result<TrialMetrics, EvalError> {
    if k == 0 || k > plan.max_k {
        return Err(EvalError::Invalid(format!("k = {k} outside 1..={}", plan.max_k)));
    }
    let settings = config.attention_settings();
    let use_anomaly_class = !plan.anomaly_support.is_empty();

    // Per-subject prototypes from the first K entries of each support list.
    let mut protos = BTreeMap::new();
    for (&subject, lists) in &plan.per_subject {
        let mut support = Vec::with_capacity(lists.len() + 1);
        for (class, list) in DRIVING_CLASSES.iter().zip(lists) {
            let shots = list[..k].iter().map(|&i| pool.samples[i].de.clone()).collect();
            support.push(SupportClass { label: *class, shots });
        }
        if use_anomaly_class {
            let shots = plan.anomaly_support[..k]
                .iter()
                .map(|&i| pool.samples[i].de.clone())
                .collect();
            support.push(SupportClass { label: ClassLabel::NonDriving, shots });
        }
        protos.insert(subject, prototype_maps(&support, params, &settings)?);
    }
    let subjects: Vec<u32> = protos.keys().copied().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut confusion = Confusion::default();
    for &qi in &plan.queries {
        let sample = &pool.samples[qi];
        let truth = sample.class.expect("queries are labeled by construction");
        let subject = if truth.is_driving() && protos.contains_key(&sample.subject_id) {
            sample.subject_id
        } else {
            subjects[rng.random_range(0..subjects.len())]
        };
        let mut g = crate::tensor::Graph::new();
        let pairs = build_pairs_with_prototypes(&mut g, &sample.de, &protos[&subject], params, &settings)?;
        let out = forward_from_pairs(&mut g, &pairs, params, config)?;
        confusion.record(truth, out.prediction);
    }
    let macro_f1 = confusion.macro_f1();
    Ok(TrialMetrics { confusion, macro_f1 })
}

// ── Repeated trials ─────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub k_shot: usize,
    pub trials: Vec<TrialMetrics>,
    pub mean_accuracy: [Option<f64>; 3],
    pub std_accuracy: [Option<f64>; 3],
    pub mean_macro_f1: Option<f64>,
    pub std_macro_f1: Option<f64>,
    /// Populated by regression-style evaluations only.
    pub pcc: Option<(f64, f64)>,
    pub rmse: Option<(f64, f64)>,
    pub config_echo: String,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn aggregate(values: Vec<Option<f64>>) -> (Option<f64>, Option<f64>) {
    let defined: Vec<f64> = values.into_iter().flatten().collect();
    if defined.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&defined);
        (Some(m), Some(s))
    }
}

/// Run `trials` independent support re-samplings and aggregate the metrics.
/// Per-trial seeds derive from the master seed by fixed offsets.
pub fn run_trials(
    pool: &DePool,
    params: &ModelParams,
    config: &ModelConfig,
    k: usize,
    trials: usize,
    master_seed: u64,
) -> Result<EvalReport, EvalError> {
    let include_anomaly = !config.use_determination_block && config.n_way == 3;
    let mut trial_metrics = Vec::with_capacity(trials);
    for t in 0..trials {
        let plan_seed = master_seed.wrapping_add(1000 * t as u64);
        let plan = sample_support(pool, SUPPORT_PER_CLASS, include_anomaly, plan_seed)?;
        let metrics = evaluate_trial(pool, &plan, k, params, config, plan_seed.wrapping_add(1))?;
        trial_metrics.push(metrics);
    }

    let mut mean_accuracy = [None; 3];
    let mut std_accuracy = [None; 3];
    for class in [ClassLabel::NonDrowsy, ClassLabel::Drowsy, ClassLabel::NonDriving] {
        let (m, s) = aggregate(trial_metrics.iter().map(|t| t.accuracy(class)).collect());
        mean_accuracy[class.index()] = m;
        std_accuracy[class.index()] = s;
    }
    let (mean_macro_f1, std_macro_f1) =
        aggregate(trial_metrics.iter().map(|t| t.macro_f1).collect());

    Ok(EvalReport {
        k_shot: k,
        trials: trial_metrics,
        mean_accuracy,
        std_accuracy,
        mean_macro_f1,
        std_macro_f1,
        pcc: None,
        rmse: None,
        config_echo: format!(
            "k_shot={k} trials={trials} metric={} determination={} similarity={}",
            config.metric.name(),
            config.use_determination_block,
            config.use_similarity_block
        ),
    })
}

// ── Ablations ───────────────────────────────────────────────────────────────

/// One emitted comparison table: a K-shot row per entry.
#[derive(Debug, Clone)]
pub struct AblationTable {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<(usize, Vec<Option<f64>>)>,
}

pub struct AblationTables {
    pub distance_non_drowsy: AblationTable,
    pub distance_drowsy: AblationTable,
    pub determination: AblationTable,
    pub similarity: AblationTable,
}

impl AblationTables {
    pub fn all(&self) -> [&AblationTable; 4] {
        [&self.distance_non_drowsy, &self.distance_drowsy, &self.determination, &self.similarity]
    }
}

/// Full ablation driver: trains the base model, a no-determination variant,
/// and a no-similarity variant, then sweeps distance metrics and shot counts.
/// Distance metrics are an evaluation-time choice and re-use the base model.
pub fn ablation_suite(
    train_pool: &DePool,
    eval_pool: &DePool,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    shots: &[usize],
    trials: usize,
    master_seed: u64,
) -> Result<AblationTables, EvalError> {
    let base = train_episodic(train_pool, model_config, train_config, None)?;

    let no_det_config = ModelConfig {
        use_determination_block: false,
        n_way: 3,
        ..model_config.clone()
    };
    let no_det = train_episodic(train_pool, &no_det_config, train_config, None)?;

    let no_sim_config = ModelConfig { use_similarity_block: false, ..model_config.clone() };
    let no_sim = train_episodic(train_pool, &no_sim_config, train_config, None)?;

    let acc = |report: &EvalReport, class: ClassLabel| report.mean_accuracy[class.index()];

    let mut distance_non_drowsy = Vec::new();
    let mut distance_drowsy = Vec::new();
    for &k in shots {
        let mut nd_row = Vec::new();
        let mut d_row = Vec::new();
        for metric in DistanceMetric::ALL {
            let cfg = ModelConfig { metric, ..model_config.clone() };
            let report = run_trials(eval_pool, &base.params, &cfg, k, trials, master_seed)?;
            nd_row.push(acc(&report, ClassLabel::NonDrowsy));
            d_row.push(acc(&report, ClassLabel::Drowsy));
        }
        distance_non_drowsy.push((k, nd_row));
        distance_drowsy.push((k, d_row));
    }

    let mut determination = Vec::new();
    for &k in shots {
        let with = run_trials(eval_pool, &base.params, model_config, k, trials, master_seed)?;
        let without = run_trials(eval_pool, &no_det.params, &no_det_config, k, trials, master_seed)?;
        determination.push((
            k,
            vec![acc(&with, ClassLabel::NonDriving), acc(&without, ClassLabel::NonDriving)],
        ));
    }

    let mut similarity = Vec::new();
    for &k in shots {
        let with = run_trials(eval_pool, &base.params, model_config, k, trials, master_seed)?;
        let without = run_trials(eval_pool, &no_sim.params, &no_sim_config, k, trials, master_seed)?;
        similarity.push((
            k,
            vec![
                acc(&with, ClassLabel::NonDrowsy),
                acc(&with, ClassLabel::Drowsy),
                acc(&without, ClassLabel::NonDrowsy),
                acc(&without, ClassLabel::Drowsy),
            ],
        ));
    }

    let metric_columns: Vec<String> =
        DistanceMetric::ALL.iter().map(|m| m.name().to_string()).collect();
    Ok(AblationTables {
        distance_non_drowsy: AblationTable {
            title: "mean non-drowsy accuracy by distance metric".into(),
            columns: metric_columns.clone(),
            rows: distance_non_drowsy,
        },
        distance_drowsy: AblationTable {
            title: "mean drowsy accuracy by distance metric".into(),
            columns: metric_columns,
            rows: distance_drowsy,
        },
        determination: AblationTable {
            title: "mean non-driving accuracy with/without determination block".into(),
            columns: vec!["with".into(), "without".into()],
            rows: determination,
        },
        similarity: AblationTable {
            title: "mean driving-class accuracy with/without similarity block".into(),
            columns: vec![
                "with_non_drowsy".into(),
                "with_drowsy".into(),
                "without_non_drowsy".into(),
                "without_drowsy".into(),
            ],
            rows: similarity,
        },
    })
}
