//! Losses, Adam, the warm-up schedule, feature-block pretraining, the
//! episodic training loop, and the per-subject vigilance regressor.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{feature_extraction_block, global_average_pool, FeatureExtractor, FEATURE_DIM};
use crate::eval::kfold_sessions;
use crate::model::{DeEpisode, ModelConfig, ModelError, ModelParams, SupportClass};
use crate::signal::{ClassLabel, DePool, DeSample};
use crate::tensor::{Graph, Param, Tensor, TensorError, Var};

pub const ADAM_EPSILON: f64 = 1e-8;
pub const RMSE_LOSS_EPSILON: f64 = 1e-12;

// ── Configuration ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size_train: usize,
    pub batch_size_eval: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub warmup_epochs: usize,
    pub epochs_total: usize,
    pub loss_weight_det: f64,
    pub loss_weight_cls: f64,
    pub freeze_feature: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size_train: 16,
            batch_size_eval: 1,
            beta1: 0.5,
            beta2: 0.99,
            lr_start: 1e-5,
            lr_end: 1e-4,
            warmup_epochs: 10,
            epochs_total: 50,
            loss_weight_det: 1.0,
            loss_weight_cls: 1.0,
            freeze_feature: false,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.lr_start > self.lr_end {
            return Err(ModelError::Config(format!(
                "lr_start {} must not exceed lr_end {}",
                self.lr_start, self.lr_end
            )));
        }
        if self.warmup_epochs < 1 {
            return Err(ModelError::Config("warmup_epochs must be at least 1".into()));
        }
        if self.batch_size_train < 1 {
            return Err(ModelError::Config("batch_size_train must be at least 1".into()));
        }
        Ok(())
    }
}

/// Linear warm-up from `lr_start` at epoch 0 to `lr_end` at epoch
/// `warmup_epochs − 1`, constant afterwards.
pub fn lr_schedule(config: &TrainConfig, epoch: f64) -> f64 {
    let span = (config.warmup_epochs.saturating_sub(1)).max(1) as f64;
    let frac = (epoch / span).clamp(0.0, 1.0);
    config.lr_start + (config.lr_end - config.lr_start) * frac
}

// ── Losses ──────────────────────────────────────────────────────────────────

/// −log softmax(logits)[target], numerically stabilized.
pub fn cross_entropy(g: &mut Graph, logits: Var, target: usize) -> Result<Var, TensorError> {
    g.cross_entropy(logits, target)
}

/// sqrt(mean((pred − truth)²) + ε); the ε keeps the gradient finite at a
/// zero residual.
pub fn rmse_loss(g: &mut Graph, pred: Var, truth: &[f64]) -> Result<Var, TensorError> {
    let t = g.leaf_row(truth);
    let diff = g.sub(pred, t)?;
    let sq = g.mul(diff, diff)?;
    let mean = g.mean_all(sq);
    let shifted = g.add_const(mean, RMSE_LOSS_EPSILON);
    Ok(g.sqrt(shifted))
}

// ── Optimizer ───────────────────────────────────────────────────────────────

/// Adam with bias correction. Moment buffers parallel the canonical named
/// tensor ordering; parameters without gradients decay their momentum only.
pub struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step_count: u64,
}

impl Adam {
    pub fn new(params: &[(String, Param)], beta1: f64, beta2: f64) -> Self {
        Self {
            beta1,
            beta2,
            epsilon: ADAM_EPSILON,
            m: params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect(),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn step(&mut self, params: &[(String, Param)], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "optimizer state must mirror the parameter list");
        self.step_count += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for (i, (_, p)) in params.iter().enumerate() {
            let grad = p.grad();
            let mut data = p.value();
            for j in 0..data.len() {
                let gj = grad.as_ref().map(|g| g[j]).unwrap_or(0.0);
                self.m[i][j] = self.beta1 * self.m[i][j] + (1.0 - self.beta1) * gj;
                self.v[i][j] = self.beta2 * self.v[i][j] + (1.0 - self.beta2) * gj * gj;
                let m_hat = self.m[i][j] / bc1;
                let v_hat = self.v[i][j] / bc2;
                data[j] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            p.set_value(data);
        }
    }
}

// ── Episode loss ────────────────────────────────────────────────────────────

pub struct EpisodeLossParts {
    pub total: Var,
    pub det: Option<f64>,
    pub cls: Option<f64>,
}

/// Joint loss: determination cross-entropy plus prototypical cross-entropy
/// over softmax(−dᵢ), 1:1 by default. The classification term is included
/// exactly when the query's class has a prototype (always for driving
/// queries; for non-driving queries only in the anomaly-in-support ablation).
pub fn episode_loss(
    g: &mut Graph,
    episode: &DeEpisode,
    params: &ModelParams,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<EpisodeLossParts, ModelError> {
    let out = crate::model::forward(g, episode, params, model_config)?;

    let mut terms: Vec<Var> = Vec::with_capacity(2);
    let mut det_value = None;
    let mut cls_value = None;

    if let Some(logits) = out.driving_logits {
        let target = if episode.driving_truth {
            crate::model::DET_INDEX_DRIVING
        } else {
            crate::model::DET_INDEX_NON_DRIVING
        };
        let ce = g.cross_entropy(logits, target)?;
        det_value = Some(g.scalar_value(ce));
        terms.push(g.scale(ce, train_config.loss_weight_det));
    }

    if let Some(target_idx) = out.class_labels.iter().position(|&c| c == episode.query_truth) {
        let neg: Vec<Var> = out.distances.iter().map(|&d| g.scale(d, -1.0)).collect();
        let logits = g.concat_cols(&neg)?;
        let ce = g.cross_entropy(logits, target_idx)?;
        cls_value = Some(g.scalar_value(ce));
        terms.push(g.scale(ce, train_config.loss_weight_cls));
    } else if episode.driving_truth {
        return Err(ModelError::Episode(format!(
            "driving query of class {:?} has no matching support class",
            episode.query_truth
        )));
    }

    if terms.is_empty() {
        return Err(ModelError::Episode(
            "episode contributes no loss term under this configuration".into(),
        ));
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    Ok(EpisodeLossParts { total, det: det_value, cls: cls_value })
}

// ── Episode sampling ────────────────────────────────────────────────────────

/// Draws N-way K-shot episodes from a pool. Driving queries take their
/// support from their own subject; non-driving queries borrow a uniformly
/// drawn support-eligible subject. The anomaly class joins the support set
/// only in the no-determination ablation.
pub struct EpisodeSampler {
    pub support_classes: Vec<ClassLabel>,
    pub eligible_queries: Vec<usize>,
    support_subjects: Vec<u32>,
    k_shot: usize,
    anomaly_in_support: bool,
}

impl EpisodeSampler {
    pub fn new(pool: &DePool, model_config: &ModelConfig) -> Result<Self, ModelError> {
        let k = model_config.k_shot;
        let anomaly_in_support = !model_config.use_determination_block && model_config.n_way == 3;
        let include_nd_queries = model_config.use_determination_block || anomaly_in_support;
        let driving_classes = [ClassLabel::NonDrowsy, ClassLabel::Drowsy];

        let mut support_subjects = Vec::new();
        for subject in pool.driving_subjects() {
            let ok = driving_classes
                .iter()
                .all(|&c| pool.indices_of_subject_class(subject, c).len() >= k);
            if ok {
                support_subjects.push(subject);
            }
        }
        if support_subjects.is_empty() {
            return Err(ModelError::Config(format!(
                "no subject has {k} epochs of both driving classes"
            )));
        }
        let nd_count = pool.indices_of_class(ClassLabel::NonDriving).len();
        if include_nd_queries && nd_count == 0 {
            return Err(ModelError::Config(
                "pool has no non-driving epochs for the determination task".into(),
            ));
        }
        if anomaly_in_support && nd_count < k + 1 {
            return Err(ModelError::Config(format!(
                "anomaly-in-support ablation needs at least {} non-driving epochs",
                k + 1
            )));
        }

        let mut eligible = Vec::new();
        for (i, s) in pool.samples.iter().enumerate() {
            match s.class {
                Some(ClassLabel::NonDriving) if include_nd_queries => eligible.push(i),
                Some(c) if c.is_driving() => {
                    if !support_subjects.contains(&s.subject_id) {
                        continue;
                    }
                    let own = pool.indices_of_subject_class(s.subject_id, c).len();
                    if own > k {
                        eligible.push(i);
                    }
                }
                _ => {}
            }
        }
        if eligible.is_empty() {
            return Err(ModelError::Config("pool yields no eligible query epochs".into()));
        }

        let mut support_classes = vec![ClassLabel::NonDrowsy, ClassLabel::Drowsy];
        if anomaly_in_support {
            support_classes.push(ClassLabel::NonDriving);
        }
        Ok(Self {
            support_classes,
            eligible_queries: eligible,
            support_subjects,
            k_shot: k,
            anomaly_in_support,
        })
    }

    /// Assemble the episode for one query index; support shots are sampled
    /// without replacement and never include the query itself.
    pub fn build(
        &self,
        pool: &DePool,
        query_idx: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<DeEpisode, ModelError> {
        let query = &pool.samples[query_idx];
        let query_truth = query
            .class
            .ok_or_else(|| ModelError::Episode("query epoch is unlabeled".into()))?;

        let support_subject = if query_truth.is_driving() {
            query.subject_id
        } else {
            self.support_subjects[rng.random_range(0..self.support_subjects.len())]
        };

        let mut support = Vec::with_capacity(self.support_classes.len());
        for &class in &self.support_classes {
            let candidates: Vec<usize> = if class.is_driving() {
                pool.indices_of_subject_class(support_subject, class)
                    .into_iter()
                    .filter(|&i| i != query_idx)
                    .collect()
            } else {
                pool.indices_of_class(ClassLabel::NonDriving)
                    .into_iter()
                    .filter(|&i| i != query_idx)
                    .collect()
            };
            if candidates.len() < self.k_shot {
                return Err(ModelError::Episode(format!(
                    "subject {support_subject} lacks {} spare epochs of class {}",
                    self.k_shot,
                    class.name()
                )));
            }
            let picks = rand::seq::index::sample(rng, candidates.len(), self.k_shot);
            let shots = picks.iter().map(|p| pool.samples[candidates[p]].de.clone()).collect();
            support.push(SupportClass { label: class, shots });
        }

        Ok(DeEpisode {
            query: query.de.clone(),
            support,
            query_truth,
            driving_truth: query_truth.is_driving(),
        })
    }

    pub fn uses_anomaly_support(&self) -> bool {
        self.anomaly_in_support
    }
}

// ── Episodic training ───────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_det: f64,
    pub loss_cls: f64,
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub records: Vec<LossRecord>,
    pub steps: u64,
}

/// Episodic training: per epoch, every eligible query epoch appears exactly
/// once in shuffled order, grouped into batches; per batch, episode losses
/// are averaged and one Adam step is taken at the scheduled learning rate.
pub fn train_episodic(
    pool: &DePool,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    init: Option<ModelParams>,
) -> Result<TrainOutcome, ModelError> {
    model_config.validate()?;
    train_config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let params = match init {
        Some(p) => p,
        None => ModelParams::init(&mut rng, model_config),
    };
    if train_config.freeze_feature {
        set_feature_frozen(&params.feature, true);
    }
    let sampler = EpisodeSampler::new(pool, model_config)?;
    let named = params.named_tensors();
    let mut adam = Adam::new(&named, train_config.beta1, train_config.beta2);
    let mut records = Vec::new();

    let mut step: u64 = 0;
    for epoch in 0..train_config.epochs_total {
        let lr = lr_schedule(train_config, epoch as f64);
        let mut order = sampler.eligible_queries.clone();
        order.shuffle(&mut rng);
        for batch in order.chunks(train_config.batch_size_train) {
            params.zero_grads();
            let inv = 1.0 / batch.len() as f64;
            let (mut sum_total, mut sum_det, mut sum_cls) = (0.0, 0.0, 0.0);
            for &qi in batch {
                let episode = sampler.build(pool, qi, &mut rng)?;
                let mut g = Graph::new();
                let parts = episode_loss(&mut g, &episode, &params, model_config, train_config)?;
                let scaled = g.scale(parts.total, inv);
                g.backward(scaled)?;
                sum_total += g.scalar_value(parts.total);
                sum_det += parts.det.unwrap_or(0.0);
                sum_cls += parts.cls.unwrap_or(0.0);
            }
            adam.step(&named, lr);
            step += 1;
            records.push(LossRecord {
                step,
                epoch,
                lr,
                loss_total: sum_total * inv,
                loss_det: sum_det * inv,
                loss_cls: sum_cls * inv,
            });
        }
    }
    if train_config.freeze_feature {
        set_feature_frozen(&params.feature, false);
    }
    Ok(TrainOutcome { params, records, steps: step })
}

fn set_feature_frozen(feature: &FeatureExtractor, frozen: bool) {
    let mut named = Vec::new();
    feature.collect_named("feature", &mut named);
    for (_, p) in named {
        p.set_requires_grad(!frozen);
    }
}

/// Prediction accuracy over freshly sampled episodes from a pool; used for
/// training-set accuracy checks.
pub fn episodic_accuracy(
    pool: &DePool,
    params: &ModelParams,
    model_config: &ModelConfig,
    episodes: usize,
    seed: u64,
) -> Result<f64, ModelError> {
    let sampler = EpisodeSampler::new(pool, model_config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut correct = 0usize;
    for e in 0..episodes {
        let qi = sampler.eligible_queries[e % sampler.eligible_queries.len()];
        let episode = sampler.build(pool, qi, &mut rng)?;
        let mut g = Graph::new();
        let out = crate::model::forward(&mut g, &episode, params, model_config)?;
        if out.prediction == episode.query_truth {
            correct += 1;
        }
    }
    Ok(correct as f64 / episodes as f64)
}

// ── Feature-block pretraining ───────────────────────────────────────────────

pub struct PretrainOutcome {
    pub feature: FeatureExtractor,
    pub head_w: Param,
    pub head_b: Param,
    pub records: Vec<LossRecord>,
}

/// Supervised 3-class pretraining of the feature extraction block through a
/// temporary linear head. The head is returned for inspection but the block
/// parameters are the product.
pub fn pretrain_feature_block(
    pool: &DePool,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<PretrainOutcome, ModelError> {
    if pool.is_empty() {
        return Err(ModelError::Config("pretraining pool is empty".into()));
    }
    let labeled: Vec<usize> =
        (0..pool.len()).filter(|&i| pool.samples[i].class.is_some()).collect();
    if labeled.is_empty() {
        return Err(ModelError::Config("pretraining pool has no labeled epochs".into()));
    }
    train_config.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let feature = FeatureExtractor::init(&mut rng, model_config.channels, model_config.d_ff);
    let bound = 1.0 / (FEATURE_DIM as f64).sqrt();
    let head_w = Param::from_values(
        FEATURE_DIM,
        3,
        (0..FEATURE_DIM * 3).map(|_| rng.random_range(-bound..bound)).collect(),
    )
    .expect("fixed dims");
    let head_b = Param::new(Tensor::zeros(1, 3));

    let mut named = Vec::new();
    feature.collect_named("feature", &mut named);
    named.push(("head.w".into(), head_w.clone()));
    named.push(("head.b".into(), head_b.clone()));
    let mut adam = Adam::new(&named, train_config.beta1, train_config.beta2);
    let settings = model_config.attention_settings();

    let mut records = Vec::new();
    let mut step = 0u64;
    let mut order = labeled;
    for epoch in 0..train_config.epochs_total {
        let lr = lr_schedule(train_config, epoch as f64);
        order.shuffle(&mut rng);
        for batch in order.chunks(train_config.batch_size_train) {
            for (_, p) in &named {
                p.zero_grad();
            }
            let mut g = Graph::new();
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let sample = &pool.samples[i];
                let map = feature_extraction_block(&mut g, &sample.de, &feature, &settings)?;
                let pooled = global_average_pool(&mut g, map)?;
                let w = g.param(&head_w);
                let b = g.param(&head_b);
                let prod = g.matmul(pooled, w)?;
                let logits = g.add_bias(prod, b)?;
                let target = sample.class.expect("filtered to labeled").index();
                losses.push(g.cross_entropy(logits, target)?);
            }
            let mean_loss = g.mean_of(&losses)?;
            g.backward(mean_loss)?;
            adam.step(&named, lr);
            step += 1;
            let value = g.scalar_value(mean_loss);
            records.push(LossRecord {
                step,
                epoch,
                lr,
                loss_total: value,
                loss_det: 0.0,
                loss_cls: value,
            });
        }
    }
    Ok(PretrainOutcome { feature, head_w, head_b, records })
}

/// Held-in accuracy of the pretraining head over a labeled pool.
pub fn pretrain_accuracy(
    outcome: &PretrainOutcome,
    pool: &DePool,
    model_config: &ModelConfig,
) -> Result<f64, ModelError> {
    let settings = model_config.attention_settings();
    let mut correct = 0usize;
    let mut counted = 0usize;
    for sample in &pool.samples {
        let Some(truth) = sample.class else { continue };
        let mut g = Graph::new();
        let map = feature_extraction_block(&mut g, &sample.de, &outcome.feature, &settings)?;
        let pooled = global_average_pool(&mut g, map)?;
        let w = g.param(&outcome.head_w);
        let b = g.param(&outcome.head_b);
        let prod = g.matmul(pooled, w)?;
        let logits = g.add_bias(prod, b)?;
        let vals = g.value(logits);
        let pred = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
            .map(|(i, _)| i)
            .expect("three logits");
        counted += 1;
        if pred == truth.index() {
            correct += 1;
        }
    }
    Ok(correct as f64 / counted.max(1) as f64)
}

// ── Vigilance regression ────────────────────────────────────────────────────

/// Feature block plus a scalar linear head.
#[derive(Debug, Clone)]
pub struct RegressorParams {
    pub feature: FeatureExtractor,
    pub head_w: Param,
    pub head_b: Param,
}

impl RegressorParams {
    pub fn init(rng: &mut ChaCha8Rng, channels: usize, d_ff: usize) -> Self {
        let feature = FeatureExtractor::init(rng, channels, d_ff);
        let bound = 1.0 / (FEATURE_DIM as f64).sqrt();
        let head_w = Param::from_values(
            FEATURE_DIM,
            1,
            (0..FEATURE_DIM).map(|_| rng.random_range(-bound..bound)).collect(),
        )
        .expect("fixed dims");
        let head_b = Param::new(Tensor::zeros(1, 1));
        Self { feature, head_w, head_b }
    }

    pub fn named_tensors(&self) -> Vec<(String, Param)> {
        let mut out = Vec::new();
        self.feature.collect_named("feature", &mut out);
        out.push(("head.w".into(), self.head_w.clone()));
        out.push(("head.b".into(), self.head_b.clone()));
        out
    }

    pub fn predict(&self, de: &crate::signal::DeFeature, settings: &crate::attention::AttentionSettings) -> Result<f64, ModelError> {
        let mut g = Graph::new();
        let map = feature_extraction_block(&mut g, de, &self.feature, settings)?;
        let pooled = global_average_pool(&mut g, map)?;
        let w = g.param(&self.head_w);
        let b = g.param(&self.head_b);
        let prod = g.matmul(pooled, w)?;
        let out = g.add_bias(prod, b)?;
        Ok(g.scalar_value(out))
    }
}

pub struct VigilanceFold {
    pub fold: usize,
    pub pcc: Option<f64>,
    pub rmse: f64,
    pub truths: Vec<f64>,
    pub predictions: Vec<f64>,
    pub params: RegressorParams,
}

/// Subject-specific k-fold vigilance regression: one model per fold, RMSE
/// loss, contiguous session folds.
pub fn train_vigilance_regressor(
    subject_samples: &[DeSample],
    k_folds: usize,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<Vec<VigilanceFold>, ModelError> {
    if subject_samples.iter().any(|s| s.vigilance.is_none()) {
        return Err(ModelError::Config("vigilance regression needs vigilance labels on every epoch".into()));
    }
    train_config.validate()?;
    let folds = kfold_sessions(subject_samples.len(), k_folds)
        .map_err(|e| ModelError::Config(e.to_string()))?;
    let settings = model_config.attention_settings();

    let mut out = Vec::with_capacity(folds.len());
    for (fold_idx, test_range) in folds.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed.wrapping_add(fold_idx as u64));
        let params = RegressorParams::init(&mut rng, model_config.channels, model_config.d_ff);
        let named = params.named_tensors();
        let mut adam = Adam::new(&named, train_config.beta1, train_config.beta2);

        let train_idx: Vec<usize> =
            (0..subject_samples.len()).filter(|i| !test_range.contains(i)).collect();
        let mut order = train_idx;
        for epoch in 0..train_config.epochs_total {
            let lr = lr_schedule(train_config, epoch as f64);
            order.shuffle(&mut rng);
            for batch in order.chunks(train_config.batch_size_train) {
                for (_, p) in &named {
                    p.zero_grad();
                }
                let mut g = Graph::new();
                let mut preds = Vec::with_capacity(batch.len());
                let mut truths = Vec::with_capacity(batch.len());
                for &i in batch {
                    let sample = &subject_samples[i];
                    let map = feature_extraction_block(&mut g, &sample.de, &params.feature, &settings)?;
                    let pooled = global_average_pool(&mut g, map)?;
                    let w = g.param(&params.head_w);
                    let b = g.param(&params.head_b);
                    let prod = g.matmul(pooled, w)?;
                    preds.push(g.add_bias(prod, b)?);
                    truths.push(sample.vigilance.expect("validated above"));
                }
                let pred_row = g.concat_cols(&preds)?;
                let loss = rmse_loss(&mut g, pred_row, &truths)?;
                g.backward(loss)?;
                adam.step(&named, lr);
            }
        }

        let mut truths = Vec::with_capacity(test_range.len());
        let mut predictions = Vec::with_capacity(test_range.len());
        for i in test_range.clone() {
            truths.push(subject_samples[i].vigilance.expect("validated above"));
            predictions.push(params.predict(&subject_samples[i].de, &settings)?);
        }
        let rmse = crate::eval::rmse(&truths, &predictions)
            .map_err(|e| ModelError::Config(e.to_string()))?;
        let pcc = crate::eval::pcc(&truths, &predictions).ok();
        out.push(VigilanceFold { fold: fold_idx, pcc, rmse, truths, predictions, params });
    }
    Ok(out)
}
