//! The full few-shot network: pairing, feature extraction, similarity
//! highlighting, driving-signal determination, and prototypical drowsiness
//! classification, with ablation toggles.

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attention::{
    cross_attention_module, feature_extraction_block, global_average_pool, AttentionParams,
    AttentionSettings, FeatureExtractor, DEFAULT_FF_DIM, DEFAULT_PE_BASE, FEATURE_DIM,
};
use crate::signal::{de_features, ClassLabel, DeFeature, EegEpoch, SignalError};
use crate::tensor::{Graph, Param, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("invalid episode: {0}")]
    Episode(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("driving determination block is disabled")]
    DeterminationDisabled,
}

/// Index conventions for the determination head's 2-vector.
pub const DET_INDEX_NON_DRIVING: usize = 0;
pub const DET_INDEX_DRIVING: usize = 1;

// ── Configuration ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMetric {
    Euclidean,
    StdEuclidean,
    Cosine,
    Correlation,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 4] = [
        DistanceMetric::Euclidean,
        DistanceMetric::StdEuclidean,
        DistanceMetric::Cosine,
        DistanceMetric::Correlation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::StdEuclidean => "std_euclidean",
            DistanceMetric::Cosine => "cosine",
            DistanceMetric::Correlation => "correlation",
        }
    }
}

impl std::str::FromStr for DistanceMetric {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        match s {
            "euclidean" => Ok(DistanceMetric::Euclidean),
            "std_euclidean" => Ok(DistanceMetric::StdEuclidean),
            "cosine" => Ok(DistanceMetric::Cosine),
            "correlation" => Ok(DistanceMetric::Correlation),
            other => Err(ModelError::Config(format!("unknown distance metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub channels: usize,
    pub n_way: usize,
    pub k_shot: usize,
    pub metric: DistanceMetric,
    pub use_similarity_block: bool,
    pub use_determination_block: bool,
    pub pe_base: f64,
    pub scaled_attention: bool,
    pub pe_every_module: bool,
    pub d_ff: usize,
    /// Alternative determination input for N > 1: majority vote over
    /// per-pairing decisions instead of averaging pooled vectors.
    pub det_per_pairing_vote: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 17,
            n_way: 2,
            k_shot: 5,
            metric: DistanceMetric::Euclidean,
            use_similarity_block: true,
            use_determination_block: true,
            pe_base: DEFAULT_PE_BASE,
            scaled_attention: false,
            pe_every_module: false,
            d_ff: DEFAULT_FF_DIM,
            det_per_pairing_vote: false,
            seed: 7,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_way < 2 {
            return Err(ModelError::Config(format!("n_way must be at least 2, got {}", self.n_way)));
        }
        if self.k_shot < 1 {
            return Err(ModelError::Config(format!("k_shot must be at least 1, got {}", self.k_shot)));
        }
        if self.d_ff == 0 {
            return Err(ModelError::Config("d_ff must be positive".into()));
        }
        Ok(())
    }

    pub fn attention_settings(&self) -> AttentionSettings {
        AttentionSettings {
            pe_base: self.pe_base,
            scaled_attention: self.scaled_attention,
            pe_every_module: self.pe_every_module,
            d_ff: self.d_ff,
        }
    }
}

// ── Parameters ──────────────────────────────────────────────────────────────

/// All named trainable tensors of the network.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub feature: FeatureExtractor,
    /// Q = prototype, K-V = query; enhances the query map.
    pub cross_query_enhance: AttentionParams,
    /// Q = query, K-V = prototype; enhances the prototype map.
    pub cross_support_enhance: AttentionParams,
    pub det_w: Param,
    pub det_b: Param,
}

impl ModelParams {
    pub fn init(rng: &mut ChaCha8Rng, config: &ModelConfig) -> Self {
        let feature = FeatureExtractor::init(rng, config.channels, config.d_ff);
        let cross_query_enhance = AttentionParams::init(rng, config.d_ff);
        let cross_support_enhance = AttentionParams::init(rng, config.d_ff);
        let det_bound = 1.0 / (FEATURE_DIM as f64).sqrt();
        let det_w = {
            use rand::Rng;
            let data = (0..FEATURE_DIM * 2).map(|_| rng.random_range(-det_bound..det_bound)).collect();
            Param::from_values(FEATURE_DIM, 2, data).expect("fixed dims")
        };
        let det_b = Param::new(Tensor::zeros(1, 2));
        Self { feature, cross_query_enhance, cross_support_enhance, det_w, det_b }
    }

    /// Canonical (name, tensor) listing used by checkpoints and the
    /// optimizer. Names are unique and the order is stable.
    pub fn named_tensors(&self) -> Vec<(String, Param)> {
        let mut out = Vec::new();
        self.feature.collect_named("feature", &mut out);
        self.cross_query_enhance.collect_named("cross_q", &mut out);
        self.cross_support_enhance.collect_named("cross_s", &mut out);
        out.push(("det.w".into(), self.det_w.clone()));
        out.push(("det.b".into(), self.det_b.clone()));
        out
    }

    pub fn zero_grads(&self) {
        for (_, p) in self.named_tensors() {
            p.zero_grad();
        }
    }

    /// Value copy with no shared storage; lets several training runs start
    /// from the same initialization (for example a pretrained feature block).
    pub fn detached_copy(&self) -> Self {
        Self {
            feature: self.feature.detached_copy(),
            cross_query_enhance: self.cross_query_enhance.detached_copy(),
            cross_support_enhance: self.cross_support_enhance.detached_copy(),
            det_w: self.det_w.detached_copy(),
            det_b: self.det_b.detached_copy(),
        }
    }
}

// ── Episodes ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct SupportClass<S> {
    pub label: ClassLabel,
    pub shots: Vec<S>,
}

/// One query paired with an N-way K-shot support set of raw epochs.
#[derive(Debug, Clone)]
pub struct Episode {
    pub query: EegEpoch,
    pub support: Vec<SupportClass<EegEpoch>>,
    pub query_truth: ClassLabel,
    pub driving_truth: bool,
}

impl Episode {
    /// Standard episode: support holds driving classes only.
    pub fn new(
        query: EegEpoch,
        support: Vec<SupportClass<EegEpoch>>,
        query_truth: ClassLabel,
    ) -> Result<Self, ModelError> {
        Self::build(query, support, query_truth, false)
    }

    /// Ablation episode: a non-driving support class is permitted (used when
    /// the determination block is disabled and anomalies become a third
    /// prototype).
    pub fn new_with_anomaly_class(
        query: EegEpoch,
        support: Vec<SupportClass<EegEpoch>>,
        query_truth: ClassLabel,
    ) -> Result<Self, ModelError> {
        Self::build(query, support, query_truth, true)
    }

    fn build(
        query: EegEpoch,
        support: Vec<SupportClass<EegEpoch>>,
        query_truth: ClassLabel,
        allow_anomaly_support: bool,
    ) -> Result<Self, ModelError> {
        if support.len() < 2 {
            return Err(ModelError::Episode(format!(
                "support must hold at least 2 classes, got {}",
                support.len()
            )));
        }
        let k = support[0].shots.len();
        for class in &support {
            if class.shots.is_empty() || class.shots.len() != k {
                return Err(ModelError::Episode(
                    "every support class needs the same positive shot count".into(),
                ));
            }
            if !allow_anomaly_support && !class.label.is_driving() {
                return Err(ModelError::Episode(
                    "non-driving epochs cannot appear in a standard support set".into(),
                ));
            }
            for shot in &class.shots {
                if shot.class_label != Some(class.label) {
                    return Err(ModelError::Episode(format!(
                        "support shot labeled {:?} filed under class {:?}",
                        shot.class_label, class.label
                    )));
                }
            }
        }
        let driving_truth = query_truth.is_driving();
        Ok(Self { query, support, query_truth, driving_truth })
    }

    pub fn n_way(&self) -> usize {
        self.support.len()
    }

    pub fn k_shot(&self) -> usize {
        self.support[0].shots.len()
    }

    /// Extract DE features for every epoch in the episode.
    pub fn to_de(&self) -> Result<DeEpisode, ModelError> {
        let support = self
            .support
            .iter()
            .map(|class| {
                let shots = class
                    .shots
                    .iter()
                    .map(de_features)
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SupportClass { label: class.label, shots })
            })
            .collect::<Result<Vec<_>, SignalError>>()?;
        Ok(DeEpisode {
            query: de_features(&self.query)?,
            support,
            query_truth: self.query_truth,
            driving_truth: self.driving_truth,
        })
    }
}

/// Episode whose epochs are already reduced to DE features; the training and
/// evaluation hot paths cache these.
#[derive(Debug, Clone)]
pub struct DeEpisode {
    pub query: DeFeature,
    pub support: Vec<SupportClass<DeFeature>>,
    pub query_truth: ClassLabel,
    pub driving_truth: bool,
}

impl DeEpisode {
    pub fn n_way(&self) -> usize {
        self.support.len()
    }
}

// ── Forward pipeline ────────────────────────────────────────────────────────

/// Per-class paired feature maps: N prototypes plus the shared query map.
pub struct PairedMaps {
    pub class_labels: Vec<ClassLabel>,
    pub prototypes: Vec<Var>,
    pub query_map: Var,
}

/// Pooled (1×32) vectors after the similarity stage, one pair per class.
pub struct PairedHighlighted {
    pub class_labels: Vec<ClassLabel>,
    pub support_pooled: Vec<Var>,
    pub query_pooled: Vec<Var>,
}

/// Runs feature extraction on every support shot and the query. Prototypes
/// are the element-wise means of each class's K maps; the query map is
/// computed once and shared across classes.
pub fn build_pairs(
    g: &mut Graph,
    episode: &DeEpisode,
    params: &ModelParams,
    settings: &AttentionSettings,
) -> Result<PairedMaps, ModelError> {
    let query_map = feature_extraction_block(g, &episode.query, &params.feature, settings)?;
    let mut prototypes = Vec::with_capacity(episode.support.len());
    let mut class_labels = Vec::with_capacity(episode.support.len());
    for class in &episode.support {
        let maps = class
            .shots
            .iter()
            .map(|shot| feature_extraction_block(g, shot, &params.feature, settings))
            .collect::<Result<Vec<_>, _>>()?;
        prototypes.push(g.mean_of(&maps)?);
        class_labels.push(class.label);
    }
    Ok(PairedMaps { class_labels, prototypes, query_map })
}

/// Variant of [`build_pairs`] that re-uses precomputed prototype maps; the
/// evaluation loop computes each support prototype once per trial instead of
/// once per query.
pub fn build_pairs_with_prototypes(
    g: &mut Graph,
    query: &DeFeature,
    prototypes: &[(ClassLabel, Tensor)],
    params: &ModelParams,
    settings: &AttentionSettings,
) -> Result<PairedMaps, ModelError> {
    let query_map = feature_extraction_block(g, query, &params.feature, settings)?;
    let mut maps = Vec::with_capacity(prototypes.len());
    let mut class_labels = Vec::with_capacity(prototypes.len());
    for (label, proto) in prototypes {
        maps.push(g.leaf(proto));
        class_labels.push(*label);
    }
    Ok(PairedMaps { class_labels, prototypes: maps, query_map })
}

/// Cross-attention both ways per class, then global average pooling. With the
/// similarity block disabled the raw maps are pooled directly.
pub fn similarity_highlight(
    g: &mut Graph,
    pairs: &PairedMaps,
    params: &ModelParams,
    settings: &AttentionSettings,
    use_similarity_block: bool,
) -> Result<PairedHighlighted, ModelError> {
    let mut support_pooled = Vec::with_capacity(pairs.prototypes.len());
    let mut query_pooled = Vec::with_capacity(pairs.prototypes.len());
    if use_similarity_block {
        for &proto in &pairs.prototypes {
            let enhanced_query =
                cross_attention_module(g, proto, pairs.query_map, &params.cross_query_enhance, settings)?;
            let enhanced_support =
                cross_attention_module(g, pairs.query_map, proto, &params.cross_support_enhance, settings)?;
            query_pooled.push(global_average_pool(g, enhanced_query)?);
            support_pooled.push(global_average_pool(g, enhanced_support)?);
        }
    } else {
        let pooled_query = global_average_pool(g, pairs.query_map)?;
        for &proto in &pairs.prototypes {
            query_pooled.push(pooled_query);
            support_pooled.push(global_average_pool(g, proto)?);
        }
    }
    Ok(PairedHighlighted {
        class_labels: pairs.class_labels.clone(),
        support_pooled,
        query_pooled,
    })
}

/// Binary driving / non-driving head: relu(x)·W + b over a pooled 1×32
/// query vector. Index 0 = non-driving, index 1 = driving; ties resolve to
/// non-driving.
pub fn determine_driving(
    g: &mut Graph,
    pooled_query: Var,
    params: &ModelParams,
) -> Result<(Var, bool), ModelError> {
    let rect = g.relu(pooled_query);
    let w = g.param(&params.det_w);
    let b = g.param(&params.det_b);
    let prod = g.matmul(rect, w)?;
    let logits = g.add_bias(prod, b)?;
    let vals = g.value(logits);
    let is_driving = vals[DET_INDEX_DRIVING] > vals[DET_INDEX_NON_DRIVING];
    Ok((logits, is_driving))
}

/// Distance between two pooled 1×32 vectors on the graph. `support_stats`
/// supplies the per-dimension variance row required by the standardized
/// Euclidean metric.
pub fn pairwise_distance(
    g: &mut Graph,
    u: Var,
    v: Var,
    metric: DistanceMetric,
    support_stats: Option<Var>,
) -> Result<Var, ModelError> {
    let (ru, cu) = g.dims(u);
    let (rv, cv) = g.dims(v);
    if (ru, cu) != (rv, cv) || ru != 1 {
        return Err(TensorError::ShapeMismatch {
            op: "pairwise_distance",
            left: vec![ru, cu],
            right: vec![rv, cv],
        }
        .into());
    }
    match metric {
        DistanceMetric::Euclidean => {
            let diff = g.sub(u, v)?;
            let sq = g.mul(diff, diff)?;
            let sum = g.sum_all(sq);
            Ok(g.sqrt(sum))
        }
        DistanceMetric::StdEuclidean => {
            let stats = support_stats.ok_or_else(|| {
                ModelError::Config("std_euclidean requires per-dimension support variances".into())
            })?;
            let clamped = g.clamp_min(stats, 1e-8);
            let diff = g.sub(u, v)?;
            let sq = g.mul(diff, diff)?;
            let scaled = g.div(sq, clamped)?;
            let sum = g.sum_all(scaled);
            Ok(g.sqrt(sum))
        }
        DistanceMetric::Cosine => cosine_distance(g, u, v),
        DistanceMetric::Correlation => {
            let uc = g.center(u);
            let vc = g.center(v);
            cosine_distance(g, uc, vc)
        }
    }
}

fn cosine_distance(g: &mut Graph, u: Var, v: Var) -> Result<Var, ModelError> {
    let norm = |g: &mut Graph, x: Var| -> Result<Var, TensorError> {
        let sq = g.mul(x, x)?;
        let sum = g.sum_all(sq);
        Ok(g.sqrt(sum))
    };
    let nu = norm(g, u)?;
    let nv = norm(g, v)?;
    // Zero / constant vectors have no direction: maximal dissimilarity 1.
    if g.scalar_value(nu) < 1e-12 || g.scalar_value(nv) < 1e-12 {
        return Ok(g.leaf_scalar(1.0));
    }
    let prod = g.mul(u, v)?;
    let dot = g.sum_all(prod);
    let denom = g.mul(nu, nv)?;
    let cos = g.div(dot, denom)?;
    let neg = g.scale(cos, -1.0);
    Ok(g.add_const(neg, 1.0))
}

/// Per-dimension population variance of the pooled support vectors, as a
/// 1×32 row on the graph.
pub fn support_variance_row(g: &mut Graph, support_pooled: &[Var]) -> Result<Var, ModelError> {
    let stacked = g.concat_rows(support_pooled)?;
    let mean = g.mean_rows(stacked);
    let sq = g.mul(stacked, stacked)?;
    let mean_sq = g.mean_rows(sq);
    let mean2 = g.mul(mean, mean)?;
    Ok(g.sub(mean_sq, mean2)?)
}

/// Nearest-prototype classification; ties break to the lowest class index.
pub fn classify_drowsiness(
    g: &mut Graph,
    highlighted: &PairedHighlighted,
    metric: DistanceMetric,
) -> Result<(Vec<Var>, usize), ModelError> {
    if highlighted.class_labels.len() < 2 {
        return Err(ModelError::Episode("classification needs at least 2 classes".into()));
    }
    let stats = if metric == DistanceMetric::StdEuclidean {
        Some(support_variance_row(g, &highlighted.support_pooled)?)
    } else {
        None
    };
    let mut distances = Vec::with_capacity(highlighted.class_labels.len());
    for (s, q) in highlighted.support_pooled.iter().zip(&highlighted.query_pooled) {
        distances.push(pairwise_distance(g, *s, *q, metric, stats)?);
    }
    let mut best = 0;
    for (i, &d) in distances.iter().enumerate() {
        if g.scalar_value(d) < g.scalar_value(distances[best]) {
            best = i;
        }
    }
    Ok((distances, best))
}

/// Everything the pipeline produces for one episode.
pub struct ForwardOutput {
    pub driving_logits: Option<Var>,
    pub is_driving: Option<bool>,
    pub class_labels: Vec<ClassLabel>,
    pub distances: Vec<Var>,
    pub prediction: ClassLabel,
}

/// Full pipeline over precomputed DE features.
pub fn forward(
    g: &mut Graph,
    episode: &DeEpisode,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<ForwardOutput, ModelError> {
    let settings = config.attention_settings();
    let pairs = build_pairs(g, episode, params, &settings)?;
    forward_from_pairs(g, &pairs, params, config)
}

/// Pipeline tail shared by [`forward`] and the prototype-cached evaluation
/// path.
pub fn forward_from_pairs(
    g: &mut Graph,
    pairs: &PairedMaps,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<ForwardOutput, ModelError> {
    let settings = config.attention_settings();
    let highlighted =
        similarity_highlight(g, pairs, params, &settings, config.use_similarity_block)?;

    let (driving_logits, is_driving) = if config.use_determination_block {
        if config.det_per_pairing_vote {
            let mut votes = 0usize;
            let mut logit_rows = Vec::with_capacity(highlighted.query_pooled.len());
            for &q in &highlighted.query_pooled {
                let (logits, driving) = determine_driving(g, q, params)?;
                if driving {
                    votes += 1;
                }
                logit_rows.push(logits);
            }
            let mean_logits = g.mean_of(&logit_rows)?;
            (Some(mean_logits), Some(votes * 2 > highlighted.query_pooled.len()))
        } else {
            let det_input = g.mean_of(&highlighted.query_pooled)?;
            let (logits, driving) = determine_driving(g, det_input, params)?;
            (Some(logits), Some(driving))
        }
    } else {
        (None, None)
    };

    let (distances, best) = classify_drowsiness(g, &highlighted, config.metric)?;
    let prediction = match is_driving {
        Some(false) => ClassLabel::NonDriving,
        _ => highlighted.class_labels[best],
    };

    Ok(ForwardOutput {
        driving_logits,
        is_driving,
        class_labels: highlighted.class_labels,
        distances,
        prediction,
    })
}

/// Detached 5×32 prototype maps for a fixed support set; lets evaluation
/// amortize support-side feature extraction across queries.
pub fn prototype_maps(
    episode_support: &[SupportClass<DeFeature>],
    params: &ModelParams,
    settings: &AttentionSettings,
) -> Result<Vec<(ClassLabel, Tensor)>, ModelError> {
    let mut out = Vec::with_capacity(episode_support.len());
    for class in episode_support {
        let mut g = Graph::new();
        let maps = class
            .shots
            .iter()
            .map(|shot| feature_extraction_block(&mut g, shot, &params.feature, settings))
            .collect::<Result<Vec<_>, _>>()?;
        let proto = g.mean_of(&maps)?;
        let tensor = Tensor::matrix(
            crate::signal::BAND_COUNT,
            FEATURE_DIM,
            g.value(proto).to_vec(),
        )?;
        out.push((class.label, tensor));
    }
    Ok(out)
}
