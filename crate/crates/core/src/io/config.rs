//! Flat key=value run configuration: one key per line, `#` comments, unknown
//! or duplicate keys rejected, `parse(emit(config)) == config`.

use std::path::Path;
use std::str::FromStr;

use crate::model::{DistanceMetric, ModelConfig};
use crate::signal::BAND_COUNT;
use crate::synth::{BenchmarkSpec, ClassProfiles, VigilanceSpec};
use crate::train::TrainConfig;

use super::{atomic_write, IoError};

/// Vigilance-subject ids start here; driving and non-driving pools use lower
/// ranges.
pub const VIGILANCE_SUBJECT_BASE: u32 = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // Model
    pub channels: usize,
    pub n_way: usize,
    pub k_shot: usize,
    pub distance_metric: DistanceMetric,
    pub use_similarity_block: bool,
    pub use_determination_block: bool,
    pub pe_base: f64,
    pub scaled_attention: bool,
    pub pe_every_module: bool,
    pub d_ff: usize,
    pub det_per_pairing_vote: bool,
    // Training
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
    pub pretrain_epochs: usize,
    // Evaluation
    pub eval_trials: usize,
    pub eval_shots: Vec<usize>,
    pub kfolds: usize,
    // Synthetic data
    pub synth_channels: usize,
    pub synth_sample_rate: f64,
    pub synth_epoch_seconds: f64,
    pub synth_amplitude_jitter: f64,
    pub synth_band_jitter: f64,
    pub synth_nd_gamma_spread: f64,
    pub synth_nd_gamma_choices: Vec<f64>,
    pub synth_drowsy_theta_subjects: bool,
    pub synth_train_driving_subjects: u32,
    pub synth_eval_driving_subjects: u32,
    pub synth_train_nd_subjects: u32,
    pub synth_eval_nd_subjects: u32,
    pub synth_driving_epochs_per_class: usize,
    pub synth_nd_epochs_per_subject: usize,
    pub profile_non_drowsy: [f64; BAND_COUNT],
    pub profile_drowsy: [f64; BAND_COUNT],
    pub profile_non_driving: [f64; BAND_COUNT],
    pub vigilance_subjects: u32,
    pub vigilance_epochs_per_subject: usize,
    pub vigilance_alpha_low: f64,
    pub vigilance_alpha_high: f64,
    pub vigilance_label_slope: f64,
    pub vigilance_label_noise: f64,
    // Run
    pub seed: u64,
    pub data_dir: String,
    pub out_dir: String,
    pub trained_steps: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let profiles = ClassProfiles::default();
        Self {
            channels: 6,
            n_way: 2,
            k_shot: 5,
            distance_metric: DistanceMetric::Euclidean,
            use_similarity_block: true,
            use_determination_block: true,
            pe_base: 1000.0,
            scaled_attention: false,
            pe_every_module: false,
            d_ff: 64,
            det_per_pairing_vote: false,
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
            pretrain_epochs: 20,
            eval_trials: 5,
            eval_shots: vec![1, 5, 10, 20],
            kfolds: 5,
            synth_channels: 6,
            synth_sample_rate: 128.0,
            synth_epoch_seconds: 2.0,
            synth_amplitude_jitter: 0.35,
            synth_band_jitter: 0.0,
            synth_nd_gamma_spread: 0.6,
            synth_nd_gamma_choices: Vec::new(),
            synth_drowsy_theta_subjects: false,
            synth_train_driving_subjects: 8,
            synth_eval_driving_subjects: 4,
            synth_train_nd_subjects: 4,
            synth_eval_nd_subjects: 2,
            synth_driving_epochs_per_class: 30,
            synth_nd_epochs_per_subject: 30,
            profile_non_drowsy: profiles.non_drowsy,
            profile_drowsy: profiles.drowsy,
            profile_non_driving: profiles.non_driving,
            vigilance_subjects: 2,
            vigilance_epochs_per_subject: 100,
            vigilance_alpha_low: 0.4,
            vigilance_alpha_high: 2.5,
            vigilance_label_slope: 4.0,
            vigilance_label_noise: 0.02,
            seed: 7,
            data_dir: String::new(),
            out_dir: "out".into(),
            trained_steps: 0,
        }
    }
}

fn join_f64s(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

fn join_usizes(values: &[usize]) -> String {
    values.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Serialize every key in a fixed order. `#` header lines are ignored by
    /// the parser.
    pub fn emit(&self) -> String {
        let mut out = String::from("# run configuration (key=value, one per line)\n");
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("channels", self.channels.to_string());
        kv("n_way", self.n_way.to_string());
        kv("k_shot", self.k_shot.to_string());
        kv("distance_metric", self.distance_metric.name().into());
        kv("use_similarity_block", self.use_similarity_block.to_string());
        kv("use_determination_block", self.use_determination_block.to_string());
        kv("pe_base", format!("{:?}", self.pe_base));
        kv("scaled_attention", self.scaled_attention.to_string());
        kv("pe_every_module", self.pe_every_module.to_string());
        kv("d_ff", self.d_ff.to_string());
        kv("det_per_pairing_vote", self.det_per_pairing_vote.to_string());
        kv("batch_size_train", self.batch_size_train.to_string());
        kv("batch_size_eval", self.batch_size_eval.to_string());
        kv("beta1", format!("{:?}", self.beta1));
        kv("beta2", format!("{:?}", self.beta2));
        kv("lr_start", format!("{:?}", self.lr_start));
        kv("lr_end", format!("{:?}", self.lr_end));
        kv("warmup_epochs", self.warmup_epochs.to_string());
        kv("epochs_total", self.epochs_total.to_string());
        kv("loss_weight_det", format!("{:?}", self.loss_weight_det));
        kv("loss_weight_cls", format!("{:?}", self.loss_weight_cls));
        kv("freeze_feature", self.freeze_feature.to_string());
        kv("pretrain_epochs", self.pretrain_epochs.to_string());
        kv("eval_trials", self.eval_trials.to_string());
        kv("eval_shots", join_usizes(&self.eval_shots));
        kv("kfolds", self.kfolds.to_string());
        kv("synth_channels", self.synth_channels.to_string());
        kv("synth_sample_rate", format!("{:?}", self.synth_sample_rate));
        kv("synth_epoch_seconds", format!("{:?}", self.synth_epoch_seconds));
        kv("synth_amplitude_jitter", format!("{:?}", self.synth_amplitude_jitter));
        kv("synth_band_jitter", format!("{:?}", self.synth_band_jitter));
        kv("synth_nd_gamma_spread", format!("{:?}", self.synth_nd_gamma_spread));
        kv("synth_nd_gamma_choices", join_f64s(&self.synth_nd_gamma_choices));
        kv("synth_drowsy_theta_subjects", self.synth_drowsy_theta_subjects.to_string());
        kv("synth_train_driving_subjects", self.synth_train_driving_subjects.to_string());
        kv("synth_eval_driving_subjects", self.synth_eval_driving_subjects.to_string());
        kv("synth_train_nd_subjects", self.synth_train_nd_subjects.to_string());
        kv("synth_eval_nd_subjects", self.synth_eval_nd_subjects.to_string());
        kv("synth_driving_epochs_per_class", self.synth_driving_epochs_per_class.to_string());
        kv("synth_nd_epochs_per_subject", self.synth_nd_epochs_per_subject.to_string());
        kv("profile_non_drowsy", join_f64s(&self.profile_non_drowsy));
        kv("profile_drowsy", join_f64s(&self.profile_drowsy));
        kv("profile_non_driving", join_f64s(&self.profile_non_driving));
        kv("vigilance_subjects", self.vigilance_subjects.to_string());
        kv("vigilance_epochs_per_subject", self.vigilance_epochs_per_subject.to_string());
        kv("vigilance_alpha_low", format!("{:?}", self.vigilance_alpha_low));
        kv("vigilance_alpha_high", format!("{:?}", self.vigilance_alpha_high));
        kv("vigilance_label_slope", format!("{:?}", self.vigilance_label_slope));
        kv("vigilance_label_noise", format!("{:?}", self.vigilance_label_noise));
        kv("seed", self.seed.to_string());
        kv("data_dir", self.data_dir.clone());
        kv("out_dir", self.out_dir.clone());
        kv("trained_steps", self.trained_steps.to_string());
        out
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut config = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(IoError::Config(format!(
                    "line {}: expected key=value, got {line:?}",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(IoError::Config(format!("duplicate key {key:?}")));
            }
            config.set(key, value).map_err(|e| {
                IoError::Config(format!("line {}: {e}", lineno + 1))
            })?;
        }
        Ok(config)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn p<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("invalid value {value:?} for {key}"))
        }
        fn p_f64_list(key: &str, value: &str) -> Result<[f64; BAND_COUNT], String> {
            let parts: Vec<f64> = value
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| format!("invalid value {value:?} for {key}"))?;
            parts
                .try_into()
                .map_err(|_| format!("{key} needs exactly {BAND_COUNT} comma-separated values"))
        }
        match key {
            "channels" => self.channels = p(key, value)?,
            "n_way" => self.n_way = p(key, value)?,
            "k_shot" => self.k_shot = p(key, value)?,
            "distance_metric" => {
                self.distance_metric =
                    DistanceMetric::from_str(value).map_err(|e| e.to_string())?
            }
            "use_similarity_block" => self.use_similarity_block = p(key, value)?,
            "use_determination_block" => self.use_determination_block = p(key, value)?,
            "pe_base" => self.pe_base = p(key, value)?,
            "scaled_attention" => self.scaled_attention = p(key, value)?,
            "pe_every_module" => self.pe_every_module = p(key, value)?,
            "d_ff" => self.d_ff = p(key, value)?,
            "det_per_pairing_vote" => self.det_per_pairing_vote = p(key, value)?,
            "batch_size_train" => self.batch_size_train = p(key, value)?,
            "batch_size_eval" => self.batch_size_eval = p(key, value)?,
            "beta1" => self.beta1 = p(key, value)?,
            "beta2" => self.beta2 = p(key, value)?,
            "lr_start" => self.lr_start = p(key, value)?,
            "lr_end" => self.lr_end = p(key, value)?,
            "warmup_epochs" => self.warmup_epochs = p(key, value)?,
            "epochs_total" => self.epochs_total = p(key, value)?,
            "loss_weight_det" => self.loss_weight_det = p(key, value)?,
            "loss_weight_cls" => self.loss_weight_cls = p(key, value)?,
            "freeze_feature" => self.freeze_feature = p(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = p(key, value)?,
            "eval_trials" => self.eval_trials = p(key, value)?,
            "eval_shots" => {
                self.eval_shots = value
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| format!("invalid value {value:?} for eval_shots"))?
            }
            "kfolds" => self.kfolds = p(key, value)?,
            "synth_channels" => self.synth_channels = p(key, value)?,
            "synth_sample_rate" => self.synth_sample_rate = p(key, value)?,
            "synth_epoch_seconds" => self.synth_epoch_seconds = p(key, value)?,
            "synth_amplitude_jitter" => self.synth_amplitude_jitter = p(key, value)?,
            "synth_band_jitter" => self.synth_band_jitter = p(key, value)?,
            "synth_nd_gamma_spread" => self.synth_nd_gamma_spread = p(key, value)?,
            "synth_nd_gamma_choices" => {
                self.synth_nd_gamma_choices = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| format!("invalid value {value:?} for synth_nd_gamma_choices"))?
                }
            }
            "synth_drowsy_theta_subjects" => self.synth_drowsy_theta_subjects = p(key, value)?,
            "synth_train_driving_subjects" => self.synth_train_driving_subjects = p(key, value)?,
            "synth_eval_driving_subjects" => self.synth_eval_driving_subjects = p(key, value)?,
            "synth_train_nd_subjects" => self.synth_train_nd_subjects = p(key, value)?,
            "synth_eval_nd_subjects" => self.synth_eval_nd_subjects = p(key, value)?,
            "synth_driving_epochs_per_class" => {
                self.synth_driving_epochs_per_class = p(key, value)?
            }
            "synth_nd_epochs_per_subject" => self.synth_nd_epochs_per_subject = p(key, value)?,
            "profile_non_drowsy" => self.profile_non_drowsy = p_f64_list(key, value)?,
            "profile_drowsy" => self.profile_drowsy = p_f64_list(key, value)?,
            "profile_non_driving" => self.profile_non_driving = p_f64_list(key, value)?,
            "vigilance_subjects" => self.vigilance_subjects = p(key, value)?,
            "vigilance_epochs_per_subject" => self.vigilance_epochs_per_subject = p(key, value)?,
            "vigilance_alpha_low" => self.vigilance_alpha_low = p(key, value)?,
            "vigilance_alpha_high" => self.vigilance_alpha_high = p(key, value)?,
            "vigilance_label_slope" => self.vigilance_label_slope = p(key, value)?,
            "vigilance_label_noise" => self.vigilance_label_noise = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "data_dir" => self.data_dir = value.to_string(),
            "out_dir" => self.out_dir = value.to_string(),
            "trained_steps" => self.trained_steps = p(key, value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    pub fn parse_file(path: &Path) -> Result<Self, IoError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write_file(&self, path: &Path) -> Result<(), IoError> {
        atomic_write(path, self.emit().as_bytes())
    }

    // ── Derived configurations ──────────────────────────────────────────

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            channels: self.channels,
            n_way: self.n_way,
            k_shot: self.k_shot,
            metric: self.distance_metric,
            use_similarity_block: self.use_similarity_block,
            use_determination_block: self.use_determination_block,
            pe_base: self.pe_base,
            scaled_attention: self.scaled_attention,
            pe_every_module: self.pe_every_module,
            d_ff: self.d_ff,
            det_per_pairing_vote: self.det_per_pairing_vote,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size_train: self.batch_size_train,
            batch_size_eval: self.batch_size_eval,
            beta1: self.beta1,
            beta2: self.beta2,
            lr_start: self.lr_start,
            lr_end: self.lr_end,
            warmup_epochs: self.warmup_epochs,
            epochs_total: self.epochs_total,
            loss_weight_det: self.loss_weight_det,
            loss_weight_cls: self.loss_weight_cls,
            freeze_feature: self.freeze_feature,
            seed: self.seed,
        }
    }

    pub fn class_profiles(&self) -> ClassProfiles {
        ClassProfiles {
            non_drowsy: self.profile_non_drowsy,
            drowsy: self.profile_drowsy,
            non_driving: self.profile_non_driving,
        }
    }

    /// One generator covering the train and eval subject ranges; the split
    /// is by subject-id prefix.
    pub fn benchmark_spec(&self) -> BenchmarkSpec {
        BenchmarkSpec {
            profiles: self.class_profiles(),
            channels: self.synth_channels,
            sample_rate: self.synth_sample_rate,
            epoch_seconds: self.synth_epoch_seconds,
            amplitude_jitter: self.synth_amplitude_jitter,
            band_jitter: self.synth_band_jitter,
            nd_gamma_spread: self.synth_nd_gamma_spread,
            nd_gamma_choices: self.synth_nd_gamma_choices.clone(),
            drowsy_theta_subjects: self.synth_drowsy_theta_subjects,
            driving_subjects: self.synth_train_driving_subjects + self.synth_eval_driving_subjects,
            driving_epochs_per_class: self.synth_driving_epochs_per_class,
            nd_subjects: self.synth_train_nd_subjects + self.synth_eval_nd_subjects,
            nd_epochs_per_subject: self.synth_nd_epochs_per_subject,
            seed: self.seed,
        }
    }

    pub fn vigilance_spec(&self) -> VigilanceSpec {
        VigilanceSpec {
            channels: self.synth_channels,
            sample_rate: self.synth_sample_rate,
            epoch_seconds: self.synth_epoch_seconds,
            epochs_per_subject: self.vigilance_epochs_per_subject,
            alpha_low: self.vigilance_alpha_low,
            alpha_high: self.vigilance_alpha_high,
            label_slope: self.vigilance_label_slope,
            label_noise: self.vigilance_label_noise,
            base_profile: self.profile_non_drowsy,
            seed: self.seed,
        }
    }

    /// Driving subject ids in the training split.
    pub fn train_driving_subjects(&self) -> Vec<u32> {
        (0..self.synth_train_driving_subjects).collect()
    }

    pub fn eval_driving_subjects(&self) -> Vec<u32> {
        (self.synth_train_driving_subjects
            ..self.synth_train_driving_subjects + self.synth_eval_driving_subjects)
            .collect()
    }

    pub fn train_nd_subjects(&self) -> Vec<u32> {
        (0..self.synth_train_nd_subjects)
            .map(|i| crate::synth::ND_SUBJECT_BASE + i)
            .collect()
    }

    pub fn eval_nd_subjects(&self) -> Vec<u32> {
        (self.synth_train_nd_subjects..self.synth_train_nd_subjects + self.synth_eval_nd_subjects)
            .map(|i| crate::synth::ND_SUBJECT_BASE + i)
            .collect()
    }

    pub fn vigilance_subject_ids(&self) -> Vec<u32> {
        (0..self.vigilance_subjects).map(|i| VIGILANCE_SUBJECT_BASE + i).collect()
    }
}
