//! Command implementations behind the binary's subcommands. Each command is
//! a pure function of a [`RunConfig`] plus explicit inputs, writing
//! deterministic artifacts under the output directory:
//! `checkpoints/`, `reports/`, and `losscurves/`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::eval::{ablation_suite, run_trials};
use crate::io::config::VIGILANCE_SUBJECT_BASE;
use crate::io::epoch_file::{read_manifest, write_manifest};
use crate::io::reports::{
    write_ablation_table, write_eval_report, write_loss_curve, write_vigilance_report,
};
use crate::io::{read_epoch, read_epoch_csv, write_epoch, Checkpoint, ManifestEntry, RunConfig};
use crate::model::ModelParams;
use crate::signal::{de_features, DePool, DeSample, EegEpoch, BAND_NAMES};
use crate::synth::{generate_driving_subject, generate_nd_subject, generate_vigilance_subject};
use crate::train::{pretrain_feature_block, train_episodic, TrainConfig};

/// Effective dataset root: `data_dir` when set, `{out_dir}/data` otherwise.
pub fn data_root(config: &RunConfig) -> PathBuf {
    if config.data_dir.is_empty() {
        Path::new(&config.out_dir).join("data")
    } else {
        PathBuf::from(&config.data_dir)
    }
}

fn checkpoints_dir(config: &RunConfig) -> PathBuf {
    Path::new(&config.out_dir).join("checkpoints")
}

fn reports_dir(config: &RunConfig) -> PathBuf {
    Path::new(&config.out_dir).join("reports")
}

fn losscurves_dir(config: &RunConfig) -> PathBuf {
    Path::new(&config.out_dir).join("losscurves")
}

// ── synth ───────────────────────────────────────────────────────────────────

/// Generate the synthetic benchmark: train/eval driving and non-driving
/// subjects plus vigilance-labeled subjects, written as epoch files under
/// `data/<split>/subject_XXXX/...` with a manifest for the other commands.
pub fn cmd_synth(config: &RunConfig) -> Result<()> {
    let root = data_root(config);
    let spec = config.benchmark_spec();
    let mut entries: Vec<ManifestEntry> = Vec::new();

    let mut write_pool = |epochs: Vec<EegEpoch>, split: &str| -> Result<()> {
        for epoch in epochs {
            let idx = entries.iter().filter(|e| e.subject == epoch.subject_id).count();
            let rel = match epoch.class_label {
                Some(class) => format!(
                    "{split}/subject_{:04}/{}/{idx:04}.eege",
                    epoch.subject_id,
                    class.name()
                ),
                None => format!("{split}/subject_{:04}/{idx:04}.eege", epoch.subject_id),
            };
            write_epoch(&root.join(&rel), &epoch)
                .with_context(|| format!("writing {rel}"))?;
            entries.push(ManifestEntry {
                path: rel,
                subject: epoch.subject_id,
                split: split.to_string(),
                class: epoch.class_label,
                vigilance: epoch.vigilance,
            });
        }
        Ok(())
    };

    for subject in config.train_driving_subjects() {
        write_pool(generate_driving_subject(&spec, subject), "train")?;
    }
    for subject in config.eval_driving_subjects() {
        write_pool(generate_driving_subject(&spec, subject), "eval")?;
    }
    for (i, _) in config.train_nd_subjects().iter().enumerate() {
        write_pool(generate_nd_subject(&spec, i as u32), "train")?;
    }
    for (offset, _) in config.eval_nd_subjects().iter().enumerate() {
        let nd_index = config.synth_train_nd_subjects + offset as u32;
        write_pool(generate_nd_subject(&spec, nd_index), "eval")?;
    }
    let vig_spec = config.vigilance_spec();
    for subject in config.vigilance_subject_ids() {
        write_pool(generate_vigilance_subject(&vig_spec, subject), "vigilance")?;
    }

    let comments = vec![
        format!("profile_non_drowsy={}", join(&config.profile_non_drowsy)),
        format!("profile_drowsy={}", join(&config.profile_drowsy)),
        format!("profile_non_driving={}", join(&config.profile_non_driving)),
        format!("amplitude_jitter={:?}", config.synth_amplitude_jitter),
        format!("seed={}", config.seed),
    ];
    write_manifest(&root.join("manifest.csv"), &comments, &entries)?;
    println!("synth: wrote {} epochs under {}", entries.len(), root.display());
    Ok(())
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

// ── pool loading ────────────────────────────────────────────────────────────

pub struct LoadedData {
    pub train: DePool,
    pub eval: DePool,
    pub vigilance: Vec<(u32, Vec<DeSample>)>,
}

/// Read the manifest and reduce every epoch to DE features, grouped by
/// split. Subject disjointness between train and eval is enforced.
pub fn load_data(config: &RunConfig) -> Result<LoadedData> {
    let root = data_root(config);
    let manifest = root.join("manifest.csv");
    let (_, entries) =
        read_manifest(&manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let mut train_epochs = Vec::new();
    let mut eval_epochs = Vec::new();
    let mut vig_epochs: Vec<EegEpoch> = Vec::new();
    for e in &entries {
        let epoch = read_epoch(&root.join(&e.path))
            .with_context(|| format!("reading epoch {}", e.path))?;
        match e.split.as_str() {
            "train" => train_epochs.push(epoch),
            "eval" => eval_epochs.push(epoch),
            "vigilance" => vig_epochs.push(epoch),
            other => bail!("manifest split {other:?} is not one of train/eval/vigilance"),
        }
    }
    let train = DePool::from_epochs(&train_epochs)?;
    let eval = DePool::from_epochs(&eval_epochs)?;
    for t in train.subjects() {
        if eval.subjects().contains(&t) {
            bail!("subject {t} appears in both the train and eval splits");
        }
    }
    let mut vigilance: Vec<(u32, Vec<DeSample>)> = Vec::new();
    let vig_pool = DePool::from_epochs(&vig_epochs)?;
    for subject in vig_pool.subjects() {
        let samples: Vec<DeSample> = vig_pool
            .indices_of_subject(subject)
            .into_iter()
            .map(|i| vig_pool.samples[i].clone())
            .collect();
        vigilance.push((subject, samples));
    }
    Ok(LoadedData { train, eval, vigilance })
}

fn pool_channels(pool: &DePool) -> Result<usize> {
    let Some(first) = pool.samples.first() else {
        bail!("pool is empty");
    };
    let c = first.de.channels();
    if pool.samples.iter().any(|s| s.de.channels() != c) {
        bail!("pool mixes channel counts");
    }
    Ok(c)
}

// ── features ────────────────────────────────────────────────────────────────

/// Dump the 5 × c DE matrix of one epoch as CSV.
pub fn cmd_features(config: &RunConfig, input: &Path, sample_rate: Option<f64>) -> Result<()> {
    let epoch = if input.extension().map(|e| e == "csv").unwrap_or(false) {
        let rate = sample_rate.context("CSV ingestion needs --sample-rate")?;
        read_epoch_csv(input, rate)?
    } else {
        read_epoch(input)?
    };
    let de = de_features(&epoch)?;
    let mut out = String::from("band");
    for ch in 0..de.channels() {
        out.push_str(&format!(",ch{ch}"));
    }
    out.push('\n');
    for (b, name) in BAND_NAMES.iter().enumerate() {
        out.push_str(name);
        for ch in 0..de.channels() {
            out.push_str(&format!(",{:.6}", de.get(b, ch)));
        }
        out.push('\n');
    }
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("epoch");
    let path = reports_dir(config).join(format!("{stem}_de.csv"));
    crate::io::atomic_write(&path, out.as_bytes())?;
    println!("features: wrote {}", path.display());
    Ok(())
}

// ── pretrain ────────────────────────────────────────────────────────────────

pub fn cmd_pretrain(config: &RunConfig) -> Result<()> {
    let data = load_data(config)?;
    let channels = pool_channels(&data.train)?;
    let mut effective = config.clone();
    effective.channels = channels;
    let model_config = effective.model_config();
    let train_config =
        TrainConfig { epochs_total: config.pretrain_epochs, ..effective.train_config() };

    let outcome = pretrain_feature_block(&data.train, &model_config, &train_config)?;
    let mut named = Vec::new();
    outcome.feature.collect_named("feature", &mut named);
    effective.trained_steps = outcome.records.len() as u64;
    let ck = Checkpoint::from_named_params(&named, effective.emit());
    let path = checkpoints_dir(config).join("pretrain.eegf");
    ck.write(&path)?;
    write_loss_curve(&losscurves_dir(config).join("pretrain.csv"), &outcome.records)?;
    println!("pretrain: wrote {}", path.display());
    Ok(())
}

// ── train ───────────────────────────────────────────────────────────────────

pub fn cmd_train(config: &RunConfig, init: Option<&Path>) -> Result<()> {
    let data = load_data(config)?;
    let channels = pool_channels(&data.train)?;
    let mut effective = config.clone();
    effective.channels = channels;
    let model_config = effective.model_config();
    let train_config = effective.train_config();

    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let params = ModelParams::init(&mut rng, &model_config);
    if let Some(init_path) = init {
        let ck = Checkpoint::read(init_path)
            .with_context(|| format!("reading init checkpoint {}", init_path.display()))?;
        let mut feature_named = Vec::new();
        params.feature.collect_named("feature", &mut feature_named);
        ck.apply_to(&feature_named)
            .context("applying pretrained feature block")?;
    }

    let outcome = train_episodic(&data.train, &model_config, &train_config, Some(params))?;
    effective.trained_steps = outcome.steps;
    let ck = Checkpoint::from_named_params(&outcome.params.named_tensors(), effective.emit());
    let path = checkpoints_dir(config).join("model.eegf");
    ck.write(&path)?;
    write_loss_curve(&losscurves_dir(config).join("train.csv"), &outcome.records)?;
    println!(
        "train: {} steps, final loss {:.4}, wrote {}",
        outcome.steps,
        outcome.records.last().map(|r| r.loss_total).unwrap_or(f64::NAN),
        path.display()
    );
    Ok(())
}

/// Rebuild a model from a checkpoint: the architecture comes from the
/// config echo, values from the stored tensors.
pub fn load_model(path: &Path) -> Result<(ModelParams, RunConfig)> {
    let ck = Checkpoint::read(path)
        .with_context(|| format!("reading checkpoint {}", path.display()))?;
    let stored = RunConfig::parse(&ck.config_echo)
        .context("parsing checkpoint config echo")?;
    let model_config = stored.model_config();
    let mut rng = ChaCha8Rng::seed_from_u64(model_config.seed);
    let params = ModelParams::init(&mut rng, &model_config);
    ck.apply_to(&params.named_tensors())?;
    Ok((params, stored))
}

// ── eval ────────────────────────────────────────────────────────────────────

pub fn cmd_eval(config: &RunConfig, checkpoint: &Path) -> Result<()> {
    let (params, stored) = load_model(checkpoint)?;
    let model_config = stored.model_config();
    let data = load_data(config)?;
    let channels = pool_channels(&data.eval)?;
    if channels != model_config.channels {
        bail!(
            "checkpoint expects {} channels but the eval pool has {channels}",
            model_config.channels
        );
    }
    for &k in &config.eval_shots {
        let report =
            run_trials(&data.eval, &params, &model_config, k, config.eval_trials, config.seed)?;
        let path = reports_dir(config).join(format!("eval_k{k}.csv"));
        write_eval_report(&path, &report)?;
        println!(
            "eval: k={k} macro F1 {} → {}",
            report
                .mean_macro_f1
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "n/a".into()),
            path.display()
        );
    }
    Ok(())
}

// ── vigilance ───────────────────────────────────────────────────────────────

pub fn cmd_vigilance(config: &RunConfig) -> Result<()> {
    let data = load_data(config)?;
    if data.vigilance.is_empty() {
        bail!("no vigilance-labeled subjects in the dataset");
    }
    let mut per_subject = Vec::new();
    for (subject, samples) in &data.vigilance {
        let channels = samples[0].de.channels();
        let mut effective = config.clone();
        effective.channels = channels;
        let model_config = effective.model_config();
        let train_config = effective.train_config();
        let folds =
            crate::train::train_vigilance_regressor(samples, config.kfolds, &model_config, &train_config)?;
        for fold in &folds {
            let named = fold.params.named_tensors();
            let ck = Checkpoint::from_named_params(&named, effective.emit());
            ck.write(
                &checkpoints_dir(config)
                    .join(format!("vigilance_s{subject}_f{}.eegf", fold.fold)),
            )?;
        }
        per_subject.push((*subject, folds));
    }
    let path = reports_dir(config).join("vigilance.csv");
    write_vigilance_report(&path, &per_subject)?;
    println!("vigilance: {} subjects → {}", per_subject.len(), path.display());
    Ok(())
}

// ── ablate ──────────────────────────────────────────────────────────────────

pub fn cmd_ablate(config: &RunConfig) -> Result<()> {
    let data = load_data(config)?;
    let channels = pool_channels(&data.train)?;
    let mut effective = config.clone();
    effective.channels = channels;
    let model_config = effective.model_config();
    let train_config = effective.train_config();

    let tables = ablation_suite(
        &data.train,
        &data.eval,
        &model_config,
        &train_config,
        &config.eval_shots,
        config.eval_trials,
        config.seed,
    )?;
    let dir = reports_dir(config);
    write_ablation_table(&dir, "ablation_distance_non_drowsy", &tables.distance_non_drowsy)?;
    write_ablation_table(&dir, "ablation_distance_drowsy", &tables.distance_drowsy)?;
    write_ablation_table(&dir, "ablation_determination", &tables.determination)?;
    write_ablation_table(&dir, "ablation_similarity", &tables.similarity)?;
    println!("ablate: wrote 4 tables under {}", dir.display());
    Ok(())
}

/// Subject ids reserved for vigilance data; exposed for tests.
pub fn vigilance_base() -> u32 {
    VIGILANCE_SUBJECT_BASE
}
