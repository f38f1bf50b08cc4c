//! Labeled benchmark pools built on the band-profile epoch generator: three
//! classes with known spectral structure, subject-disjoint id ranges, and a
//! continuous-vigilance variant whose label is a noisy sigmoid of the alpha
//! band's log-amplitude.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::signal::{ClassLabel, EegEpoch, EpochSynth, ALPHA_BAND, BAND_COUNT};

/// Non-driving subject ids live in a distinct range so they can never
/// collide with driving subjects.
pub const ND_SUBJECT_BASE: u32 = 1000;

/// Per-band σ profiles for the three classes. The defaults separate drowsy
/// from non-drowsy by 4× in alpha and mark non-driving with elevated gamma.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProfiles {
    pub non_drowsy: [f64; BAND_COUNT],
    pub drowsy: [f64; BAND_COUNT],
    pub non_driving: [f64; BAND_COUNT],
}

impl Default for ClassProfiles {
    fn default() -> Self {
        Self {
            non_drowsy: [0.8, 0.8, 0.5, 0.6, 0.4],
            drowsy: [0.8, 0.8, 2.0, 0.6, 0.4],
            non_driving: [0.8, 0.8, 0.5, 0.6, 1.6],
        }
    }
}

impl ClassProfiles {
    pub fn profile(&self, class: ClassLabel) -> [f64; BAND_COUNT] {
        match class {
            ClassLabel::NonDrowsy => self.non_drowsy,
            ClassLabel::Drowsy => self.drowsy,
            ClassLabel::NonDriving => self.non_driving,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub profiles: ClassProfiles,
    pub channels: usize,
    pub sample_rate: f64,
    pub epoch_seconds: f64,
    /// Per-epoch log-amplitude jitter half-range; a global scale nuisance
    /// that shifts every DE entry of the epoch together.
    pub amplitude_jitter: f64,
    /// Per-epoch, per-band independent log-amplitude jitter half-range.
    pub band_jitter: f64,
    /// Per-epoch log-range half-width of a gamma multiplier on non-driving
    /// epochs. Anomalous recordings are heterogeneous, so their class is
    /// spread out rather than a tight cluster.
    pub nd_gamma_spread: f64,
    /// Optional discrete gamma σ modes for non-driving epochs (picked per
    /// epoch, uniformly). Overrides the profile's gamma when non-empty;
    /// modes straddling the driving gamma level model heterogeneous
    /// artifacts (attenuated electrodes vs muscle noise).
    pub nd_gamma_choices: Vec<f64>,
    /// When set, odd-numbered driving subjects express drowsiness in theta
    /// instead of alpha (the drowsy profile's alpha bump moves to theta),
    /// modeling subject-specific spectral signatures.
    pub drowsy_theta_subjects: bool,
    pub driving_subjects: u32,
    pub driving_epochs_per_class: usize,
    pub nd_subjects: u32,
    pub nd_epochs_per_subject: usize,
    pub seed: u64,
}

impl BenchmarkSpec {
    /// Desk-scale defaults: small epochs, enough subjects for a
    /// subject-disjoint split.
    pub fn desk_default() -> Self {
        Self {
            profiles: ClassProfiles::default(),
            channels: 6,
            sample_rate: 128.0,
            epoch_seconds: 2.0,
            amplitude_jitter: 0.35,
            band_jitter: 0.0,
            nd_gamma_spread: 0.6,
            nd_gamma_choices: Vec::new(),
            drowsy_theta_subjects: false,
            driving_subjects: 8,
            driving_epochs_per_class: 30,
            nd_subjects: 4,
            nd_epochs_per_subject: 30,
            seed: 7,
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.epoch_seconds * self.sample_rate).round() as usize
    }

    fn synth_for(&self, class: ClassLabel) -> EpochSynth {
        EpochSynth::new(
            self.profiles.profile(class),
            self.channels,
            self.n_samples(),
            self.sample_rate,
        )
        .with_jitter(self.amplitude_jitter)
        .with_band_jitter(self.band_jitter)
    }

    pub fn driving_subject_ids(&self) -> Vec<u32> {
        (0..self.driving_subjects).collect()
    }

    pub fn nd_subject_ids(&self) -> Vec<u32> {
        (0..self.nd_subjects).map(|i| ND_SUBJECT_BASE + i).collect()
    }
}

/// Stable per-subject seed derivation.
pub fn subject_seed(master: u64, subject: u32) -> u64 {
    master ^ (u64::from(subject).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn epoch_seed(master: u64, subject: u32, class: ClassLabel, index: usize) -> u64 {
    subject_seed(master, subject)
        .wrapping_add(1 + class.index() as u64)
        .wrapping_mul(0x2545_F491_4F6C_DD1D)
        .wrapping_add(index as u64)
}

/// All epochs of one driving subject: `driving_epochs_per_class` of each
/// driving class.
pub fn generate_driving_subject(spec: &BenchmarkSpec, subject: u32) -> Vec<EegEpoch> {
    let mut epochs = Vec::with_capacity(2 * spec.driving_epochs_per_class);
    for class in [ClassLabel::NonDrowsy, ClassLabel::Drowsy] {
        let mut synth = spec.synth_for(class);
        if class == ClassLabel::Drowsy && spec.drowsy_theta_subjects && subject % 2 == 1 {
            // Subject-specific signature: the drowsiness bump sits in theta.
            let theta = crate::signal::ALPHA_BAND - 1;
            synth.profile[theta] = spec.profiles.drowsy[ALPHA_BAND];
            synth.profile[ALPHA_BAND] = spec.profiles.non_drowsy[ALPHA_BAND];
        }
        for e in 0..spec.driving_epochs_per_class {
            let mut epoch = synth.generate(
                subject_seed(spec.seed, subject),
                epoch_seed(spec.seed, subject, class, e),
            );
            epoch.subject_id = subject;
            epoch.class_label = Some(class);
            epochs.push(epoch);
        }
    }
    epochs
}

/// All epochs of one non-driving subject (id comes from the distinct
/// [`ND_SUBJECT_BASE`] pool). Each epoch's gamma σ carries an independent
/// log-uniform multiplier of half-range `nd_gamma_spread`.
pub fn generate_nd_subject(spec: &BenchmarkSpec, nd_index: u32) -> Vec<EegEpoch> {
    let subject = ND_SUBJECT_BASE + nd_index;
    (0..spec.nd_epochs_per_subject)
        .map(|e| {
            let eseed = epoch_seed(spec.seed, subject, ClassLabel::NonDriving, e);
            let mut synth = spec.synth_for(ClassLabel::NonDriving);
            let mut rng = ChaCha8Rng::seed_from_u64(eseed ^ 0xDD);
            if !spec.nd_gamma_choices.is_empty() {
                let pick = rng.random_range(0..spec.nd_gamma_choices.len());
                synth.profile[crate::signal::GAMMA_BAND] = spec.nd_gamma_choices[pick];
            }
            if spec.nd_gamma_spread > 0.0 {
                let mult: f64 =
                    rng.random_range(-spec.nd_gamma_spread..spec.nd_gamma_spread).exp();
                synth.profile[crate::signal::GAMMA_BAND] *= mult;
            }
            let mut epoch = synth.generate(subject_seed(spec.seed, subject), eseed);
            epoch.subject_id = subject;
            epoch.class_label = Some(ClassLabel::NonDriving);
            epoch
        })
        .collect()
}

/// The full benchmark: every driving and non-driving subject.
pub fn generate_benchmark(spec: &BenchmarkSpec) -> Vec<EegEpoch> {
    let mut epochs = Vec::new();
    for subject in spec.driving_subject_ids() {
        epochs.extend(generate_driving_subject(spec, subject));
    }
    for i in 0..spec.nd_subjects {
        epochs.extend(generate_nd_subject(spec, i));
    }
    epochs
}

// ── Continuous-vigilance subjects ───────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct VigilanceSpec {
    pub channels: usize,
    pub sample_rate: f64,
    pub epoch_seconds: f64,
    pub epochs_per_subject: usize,
    /// Alpha σ sweeps log-uniformly over [low, high] as vigilance rises.
    pub alpha_low: f64,
    pub alpha_high: f64,
    /// Slope of the sigmoid mapping the latent level to the label.
    pub label_slope: f64,
    /// Gaussian label noise σ.
    pub label_noise: f64,
    pub base_profile: [f64; BAND_COUNT],
    pub seed: u64,
}

impl VigilanceSpec {
    pub fn desk_default() -> Self {
        Self {
            channels: 6,
            sample_rate: 128.0,
            epoch_seconds: 2.0,
            epochs_per_subject: 100,
            alpha_low: 0.4,
            alpha_high: 2.5,
            label_slope: 4.0,
            label_noise: 0.02,
            base_profile: [0.8, 0.8, 0.5, 0.6, 0.4],
            seed: 7,
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.epoch_seconds * self.sample_rate).round() as usize
    }
}

/// Epochs whose vigilance label is a noisy sigmoid of the latent level that
/// also drives the alpha band's σ; alpha-band DE is affine in that level.
pub fn generate_vigilance_subject(spec: &VigilanceSpec, subject: u32) -> Vec<EegEpoch> {
    let mut rng = ChaCha8Rng::seed_from_u64(subject_seed(spec.seed, subject).wrapping_add(0xA5))
;
    (0..spec.epochs_per_subject)
        .map(|e| {
            let level: f64 = rng.random_range(0.0..1.0);
            let alpha = spec.alpha_low * (spec.alpha_high / spec.alpha_low).powf(level);
            let mut profile = spec.base_profile;
            profile[ALPHA_BAND] = alpha;
            let synth =
                EpochSynth::new(profile, spec.channels, spec.n_samples(), spec.sample_rate);
            let noise: f64 = rng.random_range(-1.0..1.0) * spec.label_noise * 3.0_f64.sqrt();
            let label = (sigmoid(spec.label_slope * (level - 0.5)) + noise).clamp(0.0, 1.0);
            let mut epoch = synth.generate(
                subject_seed(spec.seed, subject),
                epoch_seed(spec.seed, subject, ClassLabel::NonDrowsy, e).wrapping_add(0x51),
            );
            epoch.subject_id = subject;
            epoch.vigilance = Some(label);
            epoch
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{de_features, DePool};

    #[test]
    fn benchmark_counts_and_id_ranges() {
        let spec = BenchmarkSpec {
            driving_subjects: 3,
            driving_epochs_per_class: 4,
            nd_subjects: 2,
            nd_epochs_per_subject: 5,
            ..BenchmarkSpec::desk_default()
        };
        let epochs = generate_benchmark(&spec);
        assert_eq!(epochs.len(), 3 * 2 * 4 + 2 * 5);
        for e in &epochs {
            match e.class_label.unwrap() {
                ClassLabel::NonDriving => assert!(e.subject_id >= ND_SUBJECT_BASE),
                _ => assert!(e.subject_id < ND_SUBJECT_BASE),
            }
        }
    }

    #[test]
    fn benchmark_is_deterministic() {
        let spec = BenchmarkSpec {
            driving_subjects: 1,
            driving_epochs_per_class: 2,
            nd_subjects: 1,
            nd_epochs_per_subject: 2,
            ..BenchmarkSpec::desk_default()
        };
        assert_eq!(generate_benchmark(&spec), generate_benchmark(&spec));
    }

    #[test]
    fn vigilance_labels_track_alpha_de() {
        let spec = VigilanceSpec { epochs_per_subject: 40, ..VigilanceSpec::desk_default() };
        let epochs = generate_vigilance_subject(&spec, 0);
        let pool = DePool::from_epochs(&epochs).unwrap();
        let alpha: Vec<f64> =
            pool.samples.iter().map(|s| s.de.band_mean(ALPHA_BAND)).collect();
        let labels: Vec<f64> = pool.samples.iter().map(|s| s.vigilance.unwrap()).collect();
        let r = crate::eval::pcc(&alpha, &labels).unwrap();
        assert!(r > 0.9, "alpha DE should track the label; pcc = {r}");
        let _ = de_features(&epochs[0]).unwrap();
    }
}
