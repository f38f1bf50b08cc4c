//! Raw-epoch handling: band decomposition, differential entropy features,
//! labeling rules, and a synthetic epoch generator with analytically known
//! per-band statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("sample rate {0} Hz unsupported: band decomposition needs at least 100 Hz")]
    UnsupportedRate(f64),
    #[error("invalid label: {0}")]
    Label(String),
    #[error("invalid epoch: {0}")]
    Epoch(String),
}

pub const BAND_COUNT: usize = 5;
/// Inclusive band edges in Hz: delta, theta, alpha, beta, gamma.
pub const BAND_EDGES_HZ: [(f64, f64); BAND_COUNT] =
    [(1.0, 3.0), (4.0, 7.0), (8.0, 13.0), (14.0, 30.0), (31.0, 50.0)];
pub const BAND_NAMES: [&str; BAND_COUNT] = ["delta", "theta", "alpha", "beta", "gamma"];

pub const ALPHA_BAND: usize = 2;
pub const GAMMA_BAND: usize = 4;

/// Floor applied to the ML variance estimate so the entropy stays finite.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// PERCLOS at or above this value labels an epoch drowsy.
pub const PERCLOS_DROWSY_THRESHOLD: f64 = 0.7;

/// Binarization cutoff for reaction-time drowsiness indices.
pub const INDEX_DROWSY_THRESHOLD: f64 = 0.5;

// ── Domain types ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassLabel {
    NonDrowsy = 0,
    Drowsy = 1,
    NonDriving = 2,
}

impl ClassLabel {
    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(ClassLabel::NonDrowsy),
            1 => Some(ClassLabel::Drowsy),
            2 => Some(ClassLabel::NonDriving),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::NonDrowsy => "non_drowsy",
            ClassLabel::Drowsy => "drowsy",
            ClassLabel::NonDriving => "non_driving",
        }
    }

    pub fn is_driving(self) -> bool {
        !matches!(self, ClassLabel::NonDriving)
    }
}

impl std::str::FromStr for ClassLabel {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, SignalError> {
        match s {
            "non_drowsy" => Ok(ClassLabel::NonDrowsy),
            "drowsy" => Ok(ClassLabel::Drowsy),
            "non_driving" => Ok(ClassLabel::NonDriving),
            other => Err(SignalError::Label(format!("unknown class label {other:?}"))),
        }
    }
}

/// One windowed multi-channel raw signal with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EegEpoch {
    pub channels: usize,
    pub sample_rate: f64,
    /// channels × n_samples, row-major (row = channel).
    pub samples: Vec<f64>,
    pub n_samples: usize,
    pub subject_id: u32,
    pub class_label: Option<ClassLabel>,
    pub vigilance: Option<f64>,
}

impl EegEpoch {
    pub fn new(
        channels: usize,
        sample_rate: f64,
        samples: Vec<f64>,
        subject_id: u32,
    ) -> Result<Self, SignalError> {
        if channels == 0 {
            return Err(SignalError::Epoch("channel count must be positive".into()));
        }
        if samples.is_empty() || !samples.len().is_multiple_of(channels) {
            return Err(SignalError::Epoch(format!(
                "sample buffer of {} values does not tile {} channels",
                samples.len(),
                channels
            )));
        }
        let n_samples = samples.len() / channels;
        Ok(Self {
            channels,
            sample_rate,
            samples,
            n_samples,
            subject_id,
            class_label: None,
            vigilance: None,
        })
    }

    pub fn with_labels(mut self, class: Option<ClassLabel>, vigilance: Option<f64>) -> Result<Self, SignalError> {
        if let Some(v) = vigilance {
            if !(0.0..=1.0).contains(&v) {
                return Err(SignalError::Label(format!("vigilance {v} outside [0, 1]")));
            }
        }
        self.class_label = class;
        self.vigilance = vigilance;
        Ok(self)
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.samples[c * self.n_samples..(c + 1) * self.n_samples]
    }
}

/// 5 × c matrix of per-band, per-channel differential entropy, row order
/// fixed to [`BAND_EDGES_HZ`].
#[derive(Debug, Clone, PartialEq)]
pub struct DeFeature {
    values: Tensor,
}

impl DeFeature {
    pub fn from_tensor(values: Tensor) -> Result<Self, SignalError> {
        if values.rows() != BAND_COUNT {
            return Err(SignalError::Epoch(format!(
                "DE feature needs {BAND_COUNT} band rows, got {}",
                values.rows()
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn channels(&self) -> usize {
        self.values.cols()
    }

    pub fn get(&self, band: usize, channel: usize) -> f64 {
        self.values.data()[band * self.channels() + channel]
    }

    /// Mean over channels for one band row.
    pub fn band_mean(&self, band: usize) -> f64 {
        let c = self.channels();
        self.values.data()[band * c..(band + 1) * c].iter().sum::<f64>() / c as f64
    }
}

// ── Band decomposition ──────────────────────────────────────────────────────

fn band_mask(n_samples: usize, sample_rate: f64, lo: f64, hi: f64) -> Vec<bool> {
    let bin_hz = sample_rate / n_samples as f64;
    (0..n_samples)
        .map(|k| {
            let folded = k.min(n_samples - k) as f64 * bin_hz;
            folded >= lo - 1e-9 && folded <= hi + 1e-9
        })
        .collect()
}

/// Number of retained FFT bins for one band; the Parseval bookkeeping oracle
/// divides this by the total bin count.
pub fn band_bin_count(n_samples: usize, sample_rate: f64, band: usize) -> usize {
    let (lo, hi) = BAND_EDGES_HZ[band];
    band_mask(n_samples, sample_rate, lo, hi).iter().filter(|&&k| k).count()
}

/// Zero-phase ideal bandpass of every channel into the five bands: forward
/// transform, zero all bins strictly outside the band, inverse transform.
/// Returns five channels × n_samples buffers in band order.
pub fn band_decompose(epoch: &EegEpoch) -> Result<[Vec<f64>; BAND_COUNT], SignalError> {
    if epoch.sample_rate < 100.0 {
        return Err(SignalError::UnsupportedRate(epoch.sample_rate));
    }
    let t = epoch.n_samples;
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(t);
    let ifft = planner.plan_fft_inverse(t);

    let masks: Vec<Vec<bool>> = BAND_EDGES_HZ
        .iter()
        .map(|&(lo, hi)| band_mask(t, epoch.sample_rate, lo, hi))
        .collect();

    let mut out: [Vec<f64>; BAND_COUNT] = std::array::from_fn(|_| vec![0.0; epoch.channels * t]);
    let mut spectrum = vec![Complex::new(0.0, 0.0); t];
    let mut masked = vec![Complex::new(0.0, 0.0); t];
    for ch in 0..epoch.channels {
        for (s, &x) in spectrum.iter_mut().zip(epoch.channel(ch)) {
            *s = Complex::new(x, 0.0);
        }
        fft.process(&mut spectrum);
        for (b, mask) in masks.iter().enumerate() {
            for (m, (&s, &keep)) in masked.iter_mut().zip(spectrum.iter().zip(mask)) {
                *m = if keep { s } else { Complex::new(0.0, 0.0) };
            }
            ifft.process(&mut masked);
            let dest = &mut out[b][ch * t..(ch + 1) * t];
            for (d, m) in dest.iter_mut().zip(&masked) {
                *d = m.re / t as f64;
            }
        }
    }
    Ok(out)
}

// ── Differential entropy ────────────────────────────────────────────────────

/// ½·log(2πe·σ²) with σ² the 1/T maximum-likelihood variance, clamped to
/// [`VARIANCE_FLOOR`].
pub fn differential_entropy(band_signal: &[f64]) -> f64 {
    assert!(band_signal.len() >= 2, "differential entropy needs at least 2 samples");
    let n = band_signal.len() as f64;
    let mean = band_signal.iter().sum::<f64>() / n;
    let var = band_signal.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
    gaussian_entropy(var.max(VARIANCE_FLOOR))
}

/// Closed-form Gaussian differential entropy for a known variance.
pub fn gaussian_entropy(variance: f64) -> f64 {
    0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * variance).ln()
}

/// DE of every (band, channel) pair: band decomposition followed by
/// per-channel differential entropy. Output is 5 × c.
pub fn de_features(epoch: &EegEpoch) -> Result<DeFeature, SignalError> {
    let bands = band_decompose(epoch)?;
    let t = epoch.n_samples;
    let mut values = Vec::with_capacity(BAND_COUNT * epoch.channels);
    for band in bands.iter() {
        for ch in 0..epoch.channels {
            values.push(differential_entropy(&band[ch * t..(ch + 1) * t]));
        }
    }
    let tensor = Tensor::matrix(BAND_COUNT, epoch.channels, values)
        .expect("band × channel grid always matches its value count");
    DeFeature::from_tensor(tensor)
}

// ── Labeling rules ──────────────────────────────────────────────────────────

/// PERCLOS ratio plus its binarized class (drowsy iff ratio ≥ 0.7).
pub fn perclos_label(
    eye_closed_seconds: f64,
    interval_seconds: f64,
) -> Result<(f64, ClassLabel), SignalError> {
    if interval_seconds <= 0.0 {
        return Err(SignalError::Label(format!(
            "interval must be positive, got {interval_seconds}"
        )));
    }
    let ratio = eye_closed_seconds / interval_seconds;
    if !(0.0..=1.0).contains(&ratio) {
        return Err(SignalError::Label(format!("PERCLOS ratio {ratio} outside [0, 1]")));
    }
    let class = if ratio >= PERCLOS_DROWSY_THRESHOLD {
        ClassLabel::Drowsy
    } else {
        ClassLabel::NonDrowsy
    };
    Ok((ratio, class))
}

/// Reaction-time drowsiness index: max(0, (1 − e^{−(t−1)}) / (1 + e^{−(t−1)})).
pub fn drowsiness_index(reaction_time_s: f64) -> f64 {
    let e = (-(reaction_time_s - 1.0)).exp();
    ((1.0 - e) / (1.0 + e)).max(0.0)
}

/// Binarize a reaction-time drowsiness index at [`INDEX_DROWSY_THRESHOLD`].
pub fn index_label(index: f64) -> ClassLabel {
    if index >= INDEX_DROWSY_THRESHOLD {
        ClassLabel::Drowsy
    } else {
        ClassLabel::NonDrowsy
    }
}

/// Trailing moving average; the first window−1 outputs average all available
/// prefix values.
pub fn smooth_index(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "smoothing window must be at least 1");
    series
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let start = (i + 1).saturating_sub(window);
            let slice = &series[start..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// Per-channel linear-interpolation resampling.
pub fn resample_linear(epoch: &EegEpoch, to_rate: f64) -> Result<EegEpoch, SignalError> {
    if to_rate <= 0.0 {
        return Err(SignalError::Epoch(format!("target rate {to_rate} must be positive")));
    }
    let ratio = to_rate / epoch.sample_rate;
    let new_t = ((epoch.n_samples as f64) * ratio).round() as usize;
    if new_t < 2 {
        return Err(SignalError::Epoch("resampled epoch would be too short".into()));
    }
    let mut samples = Vec::with_capacity(epoch.channels * new_t);
    for ch in 0..epoch.channels {
        let src = epoch.channel(ch);
        for i in 0..new_t {
            let pos = i as f64 / ratio;
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            let a = src[lo.min(src.len() - 1)];
            let b = src[(lo + 1).min(src.len() - 1)];
            samples.push(a + frac * (b - a));
        }
    }
    let mut out = EegEpoch::new(epoch.channels, to_rate, samples, epoch.subject_id)?;
    out.class_label = epoch.class_label;
    out.vigilance = epoch.vigilance;
    Ok(out)
}

// ── Feature pools ───────────────────────────────────────────────────────────

/// One epoch reduced to its DE features plus labels; the training and
/// evaluation loops work from these so band decomposition runs once per
/// epoch.
#[derive(Debug, Clone)]
pub struct DeSample {
    pub de: DeFeature,
    pub subject_id: u32,
    pub class: Option<ClassLabel>,
    pub vigilance: Option<f64>,
}

/// A labeled collection of DE samples.
#[derive(Debug, Clone, Default)]
pub struct DePool {
    pub samples: Vec<DeSample>,
}

impl DePool {
    pub fn from_epochs(epochs: &[EegEpoch]) -> Result<Self, SignalError> {
        let samples = epochs
            .iter()
            .map(|e| {
                Ok(DeSample {
                    de: de_features(e)?,
                    subject_id: e.subject_id,
                    class: e.class_label,
                    vigilance: e.vigilance,
                })
            })
            .collect::<Result<Vec<_>, SignalError>>()?;
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sorted unique subject ids.
    pub fn subjects(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.samples.iter().map(|s| s.subject_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn indices_of_subject(&self, subject: u32) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.subject_id == subject)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn indices_of_subject_class(&self, subject: u32, class: ClassLabel) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.subject_id == subject && s.class == Some(class))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn indices_of_class(&self, class: ClassLabel) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.class == Some(class))
            .map(|(i, _)| i)
            .collect()
    }

    /// Subjects that carry at least one driving (non-anomalous) epoch.
    pub fn driving_subjects(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .samples
            .iter()
            .filter(|s| s.class.map(ClassLabel::is_driving).unwrap_or(false))
            .map(|s| s.subject_id)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

// ── Synthetic epochs ────────────────────────────────────────────────────────

/// Generator for epochs whose per-band variances (and hence DE rows) are
/// known in expectation. Each channel is a sum over bands of band-limited
/// Gaussian noise with the profile's σ, scaled by a per-subject per-channel
/// gain in [0.8, 1.2] drawn once from the subject seed. A per-epoch
/// log-amplitude jitter (half-range `amplitude_jitter`) models global signal
/// strength variations; set it to 0 to disable.
#[derive(Debug, Clone)]
pub struct EpochSynth {
    pub profile: [f64; BAND_COUNT],
    pub channels: usize,
    pub n_samples: usize,
    pub sample_rate: f64,
    pub amplitude_jitter: f64,
    /// Per-epoch, per-band independent log-amplitude jitter half-range.
    pub band_jitter: f64,
}

impl EpochSynth {
    pub fn new(profile: [f64; BAND_COUNT], channels: usize, n_samples: usize, sample_rate: f64) -> Self {
        Self { profile, channels, n_samples, sample_rate, amplitude_jitter: 0.0, band_jitter: 0.0 }
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.amplitude_jitter = jitter;
        self
    }

    pub fn with_band_jitter(mut self, jitter: f64) -> Self {
        self.band_jitter = jitter;
        self
    }

    /// Per-channel gains for a subject; depends only on the subject seed.
    pub fn subject_gains(&self, subject_seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(subject_seed);
        (0..self.channels).map(|_| rng.random_range(0.8..1.2)).collect()
    }

    pub fn generate(&self, subject_seed: u64, epoch_seed: u64) -> EegEpoch {
        let t = self.n_samples;
        let gains = self.subject_gains(subject_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
        let amp = if self.amplitude_jitter > 0.0 {
            rng.random_range(-self.amplitude_jitter..self.amplitude_jitter).exp()
        } else {
            1.0
        };
        let band_mult: [f64; BAND_COUNT] = std::array::from_fn(|_| {
            if self.band_jitter > 0.0 {
                rng.random_range(-self.band_jitter..self.band_jitter).exp()
            } else {
                1.0
            }
        });

        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(t);
        let ifft = planner.plan_fft_inverse(t);

        // Per-band bin scales: target σ divided by the band's noise-power
        // fraction, so the band-limited component has variance σ² in
        // expectation.
        let mut bin_scale = vec![0.0; t];
        for (b, &(lo, hi)) in BAND_EDGES_HZ.iter().enumerate() {
            let mask = band_mask(t, self.sample_rate, lo, hi);
            let kept = mask.iter().filter(|&&k| k).count().max(1);
            let scale = self.profile[b] * band_mult[b] * (t as f64 / kept as f64).sqrt();
            for (s, keep) in bin_scale.iter_mut().zip(&mask) {
                if *keep {
                    *s = scale;
                }
            }
        }

        let mut spectrum = vec![Complex::new(0.0, 0.0); t];
        let mut samples = Vec::with_capacity(self.channels * t);
        for &channel_gain in &gains {
            for s in spectrum.iter_mut() {
                let x: f64 = rng.sample(StandardNormal);
                *s = Complex::new(x, 0.0);
            }
            fft.process(&mut spectrum);
            for (s, &scale) in spectrum.iter_mut().zip(&bin_scale) {
                *s *= scale;
            }
            ifft.process(&mut spectrum);
            let gain = amp * channel_gain;
            samples.extend(spectrum.iter().map(|c| c.re / t as f64 * gain));
        }
        EegEpoch {
            channels: self.channels,
            sample_rate: self.sample_rate,
            samples,
            n_samples: t,
            subject_id: 0,
            class_label: None,
            vigilance: None,
        }
    }
}
