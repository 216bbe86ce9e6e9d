//! Synthetic pulse-train clips with exact ground truth.
//!
//! A clip is background noise (white or pink), optional steady tones, and any
//! number of non-overlapping pulse trains. Each pulse is a burst of
//! band-limited white noise with 5 ms raised-cosine edges, scaled so that its
//! level in the analysis band exceeds the in-band level of the background by
//! the train's `snr_db`.
//!
//! Randomness is split into independent streams: the background, the tone
//! phases and each train draw from their own generators, so adding a train
//! leaves the noise realization and the other trains untouched.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioStream;
use crate::config::splitmix64;
use crate::eval::TruthInterval;
use crate::features::Label;

/// Band in which signal-to-noise ratios are defined.
pub const ANALYSIS_BAND_HZ: (f64, f64) = (75.0, 350.0);

const EDGE_S: f64 = 0.005;
/// Peak magnitude allowed before the clip is scaled down.
const MAX_PEAK: f64 = 0.99;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    Invalid(String),
    #[error("trains {first} and {second} overlap")]
    OverlappingTrains { first: usize, second: usize },
    #[error("{path}: {message}")]
    Spec { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    White,
    Pink,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Full-band variance of the background.
    pub variance: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            kind: NoiseKind::White,
            variance: 4e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneSpec {
    pub freq_hz: f64,
    /// Mean-square level, `10 * log10(A^2 / 2)`.
    pub level_db: f64,
}

fn minke_label() -> Label {
    Label::Minke
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    /// Onset of the first pulse.
    pub start_s: f64,
    pub pulse_rate_hz: f64,
    pub n_pulses: usize,
    pub pulse_dur_s: f64,
    pub band: [f64; 2],
    pub snr_db: f64,
    /// Each interval is `(1 + u) / pulse_rate_hz` with `u` uniform in
    /// `±rate_jitter_pct / 100`.
    #[serde(default)]
    pub rate_jitter_pct: f64,
    #[serde(default = "minke_label")]
    pub label: Label,
}

impl TrainSpec {
    /// Latest possible end of the train given the jitter bound.
    pub fn max_end_s(&self) -> f64 {
        let gaps = self.n_pulses.saturating_sub(1) as f64;
        self.start_s + gaps * (1.0 + self.rate_jitter_pct / 100.0) / self.pulse_rate_hz + self.pulse_dur_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub sample_rate: u32,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub narrowband_tones: Vec<ToneSpec>,
    #[serde(default)]
    pub trains: Vec<TrainSpec>,
}

impl SynthSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let err = |message: String| SynthError::Spec {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        toml::from_str(&text).map_err(|e| err(e.message().to_string()))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let invalid = |m: String| Err(SynthError::Invalid(m));
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.sample_rate == 0 || !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return invalid("sample_rate and duration_s must be positive".into());
        }
        if !(self.noise.variance >= 0.0 && self.noise.variance.is_finite()) {
            return invalid("noise variance must be finite and >= 0".into());
        }
        for (i, t) in self.narrowband_tones.iter().enumerate() {
            if !(t.freq_hz > 0.0 && t.freq_hz < nyquist && t.level_db.is_finite()) {
                return invalid(format!("tone {i}: need 0 < freq < {nyquist} and finite level"));
            }
        }
        for (i, t) in self.trains.iter().enumerate() {
            if !(t.pulse_rate_hz > 0.0 && t.pulse_rate_hz < nyquist) {
                return invalid(format!("train {i}: pulse rate must be in (0, {nyquist})"));
            }
            if t.n_pulses == 0 || !(t.pulse_dur_s > 0.0) {
                return invalid(format!("train {i}: needs pulses of positive duration"));
            }
            if !(t.band[0] >= 0.0 && t.band[0] < t.band[1] && t.band[1] <= nyquist) {
                return invalid(format!("train {i}: band must satisfy 0 <= lo < hi <= {nyquist}"));
            }
            if !t.snr_db.is_finite() {
                return invalid(format!("train {i}: snr_db must be finite"));
            }
            if !(0.0..100.0).contains(&t.rate_jitter_pct) {
                return invalid(format!("train {i}: rate_jitter_pct must be in [0, 100)"));
            }
            if t.label == Label::Unlabeled {
                return invalid(format!("train {i}: label must be minke or non-minke"));
            }
            if !(t.start_s >= 0.0 && t.max_end_s() <= self.duration_s) {
                return invalid(format!("train {i}: does not fit in the clip"));
            }
        }
        let mut order: Vec<usize> = (0..self.trains.len()).collect();
        order.sort_by(|&a, &b| self.trains[a].start_s.total_cmp(&self.trains[b].start_s));
        for w in order.windows(2) {
            if self.trains[w[1]].start_s < self.trains[w[0]].max_end_s() {
                return Err(SynthError::OverlappingTrains {
                    first: w[0].min(w[1]),
                    second: w[0].max(w[1]),
                });
            }
        }
        Ok(())
    }
}

/// One generated train as placed in the clip.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrain {
    /// Onset of the first pulse.
    pub start_s: f64,
    /// End of the last pulse.
    pub end_s: f64,
    pub label: Label,
    /// Pulse centers.
    pub pulse_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub intervals: Vec<TruthTrain>,
    /// Set when the clip would have clipped and was scaled down by this gain.
    pub scaled_down: Option<f64>,
}

impl GroundTruth {
    pub fn truth_intervals(&self) -> Vec<TruthInterval> {
        self.intervals
            .iter()
            .map(|t| TruthInterval {
                start_s: t.start_s,
                end_s: t.end_s,
                label: t.label,
            })
            .collect()
    }
}

#[derive(Clone, Copy)]
enum Stream {
    Noise = 1,
    Tones = 2,
    Train = 16,
}

fn stream_rng(seed: u64, stream: Stream, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(stream as u64 + index as u64)))
}

/// Keeps only spectral content with `lo <= |f| <= hi`.
pub fn band_limit(x: &[f64], sample_rate: u32, lo: f64, hi: f64) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = sample_rate as f64 / n as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * df;
        if f < lo || f > hi {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

fn mean_square(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

fn background(spec: &SynthSpec, len: usize) -> Vec<f64> {
    let mut rng = stream_rng(spec.seed, Stream::Noise, 0);
    let white: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    let sd = spec.noise.variance.sqrt();
    match spec.noise.kind {
        NoiseKind::White => white.into_iter().map(|w| w * sd).collect(),
        NoiseKind::Pink => {
            // Three-stage approximation of a -3 dB/octave slope.
            let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
            let pink: Vec<f64> = white
                .into_iter()
                .map(|w| {
                    b0 = 0.99765 * b0 + w * 0.0990460;
                    b1 = 0.96300 * b1 + w * 0.2965164;
                    b2 = 0.57000 * b2 + w * 1.0526913;
                    b0 + b1 + b2 + w * 0.1848
                })
                .collect();
            let mean = pink.iter().sum::<f64>() / len.max(1) as f64;
            let var = pink.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / len.max(1) as f64;
            let g = if var > 0.0 { sd / var.sqrt() } else { 0.0 };
            pink.into_iter().map(|p| (p - mean) * g).collect()
        }
    }
}

fn add_tones(spec: &SynthSpec, x: &mut [f64]) {
    let mut rng = stream_rng(spec.seed, Stream::Tones, 0);
    let fs = spec.sample_rate as f64;
    for tone in &spec.narrowband_tones {
        let amp = (2.0 * 10f64.powf(tone.level_db / 10.0)).sqrt();
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        let w = std::f64::consts::TAU * tone.freq_hz / fs;
        for (n, v) in x.iter_mut().enumerate() {
            *v += amp * (w * n as f64 + phase).cos();
        }
    }
}

/// Band-limited noise burst of `len` samples with raised-cosine edges.
fn pulse_shape(rng: &mut ChaCha8Rng, len: usize, sample_rate: u32, band: [f64; 2]) -> Vec<f64> {
    let padded = (4 * len).max(256).next_power_of_two();
    let noise: Vec<f64> = (0..padded).map(|_| StandardNormal.sample(rng)).collect();
    let shaped = band_limit(&noise, sample_rate, band[0], band[1]);
    let offset = (padded - len) / 2;
    let mut pulse = shaped[offset..offset + len].to_vec();
    let edge = ((EDGE_S * sample_rate as f64).round() as usize).min(len / 2);
    for i in 0..edge {
        let g = 0.5 * (1.0 - (std::f64::consts::PI * (i as f64 + 0.5) / edge as f64).cos());
        pulse[i] *= g;
        pulse[len - 1 - i] *= g;
    }
    pulse
}

/// Mean square of the analysis-band part of `pulse`, over its own length.
fn in_band_mean_square(pulse: &[f64], sample_rate: u32) -> f64 {
    let padded = (4 * pulse.len()).max(256).next_power_of_two();
    let mut x = pulse.to_vec();
    x.resize(padded, 0.0);
    let y = band_limit(&x, sample_rate, ANALYSIS_BAND_HZ.0, ANALYSIS_BAND_HZ.1);
    y.iter().map(|v| v * v).sum::<f64>() / pulse.len() as f64
}

/// Renders a clip. Samples are rounded to `f32` precision so a float WAV
/// round trip is exact.
pub fn generate_clip(spec: &SynthSpec) -> Result<(AudioStream, GroundTruth), SynthError> {
    spec.validate()?;
    let fs = spec.sample_rate;
    let len = (spec.duration_s * fs as f64).round() as usize;
    let mut x = background(spec, len);
    add_tones(spec, &mut x);

    let noise_ms = mean_square(&band_limit(&x, fs, ANALYSIS_BAND_HZ.0, ANALYSIS_BAND_HZ.1));
    let mut intervals = Vec::with_capacity(spec.trains.len());
    for (ti, train) in spec.trains.iter().enumerate() {
        let mut rng = stream_rng(spec.seed, Stream::Train, ti);
        let plen = ((train.pulse_dur_s * fs as f64).round() as usize).max(1);
        let jitter = train.rate_jitter_pct / 100.0;
        let target_ms = noise_ms * 10f64.powf(train.snr_db / 10.0);
        let mut onset = train.start_s;
        let mut pulse_times = Vec::with_capacity(train.n_pulses);
        let mut first = 0;
        let mut last = 0;
        for k in 0..train.n_pulses {
            if k > 0 {
                let u = if jitter > 0.0 { rng.random_range(-jitter..=jitter) } else { 0.0 };
                onset += (1.0 + u) / train.pulse_rate_hz;
            }
            let start = (onset * fs as f64).round() as usize;
            let start = start.min(len.saturating_sub(plen));
            let pulse = pulse_shape(&mut rng, plen, fs, train.band);
            let ms = in_band_mean_square(&pulse, fs);
            let g = if ms > 0.0 { (target_ms / ms).sqrt() } else { 0.0 };
            for (dst, p) in x[start..start + plen].iter_mut().zip(&pulse) {
                *dst += g * p;
            }
            if k == 0 {
                first = start;
            }
            last = start + plen;
            pulse_times.push((start as f64 + plen as f64 / 2.0) / fs as f64);
        }
        intervals.push(TruthTrain {
            start_s: first as f64 / fs as f64,
            end_s: last as f64 / fs as f64,
            label: train.label,
            pulse_times,
        });
    }
    intervals.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));

    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scaled_down = (peak > MAX_PEAK).then(|| MAX_PEAK / peak);
    let gain = scaled_down.unwrap_or(1.0);
    for v in &mut x {
        *v = (*v * gain) as f32 as f64;
    }

    let mut stream = AudioStream::new(x, fs);
    stream.source_path = format!("synth-{}", spec.seed);
    Ok((
        stream,
        GroundTruth {
            intervals,
            scaled_down,
        },
    ))
}

/// Draws a minke-like train: 2.8-4.5 pulses/s, 40-60 ms pulses, trains of
/// 40-60 s, energy mostly between 100 and 300 Hz.
pub fn minke_train(rng: &mut impl Rng, start_s: f64, snr_db: f64) -> TrainSpec {
    let rate = rng.random_range(2.8..=4.5);
    let train_s: f64 = rng.random_range(40.0..=60.0);
    TrainSpec {
        start_s,
        pulse_rate_hz: rate,
        n_pulses: (train_s * rate).round() as usize + 1,
        pulse_dur_s: rng.random_range(0.040..=0.060),
        band: [rng.random_range(90.0..=120.0), rng.random_range(260.0..=330.0)],
        snr_db,
        rate_jitter_pct: 4.0,
        label: Label::Minke,
    }
}

/// Non-minke trains that can pass the detector rules: low thumps at a
/// conforming rate, and fast full-band clicks like recorder drive noise.
pub fn distractor_train(rng: &mut impl Rng, start_s: f64, snr_db: f64) -> TrainSpec {
    if rng.random_bool(0.5) {
        let rate = rng.random_range(2.8..=4.5);
        TrainSpec {
            start_s,
            pulse_rate_hz: rate,
            n_pulses: rng.random_range(20..=60),
            pulse_dur_s: rng.random_range(0.06..=0.10),
            band: [75.0, rng.random_range(110.0..=140.0)],
            snr_db,
            rate_jitter_pct: 4.0,
            label: Label::NonMinke,
        }
    } else {
        let rate = rng.random_range(3.0..=4.2);
        TrainSpec {
            start_s,
            pulse_rate_hz: rate,
            n_pulses: rng.random_range(20..=60),
            pulse_dur_s: 0.010,
            band: [20.0, 990.0],
            snr_db: snr_db + 6.0,
            rate_jitter_pct: 1.0,
            label: Label::NonMinke,
        }
    }
}

/// Built-in clip layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// One minke train at 15 dB in white noise.
    Minke,
    /// A distractor train at 15 dB in white noise.
    Distractor,
    /// Pure white noise, 5 minutes.
    Noise,
    /// Pink noise with low steady tones, a minke train and a distractor.
    Mixed,
}

impl Preset {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "minke" => Some(Preset::Minke),
            "distractor" => Some(Preset::Distractor),
            "noise" => Some(Preset::Noise),
            "mixed" => Some(Preset::Mixed),
            _ => None,
        }
    }

    pub const NAMES: [&'static str; 4] = ["minke", "distractor", "noise", "mixed"];
}

pub fn preset_spec(preset: Preset, seed: u64) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));
    let base = SynthSpec {
        sample_rate: 2000,
        duration_s: 0.0,
        seed,
        noise: NoiseSpec::default(),
        narrowband_tones: Vec::new(),
        trains: Vec::new(),
    };
    match preset {
        Preset::Minke => {
            let lead = rng.random_range(5.0..=15.0);
            let train = minke_train(&mut rng, lead, 15.0);
            SynthSpec {
                duration_s: (train.max_end_s() + rng.random_range(5.0..=15.0)).ceil(),
                trains: vec![train],
                ..base
            }
        }
        Preset::Distractor => {
            let lead = rng.random_range(5.0..=15.0);
            let train = distractor_train(&mut rng, lead, 15.0);
            SynthSpec {
                duration_s: (train.max_end_s() + rng.random_range(5.0..=15.0)).ceil(),
                trains: vec![train],
                ..base
            }
        }
        Preset::Noise => SynthSpec {
            duration_s: 300.0,
            ..base
        },
        Preset::Mixed => {
            let snr = rng.random_range(12.0..=20.0);
            let minke = minke_train(&mut rng, 10.0, snr);
            let gap = minke.max_end_s() + 20.0;
            let other = distractor_train(&mut rng, gap, 15.0);
            let tones = (0..2)
                .map(|_| ToneSpec {
                    freq_hz: rng.random_range(70.0..=200.0),
                    level_db: 10.0 * (4e-4f64 * 0.05).log10(),
                })
                .collect();
            SynthSpec {
                duration_s: (other.max_end_s() + 10.0).ceil(),
                noise: NoiseSpec {
                    kind: NoiseKind::Pink,
                    variance: 4e-4,
                },
                narrowband_tones: tones,
                trains: vec![minke, other],
                ..base
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::leq_db;

    fn quiet_spec(trains: Vec<TrainSpec>) -> SynthSpec {
        SynthSpec {
            sample_rate: 2000,
            duration_s: 30.0,
            seed: 4,
            noise: NoiseSpec::default(),
            narrowband_tones: Vec::new(),
            trains,
        }
    }

    fn train(start: f64, n: usize) -> TrainSpec {
        TrainSpec {
            start_s: start,
            pulse_rate_hz: 3.3,
            n_pulses: n,
            pulse_dur_s: 0.045,
            band: [100.0, 300.0],
            snr_db: 20.0,
            rate_jitter_pct: 5.0,
            label: Label::Minke,
        }
    }

    #[test]
    fn no_trains_is_pure_noise() {
        let (s, truth) = generate_clip(&quiet_spec(vec![])).unwrap();
        assert!(truth.intervals.is_empty());
        assert_eq!(s.samples.len(), 60_000);
        let var = mean_square(&s.samples);
        assert!((var / 4e-4 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn same_seed_same_samples() {
        let spec = quiet_spec(vec![train(2.0, 20)]);
        let a = generate_clip(&spec).unwrap();
        let b = generate_clip(&spec).unwrap();
        assert_eq!(a.0.samples, b.0.samples);
        assert_eq!(a.1, b.1);
        let other = SynthSpec { seed: 5, ..spec };
        assert_ne!(generate_clip(&other).unwrap().0.samples, a.0.samples);
    }

    #[test]
    fn truth_records_every_pulse_within_jitter() {
        let t = train(2.0, 40);
        let (_, truth) = generate_clip(&quiet_spec(vec![t.clone()])).unwrap();
        let times = &truth.intervals[0].pulse_times;
        assert_eq!(times.len(), 40);
        let nominal = 1.0 / t.pulse_rate_hz;
        let slack = 1.0 / 2000.0;
        for w in times.windows(2) {
            let gap = w[1] - w[0];
            assert!((gap - nominal).abs() <= nominal * 0.05 + slack, "{gap}");
        }
        assert!(truth.intervals[0].end_s <= t.max_end_s() + slack);
    }

    /// In-band part via a DFT mask written independently of `band_limit`.
    fn in_band(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut planner = FftPlanner::<f64>::new();
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        planner.plan_fft_forward(n).process(&mut buf);
        for k in 0..n {
            let f = if k <= n / 2 { k } else { n - k } as f64 * 2000.0 / n as f64;
            if !(75.0..=350.0).contains(&f) {
                buf[k] = Complex::new(0.0, 0.0);
            }
        }
        planner.plan_fft_inverse(n).process(&mut buf);
        buf.iter().map(|c| c.re / n as f64).collect()
    }

    #[test]
    fn measured_snr_matches_request() {
        let spec = quiet_spec(vec![train(2.0, 60)]);
        let (with, truth) = generate_clip(&spec).unwrap();
        let (without, _) = generate_clip(&quiet_spec(vec![])).unwrap();
        let pulses: Vec<f64> = with.samples.iter().zip(&without.samples).map(|(a, b)| a - b).collect();
        let pulses = in_band(&pulses);
        let noise = in_band(&without.samples);
        let half = 0.045 / 2.0;
        let mut pulse_samples = Vec::new();
        for &c in &truth.intervals[0].pulse_times {
            let a = ((c - half) * 2000.0).round() as usize;
            pulse_samples.extend_from_slice(&pulses[a..a + 90]);
        }
        let snr = leq_db(&pulse_samples) - leq_db(&noise);
        assert!((snr - 20.0).abs() <= 1.0, "{snr}");
    }

    #[test]
    fn overlapping_trains_are_rejected() {
        let spec = quiet_spec(vec![train(2.0, 20), train(5.0, 10)]);
        assert!(matches!(
            generate_clip(&spec),
            Err(SynthError::OverlappingTrains { first: 0, second: 1 })
        ));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut t = train(2.0, 10);
        t.pulse_rate_hz = 0.0;
        assert!(generate_clip(&quiet_spec(vec![t])).is_err());
        let mut t = train(2.0, 10);
        t.snr_db = f64::NAN;
        assert!(generate_clip(&quiet_spec(vec![t])).is_err());
        assert!(generate_clip(&quiet_spec(vec![train(25.0, 40)])).is_err());
    }

    #[test]
    fn loud_trains_scale_the_clip_down() {
        let mut t = train(2.0, 10);
        t.snr_db = 70.0;
        let (s, truth) = generate_clip(&quiet_spec(vec![t])).unwrap();
        let g = truth.scaled_down.expect("flagged");
        assert!(g < 1.0);
        assert!(s.samples.iter().all(|v| v.abs() <= MAX_PEAK as f32 as f64));
    }

    #[test]
    fn pink_noise_has_more_low_frequency_power() {
        let mut spec = quiet_spec(vec![]);
        spec.noise.kind = NoiseKind::Pink;
        let (s, _) = generate_clip(&spec).unwrap();
        let low = mean_square(&band_limit(&s.samples, 2000, 10.0, 100.0));
        let high = mean_square(&band_limit(&s.samples, 2000, 900.0, 990.0));
        // Ten times the band center: about 10 dB more power per hertz.
        assert!(10.0 * (low / high).log10() > 6.0);
        assert!((mean_square(&s.samples) / 4e-4 - 1.0).abs() < 0.05);
    }

    #[test]
    fn tones_have_the_requested_level() {
        let mut spec = quiet_spec(vec![]);
        spec.noise.variance = 0.0;
        spec.narrowband_tones = vec![ToneSpec {
            freq_hz: 150.0,
            level_db: -30.0,
        }];
        let (s, _) = generate_clip(&spec).unwrap();
        assert!((leq_db(&s.samples) + 30.0).abs() < 0.01);
    }

    #[test]
    fn presets_are_valid() {
        for seed in 0..20 {
            for name in Preset::NAMES {
                let spec = preset_spec(Preset::parse(name).unwrap(), seed);
                spec.validate().unwrap();
            }
        }
    }

    #[test]
    fn spec_parses_from_toml() {
        let text = r#"
            sample_rate = 2000
            duration_s = 20.0
            seed = 9
            [noise]
            kind = "pink"
            [[trains]]
            start_s = 1.0
            pulse_rate_hz = 3.0
            n_pulses = 10
            pulse_dur_s = 0.05
            band = [100.0, 300.0]
            snr_db = 15.0
        "#;
        let spec: SynthSpec = toml::from_str(text).unwrap();
        assert_eq!(spec.noise.kind, NoiseKind::Pink);
        assert_eq!(spec.trains[0].label, Label::Minke);
        spec.validate().unwrap();
    }
}
