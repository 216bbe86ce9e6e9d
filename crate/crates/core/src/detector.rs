//! Energy projection, peak picking and the pulse-train rule set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::SignalSlice;
use crate::binarize::{self, BinaryImage, MaskLevel};
use crate::config::PipelineConfig;
use crate::dsp::{self, DspError, FilterKernel, TfGeometry};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("invalid pulse rules: {0}")]
    InvalidRules(String),
}

/// Count of white pixels per time bin.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyProjection {
    pub values: Vec<u32>,
    pub geometry: TfGeometry,
}

impl EnergyProjection {
    pub fn time_bin_s(&self) -> f64 {
        self.geometry.time_bin_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakList {
    pub indices: Vec<usize>,
    pub heights: Vec<u32>,
    pub threshold: f64,
}

impl PeakList {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseRules {
    /// Projection level a maximum must exceed.
    pub threshold: f64,
    pub min_peaks: usize,
    pub max_peaks: usize,
    /// Shortest accepted inter-pulse interval, seconds.
    pub ipi_lo_s: f64,
    /// Longest accepted inter-pulse interval, seconds.
    pub ipi_hi_s: f64,
    /// Fraction of consecutive gaps that must fall in the IPI band.
    pub ipi_conformity: f64,
}

impl Default for PulseRules {
    fn default() -> Self {
        Self {
            threshold: 6.0,
            min_peaks: 8,
            // 30 s at 4.5 pulses/s.
            max_peaks: 135,
            ipi_lo_s: 1.0 / 4.5,
            ipi_hi_s: 1.0 / 2.8,
            ipi_conformity: 0.6,
        }
    }
}

impl PulseRules {
    pub fn validate(&self) -> Result<(), DetectError> {
        let problem = if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            Some("threshold must be finite and >= 0")
        } else if !(self.ipi_lo_s > 0.0 && self.ipi_lo_s < self.ipi_hi_s && self.ipi_hi_s.is_finite()) {
            Some("need 0 < ipi_lo_s < ipi_hi_s")
        } else if self.min_peaks == 0 || self.min_peaks > self.max_peaks {
            Some("need 0 < min_peaks <= max_peaks")
        } else if !(self.ipi_conformity > 0.0 && self.ipi_conformity <= 1.0) {
            Some("ipi_conformity must be in (0, 1]")
        } else {
            None
        };
        match problem {
            Some(msg) => Err(DetectError::InvalidRules(msg.into())),
            None => Ok(()),
        }
    }
}

/// Why a slice's peaks did not form a pulse train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rejection {
    TooFew,
    TooMany,
    IpiNonconforming,
}

impl Rejection {
    pub fn code(self) -> &'static str {
        match self {
            Rejection::TooFew => "too-few",
            Rejection::TooMany => "too-many",
            Rejection::IpiNonconforming => "ipi-nonconforming",
        }
    }
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// A detected region of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseTrainEvent {
    pub slice_id: usize,
    /// Stream time of the first accepted peak.
    pub start_time: f64,
    /// Stream time of the last accepted peak.
    pub end_time: f64,
    pub peak_times: Vec<f64>,
    pub peak_heights: Vec<u32>,
    pub f_lo: f64,
    pub f_hi: f64,
    pub time_bin_s: f64,
    pub score: Option<f64>,
}

impl PulseTrainEvent {
    pub fn n_peaks(&self) -> usize {
        self.peak_times.len()
    }

    pub fn span(&self) -> f64 {
        self.end_time - self.start_time
    }
}

pub fn energy_projection(bw: &BinaryImage) -> EnergyProjection {
    EnergyProjection {
        values: bw
            .bits
            .iter_rows()
            .map(|row| row.iter().filter(|&&b| b).count() as u32)
            .collect(),
        geometry: bw.geometry,
    }
}

/// Supra-threshold local maxima. A run of equal values is a maximum when
/// both of its outside neighbours (where they exist) are strictly lower; the
/// run is reported at its first index.
pub fn find_local_maxima(p: &EnergyProjection, threshold: f64) -> PeakList {
    let v = &p.values;
    let mut indices = Vec::new();
    let mut heights = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        let rises_in = i == 0 || v[i - 1] < v[i];
        let falls_out = j + 1 == v.len() || v[j + 1] < v[j];
        if rises_in && falls_out && f64::from(v[i]) > threshold {
            indices.push(i);
            heights.push(v[i]);
        }
        i = j + 1;
    }
    PeakList {
        indices,
        heights,
        threshold,
    }
}

/// Fraction of consecutive peak gaps inside the widened IPI band.
pub fn ipi_conformity(gaps_s: &[f64], rules: &PulseRules, time_bin_s: f64) -> f64 {
    if gaps_s.is_empty() {
        return 1.0;
    }
    let lo = rules.ipi_lo_s - time_bin_s;
    let hi = rules.ipi_hi_s + time_bin_s;
    let ok = gaps_s.iter().filter(|&&g| g >= lo && g <= hi).count();
    ok as f64 / gaps_s.len() as f64
}

pub fn apply_pulse_train_rules(
    peaks: &PeakList,
    rules: &PulseRules,
    geometry: &TfGeometry,
    slice_id: usize,
) -> Result<PulseTrainEvent, Rejection> {
    let n = peaks.len();
    if n < rules.min_peaks {
        return Err(Rejection::TooFew);
    }
    if n > rules.max_peaks {
        return Err(Rejection::TooMany);
    }
    let tb = geometry.time_bin_s;
    let gaps: Vec<f64> = peaks
        .indices
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 * tb)
        .collect();
    if ipi_conformity(&gaps, rules, tb) < rules.ipi_conformity {
        return Err(Rejection::IpiNonconforming);
    }
    let peak_times: Vec<f64> = peaks.indices.iter().map(|&i| geometry.frame_time(i)).collect();
    Ok(PulseTrainEvent {
        slice_id,
        start_time: peak_times[0],
        end_time: peak_times[n - 1],
        peak_times,
        peak_heights: peaks.heights.clone(),
        // Callers narrow these to the crop band or measured extents.
        f_lo: geometry.f0_hz,
        f_hi: geometry.f0_hz,
        time_bin_s: tb,
        score: None,
    })
}

/// Everything the detection chain produced for one slice.
#[derive(Debug, Clone)]
pub struct SliceAnalysis {
    pub slice_id: usize,
    pub start_time: f64,
    pub filtered: SignalSlice,
    pub binary: BinaryImage,
    pub mask: MaskLevel,
    pub projection: EnergyProjection,
    pub peaks: PeakList,
    pub outcome: Result<PulseTrainEvent, Rejection>,
}

/// The per-slice detection chain with its filter designed once.
#[derive(Debug, Clone)]
pub struct Detector {
    config: PipelineConfig,
    kernel: FilterKernel,
}

impl Detector {
    pub fn new(config: &PipelineConfig, sample_rate: u32) -> Result<Self, DetectError> {
        config.detector.validate()?;
        config.stft.validate()?;
        let kernel = dsp::design_bandpass(&config.filter, sample_rate)?;
        Ok(Self {
            config: *config,
            kernel,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn kernel(&self) -> &FilterKernel {
        &self.kernel
    }

    pub fn sample_rate(&self) -> u32 {
        self.kernel.sample_rate
    }

    pub fn analyze(&self, slice: &SignalSlice) -> Result<SliceAnalysis, DetectError> {
        let cfg = &self.config;
        let filtered = dsp::apply_filter(slice, &self.kernel)?;
        let spec = dsp::compute_spectrogram(&filtered, &cfg.stft, (cfg.crop.lo_hz, cfg.crop.hi_hz))?;
        let (binary, mask) =
            binarize::binarize(&spec, cfg.binarize.dyn_range_db, cfg.binarize.gamma_coefficient);
        let projection = energy_projection(&binary);
        let peaks = find_local_maxima(&projection, cfg.detector.threshold);
        let mut outcome =
            apply_pulse_train_rules(&peaks, &cfg.detector, &binary.geometry, slice.index);
        if let Ok(event) = &mut outcome {
            event.f_lo = cfg.crop.lo_hz;
            event.f_hi = cfg.crop.hi_hz;
        }
        Ok(SliceAnalysis {
            slice_id: slice.index,
            start_time: slice.start_time,
            filtered,
            binary,
            mask,
            projection,
            peaks,
            outcome,
        })
    }

    pub fn detect_slice(&self, slice: &SignalSlice) -> Result<Vec<PulseTrainEvent>, DetectError> {
        Ok(self.analyze(slice)?.outcome.into_iter().collect())
    }
}

/// Runs the full chain on one slice, designing the filter for its rate.
pub fn detect_slice(slice: &SignalSlice, config: &PipelineConfig) -> Result<Vec<PulseTrainEvent>, DetectError> {
    Detector::new(config, slice.sample_rate)?.detect_slice(slice)
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

/// Groups events (sorted by start time) whose spans overlap by at least half
/// of the shorter span. Each group is compared against the running union
/// span; returns indices into `events`.
pub fn merge_groups(events: &[PulseTrainEvent]) -> Vec<Vec<usize>> {
    let mut groups: Vec<(Vec<usize>, (f64, f64))> = Vec::new();
    for (i, e) in events.iter().enumerate() {
        let span = (e.start_time, e.end_time);
        if let Some((members, union)) = groups.last_mut() {
            let shorter = (union.1 - union.0).min(span.1 - span.0);
            let shared = overlap(*union, span);
            let same = union.0 == span.0 && union.1 == span.1;
            if same || (shared > 0.0 && shared >= 0.5 * shorter) {
                members.push(i);
                union.0 = union.0.min(span.0);
                union.1 = union.1.max(span.1);
                continue;
            }
        }
        groups.push((vec![i], span));
    }
    groups.into_iter().map(|(members, _)| members).collect()
}

/// Merges one group of events into a single event.
///
/// Peak times are unioned; times closer than half a time bin count as the
/// same peak, keeping the larger height. Provenance and score come from the
/// member with the most peaks (earliest on ties).
pub fn merge_group(events: &[&PulseTrainEvent]) -> PulseTrainEvent {
    assert!(!events.is_empty());
    let rep = events
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.n_peaks().cmp(&b.n_peaks()).then(ib.cmp(ia)))
        .map(|(_, e)| *e)
        .unwrap();
    let half_bin = 0.5 * events.iter().map(|e| e.time_bin_s).fold(f64::INFINITY, f64::min);
    let mut peaks: Vec<(f64, u32)> = events
        .iter()
        .flat_map(|e| e.peak_times.iter().cloned().zip(e.peak_heights.iter().cloned()))
        .collect();
    peaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, u32)> = Vec::with_capacity(peaks.len());
    for (t, h) in peaks {
        match merged.last_mut() {
            Some(last) if t - last.0 < half_bin => last.1 = last.1.max(h),
            _ => merged.push((t, h)),
        }
    }
    PulseTrainEvent {
        slice_id: rep.slice_id,
        start_time: events.iter().map(|e| e.start_time).fold(f64::INFINITY, f64::min),
        end_time: events.iter().map(|e| e.end_time).fold(f64::NEG_INFINITY, f64::max),
        peak_times: merged.iter().map(|p| p.0).collect(),
        peak_heights: merged.iter().map(|p| p.1).collect(),
        f_lo: events.iter().map(|e| e.f_lo).fold(f64::INFINITY, f64::min),
        f_hi: events.iter().map(|e| e.f_hi).fold(f64::NEG_INFINITY, f64::max),
        time_bin_s: rep.time_bin_s,
        score: rep.score,
    }
}

pub fn merge_overlapping_events(events: &[PulseTrainEvent]) -> Vec<PulseTrainEvent> {
    merge_groups(events)
        .into_iter()
        .map(|g| merge_group(&g.iter().map(|&i| &events[i]).collect::<Vec<_>>()))
        .collect()
}
