//! Cropped power spectrogram.
//!
//! Each frame of `nfft` samples is multiplied by the analysis window and
//! transformed; the stored power is `|X[k]|^2 / nfft` for the one-sided bins
//! `k = 0..=nfft/2`. Under this normalization a frame satisfies
//! `P[0] + P[nfft/2] + 2 * sum(P[1..nfft/2]) == sum((w * x)^2)`.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::window::WindowKind;
use super::DspError;
use crate::audio::SignalSlice;
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftParams {
    pub nfft: usize,
    #[serde(rename = "window")]
    pub window_kind: WindowKind,
    pub hop_samples: usize,
}

impl Default for StftParams {
    /// 512-point Blackman frames advanced by 8% of the frame (41 samples).
    fn default() -> Self {
        let nfft = 512;
        Self {
            nfft,
            window_kind: WindowKind::Blackman,
            hop_samples: (0.08 * nfft as f64).round() as usize,
        }
    }
}

impl StftParams {
    pub fn validate(&self) -> Result<(), DspError> {
        if !self.nfft.is_power_of_two() || self.nfft < 2 || self.hop_samples == 0 || self.hop_samples > self.nfft {
            return Err(DspError::InvalidStftParams(*self));
        }
        Ok(())
    }

    pub fn time_bin_s(&self, sample_rate: u32) -> f64 {
        self.hop_samples as f64 / sample_rate as f64
    }

    pub fn freq_bin_hz(&self, sample_rate: u32) -> f64 {
        sample_rate as f64 / self.nfft as f64
    }

    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.nfft {
            0
        } else {
            (len - self.nfft) / self.hop_samples + 1
        }
    }
}

/// Time-frequency placement shared by the spectrogram and its derived images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TfGeometry {
    pub time_bin_s: f64,
    pub freq_bin_hz: f64,
    /// Frequency of column 0.
    pub f0_hz: f64,
    /// Start of the slice the image was computed from (stream seconds).
    pub start_time: f64,
    /// Offset of frame 0's center from `start_time`.
    pub frame_offset_s: f64,
}

impl TfGeometry {
    /// Stream time of the center of frame `row`.
    pub fn frame_time(&self, row: usize) -> f64 {
        self.start_time + self.frame_offset_s + row as f64 * self.time_bin_s
    }

    pub fn bin_freq(&self, col: usize) -> f64 {
        self.f0_hz + col as f64 * self.freq_bin_hz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// Rows are frames, columns are retained frequency bins.
    pub power: Grid<f64>,
    pub geometry: TfGeometry,
}

impl Spectrogram {
    pub fn time_bin_s(&self) -> f64 {
        self.geometry.time_bin_s
    }

    pub fn freq_bin_hz(&self) -> f64 {
        self.geometry.freq_bin_hz
    }

    pub fn f0_hz(&self) -> f64 {
        self.geometry.f0_hz
    }
}

/// One-sided bin indices `k` with `f_lo <= k * df <= f_hi`.
pub fn crop_bins(nfft: usize, sample_rate: u32, f_lo: f64, f_hi: f64) -> std::ops::RangeInclusive<usize> {
    let df = sample_rate as f64 / nfft as f64;
    let first = (f_lo / df).ceil().max(0.0) as usize;
    let last = ((f_hi / df).floor() as usize).min(nfft / 2);
    first..=last
}

pub fn compute_spectrogram(
    slice: &SignalSlice,
    params: &StftParams,
    crop: (f64, f64),
) -> Result<Spectrogram, DspError> {
    params.validate()?;
    let (f_lo, f_hi) = crop;
    let nyquist = slice.sample_rate as f64 / 2.0;
    if !(f_lo >= 0.0 && f_lo < f_hi && f_hi <= nyquist) {
        return Err(DspError::CropOutOfRange { f_lo, f_hi, nyquist });
    }
    let bins = crop_bins(params.nfft, slice.sample_rate, f_lo, f_hi);
    if bins.is_empty() {
        return Err(DspError::CropOutOfRange { f_lo, f_hi, nyquist });
    }
    if slice.len() < params.nfft {
        return Err(DspError::SliceTooShort {
            len: slice.len(),
            nfft: params.nfft,
        });
    }

    let nfft = params.nfft;
    let frames = params.frame_count(slice.len());
    let cols = bins.end() - bins.start() + 1;
    let window = params.window_kind.coefficients(nfft);
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let scale = 1.0 / nfft as f64;

    let mut power = Vec::with_capacity(frames * cols);
    for frame in 0..frames {
        let start = frame * params.hop_samples;
        for (b, (&x, &w)) in buf
            .iter_mut()
            .zip(slice.samples[start..start + nfft].iter().zip(&window))
        {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        power.extend(buf[bins.clone()].iter().map(|c| c.norm_sqr() * scale));
    }

    let df = params.freq_bin_hz(slice.sample_rate);
    Ok(Spectrogram {
        power: Grid::from_vec(frames, cols, power),
        geometry: TfGeometry {
            time_bin_s: params.time_bin_s(slice.sample_rate),
            freq_bin_hz: df,
            f0_hz: *bins.start() as f64 * df,
            start_time: slice.start_time,
            frame_offset_s: nfft as f64 / (2.0 * slice.sample_rate as f64),
        },
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn slice(samples: Vec<f64>) -> SignalSlice {
        SignalSlice::new(0, samples, 2000, 0.0)
    }

    #[test]
    fn default_geometry_at_2khz() {
        let p = StftParams::default();
        assert_eq!(p.hop_samples, 41);
        assert_eq!(p.time_bin_s(2000), 0.0205);
        assert_eq!(p.freq_bin_hz(2000), 3.90625);
    }

    #[test]
    fn shape_and_crop() {
        let s = slice(vec![0.0; 60_000]);
        let spec = compute_spectrogram(&s, &StftParams::default(), (75.0, 350.0)).unwrap();
        assert_eq!(spec.power.rows(), (60_000 - 512) / 41 + 1);
        // Bins 20 (78.125 Hz) through 89 (347.66 Hz).
        assert_eq!(spec.power.cols(), 70);
        assert_eq!(spec.f0_hz(), 78.125);
        assert!(spec.power.as_slice().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn bin_center_tone_peaks_at_its_bin() {
        let f = 100.0 * 2000.0 / 512.0;
        let s = slice((0..4096).map(|n| (2.0 * PI * f * n as f64 / 2000.0).cos()).collect());
        let spec = compute_spectrogram(&s, &StftParams::default(), (0.0, 1000.0)).unwrap();
        for row in spec.power.iter_rows() {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, 100);
        }
    }

    #[test]
    fn parseval_on_a_single_frame() {
        let x: Vec<f64> = (0..512).map(|n| ((n * 7919) % 113) as f64 / 113.0 - 0.5).collect();
        let params = StftParams::default();
        let spec = compute_spectrogram(&slice(x.clone()), &params, (0.0, 1000.0)).unwrap();
        assert_eq!(spec.power.rows(), 1);
        let p = spec.power.row(0);
        let onesided = p[0] + p[256] + 2.0 * p[1..256].iter().sum::<f64>();
        let w = params.window_kind.coefficients(512);
        let energy: f64 = x.iter().zip(&w).map(|(a, b)| (a * b) * (a * b)).sum();
        assert!((onesided - energy).abs() <= 1e-10 * energy);
    }

    #[test]
    fn errors() {
        let short = slice(vec![0.0; 100]);
        assert!(matches!(
            compute_spectrogram(&short, &StftParams::default(), (75.0, 350.0)),
            Err(DspError::SliceTooShort { .. })
        ));
        let s = slice(vec![0.0; 1000]);
        assert!(matches!(
            compute_spectrogram(&s, &StftParams::default(), (75.0, 1200.0)),
            Err(DspError::CropOutOfRange { .. })
        ));
        let bad = StftParams {
            nfft: 500,
            ..StftParams::default()
        };
        assert!(compute_spectrogram(&s, &bad, (75.0, 350.0)).is_err());
    }
}
