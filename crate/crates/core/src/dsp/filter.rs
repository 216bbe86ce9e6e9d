//! Linear-phase bandpass FIR design by the window method.
//!
//! The ideal bandpass response, with cutoffs at the middle of each transition
//! band, is truncated by a Dolph-Chebyshev window. The window's sidelobe level
//! is set from the tighter of the stopband attenuation and the passband ripple
//! requirement; the tap count starts from the usual transition-width estimate
//! and grows until the response measured on a dense grid meets the spec.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::window::dolph_chebyshev;
use super::DspError;
use crate::audio::SignalSlice;

/// Largest kernel the designer will produce.
pub const MAX_TAPS: usize = 4001;

/// Number of FFT points used to measure the response; yields
/// `RESPONSE_FFT_LEN / 2 + 1` grid points over `[0, fs/2]`.
pub const RESPONSE_FFT_LEN: usize = 8192;

// Extra window attenuation on top of the requirement. Both transition
// edges leak into the passband, so the window needs some headroom.
const ATTENUATION_MARGIN_DB: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSpec {
    pub pass_lo_hz: f64,
    pub pass_hi_hz: f64,
    pub stop_attenuation_db: f64,
    pub transition_hz: f64,
    pub passband_ripple_db: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            pass_lo_hz: 75.0,
            pass_hi_hz: 350.0,
            stop_attenuation_db: 30.0,
            transition_hz: 40.0,
            passband_ripple_db: 0.1,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self, sample_rate: u32) -> Result<(), DspError> {
        let nyquist = sample_rate as f64 / 2.0;
        let ok = self.pass_lo_hz > 0.0
            && self.pass_lo_hz < self.pass_hi_hz
            && self.pass_hi_hz < nyquist
            && self.transition_hz > 0.0
            && self.stop_attenuation_db >= 0.0
            && self.passband_ripple_db > 0.0
            && [
                self.pass_lo_hz,
                self.pass_hi_hz,
                self.transition_hz,
                self.stop_attenuation_db,
                self.passband_ripple_db,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(DspError::InvalidFilterSpec {
                spec: *self,
                sample_rate,
            })
        }
    }

    /// Lower stopband edge, or `None` when the transition reaches DC.
    pub fn stop_lo_hz(&self) -> Option<f64> {
        let f = self.pass_lo_hz - self.transition_hz;
        (f > 0.0).then_some(f)
    }

    /// Upper stopband edge, or `None` when the transition reaches Nyquist.
    pub fn stop_hi_hz(&self, sample_rate: u32) -> Option<f64> {
        let f = self.pass_hi_hz + self.transition_hz;
        (f < sample_rate as f64 / 2.0).then_some(f)
    }

    /// Sidelobe level the window must reach to satisfy both bands.
    fn window_attenuation_db(&self) -> f64 {
        let delta = 10f64.powf(self.passband_ripple_db / 20.0) - 1.0;
        let ripple_atten = -20.0 * delta.log10();
        self.stop_attenuation_db.max(ripple_atten) + ATTENUATION_MARGIN_DB
    }
}

/// Worst-case figures of a measured response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseCheck {
    /// Highest gain anywhere in the stopbands, dB.
    pub max_stopband_db: f64,
    /// Largest |gain| deviation from 0 dB in the passband.
    pub max_passband_dev_db: f64,
    pub grid_points: usize,
}

impl ResponseCheck {
    pub fn meets(&self, spec: &FilterSpec) -> bool {
        self.max_stopband_db <= -spec.stop_attenuation_db
            && self.max_passband_dev_db <= spec.passband_ripple_db
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterKernel {
    pub taps: Vec<f64>,
    pub group_delay_samples: usize,
    pub spec: FilterSpec,
    pub sample_rate: u32,
    pub response: ResponseCheck,
}

/// Magnitude response of `taps` at `fft_len / 2 + 1` evenly spaced
/// frequencies from DC to Nyquist.
pub fn magnitude_response(taps: &[f64], fft_len: usize) -> Vec<f64> {
    assert!(taps.len() <= fft_len);
    let mut buf: Vec<Complex<f64>> = taps.iter().map(|&t| Complex::new(t, 0.0)).collect();
    buf.resize(fft_len, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(fft_len).process(&mut buf);
    buf[..=fft_len / 2].iter().map(|c| c.norm()).collect()
}

/// Measures passband deviation and stopband gain on the response grid.
pub fn check_response(taps: &[f64], spec: &FilterSpec, sample_rate: u32) -> ResponseCheck {
    let mag = magnitude_response(taps, RESPONSE_FFT_LEN);
    let df = sample_rate as f64 / RESPONSE_FFT_LEN as f64;
    let stop_lo = spec.stop_lo_hz();
    let stop_hi = spec.stop_hi_hz(sample_rate);
    let mut max_stop = f64::NEG_INFINITY;
    let mut max_dev: f64 = 0.0;
    for (i, &m) in mag.iter().enumerate() {
        let f = i as f64 * df;
        let db = 20.0 * m.max(1e-300).log10();
        if f >= spec.pass_lo_hz && f <= spec.pass_hi_hz {
            max_dev = max_dev.max(db.abs());
        } else if stop_lo.is_some_and(|s| f <= s) || stop_hi.is_some_and(|s| f >= s) {
            max_stop = max_stop.max(db);
        }
    }
    ResponseCheck {
        max_stopband_db: max_stop,
        max_passband_dev_db: max_dev,
        grid_points: mag.len(),
    }
}

fn windowed_bandpass(len: usize, lo_hz: f64, hi_hz: f64, sample_rate: u32, atten_db: f64) -> Vec<f64> {
    let w_lo = 2.0 * PI * lo_hz / sample_rate as f64;
    let w_hi = 2.0 * PI * hi_hz / sample_rate as f64;
    let center = (len / 2) as f64;
    dolph_chebyshev(len, atten_db)
        .into_iter()
        .enumerate()
        .map(|(n, w)| {
            let x = n as f64 - center;
            let ideal = if x == 0.0 {
                (w_hi - w_lo) / PI
            } else {
                ((w_hi * x).sin() - (w_lo * x).sin()) / (PI * x)
            };
            w * ideal
        })
        .collect()
}

/// Designs a linear-phase bandpass kernel meeting `spec` at `sample_rate`.
pub fn design_bandpass(spec: &FilterSpec, sample_rate: u32) -> Result<FilterKernel, DspError> {
    spec.validate(sample_rate)?;
    let nyquist = sample_rate as f64 / 2.0;
    let atten = spec.window_attenuation_db();
    let lo_cut = (spec.pass_lo_hz - spec.transition_hz / 2.0).max(0.0);
    let hi_cut = (spec.pass_hi_hz + spec.transition_hz / 2.0).min(nyquist);

    let transition = 2.0 * PI * spec.transition_hz / sample_rate as f64;
    let estimate = ((atten - 8.0) / (2.285 * transition)).ceil().max(1.0) as usize + 1;
    let mut len = estimate | 1;
    if len > MAX_TAPS {
        return Err(DspError::InfeasibleSpec {
            spec: *spec,
            taps_needed: len,
        });
    }

    loop {
        let taps = windowed_bandpass(len, lo_cut, hi_cut, sample_rate, atten);
        let response = check_response(&taps, spec, sample_rate);
        if response.meets(spec) {
            return Ok(FilterKernel {
                group_delay_samples: len / 2,
                taps,
                spec: *spec,
                sample_rate,
                response,
            });
        }
        if len == MAX_TAPS {
            return Err(DspError::InfeasibleSpec {
                spec: *spec,
                taps_needed: MAX_TAPS + 2,
            });
        }
        len = (len + (len / 8).max(2)).min(MAX_TAPS) | 1;
    }
}

/// Filters a slice, returning an output of the same length aligned to the
/// input timeline (the kernel's group delay is removed).
pub fn apply_filter(slice: &SignalSlice, kernel: &FilterKernel) -> Result<SignalSlice, DspError> {
    if slice.sample_rate != kernel.sample_rate {
        return Err(DspError::RateMismatch {
            slice: slice.sample_rate,
            kernel: kernel.sample_rate,
        });
    }
    Ok(slice.with_samples(convolve_same(&slice.samples, &kernel.taps, kernel.group_delay_samples)))
}

/// `y[i] = sum_k h[k] * x[i + delay - k]`, zero outside `x`.
fn convolve_same(x: &[f64], h: &[f64], delay: usize) -> Vec<f64> {
    let n = x.len();
    let taps = h.len();
    (0..n)
        .map(|i| {
            let top = i + delay; // index into x for k = 0
            let k_lo = top.saturating_sub(n - 1);
            let k_hi = taps.min(top + 1);
            (k_lo..k_hi).map(|k| h[k] * x[top - k]).sum()
        })
        .collect()
}
