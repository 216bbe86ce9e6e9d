//! Slice conditioning: bandpass filtering and the cropped power spectrogram.

mod filter;
mod stft;
pub mod window;

use thiserror::Error;

pub use filter::{
    apply_filter, check_response, design_bandpass, magnitude_response, FilterKernel, FilterSpec,
    ResponseCheck, MAX_TAPS, RESPONSE_FFT_LEN,
};
pub use stft::{compute_spectrogram, crop_bins, Spectrogram, StftParams, TfGeometry};
pub use window::WindowKind;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid filter spec {spec:?} at {sample_rate} Hz")]
    InvalidFilterSpec { spec: FilterSpec, sample_rate: u32 },
    #[error("filter spec {spec:?} needs about {taps_needed} taps (limit {MAX_TAPS})")]
    InfeasibleSpec { spec: FilterSpec, taps_needed: usize },
    #[error("kernel designed for {kernel} Hz applied to a {slice} Hz slice")]
    RateMismatch { slice: u32, kernel: u32 },
    #[error("invalid STFT parameters {0:?}")]
    InvalidStftParams(StftParams),
    #[error("slice of {len} samples is shorter than one {nfft}-point frame")]
    SliceTooShort { len: usize, nfft: usize },
    #[error("crop band [{f_lo}, {f_hi}] Hz outside [0, {nyquist}] Hz or empty")]
    CropOutOfRange { f_lo: f64, f_hi: f64, nyquist: f64 },
}
