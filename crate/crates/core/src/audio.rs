//! PCM WAV decoding and the sliding analysis window.
//!
//! Streams are decoded to normalized `f64` amplitudes from one selected
//! channel. Slices are cut on the sample grid: start offsets are integer
//! multiples of the hop length, and a trailing partial window is kept
//! (zero-padded) only when real samples cover at least half of it.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("{path}: unsupported format: {detail}")]
    UnsupportedFormat { path: String, detail: String },
    #[error("{path}: channel {requested} out of range (file has {available})")]
    ChannelOutOfRange {
        path: String,
        requested: usize,
        available: usize,
    },
    #[error("{path}: corrupt header or data: {detail}")]
    CorruptHeader { path: String, detail: String },
    #[error("{path}: sample {index} is not a finite value in [-1, 1]")]
    SampleOutOfRange { path: String, index: usize },
    #[error("empty stream")]
    EmptyStream,
    #[error("invalid slicing parameters: window {window_s} s, hop {hop_s} s")]
    InvalidWindow { window_s: f64, hop_s: f64 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A decoded mono stream.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioStream {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub channel_index: usize,
    pub source_path: String,
    pub start_epoch: Option<f64>,
}

impl AudioStream {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            channel_index: 0,
            source_path: String::new(),
            start_epoch: None,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn hours(&self) -> f64 {
        self.duration_s() / 3600.0
    }
}

/// One analysis window cut from a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSlice {
    /// Position of the slice in the stream's slice sequence.
    pub index: usize,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    /// Seconds from the start of the stream.
    pub start_time: f64,
    pub duration: f64,
}

impl SignalSlice {
    pub fn new(index: usize, samples: Vec<f64>, sample_rate: u32, start_time: f64) -> Self {
        let duration = samples.len() as f64 / sample_rate as f64;
        Self {
            index,
            samples,
            sample_rate,
            start_time,
            duration,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same slice geometry with new sample values.
    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            index: self.index,
            samples,
            sample_rate: self.sample_rate,
            start_time: self.start_time,
            duration: self.duration,
        }
    }
}

fn path_string(path: &Path) -> String {
    path.display().to_string()
}

fn map_hound(path: &Path, err: hound::Error) -> AudioError {
    let path = path_string(path);
    match err {
        hound::Error::IoError(source) => {
            if source.kind() == std::io::ErrorKind::UnexpectedEof {
                AudioError::CorruptHeader {
                    path,
                    detail: "unexpected end of file".into(),
                }
            } else {
                AudioError::Io { path, source }
            }
        }
        hound::Error::Unsupported => AudioError::UnsupportedFormat {
            path,
            detail: "not an integer or 32-bit float PCM file".into(),
        },
        hound::Error::FormatError(detail) => AudioError::CorruptHeader {
            path,
            detail: detail.into(),
        },
        other => AudioError::CorruptHeader {
            path,
            detail: other.to_string(),
        },
    }
}

/// Decodes one channel of a PCM WAV file into a normalized stream.
///
/// Integer PCM of 8, 16, 24 or 32 bits is scaled by `2^(bits-1)`; 32-bit float
/// samples are taken as-is and must already lie in `[-1, 1]`.
pub fn open_audio(path: impl AsRef<Path>, channel: usize) -> Result<AudioStream, AudioError> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channel >= channels {
        return Err(AudioError::ChannelOutOfRange {
            path: path_string(path),
            requested: channel,
            available: channels,
        });
    }
    if spec.sample_rate == 0 {
        return Err(AudioError::CorruptHeader {
            path: path_string(path),
            detail: "sample rate is zero".into(),
        });
    }

    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .skip(channel)
                .step_by(channels)
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(|e| map_hound(path, e))?
        }
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .skip(channel)
            .step_by(channels)
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (format, bits) => {
            return Err(AudioError::UnsupportedFormat {
                path: path_string(path),
                detail: format!("{bits}-bit {format:?} samples"),
            })
        }
    };

    if let Some(index) = samples
        .iter()
        .position(|s| !s.is_finite() || s.abs() > 1.0)
    {
        return Err(AudioError::SampleOutOfRange {
            path: path_string(path),
            index,
        });
    }

    Ok(AudioStream {
        samples,
        sample_rate: spec.sample_rate,
        channel_index: channel,
        source_path: path_string(path),
        start_epoch: None,
    })
}

/// Writes a mono stream as 32-bit float PCM.
///
/// Samples are narrowed to `f32`; streams whose samples are already
/// `f32`-representable read back bit-identical through [`open_audio`].
pub fn write_wav(path: impl AsRef<Path>, stream: &AudioStream) -> Result<(), AudioError> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: stream.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in &stream.samples {
        writer
            .write_sample(s as f32)
            .map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

/// Window and hop lengths in samples for a given rate.
pub fn window_lengths(sample_rate: u32, window_s: f64, hop_s: f64) -> Result<(usize, usize), AudioError> {
    let invalid = AudioError::InvalidWindow { window_s, hop_s };
    if !(window_s.is_finite() && hop_s.is_finite()) || hop_s <= 0.0 || hop_s > window_s {
        return Err(invalid);
    }
    let window = (window_s * sample_rate as f64).round() as usize;
    let hop = (hop_s * sample_rate as f64).round() as usize;
    if window == 0 || hop == 0 || hop > window {
        return Err(invalid);
    }
    Ok((window, hop))
}

/// Number of slices `slice_windows` produces for a stream of `len` samples.
pub fn slice_count(len: usize, window: usize, hop: usize) -> usize {
    // Start offsets t = k*hop with 2*(len - t) >= window.
    if 2 * len < window {
        return 0;
    }
    let last_start = len - window.div_ceil(2);
    last_start / hop + 1
}

/// Cuts a stream into overlapping fixed-length slices.
pub fn slice_windows(
    stream: &AudioStream,
    window_s: f64,
    hop_s: f64,
) -> Result<Vec<SignalSlice>, AudioError> {
    if stream.samples.is_empty() {
        return Err(AudioError::EmptyStream);
    }
    let (window, hop) = window_lengths(stream.sample_rate, window_s, hop_s)?;
    let count = slice_count(stream.samples.len(), window, hop);
    let rate = stream.sample_rate as f64;
    Ok((0..count)
        .map(|k| {
            let start = k * hop;
            let end = (start + window).min(stream.samples.len());
            let mut samples = Vec::with_capacity(window);
            samples.extend_from_slice(&stream.samples[start..end]);
            samples.resize(window, 0.0);
            SignalSlice {
                index: k,
                samples,
                sample_rate: stream.sample_rate,
                start_time: start as f64 / rate,
                duration: window as f64 / rate,
            }
        })
        .collect())
}
