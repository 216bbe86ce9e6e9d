//! Stream-level processing and the tabular files exchanged between stages.
//!
//! A stream is cut into slices, every slice is analyzed on the rayon pool,
//! features are taken from each accepted slice event, and overlapping events
//! are merged in `(start_time, slice_id)` order. The merged event keeps the
//! features of its representative member.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::audio::{slice_windows, AudioError, AudioStream};
use crate::classifier::ForestModel;
use crate::config::PipelineConfig;
use crate::detector::{merge_groups, merge_group, DetectError, Detector, PulseTrainEvent};
use crate::eval::{self, ConfusionMatrix, EvalError, TruthInterval};
use crate::features::{extract_features, FeatureError, FeatureVector, Label, FEATURE_NAMES};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("{source_path}: {source}")]
    Detector {
        source_path: String,
        #[source]
        source: DetectError,
    },
    #[error("{source_path} slice {slice}: {source}")]
    Slice {
        source_path: String,
        slice: usize,
        #[source]
        source: DetectError,
    },
    #[error("{source_path} slice {slice}: {source}")]
    Features {
        source_path: String,
        slice: usize,
        #[source]
        source: FeatureError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {message}")]
    Table { path: String, message: String },
}

/// A merged event with its features, traceable to a file and slice.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub source: String,
    pub event: PulseTrainEvent,
    pub features: FeatureVector,
}

impl EventRecord {
    pub fn span(&self) -> (f64, f64) {
        (self.event.start_time, self.event.end_time)
    }
}

/// What happened in one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceDiagnostic {
    pub slice_id: usize,
    pub start_time: f64,
    pub gamma: f64,
    pub white_fraction: f64,
    pub max_projection: u32,
    pub n_peaks: usize,
    /// `accepted` or the rejection code.
    pub outcome: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamReport {
    pub source: String,
    pub n_slices: usize,
    pub hours: f64,
    pub events: Vec<EventRecord>,
    pub diagnostics: Vec<SliceDiagnostic>,
    /// Energy projection per slice, when requested.
    pub projections: Option<Vec<Vec<u32>>>,
}

struct SliceResult {
    diagnostic: SliceDiagnostic,
    accepted: Option<(PulseTrainEvent, FeatureVector)>,
    projection: Option<Vec<u32>>,
}

/// Runs detection and feature extraction over a whole stream.
pub fn process_stream(
    stream: &AudioStream,
    config: &PipelineConfig,
    keep_projections: bool,
) -> Result<StreamReport, PipelineError> {
    let source = stream.source_path.clone();
    let detector = Detector::new(config, stream.sample_rate).map_err(|e| PipelineError::Detector {
        source_path: source.clone(),
        source: e,
    })?;
    let slices = slice_windows(stream, config.audio.window_s, config.audio.hop_s)?;

    let results: Vec<SliceResult> = slices
        .par_iter()
        .map(|slice| {
            let a = detector.analyze(slice).map_err(|e| PipelineError::Slice {
                source_path: source.clone(),
                slice: slice.index,
                source: e,
            })?;
            let outcome = match &a.outcome {
                Ok(_) => "accepted",
                Err(r) => r.code(),
            };
            let accepted = match a.outcome {
                Ok(event) => {
                    let fv = extract_features(
                        &event,
                        &a.filtered,
                        &a.binary,
                        config.features.pulse_extent_s,
                        config.stft.hop_samples,
                    )
                    .map_err(|e| PipelineError::Features {
                        source_path: source.clone(),
                        slice: slice.index,
                        source: e,
                    })?;
                    Some((event, fv))
                }
                Err(_) => None,
            };
            Ok(SliceResult {
                diagnostic: SliceDiagnostic {
                    slice_id: slice.index,
                    start_time: slice.start_time,
                    gamma: a.mask.gamma,
                    white_fraction: a.binary.white_fraction(),
                    max_projection: a.projection.values.iter().copied().max().unwrap_or(0),
                    n_peaks: a.peaks.len(),
                    outcome,
                },
                accepted,
                projection: keep_projections.then(|| a.projection.values.clone()),
            })
        })
        .collect::<Result<_, PipelineError>>()?;

    let mut accepted: Vec<(PulseTrainEvent, FeatureVector)> =
        results.iter().filter_map(|r| r.accepted.clone()).collect();
    accepted.sort_by(|a, b| {
        a.0.start_time
            .total_cmp(&b.0.start_time)
            .then(a.0.slice_id.cmp(&b.0.slice_id))
    });
    let events_only: Vec<PulseTrainEvent> = accepted.iter().map(|(e, _)| e.clone()).collect();
    let events = merge_groups(&events_only)
        .into_iter()
        .map(|group| {
            let members: Vec<&PulseTrainEvent> = group.iter().map(|&i| &events_only[i]).collect();
            let merged = merge_group(&members);
            let features = group
                .iter()
                .map(|&i| &accepted[i])
                .find(|(e, _)| e.slice_id == merged.slice_id)
                .map(|(_, f)| *f)
                .expect("representative is a member");
            EventRecord {
                source: source.clone(),
                event: merged,
                features,
            }
        })
        .collect();

    let projections = keep_projections.then(|| results.iter().filter_map(|r| r.projection.clone()).collect());
    Ok(StreamReport {
        source,
        n_slices: results.len(),
        hours: stream.hours(),
        events,
        diagnostics: results.into_iter().map(|r| r.diagnostic).collect(),
        projections,
    })
}

/// Labels events from truth: minke when the event matches a minke interval,
/// non-minke otherwise.
pub fn label_events(events: &mut [EventRecord], truth: &[TruthInterval]) {
    for rec in events {
        let hit = truth
            .iter()
            .any(|t| t.label == Label::Minke && eval::spans_match(rec.span(), (t.start_s, t.end_s)));
        rec.features.label = if hit { Label::Minke } else { Label::NonMinke };
    }
}

/// Scores every event and sets its label from the decision threshold.
pub fn classify_events(events: &mut [EventRecord], model: &ForestModel, threshold: f64) {
    for rec in events {
        let p = model.predict_with_threshold(&rec.features, threshold);
        rec.event.score = Some(p.score);
        rec.features.label = p.label;
    }
}

/// A truth interval with the file it belongs to, when known.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcedTruth {
    pub source: Option<String>,
    pub interval: TruthInterval,
}

/// Matching result over several files.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub matrix: ConfusionMatrix,
    /// Whether each prediction matched a minke interval.
    pub matched: Vec<bool>,
}

/// Matches `(source, span)` predictions to truth file by file.
///
/// When no truth row names a source, every prediction is matched against the
/// whole truth list.
pub fn evaluate_spans(
    pred: &[(String, (f64, f64))],
    truth: &[SourcedTruth],
    n_slices: u64,
) -> Result<Evaluation, EvalError> {
    let sourced = truth.iter().any(|t| t.source.is_some());
    let key = |s: Option<&str>| if sourced { s.unwrap_or("").to_string() } else { String::new() };

    let mut groups: BTreeMap<String, (Vec<usize>, Vec<TruthInterval>)> = BTreeMap::new();
    for (i, (src, _)) in pred.iter().enumerate() {
        groups.entry(key(Some(src))).or_default().0.push(i);
    }
    for t in truth {
        groups
            .entry(key(t.source.as_deref()))
            .or_default()
            .1
            .push(t.interval.clone());
    }

    let mut total = ConfusionMatrix::default();
    let mut matched = vec![false; pred.len()];
    for (idx, intervals) in groups.values() {
        let spans: Vec<(f64, f64)> = idx.iter().map(|&i| pred[i].1).collect();
        let m = eval::match_events_to_truth(&spans, intervals, u64::MAX)?;
        total.tp += m.matrix.tp;
        total.fp += m.matrix.fp;
        total.fn_ += m.matrix.fn_;
        for (&i, hit) in idx.iter().zip(&m.matched) {
            matched[i] = hit.is_some();
        }
    }
    let used = total.tp + total.fp + total.fn_;
    if used > n_slices {
        return Err(EvalError::TooFewSlices {
            events: used,
            slices: n_slices,
        });
    }
    total.tn = n_slices - used;
    Ok(Evaluation { matrix: total, matched })
}

fn table_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Table {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const EVENT_COLUMNS: [&str; 9] = [
    "source", "slice_id", "start_s", "end_s", "n_peaks", "f_lo_hz", "f_hi_hz", "score", "label",
];

/// Writes events with their features. Rows are written in the given order.
pub fn write_events_csv(path: impl AsRef<Path>, events: &[EventRecord]) -> Result<(), PipelineError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| table_err(path, e))?;
    let header: Vec<&str> = EVENT_COLUMNS.iter().copied().chain(FEATURE_NAMES).collect();
    w.write_record(&header).map_err(|e| table_err(path, e))?;
    for rec in events {
        let e = &rec.event;
        let mut row = vec![
            rec.source.clone(),
            e.slice_id.to_string(),
            e.start_time.to_string(),
            e.end_time.to_string(),
            e.n_peaks().to_string(),
            e.f_lo.to_string(),
            e.f_hi.to_string(),
            fmt_opt(e.score),
            rec.features.label.to_string(),
        ];
        row.extend(rec.features.to_array().iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| table_err(path, e))?;
    }
    w.flush().map_err(|e| table_err(path, e))
}

/// One row of an events or features file. Only the feature columns and
/// `label` are required; the rest is kept when present.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRow {
    pub source: Option<String>,
    pub slice_id: Option<usize>,
    pub span: Option<(f64, f64)>,
    pub score: Option<f64>,
    pub features: FeatureVector,
    /// The remaining columns as read, for rewriting the row.
    pub raw: Vec<String>,
}

/// Reads rows written by [`write_events_csv`] or any file with columns
/// `f1..f18,label`.
pub fn read_events_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<EventRow>), PipelineError> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| table_err(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| table_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let feature_cols: Vec<usize> = FEATURE_NAMES
        .iter()
        .map(|n| col(n).ok_or_else(|| table_err(path, format!("missing column {n}"))))
        .collect::<Result<_, _>>()?;
    let label_col = col("label").ok_or_else(|| table_err(path, "missing column label"))?;
    let (source_col, slice_col, start_col, end_col, score_col) =
        (col("source"), col("slice_id"), col("start_s"), col("end_s"), col("score"));

    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| table_err(path, e))?;
        let at = |what: &str| table_err(path, format!("row {}: bad {what}", line + 1));
        let num = |i: usize, what: &str| rec[i].trim().parse::<f64>().map_err(|_| at(what));
        let mut v = [0.0; 18];
        for (k, &c) in feature_cols.iter().enumerate() {
            v[k] = num(c, FEATURE_NAMES[k])?;
            if !v[k].is_finite() {
                return Err(at(FEATURE_NAMES[k]));
            }
        }
        let label = Label::parse(&rec[label_col]).ok_or_else(|| at("label"))?;
        let span = match (start_col, end_col) {
            (Some(a), Some(b)) => Some((num(a, "start_s")?, num(b, "end_s")?)),
            _ => None,
        };
        let score = match score_col {
            Some(c) if !rec[c].trim().is_empty() => Some(num(c, "score")?),
            _ => None,
        };
        let slice_id = match slice_col {
            Some(c) => Some(rec[c].trim().parse().map_err(|_| at("slice_id"))?),
            None => None,
        };
        rows.push(EventRow {
            source: source_col.map(|c| rec[c].to_string()),
            slice_id,
            span,
            score,
            features: FeatureVector::from_array(v, label),
            raw: rec.iter().map(str::to_string).collect(),
        });
    }
    Ok((header, rows))
}

/// Rewrites rows with new `score` and `label` values, adding a `score`
/// column when the input had none.
pub fn write_scored_csv(
    path: impl AsRef<Path>,
    header: &[String],
    rows: &[EventRow],
) -> Result<(), PipelineError> {
    let path = path.as_ref();
    let mut header = header.to_vec();
    let score_col = match header.iter().position(|h| h == "score") {
        Some(c) => c,
        None => {
            header.push("score".into());
            header.len() - 1
        }
    };
    let label_col = header.iter().position(|h| h == "label").expect("label column");
    let mut w = csv::Writer::from_path(path).map_err(|e| table_err(path, e))?;
    w.write_record(&header).map_err(|e| table_err(path, e))?;
    for row in rows {
        let mut raw = row.raw.clone();
        raw.resize(header.len(), String::new());
        raw[score_col] = fmt_opt(row.score);
        raw[label_col] = row.features.label.to_string();
        w.write_record(&raw).map_err(|e| table_err(path, e))?;
    }
    w.flush().map_err(|e| table_err(path, e))
}

/// Reads `start_s,end_s,label` rows with an optional `source` column.
pub fn read_truth_csv(path: impl AsRef<Path>) -> Result<Vec<SourcedTruth>, PipelineError> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| table_err(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| table_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| table_err(path, format!("missing column {name}")))
    };
    let (start, end, label) = (col("start_s")?, col("end_s")?, col("label")?);
    let source = header.iter().position(|h| h == "source");
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| table_err(path, e))?;
        let at = |what: &str| table_err(path, format!("row {}: bad {what}", line + 1));
        out.push(SourcedTruth {
            source: source.map(|c| rec[c].to_string()),
            interval: TruthInterval {
                start_s: rec[start].trim().parse().map_err(|_| at("start_s"))?,
                end_s: rec[end].trim().parse().map_err(|_| at("end_s"))?,
                label: Label::parse(&rec[label]).ok_or_else(|| at("label"))?,
            },
        });
    }
    Ok(out)
}

pub fn write_truth_csv(
    path: impl AsRef<Path>,
    rows: &[(String, crate::synth::TruthTrain)],
) -> Result<(), PipelineError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| table_err(path, e))?;
    w.write_record(["source", "start_s", "end_s", "label", "n_pulses", "pulse_times"])
        .map_err(|e| table_err(path, e))?;
    for (source, t) in rows {
        let times: Vec<String> = t.pulse_times.iter().map(|v| v.to_string()).collect();
        w.write_record([
            source.clone(),
            t.start_s.to_string(),
            t.end_s.to_string(),
            t.label.to_string(),
            t.pulse_times.len().to_string(),
            times.join(" "),
        ])
        .map_err(|e| table_err(path, e))?;
    }
    w.flush().map_err(|e| table_err(path, e))
}

pub fn write_diagnostics_csv(path: impl AsRef<Path>, reports: &[StreamReport]) -> Result<(), PipelineError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| table_err(path, e))?;
    w.write_record([
        "source", "slice_id", "start_s", "gamma", "white_fraction", "max_projection", "n_peaks", "outcome",
    ])
    .map_err(|e| table_err(path, e))?;
    for rep in reports {
        for d in &rep.diagnostics {
            w.write_record([
                rep.source.clone(),
                d.slice_id.to_string(),
                d.start_time.to_string(),
                d.gamma.to_string(),
                d.white_fraction.to_string(),
                d.max_projection.to_string(),
                d.n_peaks.to_string(),
                d.outcome.to_string(),
            ])
            .map_err(|e| table_err(path, e))?;
        }
    }
    w.flush().map_err(|e| table_err(path, e))
}

/// Long format: one row per (slice, time bin).
pub fn write_projections_csv(path: impl AsRef<Path>, reports: &[StreamReport]) -> Result<(), PipelineError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| table_err(path, e))?;
    w.write_record(["source", "slice_id", "bin", "count"])
        .map_err(|e| table_err(path, e))?;
    for rep in reports {
        let Some(projections) = &rep.projections else {
            continue;
        };
        for (d, p) in rep.diagnostics.iter().zip(projections) {
            for (bin, v) in p.iter().enumerate() {
                w.write_record([rep.source.clone(), d.slice_id.to_string(), bin.to_string(), v.to_string()])
                    .map_err(|e| table_err(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| table_err(path, e))
}
