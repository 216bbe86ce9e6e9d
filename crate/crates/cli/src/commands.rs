//! Subcommand bodies.

use std::path::{Path, PathBuf};

use anyhow::anyhow;
use rayon::prelude::*;
use serde_json::json;

use pulsetrain::audio::{open_audio, write_wav};
use pulsetrain::classifier::{load_model, save_model, train_forest, ForestModel};
use pulsetrain::config::{derive_seed, RunConfig, SeedStream};
use pulsetrain::eval::{compute_metrics, roc_auc, split_train_test, ConfusionMatrix, EvalError, RocCurve};
use pulsetrain::features::{FeatureVector, Label};
use pulsetrain::pipeline::{
    classify_events, evaluate_spans, label_events, process_stream, read_events_csv, read_truth_csv,
    write_diagnostics_csv, write_events_csv, write_projections_csv, write_scored_csv, write_truth_csv,
    EventRecord, PipelineError, SourcedTruth, StreamReport,
};
use pulsetrain::synth::{generate_clip, preset_spec, Preset, SynthSpec};

use crate::failure::{Failure, OrData};
use crate::{ClassifyArgs, DetectArgs, EvalArgs, GlobalOpts, InputArgs, RunArgs, SynthArgs, TrainArgs};

type Outcome<T = ()> = Result<T, Failure>;

/// Source, span, predicted label and score of one event.
type Prediction = (String, (f64, f64), Label, Option<f64>);

fn load_config(g: &GlobalOpts) -> Outcome<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(t) = g.threads {
        cfg.threads = t;
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(Failure::data)?;
    Ok(cfg)
}

fn apply_input_flags(cfg: &mut RunConfig, a: &InputArgs) -> Outcome {
    if let Some(c) = a.channel {
        cfg.audio.channel = c;
    }
    if let Some(w) = a.window_s {
        cfg.audio.window_s = w;
    }
    if let Some(h) = a.hop_s {
        cfg.audio.hop_s = h;
    }
    cfg.validate().map_err(Failure::usage)
}

fn checked_threshold(flag: Option<f64>, cfg: &RunConfig) -> Outcome<f64> {
    let t = flag.unwrap_or(cfg.classify.decision_threshold);
    if !(0.0..=1.0).contains(&t) {
        return Err(Failure::usage(format!("threshold must be in [0, 1], got {t}")));
    }
    Ok(t)
}

fn is_wav(p: &Path) -> bool {
    p.is_file()
        && p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// Expands directories to their WAV files, sorted by name.
fn collect_inputs(paths: &[PathBuf]) -> Outcome<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Failure::data(anyhow!("{}: {e}", p.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|f| is_wav(f))
                .collect();
            found.sort();
            files.extend(found);
        } else if p.exists() {
            files.push(p.clone());
        } else {
            return Err(Failure::data(anyhow!("{}: no such file or directory", p.display())));
        }
    }
    if files.is_empty() {
        let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
        return Err(Failure::data(anyhow!("no inputs: no WAV files in {}", names.join(", "))));
    }
    Ok(files)
}

fn analyze(files: &[PathBuf], cfg: &RunConfig, keep_projections: bool) -> Outcome<Vec<StreamReport>> {
    let pipeline = cfg.pipeline();
    files
        .par_iter()
        .map(|f| {
            let stream = open_audio(f, cfg.audio.channel)?;
            process_stream(&stream, &pipeline, keep_projections)
        })
        .collect::<Result<Vec<_>, PipelineError>>()
        .or_data()
}

fn all_events(reports: &[StreamReport]) -> Vec<EventRecord> {
    reports.iter().flat_map(|r| r.events.iter().cloned()).collect()
}

fn summarize(reports: &[StreamReport], n_events: usize) {
    let slices: usize = reports.iter().map(|r| r.n_slices).sum();
    let hours: f64 = reports.iter().map(|r| r.hours).sum();
    eprintln!(
        "{} files, {slices} slices, {hours:.6} h, {n_events} events",
        reports.len()
    );
}

/// Truth rows name files; they are matched on the file name alone.
fn file_key(source: &str) -> String {
    Path::new(source)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| source.to_string())
}

fn keyed_truth(truth: Vec<SourcedTruth>) -> Vec<SourcedTruth> {
    truth
        .into_iter()
        .map(|t| SourcedTruth {
            source: t.source.as_deref().map(file_key),
            interval: t.interval,
        })
        .collect()
}

fn read_truth(path: &Path) -> Outcome<Vec<SourcedTruth>> {
    if !path.is_file() {
        return Err(Failure::data(anyhow!("truth file {} not found", path.display())));
    }
    Ok(keyed_truth(read_truth_csv(path).or_data()?))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Failure::data(anyhow!("{}: {e}", path.display())))
}

fn write_roc(path: &Path, curve: &RocCurve) -> Outcome {
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::data(anyhow!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| Failure::data(anyhow!("{}: {e}", path.display()));
    w.write_record(["threshold", "fpr", "tpr"]).map_err(io)?;
    for p in &curve.points {
        w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Failure::data(anyhow!("{}: {e}", path.display())))
}

/// Scores every prediction against truth; `None` when one class is missing.
fn sweep(
    preds: &[(String, (f64, f64))],
    scores: &[f64],
    truth: &[SourcedTruth],
) -> Outcome<Option<RocCurve>> {
    let labels = evaluate_spans(preds, truth, u64::MAX).or_data()?.matched;
    match roc_auc(scores, &labels) {
        Ok(c) => Ok(Some(c)),
        Err(EvalError::OneClassLabels) => {
            eprintln!("warning: predictions do not cover both classes, no ROC written");
            Ok(None)
        }
        Err(e) => Err(Failure::data(e)),
    }
}

struct Evaluated {
    matrix: ConfusionMatrix,
    report: serde_json::Value,
    roc: Option<RocCurve>,
}

/// Matches minke-labeled predictions against truth and optionally sweeps the scores.
fn evaluate(
    preds: &[Prediction],
    truth: &[SourcedTruth],
    slices: u64,
    hours: Option<f64>,
    with_roc: bool,
) -> Outcome<Evaluated> {
    let positive: Vec<(String, (f64, f64))> = preds
        .iter()
        .filter(|p| p.2 == Label::Minke)
        .map(|p| (file_key(&p.0), p.1))
        .collect();
    let mut matrix = evaluate_spans(&positive, truth, slices).or_data()?.matrix;
    matrix.hours = hours;
    let mut metrics = compute_metrics(&matrix).or_data()?;
    let roc = if with_roc {
        let scores: Option<Vec<f64>> = preds.iter().map(|p| p.3).collect();
        let scores = scores.ok_or_else(|| Failure::data(anyhow!("ROC needs a score on every prediction")))?;
        let all: Vec<(String, (f64, f64))> = preds.iter().map(|p| (file_key(&p.0), p.1)).collect();
        sweep(&all, &scores, truth)?
    } else {
        None
    };
    metrics.auc = roc.as_ref().map(|c| c.auc);
    let report = json!({ "confusion": matrix, "metrics": metrics });
    Ok(Evaluated { matrix, report, roc })
}

pub fn detect(g: &GlobalOpts, a: &DetectArgs) -> Outcome {
    let mut cfg = load_config(g)?;
    apply_input_flags(&mut cfg, &a.inputs)?;
    let truth = a.truth.as_deref().map(read_truth).transpose()?;
    let files = collect_inputs(&a.inputs.input)?;
    let mut reports = analyze(&files, &cfg, a.dump_projections.is_some())?;

    if let Some(truth) = &truth {
        for r in &mut reports {
            let key = file_key(&r.source);
            let intervals: Vec<_> = truth
                .iter()
                .filter(|t| t.source.as_deref().is_none_or(|s| s == key))
                .map(|t| t.interval.clone())
                .collect();
            label_events(&mut r.events, &intervals);
        }
    }

    let events = all_events(&reports);
    write_events_csv(&a.out, &events).or_data()?;
    if let Some(p) = &a.diagnostics {
        write_diagnostics_csv(p, &reports).or_data()?;
    }
    if let Some(p) = &a.dump_projections {
        write_projections_csv(p, &reports).or_data()?;
    }
    summarize(&reports, events.len());
    Ok(())
}

fn holdout_report(model: &ForestModel, test: &[FeatureVector], threshold: f64) -> Outcome<serde_json::Value> {
    let mut cm = ConfusionMatrix::default();
    let mut scores = Vec::with_capacity(test.len());
    let mut labels = Vec::with_capacity(test.len());
    for fv in test {
        let p = model.predict_with_threshold(fv, threshold);
        let truth = fv.label == Label::Minke;
        match (p.label == Label::Minke, truth) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
        scores.push(p.score);
        labels.push(truth);
    }
    let mut metrics = compute_metrics(&cm).or_data()?;
    metrics.auc = roc_auc(&scores, &labels).ok().map(|c| c.auc);
    Ok(json!({ "n_test": test.len(), "threshold": threshold, "confusion": cm, "metrics": metrics }))
}

pub fn train(g: &GlobalOpts, a: &TrainArgs) -> Outcome {
    let cfg = load_config(g)?;
    let threshold = checked_threshold(None, &cfg)?;
    let (_, rows) = read_events_csv(&a.features).or_data()?;
    let data: Vec<FeatureVector> = rows.iter().map(|r| r.features).collect();
    let (train_set, test_set) = if a.holdout {
        let seed = derive_seed(cfg.seed, SeedStream::Split);
        let (tr, te) = split_train_test(&data, cfg.eval.train_fraction, seed).or_data()?;
        (tr, Some(te))
    } else {
        (data, None)
    };
    let model = train_forest(&train_set, &cfg.forest_params()).map_err(|e| Failure::from(e).context("training"))?;
    save_model(&model, &a.out)?;

    let holdout = test_set
        .as_deref()
        .map(|te| holdout_report(&model, te, threshold))
        .transpose()?;
    let report = json!({
        "n_train": train_set.len(),
        "oob_accuracy": model.oob_accuracy,
        "training_fingerprint": model.training_fingerprint,
        "holdout": holdout,
    });
    if let Some(h) = &holdout {
        eprintln!(
            "held out {}: f1 {} auc {}",
            h["n_test"], h["metrics"]["f1"], h["metrics"]["auc"]
        );
    }
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    eprintln!("trained on {} events", train_set.len());
    Ok(())
}

pub fn classify(g: &GlobalOpts, a: &ClassifyArgs) -> Outcome {
    let cfg = load_config(g)?;
    let threshold = checked_threshold(a.threshold, &cfg)?;
    let model = load_model(&a.model)?;
    let (header, mut rows) = read_events_csv(&a.events).or_data()?;
    for row in &mut rows {
        let p = model.predict_with_threshold(&row.features, threshold);
        row.score = Some(p.score);
        row.features.label = p.label;
    }
    write_scored_csv(&a.out, &header, &rows).or_data()?;
    let minke = rows.iter().filter(|r| r.features.label == Label::Minke).count();
    eprintln!("{minke} of {} events classified minke", rows.len());
    Ok(())
}

pub fn eval(g: &GlobalOpts, a: &EvalArgs) -> Outcome {
    load_config(g)?;
    let truth = read_truth(&a.truth)?;
    let (_, rows) = read_events_csv(&a.pred).or_data()?;
    let mut preds = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let span = r
            .span
            .ok_or_else(|| Failure::data(anyhow!("{}: row {} has no start_s/end_s", a.pred.display(), i + 1)))?;
        preds.push((r.source.clone().unwrap_or_default(), span, r.features.label, r.score));
    }
    let with_roc = preds.iter().all(|p| p.3.is_some()) && !preds.is_empty();
    let ev = evaluate(&preds, &truth, a.slices, a.hours, with_roc)?;
    write_json(&a.out, &ev.report)?;
    if let Some(curve) = &ev.roc {
        let path = a
            .roc
            .clone()
            .unwrap_or_else(|| a.out.parent().unwrap_or(Path::new("")).join("roc.csv"));
        write_roc(&path, curve)?;
    }
    let m = &ev.report["metrics"];
    eprintln!(
        "tp {} fp {} fn {} tn {}: tpr {} ppv {} f1 {}",
        ev.matrix.tp, ev.matrix.fp, ev.matrix.fn_, ev.matrix.tn, m["tpr"], m["ppv"], m["f1"]
    );
    Ok(())
}

pub fn synth(g: &GlobalOpts, a: &SynthArgs) -> Outcome {
    let cfg = load_config(g)?;
    if a.count == 0 {
        return Err(Failure::usage("--count must be at least 1"));
    }
    let template: Box<dyn Fn(u64) -> SynthSpec + Sync> = match (&a.spec, &a.preset) {
        (Some(path), _) => {
            if !path.is_file() {
                return Err(Failure::data(anyhow!("synth spec {} not found", path.display())));
            }
            let spec = SynthSpec::load(path)?;
            let base = match g.seed {
                Some(_) => derive_seed(cfg.seed, SeedStream::Synth),
                None => spec.seed,
            };
            Box::new(move |i| SynthSpec {
                seed: base.wrapping_add(i),
                ..spec.clone()
            })
        }
        (None, Some(name)) => {
            let preset = Preset::parse(name).ok_or_else(|| {
                Failure::usage(format!("unknown preset {name}, expected one of {}", Preset::NAMES.join(", ")))
            })?;
            let base = derive_seed(cfg.seed, SeedStream::Synth);
            Box::new(move |i| preset_spec(preset, base.wrapping_add(i)))
        }
        (None, None) => unreachable!("clap requires --spec or --preset"),
    };

    let clips = (0..a.count as u64)
        .into_par_iter()
        .map(|i| generate_clip(&template(i)))
        .collect::<Result<Vec<_>, _>>()?;

    std::fs::create_dir_all(&a.out).map_err(|e| Failure::data(anyhow!("{}: {e}", a.out.display())))?;
    let mut truth_rows = Vec::new();
    for (i, (stream, truth)) in clips.iter().enumerate() {
        let name = format!("clip_{i:04}.wav");
        write_wav(a.out.join(&name), stream).or_data()?;
        if let Some(f) = truth.scaled_down {
            eprintln!("warning: {name} scaled down by {f} to avoid clipping");
        }
        truth_rows.extend(truth.intervals.iter().map(|t| (name.clone(), t.clone())));
    }
    write_truth_csv(a.out.join("truth.csv"), &truth_rows).or_data()?;
    eprintln!("{} clips, {} trains", clips.len(), truth_rows.len());
    Ok(())
}

pub fn run(g: &GlobalOpts, a: &RunArgs) -> Outcome {
    let mut cfg = load_config(g)?;
    apply_input_flags(&mut cfg, &a.inputs)?;
    let threshold = checked_threshold(a.threshold, &cfg)?;
    let model = load_model(&a.model)?;
    let truth = match (a.eval, &a.truth) {
        (true, Some(p)) => Some(read_truth(p)?),
        (true, None) => return Err(Failure::usage("--eval needs --truth")),
        (false, _) => None,
    };
    let files = collect_inputs(&a.inputs.input)?;
    let reports = analyze(&files, &cfg, false)?;
    let mut events = all_events(&reports);
    classify_events(&mut events, &model, threshold);

    std::fs::create_dir_all(&a.out).map_err(|e| Failure::data(anyhow!("{}: {e}", a.out.display())))?;
    write_events_csv(a.out.join("events.csv"), &events).or_data()?;
    if a.diagnostics {
        write_diagnostics_csv(a.out.join("diagnostics.csv"), &reports).or_data()?;
    }

    let n_slices: usize = reports.iter().map(|r| r.n_slices).sum();
    let hours: f64 = reports.iter().map(|r| r.hours).sum();
    let evaluation = match &truth {
        Some(truth) => {
            let preds: Vec<_> = events
                .iter()
                .map(|e| (e.source.clone(), e.span(), e.features.label, e.event.score))
                .collect();
            let ev = evaluate(&preds, truth, n_slices as u64, Some(hours), a.sweep)?;
            if let Some(curve) = &ev.roc {
                write_roc(&a.out.join("roc.csv"), curve)?;
            }
            Some(ev.report)
        }
        None => None,
    };

    let inputs: Vec<String> = files.iter().map(|f| f.display().to_string()).collect();
    let report = json!({
        "inputs": inputs,
        "n_slices": n_slices,
        "hours": hours,
        "threshold": threshold,
        "n_events": events.len(),
        "n_minke": events.iter().filter(|e| e.features.label == Label::Minke).count(),
        "model_fingerprint": model.training_fingerprint,
        "evaluation": evaluation,
    });
    write_json(&a.out.join("report.json"), &report)?;
    summarize(&reports, events.len());
    Ok(())
}

pub fn print_config(g: &GlobalOpts) -> Outcome {
    let cfg = load_config(g)?;
    print!("{}", cfg.to_toml_string());
    Ok(())
}
