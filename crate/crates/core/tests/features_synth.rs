//! Feature levels against clips whose signal-to-noise ratio is known.

use pulsetrain::audio::SignalSlice;
use pulsetrain::config::RunConfig;
use pulsetrain::detector::{Detector, PulseTrainEvent};
use pulsetrain::features::{extract_features, snr_percentile_db, Label};
use pulsetrain::pipeline::process_stream;
use pulsetrain::synth::{generate_clip, NoiseSpec, SynthSpec, TrainSpec};

fn clip(seed: u64, snr_db: f64) -> SynthSpec {
    SynthSpec {
        sample_rate: 2000,
        duration_s: 30.0,
        seed,
        noise: NoiseSpec {
            variance: 1.0,
            ..NoiseSpec::default()
        },
        narrowband_tones: Vec::new(),
        trains: vec![TrainSpec {
            start_s: 4.0,
            pulse_rate_hz: 3.3,
            n_pulses: 60,
            pulse_dur_s: 0.045,
            band: [100.0, 300.0],
            snr_db,
            rate_jitter_pct: 3.0,
            label: Label::Minke,
        }],
    }
}

/// Event placed on the true pulse centers, bypassing peak picking.
fn constructed_event(times: &[f64]) -> PulseTrainEvent {
    PulseTrainEvent {
        slice_id: 0,
        start_time: times[0],
        end_time: *times.last().unwrap(),
        peak_times: times.to_vec(),
        peak_heights: vec![10; times.len()],
        f_lo: 75.0,
        f_hi: 350.0,
        time_bin_s: 0.0205,
        score: None,
    }
}

#[test]
fn snr_features_track_injected_level() {
    let cfg = RunConfig::default().pipeline();
    for seed in 0..5 {
        let (stream, truth) = generate_clip(&clip(seed, 20.0)).unwrap();
        let slice = SignalSlice::new(0, stream.samples.clone(), 2000, 0.0);
        let detector = Detector::new(&cfg, 2000).unwrap();
        let a = detector.analyze(&slice).unwrap();
        let event = constructed_event(&truth.intervals[0].pulse_times);
        let f = extract_features(&event, &a.filtered, &a.binary, 0.05, 41).unwrap();
        assert!((f.f14_snr_db - 20.0).abs() <= 1.5, "seed {seed}: f14 {}", f.f14_snr_db);
        assert!(f.f15_snr_p05_db >= f.f16_snr_p10_db);
        assert!(f.f16_snr_p10_db >= f.f17_snr_p20_db);
        assert!(f.f17_snr_p20_db >= f.f18_snr_p25_db);
        // Pulses fill under a fifth of this slice, so the quarter percentile
        // of block RMS sits close to the noise level.
        let p25 = snr_percentile_db(&event, &a.filtered, 25.0, 0.05, 41);
        assert_eq!(p25, f.f18_snr_p25_db);
        assert!((p25 - 20.0).abs() <= 1.5, "seed {seed}: p25 {p25}");
    }
}

#[test]
fn detected_events_keep_snr_order() {
    let cfg = RunConfig::default().pipeline();
    for seed in 0..5 {
        let (stream, _) = generate_clip(&clip(seed, 20.0)).unwrap();
        let rep = process_stream(&stream, &cfg, false).unwrap();
        assert_eq!(rep.events.len(), 1, "seed {seed}");
        let f = rep.events[0].features;
        assert!(f.f14_snr_db > 10.0, "seed {seed}: f14 {}", f.f14_snr_db);
        assert!(f.f15_snr_p05_db >= f.f16_snr_p10_db);
        assert!(f.f16_snr_p10_db >= f.f17_snr_p20_db);
        assert!(f.f17_snr_p20_db >= f.f18_snr_p25_db);
    }
}
