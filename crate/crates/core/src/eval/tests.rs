use super::*;
use crate::augment::Corpora;
use crate::dsp::{AudioBuffer, Featurizer, SpectralConfig};
use crate::encoder::{ConformerConfig, Model};
use crate::index::FingerprintDb;
use crate::par::Execution;
use crate::synth::toy_clip;

fn starts(seconds: f64, n: usize) -> Vec<f64> {
    let track = AudioBuffer::silence((seconds * 16_000.0) as usize, 16_000);
    select_excerpts(&track, n, 3.0).unwrap().into_iter().map(|(t, _)| t).collect()
}

#[test]
fn excerpts_are_linearly_spaced() {
    assert_eq!(starts(3.0, 5), vec![0.0; 5]);
    assert_eq!(starts(7.0, 5), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    assert_eq!(starts(30.0, 2), vec![0.0, 27.0]);
    assert_eq!(starts(10.0, 1), vec![3.5]);
    let clips = select_excerpts(&toy_clip(1, 7.0, 16_000), 5, 3.0).unwrap();
    assert!(clips.iter().all(|(_, a)| a.len() == 48_000));
    let short = AudioBuffer::silence(100, 16_000);
    assert!(select_excerpts(&short, 5, 3.0).is_err());
}

#[test]
fn hit_counts_match_hand_enumeration() {
    // ranks of the true track for 10 fabricated queries; None = absent
    let ranks = [Some(0), Some(3), None, Some(1), Some(0), Some(7), Some(4), Some(0), Some(5), Some(2)];
    assert_eq!(hits_at(&ranks, 1), 3);
    assert_eq!(hits_at(&ranks, 2), 4);
    assert_eq!(hits_at(&ranks, 5), 7);
    assert_eq!(hits_at(&ranks, 10), 9);
    for k in 1..10 {
        assert!(hits_at(&ranks, k + 1) >= hits_at(&ranks, k));
    }
}

#[test]
fn case_domains_are_checked() {
    assert!(DistortionCase::NONE.validate().is_ok());
    assert!(DistortionCase::time_shift(40.0).validate().is_ok());
    assert!(DistortionCase::time_shift(140.0).validate().is_err());
    assert!(DistortionCase::background_noise(5.0).validate().is_ok());
    assert!(DistortionCase::colored_noise(f64::NAN).validate().is_err());
    assert!(DistortionCase::time_stretch(0.7).validate().is_ok());
    assert!(DistortionCase::time_stretch(3.0).validate().is_err());
    assert!(DistortionCase::reverb().validate().is_ok());
    let bad = DistortionCase {
        kind: DistortionKind::Reverb,
        parameter: Some(1.0),
    };
    assert!(bad.validate().is_err());
    let missing = DistortionCase {
        kind: DistortionKind::TimeShift,
        parameter: None,
    };
    assert!(missing.validate().is_err());
    let p = EvalProtocol {
        runs: 0,
        ..EvalProtocol::default()
    };
    assert!(p.validate().is_err());
    let parsed: EvalProtocol = toml::from_str("runs = 2\ncases = [{ kind = \"time_shift\", parameter = 40 }]").unwrap();
    assert_eq!(parsed.suite(), vec![DistortionCase::NONE, DistortionCase::time_shift(40.0)]);
    assert!(toml::from_str::<EvalProtocol>("rnus = 2").is_err());
}

struct Fixture {
    model: Model<f32>,
    featurizer: Featurizer,
    tracks: Vec<(String, AudioBuffer)>,
    db: FingerprintDb,
    corpora: Corpora,
}

fn fixture() -> Fixture {
    let featurizer = Featurizer::new(SpectralConfig {
        n_mels: 8,
        ..SpectralConfig::default()
    })
    .unwrap();
    let model = Model::<f32>::build(ConformerConfig::tiny(), 5).unwrap();
    let tracks: Vec<(String, AudioBuffer)> = (0..3).map(|i| (format!("track_{i}"), toy_clip(100 + i, 6.0, 16_000))).collect();
    let mut db = FingerprintDb::new(model.config().embedding_dim);
    for (id, a) in &tracks {
        db.add_track(id, a, &model, &featurizer, 0.3, Execution::default()).unwrap();
    }
    let corpora = Corpora::synthetic(16_000, 9).unwrap();
    Fixture {
        model,
        featurizer,
        tracks,
        db,
        corpora,
    }
}

fn inputs(f: &Fixture) -> EvalInputs<'_> {
    EvalInputs {
        db: &f.db,
        model: &f.model,
        featurizer: &f.featurizer,
        tracks: &f.tracks,
        corpora: &f.corpora,
    }
}

fn protocol() -> EvalProtocol {
    EvalProtocol {
        queries_per_track: 3,
        runs: 2,
        cases: vec![
            DistortionCase::time_shift(40.0),
            DistortionCase::background_noise(10.0),
            DistortionCase::colored_noise(10.0),
            DistortionCase::reverb(),
            DistortionCase::time_stretch(0.9),
        ],
        shift_probes: 2,
        ..EvalProtocol::default()
    }
}

#[test]
fn undistorted_aligned_queries_retrieve_themselves() {
    let f = fixture();
    let report = run_eval(&inputs(&f), &protocol(), 1, Execution::default()).unwrap();
    for g in [Granularity::Track, Granularity::Segment] {
        assert_eq!(report.mean_hit_rate(&DistortionCase::NONE, g, 1), Some(1.0));
    }
    assert_eq!(report.cases().len(), 6);
    assert_eq!(report.rows.len(), 2 * 6 * 2 * 2);
    for r in &report.rows {
        assert_eq!(r.queries, 9);
        if r.k == 1 {
            let top5 = report
                .rows
                .iter()
                .find(|o| o.case() == r.case() && o.run == r.run && o.granularity == r.granularity && o.k == 5)
                .unwrap();
            assert!(top5.hits >= r.hits);
        }
    }
    assert_eq!(report.shift_curves.len(), 2);
    for c in &report.shift_curves {
        assert_eq!(c.points.len(), 31);
        assert!((c.points[0].1 - 1.0).abs() < 1e-6);
    }
}

#[test]
fn reports_are_deterministic_across_execution_modes() {
    let f = fixture();
    let a = run_eval(&inputs(&f), &protocol(), 3, Execution::Parallel).unwrap();
    let b = run_eval(&inputs(&f), &protocol(), 3, Execution::Sequential).unwrap();
    assert_eq!(a, b);
    let seeds: Vec<u64> = a.rows.iter().map(|r| r.seed).collect();
    assert_ne!(seeds[0], *seeds.last().unwrap());
}

#[test]
fn missing_tracks_follow_policy() {
    let f = fixture();
    let mut tracks = f.tracks.clone();
    tracks.push(("unknown".into(), toy_clip(7, 4.0, 16_000)));
    tracks.push(("tiny".into(), AudioBuffer::silence(1000, 16_000)));
    let mut inp = inputs(&f);
    inp.tracks = &tracks;
    let strict = EvalProtocol {
        runs: 1,
        ..EvalProtocol::default()
    };
    assert!(matches!(run_eval(&inp, &strict, 0, Execution::default()), Err(EvalError::MissingTrack(t)) if t == "unknown"));
    let lenient = EvalProtocol {
        missing_tracks: MissingTrackPolicy::Miss,
        ..strict
    };
    let report = run_eval(&inp, &lenient, 0, Execution::default()).unwrap();
    let row = &report.rows[0];
    assert_eq!((row.queries, row.missing, row.skipped_tracks), (20, 5, 1));
    assert_eq!(row.hits, 15);
}

#[test]
fn csv_round_trips_and_files_are_written() {
    let f = fixture();
    let report = run_eval(&inputs(&f), &protocol(), 2, Execution::default()).unwrap();
    let text = to_csv(&report).unwrap();
    assert_eq!(parse_csv(&text).unwrap(), report.rows);
    let odd = EvalReport {
        rows: vec![ReportRow {
            distortion: DistortionKind::TimeStretch,
            parameter: Some(0.1 + 0.2),
            run: 0,
            seed: u64::MAX,
            granularity: Granularity::Segment,
            k: 5,
            queries: 3,
            hits: 1,
            missing: 0,
            skipped_tracks: 0,
        }],
        shift_curves: Vec::new(),
    };
    assert_eq!(parse_csv(&to_csv(&odd).unwrap()).unwrap(), odd.rows);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.csv");
    let files = emit_report(&report, &out).unwrap();
    assert_eq!(files.len(), 4);
    let summary = std::fs::read_to_string(dir.path().join("report.summary.txt")).unwrap();
    assert!(summary.contains("time_shift=40"));
    assert!(summary.contains("100.0"));
    let shift = std::fs::read_to_string(dir.path().join("report.shift.csv")).unwrap();
    assert_eq!(shift.lines().count(), 1 + 2 * 31);
}

#[test]
fn empty_suite_reports_only_the_clean_case() {
    let f = fixture();
    let p = EvalProtocol {
        runs: 1,
        shift_probes: 0,
        ..EvalProtocol::default()
    };
    let report = run_eval(&inputs(&f), &p, 0, Execution::default()).unwrap();
    assert_eq!(report.cases(), vec![DistortionCase::NONE]);
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(emit_report(&report, &dir.path().join("r.csv")).unwrap().len(), 2);
}
