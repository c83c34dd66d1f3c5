use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use confprint::dsp::{wav, SpectralConfig};
use confprint::encoder::{ConformerConfig, Model, ModelCheckpoint};
use confprint::manifest::{write_manifest, ManifestEntry};
use confprint::synth::write_toy_corpus;

fn confprint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_confprint"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn error_line(o: &Output) -> serde_json::Value {
    let err = stderr(o);
    let line = err.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {err}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    manifest: PathBuf,
    checkpoint: PathBuf,
    entries: Vec<ManifestEntry>,
}

/// Four 6 s toy tracks and an untrained tiny model.
fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let entries = write_toy_corpus(root.join("audio"), 4, 6.0, 16_000, 9).unwrap();
    let manifest = root.join("tracks.txt");
    write_manifest(&manifest, &entries).unwrap();
    let model_cfg = ConformerConfig::tiny();
    let model = Model::<f32>::build(model_cfg, 3).unwrap();
    let checkpoint = root.join("tiny.ckpt");
    ModelCheckpoint::new(model, SpectralConfig::default().with_n_mels(model_cfg.n_mels))
        .save(&checkpoint)
        .unwrap();
    Fixture {
        _dir: dir,
        root,
        manifest,
        checkpoint,
        entries,
    }
}

const SPEC_FLAGS: &[(&str, &[&str])] = &[
    ("featurize", &["--input", "--config", "--output"]),
    ("augment", &["--input", "--spec", "--seed", "--output"]),
    (
        "train",
        &["--manifest", "--model-config", "--train-config", "--aug-config", "--out-dir", "--seed"],
    ),
    ("embed", &["--checkpoint", "--input", "--output"]),
    ("fingerprint", &["--manifest", "--checkpoint", "--hop", "--out"]),
    ("query", &["--db", "--checkpoint", "--input", "--k"]),
    ("evaluate", &["--db", "--checkpoint", "--manifest", "--protocol", "--seed", "--out"]),
    ("inspect", &["--checkpoint"]),
];

#[test]
fn help_documents_every_command_and_flag() {
    let top = confprint(&["--help"]);
    assert!(top.status.success());
    for (cmd, flags) in SPEC_FLAGS {
        assert!(stdout(&top).contains(cmd), "top-level help lacks {cmd}");
        let help = confprint(&[cmd, "--help"]);
        assert!(help.status.success());
        for flag in flags.iter().chain(&["--config", "--set", "--seed", "--threads"]) {
            assert!(stdout(&help).contains(flag), "{cmd} --help lacks {flag}");
        }
    }
}

#[test]
fn version_lists_file_formats() {
    let out = confprint(&["--version"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for what in ["checkpoint format", "fingerprint database format", "mel spectrogram format"] {
        assert!(text.contains(what), "{text}");
    }
}

#[test]
fn invalid_config_key_is_named() {
    let f = fixture();
    let cfg = f.root.join("bad.toml");
    std::fs::write(&cfg, "[model]\npreset = \"tiny\"\n[training]\nlearning_rat = 0.1\n").unwrap();
    let out = confprint(&["--config", s(&cfg), "featurize", "--input", s(&f.entries[0].path), "--output", "x"]);
    assert_eq!(out.status.code(), Some(4));
    let e = error_line(&out);
    assert_eq!(e["error"], "invalid_config");
    assert!(e["message"].as_str().unwrap().contains("learning_rat"), "{e}");

    let out = confprint(&["--set", "spectral.hop_lenght=64", "featurize", "--input", s(&f.entries[0].path), "--output", "x"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(error_line(&out)["message"].as_str().unwrap().contains("hop_lenght"));
}

#[test]
fn failures_have_distinct_exit_codes() {
    let f = fixture();
    let missing = confprint(&["inspect", "--checkpoint", s(&f.root.join("nope.ckpt"))]);
    assert_eq!(missing.status.code(), Some(3));
    assert_eq!(error_line(&missing)["error"], "missing_file");

    let junk = f.root.join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let bad = confprint(&["inspect", "--checkpoint", s(&junk)]);
    assert_eq!(bad.status.code(), Some(6));
    assert_eq!(error_line(&bad)["error"], "bad_format");

    // 80-band spectrogram into an 8-band model
    let mel = f.root.join("wide.mel");
    let out = confprint(&["featurize", "--input", s(&f.entries[0].path), "--output", s(&mel)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = confprint(&["embed", "--checkpoint", s(&f.checkpoint), "--input", s(&mel), "--output", s(&f.root.join("e.json"))]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(error_line(&out)["error"], "dimension_mismatch");
    assert_eq!(stderr(&out).lines().count(), 1);
}

#[test]
fn query_returns_planted_track_first() {
    let f = fixture();
    let db = f.root.join("toy.db");
    let out = confprint(&["fingerprint", "--manifest", s(&f.manifest), "--checkpoint", s(&f.checkpoint), "--hop", "0.3", "--out", s(&db)]);
    assert!(out.status.success(), "{}", stderr(&out));

    // 3 s excerpt of the third track starting on the hop grid at 2.1 s
    let planted = &f.entries[2];
    let audio = planted.load(16_000).unwrap().slice(33_600, 48_000).unwrap();
    let query = f.root.join("query.wav");
    wav::write(&query, &audio).unwrap();
    let out = confprint(&["query", "--db", s(&db), "--checkpoint", s(&f.checkpoint), "--input", s(&query), "--k", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 3, "{text}");
    assert_eq!(rows[0][1], planted.track_id, "{text}");
    assert_eq!(rows[0][2], "2.100");
    assert!(rows[0][3].parse::<f64>().unwrap() > 0.9999, "{text}");

    let out = confprint(&["inspect", "--db", s(&db)]);
    assert!(stdout(&out).contains("records = 44"), "{}", stdout(&out));
}

#[test]
fn train_inspect_embed_evaluate() {
    let f = fixture();
    let model_cfg = f.root.join("model.toml");
    std::fs::write(&model_cfg, "[model]\npreset = \"tiny\"\n").unwrap();
    let train_cfg = f.root.join("train.toml");
    std::fs::write(&train_cfg, "[training]\nbatch_size = 2\nepochs = 2\nlearning_rate = 0.001\n").unwrap();
    let run = f.root.join("run");
    let out = confprint(&[
        "train",
        "--manifest",
        s(&f.manifest),
        "--model-config",
        s(&model_cfg),
        "--train-config",
        s(&train_cfg),
        "--out-dir",
        s(&run),
        "--seed",
        "11",
        "--threads",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ckpt = run.join("last.ckpt");
    assert!(run.join("metrics.jsonl").exists());

    let out = confprint(&["inspect", "--checkpoint", s(&ckpt)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    for line in ["steps = 4", "epochs = 2", "seed = 11", "[model]", "[spectral]", "encoder_dim = 16"] {
        assert!(text.contains(line), "missing {line:?} in\n{text}");
    }
    let params: usize = text
        .lines()
        .find_map(|l| l.strip_prefix("parameters = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(params > 0);

    let emb = f.root.join("emb.json");
    let out = confprint(&["embed", "--checkpoint", s(&ckpt), "--input", s(&f.entries[1].path), "--output", s(&emb)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&emb).unwrap()).unwrap();
    assert_eq!(v["segments"].as_array().unwrap().len(), 11);
    let e: Vec<f64> = serde_json::from_value(v["segments"][0]["embedding"].clone()).unwrap();
    assert_eq!(e.len(), v["dim"].as_u64().unwrap() as usize);
    assert!((e.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-5);

    let db = f.root.join("toy.db");
    let out = confprint(&["fingerprint", "--manifest", s(&f.manifest), "--checkpoint", s(&ckpt), "--out", s(&db)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let protocol = f.root.join("protocol.toml");
    std::fs::write(&protocol, "[eval]\nqueries_per_track = 2\nruns = 1\ncases = [{ kind = \"time_shift\", parameter = 40 }]\nshift_probes = 1\n").unwrap();
    let report = f.root.join("report.csv");
    let out = confprint(&[
        "evaluate",
        "--db",
        s(&db),
        "--checkpoint",
        s(&ckpt),
        "--manifest",
        s(&f.manifest),
        "--protocol",
        s(&protocol),
        "--seed",
        "4",
        "--out",
        s(&report),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(&report).unwrap();
    assert!(csv.lines().count() > 1);
    assert!(f.root.join("report.summary.txt").exists());
    assert!(f.root.join("report.shift.csv").exists());
}

#[test]
fn augment_writes_same_length_audio_deterministically() {
    let f = fixture();
    let (a, b) = (f.root.join("a.wav"), f.root.join("b.wav"));
    for out in [&a, &b] {
        let o = confprint(&["augment", "--input", s(&f.entries[0].path), "--seed", "5", "--output", s(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(wav::read(&a).unwrap().len(), 6 * 16_000);
}
