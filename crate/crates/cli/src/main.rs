//! `confprint`: command-line front-end for the fingerprinting toolkit.

mod error;

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use confprint::augment::{augment_audio, Corpora};
use confprint::config::{parse_assignment, Config};
use confprint::dsp::{resample, segment, wav, AudioBuffer, Featurizer, MelSpectrogram, MEL_VERSION};
use confprint::encoder::{ModelCheckpoint, CHECKPOINT_VERSION};
use confprint::eval::{emit_report, run_eval, summary, EvalInputs};
use confprint::index::{FingerprintDb, DB_VERSION};
use confprint::manifest::read_manifest;
use confprint::par::{configure_threads, Execution};
use confprint::rng::{derive_seed, rng_for};
use confprint::trainer::{train, TrainOptions, TrainSetup};
use log::info;
use serde::Serialize;

use crate::error::{CliError, Kind};

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "confprint", version, about = "Conformer audio fingerprinting")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Configuration file (TOML with spectral, model, training,
    /// augmentation, index and eval sections)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config value; repeatable, wins over files
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Root seed; every other seed is derived from it
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (0 = available cores)
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Log-mel spectrogram of one segment of a WAV file
    Featurize {
        #[arg(long, value_name = "WAV")]
        input: PathBuf,
        #[arg(long, value_name = "PATH")]
        output: PathBuf,
        /// Segment start in seconds
        #[arg(long, value_name = "SECONDS", default_value_t = 0.0)]
        offset: f64,
    },
    /// Apply the training augmentation chain to a WAV file
    Augment {
        #[arg(long, value_name = "WAV")]
        input: PathBuf,
        /// Config file whose augmentation section is applied
        #[arg(long, value_name = "FILE")]
        spec: Option<PathBuf>,
        #[arg(long, value_name = "WAV")]
        output: PathBuf,
    },
    /// Train an encoder with the contrastive objective
    Train {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long, value_name = "FILE")]
        model_config: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        train_config: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        aug_config: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        /// Continue from a checkpoint (normally OUT_DIR/last.ckpt)
        #[arg(long, value_name = "FILE")]
        resume: Option<PathBuf>,
    },
    /// Embed every segment of a WAV file, or one stored spectrogram
    Embed {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "WAV|MELSPEC")]
        input: PathBuf,
        /// JSON output
        #[arg(long, value_name = "PATH")]
        output: PathBuf,
    },
    /// Build a fingerprint database from a manifest
    Fingerprint {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Seconds between segment starts (default: index.hop)
        #[arg(long, value_name = "SECONDS")]
        hop: Option<f64>,
        #[arg(long, value_name = "DB")]
        out: PathBuf,
    },
    /// Identify a recording against a fingerprint database
    Query {
        #[arg(long, value_name = "DB")]
        db: PathBuf,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "WAV")]
        input: PathBuf,
        #[arg(long, value_name = "N", default_value_t = 5)]
        k: usize,
    },
    /// Run the retrieval protocol and write a CSV report
    Evaluate {
        #[arg(long, value_name = "DB")]
        db: PathBuf,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        /// Config file whose eval section is the protocol
        #[arg(long, value_name = "FILE")]
        protocol: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Describe a checkpoint and/or a fingerprint database
    Inspect {
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_name = "DB")]
        db: Option<PathBuf>,
    },
}

fn long_version() -> String {
    format!(
        "{}\ncheckpoint format {CHECKPOINT_VERSION}\nfingerprint database format {DB_VERSION}\nmel spectrogram format {MEL_VERSION}",
        env!("CARGO_PKG_VERSION")
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    let matches = Cli::command().long_version(long_version()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    configure_threads(g.threads).map_err(|e| CliError::new(Kind::Runtime, e))?;
    match &cli.command {
        Command::Featurize { input, output, offset } => featurize(g, input, output, *offset),
        Command::Augment { input, spec, output } => augment(g, input, spec.as_deref(), output),
        Command::Train {
            manifest,
            model_config,
            train_config,
            aug_config,
            out_dir,
            resume,
        } => {
            let layers = [model_config, train_config, aug_config];
            let layers: Vec<&Path> = layers.iter().filter_map(|p| p.as_deref()).collect();
            train_cmd(g, manifest, &layers, out_dir, resume.clone())
        }
        Command::Embed {
            checkpoint,
            input,
            output,
        } => embed(g, checkpoint, input, output),
        Command::Fingerprint {
            manifest,
            checkpoint,
            hop,
            out,
        } => fingerprint(g, manifest, checkpoint, *hop, out),
        Command::Query { db, checkpoint, input, k } => query(g, db, checkpoint, input, *k),
        Command::Evaluate {
            db,
            checkpoint,
            manifest,
            protocol,
            out,
        } => evaluate(g, db, checkpoint, manifest, protocol.as_deref(), out),
        Command::Inspect { checkpoint, db } => inspect(checkpoint.as_deref(), db.as_deref()),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::from(e).context(path))
}

/// Defaults, then `--config`, then `extra` files in order, then `--set`.
fn load_config(g: &Global, extra: &[&Path]) -> Result<Config> {
    let files: Vec<String> = g
        .config
        .iter()
        .map(PathBuf::as_path)
        .chain(extra.iter().copied())
        .map(read_text)
        .collect::<Result<_>>()?;
    let overrides = g.set.iter().map(|s| parse_assignment(s)).collect::<std::result::Result<Vec<_>, _>>()?;
    let refs: Vec<&str> = files.iter().map(String::as_str).collect();
    Ok(Config::resolve_layers(&refs, &overrides)?)
}

fn seed(g: &Global, cfg: &Config) -> u64 {
    g.seed.unwrap_or(cfg.training.seed)
}

fn read_audio(path: &Path, sample_rate: u32) -> Result<AudioBuffer> {
    Ok(resample(&wav::read(path)?, sample_rate)?)
}

fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint<f32>> {
    Ok(ModelCheckpoint::load(path)?)
}

fn featurize(g: &Global, input: &Path, output: &Path, offset: f64) -> Result<()> {
    let cfg = load_config(g, &[])?;
    let audio = read_audio(input, cfg.spectral.sample_rate)?;
    if !(offset >= 0.0 && offset.is_finite()) {
        return Err(CliError::new(Kind::InvalidInput, format!("offset must be >= 0, got {offset}")));
    }
    let start = cfg.spectral.seconds_to_samples(offset);
    let seg = audio.slice(start, cfg.spectral.segment_samples())?;
    let mel = Featurizer::new(cfg.spectral)?.log_mel(&seg)?;
    mel.save(output)?;
    info!("{} frames x {} mel bands -> {}", mel.n_frames(), mel.n_mels(), output.display());
    Ok(())
}

fn augment(g: &Global, input: &Path, spec: Option<&Path>, output: &Path) -> Result<()> {
    let cfg = load_config(g, spec.as_slice())?;
    let aug = &cfg.augmentation;
    let sr = cfg.spectral.sample_rate;
    let seed = seed(g, &cfg);
    let audio = read_audio(input, sr)?;
    let margin = cfg.spectral.seconds_to_samples(aug.time_shift.max_offset) + 1;
    let mut padded = vec![0.0; margin];
    padded.extend_from_slice(audio.samples());
    padded.resize(padded.len() + margin, 0.0);
    let context = AudioBuffer::new(padded, sr)?;
    let corpora = Corpora::for_spec(aug, sr, derive_seed(seed, "corpora"))?;
    let mut rng = rng_for(seed, "augment");
    let (out, shift) = augment_audio(&context, margin, audio.len(), aug, &corpora, &mut rng)?;
    wav::write(output, &out)?;
    info!("shift {:+.1} ms -> {}", shift * 1e3, output.display());
    Ok(())
}

fn train_cmd(g: &Global, manifest: &Path, layers: &[&Path], out_dir: &Path, resume: Option<PathBuf>) -> Result<()> {
    let mut cfg = load_config(g, layers)?;
    if let Some(s) = g.seed {
        cfg.training.seed = s;
    }
    fs::create_dir_all(out_dir).map_err(|e| CliError::from(e).context(out_dir))?;
    let resolved = out_dir.join("config.toml");
    fs::write(&resolved, cfg.to_toml_string()).map_err(|e| CliError::from(e).context(&resolved))?;
    let opts = TrainOptions {
        manifest: manifest.to_path_buf(),
        setup: TrainSetup {
            train: cfg.training.clone(),
            model: cfg.model,
            spectral: cfg.spectral,
            augment: cfg.augmentation.clone(),
        },
        out_dir: out_dir.to_path_buf(),
        resume,
        execution: Execution::Parallel,
    };
    let summary = train(&opts, |e| {
        info!("epoch {} mean loss {:.4} ({} steps)", e.epoch, e.mean_loss, e.steps.len());
    })?;
    info!(
        "trained {} steps; last {} best {}",
        summary.checkpoint.meta.steps,
        summary.last_checkpoint.display(),
        summary.best_checkpoint.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SegmentEmbedding {
    offset: f64,
    embedding: Vec<f32>,
}

#[derive(Serialize)]
struct EmbedOutput {
    dim: usize,
    segments: Vec<SegmentEmbedding>,
}

fn is_melspec(path: &Path) -> Result<bool> {
    let mut magic = [0u8; 4];
    let mut f = fs::File::open(path).map_err(|e| CliError::from(e).context(path))?;
    Ok(f.read_exact(&mut magic).is_ok() && &magic == b"CFMS")
}

fn embed(g: &Global, checkpoint: &Path, input: &Path, output: &Path) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let model = &ckpt.model;
    let segments = if is_melspec(input)? {
        vec![SegmentEmbedding {
            offset: 0.0,
            embedding: model.embed(&MelSpectrogram::load(input)?)?.into_values(),
        }]
    } else {
        let cfg = load_config(g, &[])?;
        let audio = read_audio(input, ckpt.spectral.sample_rate)?;
        let featurizer = Featurizer::new(ckpt.spectral)?;
        let segs = segment(&audio, &ckpt.spectral, cfg.index.hop)?;
        if segs.is_empty() {
            return Err(CliError::new(
                Kind::InvalidInput,
                format!("{} is shorter than one {} s segment", input.display(), ckpt.spectral.segment_seconds),
            ));
        }
        let specs = segs.iter().map(|s| featurizer.log_mel(&s.audio)).collect::<std::result::Result<Vec<_>, _>>()?;
        let embs = model.embed_batch_with(&specs, Execution::Parallel)?;
        segs.iter()
            .zip(embs)
            .map(|(s, e)| SegmentEmbedding {
                offset: s.start_time,
                embedding: e.into_values(),
            })
            .collect()
    };
    let out = EmbedOutput {
        dim: model.config().embedding_dim,
        segments,
    };
    let file = fs::File::create(output).map_err(|e| CliError::from(e).context(output))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &out).map_err(|e| CliError::new(Kind::Io, e.to_string()))?;
    w.flush().map_err(|e| CliError::from(e).context(output))?;
    info!("{} embeddings of dim {} -> {}", out.segments.len(), out.dim, output.display());
    Ok(())
}

fn fingerprint(g: &Global, manifest: &Path, checkpoint: &Path, hop: Option<f64>, out: &Path) -> Result<()> {
    let cfg = load_config(g, &[])?;
    let hop = hop.unwrap_or(cfg.index.hop);
    let ckpt = load_checkpoint(checkpoint)?;
    let featurizer = Featurizer::new(ckpt.spectral)?;
    let entries = read_manifest(manifest)?;
    let mut db = FingerprintDb::new(ckpt.model.config().embedding_dim);
    for e in &entries {
        let audio = e.load(ckpt.spectral.sample_rate)?;
        let n = db.add_track(&e.track_id, &audio, &ckpt.model, &featurizer, hop, Execution::Parallel)?;
        info!("{}: {n} segments", e.track_id);
    }
    db.save(out)?;
    info!("{} records from {} tracks -> {}", db.len(), entries.len(), out.display());
    Ok(())
}

fn query(g: &Global, db: &Path, checkpoint: &Path, input: &Path, k: usize) -> Result<()> {
    let cfg = load_config(g, &[])?;
    let db = FingerprintDb::load(db)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let featurizer = Featurizer::new(ckpt.spectral)?;
    let audio = read_audio(input, ckpt.spectral.sample_rate)?;
    let hits = db.match_track(&audio, &ckpt.model, &featurizer, cfg.index.hop, k)?;
    println!("rank\ttrack_id\toffset\tscore");
    for (i, h) in hits.iter().enumerate() {
        println!("{}\t{}\t{:.3}\t{:.6}", i + 1, h.track_id, h.offset, h.score);
    }
    Ok(())
}

fn evaluate(g: &Global, db: &Path, checkpoint: &Path, manifest: &Path, protocol: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_config(g, protocol.as_slice())?;
    let seed = seed(g, &cfg);
    let db = FingerprintDb::load(db)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let sr = ckpt.spectral.sample_rate;
    let featurizer = Featurizer::new(ckpt.spectral)?;
    let tracks = read_manifest(manifest)?
        .iter()
        .map(|e| Ok((e.track_id.clone(), e.load(sr)?)))
        .collect::<Result<Vec<_>>>()?;
    let corpora = Corpora::for_spec(&cfg.augmentation, sr, derive_seed(seed, "eval-corpora"))?;
    let inputs = EvalInputs {
        db: &db,
        model: &ckpt.model,
        featurizer: &featurizer,
        tracks: &tracks,
        corpora: &corpora,
    };
    let report = run_eval(&inputs, &cfg.eval, seed, Execution::Parallel)?;
    for path in emit_report(&report, out)? {
        info!("wrote {}", path.display());
    }
    print!("{}", summary(&report));
    Ok(())
}

fn inspect(checkpoint: Option<&Path>, db: Option<&Path>) -> Result<()> {
    if checkpoint.is_none() && db.is_none() {
        return Err(CliError::new(Kind::InvalidInput, "inspect needs --checkpoint and/or --db"));
    }
    if let Some(path) = checkpoint {
        let ckpt = load_checkpoint(path)?;
        let m = &ckpt.meta;
        let mut t = toml::Table::new();
        t.insert("spectral".into(), toml::Value::try_from(ckpt.spectral).expect("config serializes"));
        t.insert("model".into(), toml::Value::try_from(ckpt.model.config()).expect("config serializes"));
        println!("# checkpoint {} (format {CHECKPOINT_VERSION})", path.display());
        println!("parameters = {}", ckpt.model.num_params());
        println!("steps = {}", m.steps);
        println!("epochs = {}", m.epochs);
        println!("seed = {}", m.seed);
        println!("best_loss = {}", m.best_loss);
        println!("optimizer_state = {}", ckpt.adam.is_some());
        print!("\n{}", toml::to_string(&t).expect("config serializes"));
    }
    if let Some(path) = db {
        let db = FingerprintDb::load(path)?;
        println!("# fingerprint database {} (format {DB_VERSION})", path.display());
        println!("dim = {}", db.dim());
        println!("records = {}", db.len());
        println!("tracks = {}", db.tracks().len());
    }
    Ok(())
}
