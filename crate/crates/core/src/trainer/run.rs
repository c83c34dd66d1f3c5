use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{schedule_step, train_step, TrainConfig, TrainerError};
use crate::augment::{make_replica, AugmentationSpec, Corpora};
use crate::autodiff::AdamState;
use crate::dsp::{AudioBuffer, Featurizer, SpectralConfig};
use crate::encoder::{ConformerConfig, Model, ModelCheckpoint, TrainingMeta};
use crate::manifest::{read_manifest, ManifestEntry};
use crate::par::{self, Execution};
use crate::rng::{derive_indexed, derive_seed, rng_from_seed};

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSetup {
    pub train: TrainConfig,
    pub model: ConformerConfig,
    pub spectral: SpectralConfig,
    pub augment: AugmentationSpec,
}

impl TrainSetup {
    pub fn validate(&self) -> Result<(), TrainerError> {
        self.train.validate()?;
        self.model.validate()?;
        self.spectral.validate()?;
        self.augment.validate()?;
        if self.spectral.n_mels != self.model.n_mels {
            return Err(TrainerError::InvalidConfig(format!(
                "spectral n_mels {} differs from model n_mels {}",
                self.spectral.n_mels, self.model.n_mels
            )));
        }
        if self.model.positional_embedding && self.spectral.n_frames() > self.model.max_frames {
            return Err(TrainerError::InvalidConfig(format!(
                "segments have {} frames, model max_frames is {}",
                self.spectral.n_frames(),
                self.model.max_frames
            )));
        }
        Ok(())
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u64,
    pub loss: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: u64,
    pub mean_loss: f64,
    pub steps: Vec<StepRecord>,
}

struct Track {
    id: String,
    /// Audio with `margin` samples of silence on both sides.
    padded: AudioBuffer,
    len: usize,
}

/// Training state: model, optimizer and the prepared dataset.
pub struct Trainer {
    setup: TrainSetup,
    model: Model<f32>,
    adam: AdamState<f32>,
    meta: TrainingMeta,
    featurizer: Featurizer,
    corpora: Corpora,
    tracks: Vec<Track>,
    margin: usize,
    exec: Execution,
}

impl Trainer {
    /// Fresh run. Tracks must be at least one segment long and at the
    /// spectral sample rate.
    pub fn new(setup: TrainSetup, tracks: Vec<(String, AudioBuffer)>) -> Result<Self, TrainerError> {
        setup.validate()?;
        let model = Model::build(setup.model, derive_seed(setup.train.seed, "model-init"))?;
        let adam = AdamState::new(model.params());
        let meta = TrainingMeta {
            seed: setup.train.seed,
            ..TrainingMeta::default()
        };
        Self::assemble(setup, tracks, model, adam, meta)
    }

    /// Continues a run from a checkpoint that carries optimizer state.
    pub fn resume(
        setup: TrainSetup,
        tracks: Vec<(String, AudioBuffer)>,
        ck: ModelCheckpoint<f32>,
    ) -> Result<Self, TrainerError> {
        setup.validate()?;
        if *ck.model.config() != setup.model || ck.spectral != setup.spectral {
            return Err(TrainerError::ResumeMismatch("model or spectral config differs".into()));
        }
        if ck.meta.seed != setup.train.seed {
            return Err(TrainerError::ResumeMismatch(format!(
                "checkpoint seed {} differs from run seed {}",
                ck.meta.seed, setup.train.seed
            )));
        }
        let adam = ck
            .adam
            .ok_or_else(|| TrainerError::ResumeMismatch("checkpoint has no optimizer state".into()))?;
        Self::assemble(setup, tracks, ck.model, adam, ck.meta)
    }

    fn assemble(
        setup: TrainSetup,
        tracks: Vec<(String, AudioBuffer)>,
        model: Model<f32>,
        adam: AdamState<f32>,
        meta: TrainingMeta,
    ) -> Result<Self, TrainerError> {
        let sr = setup.spectral.sample_rate;
        let seg = setup.spectral.segment_samples();
        let margin = (setup.augment.max_shift() * f64::from(sr)).ceil() as usize + 1;
        let mut prepared = Vec::with_capacity(tracks.len());
        for (id, audio) in tracks {
            if audio.sample_rate() != sr {
                return Err(crate::dsp::DspError::SampleRateMismatch {
                    expected: sr,
                    found: audio.sample_rate(),
                }
                .into());
            }
            if audio.len() < seg {
                return Err(crate::dsp::DspError::TooShort {
                    found: audio.len(),
                    required: seg,
                }
                .into());
            }
            let mut s = vec![0.0f32; margin];
            s.extend_from_slice(audio.samples());
            s.resize(s.len() + margin, 0.0);
            prepared.push(Track {
                id,
                padded: AudioBuffer::new(s, sr)?,
                len: audio.len(),
            });
        }
        if prepared.len() < 2 {
            return Err(TrainerError::NotEnoughTracks {
                found: prepared.len(),
                required: 2,
            });
        }
        let featurizer = Featurizer::new(setup.spectral)?;
        let corpora = Corpora::for_spec(&setup.augment, sr, derive_seed(setup.train.seed, "corpora"))?;
        Ok(Self {
            setup,
            model,
            adam,
            meta,
            featurizer,
            corpora,
            tracks: prepared,
            margin,
            exec: Execution::Parallel,
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    /// Completed epochs.
    pub fn epoch(&self) -> u64 {
        self.meta.epochs
    }

    pub fn checkpoint(&self) -> ModelCheckpoint<f32> {
        ModelCheckpoint {
            model: self.model.clone(),
            spectral: self.setup.spectral,
            meta: self.meta,
            adam: Some(self.adam.clone()),
        }
    }

    /// One pass over the dataset: shuffled order, a fresh random segment
    /// per track, batches of the scheduled size (a trailing batch smaller
    /// than two pairs is dropped).
    pub fn run_epoch(&mut self, mut on_step: impl FnMut(&StepRecord)) -> Result<EpochSummary, TrainerError> {
        let epoch = self.meta.epochs;
        let seed = self.setup.train.seed;
        let (lr, batch_size) = schedule_step(epoch, &self.setup.train);
        let mut order: Vec<usize> = (0..self.tracks.len()).collect();
        order.shuffle(&mut rng_from_seed(derive_indexed(seed, "epoch-order", epoch)));
        let seg = self.setup.spectral.segment_samples();
        let mut steps = Vec::new();
        for (bi, chunk) in order.chunks(batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let started = Instant::now();
            let epoch_seed = derive_indexed(seed, "epoch", epoch);
            let items: Vec<(usize, u64)> = chunk
                .iter()
                .enumerate()
                .map(|(j, &t)| (t, derive_indexed(epoch_seed, "item", (bi * batch_size + j) as u64)))
                .collect();
            let batch = par::try_map(self.exec, &items, |&(t, item_seed)| {
                let track = &self.tracks[t];
                let mut rng = rng_from_seed(item_seed);
                let start = rng.random_range(0..=track.len - seg);
                make_replica(
                    &track.padded,
                    self.margin + start,
                    &self.setup.augment,
                    &self.corpora,
                    &self.featurizer,
                    &mut rng,
                )
            })?;
            let step_seed = derive_indexed(seed, "step", self.meta.steps);
            let loss = train_step(&mut self.model, &batch, &mut self.adam, lr, &self.setup.train, step_seed, self.exec)
                .map_err(|e| match e {
                    TrainerError::NonFiniteLoss {
                        step,
                        items: _,
                        max_abs_activation,
                    } => TrainerError::NonFiniteLoss {
                        step,
                        items: chunk.iter().map(|&t| self.tracks[t].id.clone()).collect(),
                        max_abs_activation,
                    },
                    other => other,
                })?;
            self.meta.steps += 1;
            let record = StepRecord {
                step: self.meta.steps,
                epoch,
                loss,
                lr,
                batch_size: chunk.len(),
                seed,
                wall_ms: started.elapsed().as_millis() as u64,
            };
            on_step(&record);
            steps.push(record);
        }
        self.meta.epochs += 1;
        let mean_loss = if steps.is_empty() {
            f64::NAN
        } else {
            steps.iter().map(|s| s.loss).sum::<f64>() / steps.len() as f64
        };
        if mean_loss < self.meta.best_loss {
            self.meta.best_loss = mean_loss;
        }
        Ok(EpochSummary {
            epoch,
            mean_loss,
            steps,
        })
    }
}

/// Reads every manifest entry at `sample_rate`. Unreadable or too-short
/// tracks are skipped with a warning when `skip_bad` is set.
pub fn load_tracks(
    entries: &[ManifestEntry],
    spectral: &SpectralConfig,
    skip_bad: bool,
) -> Result<Vec<(String, AudioBuffer)>, TrainerError> {
    let seg = spectral.segment_samples();
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        let loaded = e.load(spectral.sample_rate).and_then(|a| {
            if a.len() < seg {
                Err(crate::dsp::DspError::TooShort {
                    found: a.len(),
                    required: seg,
                })
            } else {
                Ok(a)
            }
        });
        match loaded {
            Ok(a) => out.push((e.track_id.clone(), a)),
            Err(err) if skip_bad => log::warn!("skipping {} ({}): {err}", e.track_id, e.path.display()),
            Err(err) => return Err(err.into()),
        }
    }
    Ok(out)
}

/// Inputs of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub manifest: PathBuf,
    pub setup: TrainSetup,
    pub out_dir: PathBuf,
    /// Checkpoint to continue from (normally `<out_dir>/last.ckpt`).
    pub resume: Option<PathBuf>,
    pub execution: Execution,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: ModelCheckpoint<f32>,
    pub epochs: Vec<EpochSummary>,
    pub last_checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> TrainerError + '_ {
    move |source| TrainerError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Full training run. Writes `metrics.jsonl` (one [`StepRecord`] per
/// step), `epoch_NNNN.ckpt` after every epoch, `last.ckpt`, and
/// `best.ckpt` whenever the mean epoch loss improves.
pub fn train(opts: &TrainOptions, mut on_epoch: impl FnMut(&EpochSummary)) -> Result<TrainSummary, TrainerError> {
    let setup = &opts.setup;
    setup.validate()?;
    let entries = read_manifest(&opts.manifest)?;
    let tracks = load_tracks(&entries, &setup.spectral, setup.train.skip_unreadable)?;
    fs::create_dir_all(&opts.out_dir).map_err(io_err(&opts.out_dir))?;
    let mut trainer = match &opts.resume {
        Some(path) => Trainer::resume(setup.clone(), tracks, ModelCheckpoint::load(path)?)?,
        None => Trainer::new(setup.clone(), tracks)?,
    }
    .with_execution(opts.execution);

    let metrics_path = opts.out_dir.join("metrics.jsonl");
    let file = if opts.resume.is_some() {
        OpenOptions::new().create(true).append(true).open(&metrics_path)
    } else {
        File::create(&metrics_path)
    }
    .map_err(io_err(&metrics_path))?;
    let mut metrics = BufWriter::new(file);
    let last = opts.out_dir.join("last.ckpt");
    let best = opts.out_dir.join("best.ckpt");
    let mut epochs = Vec::new();
    while trainer.epoch() < setup.train.epochs {
        let before = trainer.meta().best_loss;
        let mut write_err = None;
        let summary = trainer.run_epoch(|r| {
            let line = serde_json::to_string(r).expect("plain record serializes");
            if let Err(e) = writeln!(metrics, "{line}") {
                write_err.get_or_insert(e);
            }
        })?;
        if let Some(e) = write_err {
            return Err(io_err(&metrics_path)(e));
        }
        metrics.flush().map_err(io_err(&metrics_path))?;
        let ck = trainer.checkpoint();
        ck.save(opts.out_dir.join(format!("epoch_{:04}.ckpt", summary.epoch)))?;
        ck.save(&last)?;
        if trainer.meta().best_loss < before || !best.exists() {
            ck.save(&best)?;
        }
        log::info!("epoch {} mean loss {:.4}", summary.epoch, summary.mean_loss);
        on_epoch(&summary);
        epochs.push(summary);
    }
    Ok(TrainSummary {
        checkpoint: trainer.checkpoint(),
        epochs,
        last_checkpoint: last,
        best_checkpoint: best,
    })
}
