use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};

use confprint::augment::AugmentationSpec;
use confprint::dsp::{Featurizer, SpectralConfig};
use confprint::encoder::{ConformerConfig, Model};
use confprint::par::Execution;
use confprint::synth::toy_clip;
use confprint::trainer::{TrainConfig, TrainSetup, Trainer};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn embed_batch(c: &mut Criterion) {
    let cfg = ConformerConfig::small();
    let model = Model::<f32>::build(cfg, 1).unwrap();
    let featurizer = Featurizer::new(SpectralConfig::default().with_n_mels(cfg.n_mels)).unwrap();
    let specs: Vec<_> = (0..8)
        .map(|i| featurizer.log_mel(&toy_clip(i, 3.0, 16_000)).unwrap())
        .collect();
    let mut group = c.benchmark_group("embed_batch_small_x8");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| model.embed_batch_with(&specs, exec).unwrap())
        });
    }
    group.finish();
}

fn train_epoch(c: &mut Criterion) {
    let model = ConformerConfig::tiny();
    let setup = TrainSetup {
        train: TrainConfig {
            batch_size: 8,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        },
        model,
        spectral: SpectralConfig::default().with_n_mels(model.n_mels),
        augment: AugmentationSpec::default(),
    };
    let tracks: Vec<_> = (0..16).map(|i| (format!("t{i}"), toy_clip(100 + i, 4.0, 16_000))).collect();
    let mut group = c.benchmark_group("train_epoch_tiny_16_tracks");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter_batched(
                || Trainer::new(setup.clone(), tracks.clone()).unwrap().with_execution(exec),
                |mut t| t.run_epoch(|_| {}).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, embed_batch, train_epoch);
criterion_main!(benches);
