use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use masked_shapelets::baselines::NnDtw;
use masked_shapelets::eval::error_rate_with;
use masked_shapelets::synthgen::{generate, SynthConfig};
use masked_shapelets::trainer::{init_model, train, TrainConfig};
use masked_shapelets::{Execution, TimeSeriesDataset};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn data(train_size: usize, channels: usize) -> (TimeSeriesDataset, TimeSeriesDataset) {
    generate(&SynthConfig {
        train_size,
        test_size: 10,
        num_channels: channels,
        series_length: 120,
        pattern_length: 20,
        seed: 1,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn forward(c: &mut Criterion) {
    let (train, _) = data(4, 40);
    let cfg = TrainConfig {
        num_shapelets: 20,
        min_length: 15,
        max_length: 25,
        ..TrainConfig::default()
    };
    let model = init_model(&cfg, &train).unwrap();
    let inst = &train.instances()[0];
    let mut group = c.benchmark_group("forward");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| model.forward_with(black_box(inst), exec).unwrap())
        });
    }
    group.finish();
}

fn epoch(c: &mut Criterion) {
    let (train_ds, _) = data(20, 10);
    let mut group = c.benchmark_group("train_epoch");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = TrainConfig {
            num_shapelets: 10,
            min_length: 15,
            max_length: 20,
            max_iter: 1,
            execution: exec,
            ..TrainConfig::default()
        };
        group.bench_function(name, |b| b.iter(|| train(black_box(&cfg), &train_ds).unwrap()));
    }
    group.finish();
}

fn nn_dtw(c: &mut Criterion) {
    let (train, test) = data(20, 4);
    let clf = NnDtw::new(&train);
    let mut group = c.benchmark_group("nn_dtw");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| error_rate_with(&clf, black_box(&test), exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, forward, epoch, nn_dtw);
criterion_main!(benches);
