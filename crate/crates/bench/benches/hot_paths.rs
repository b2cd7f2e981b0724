use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use omnitab_bench::{chain_dataset, factor_dataset};
use omnitab_core::chordal::{fit_parameters, learn_structure, ScoreConfig};
use omnitab_core::data::encode_one_hot;
use omnitab_core::mask::make_mask_plan;
use omnitab_core::metrics::{wapmc, PredEntry, PredictionTable};
use omnitab_core::selfsup::{train_made, HyperGrid, TrainConfig};

fn tiny_train_config() -> TrainConfig {
    TrainConfig {
        mask_rate: 0.2,
        epochs: 1,
        patience: 1,
        lr: 1e-3,
        grid: HyperGrid {
            layers: vec![1],
            neurons: vec![32],
            batch: vec![32],
            dropout_ratio: vec![],
        },
        grid_draws: 1,
        batch: None,
        masked_reconstruction: false,
    }
}

fn structure_learning(c: &mut Criterion) {
    let train = chain_dataset(1_000, 8, 3, 7);
    let cfg = ScoreConfig::default();
    c.bench_function("learn_structure_1k_x8", |b| {
        b.iter(|| learn_structure(black_box(&train), &cfg).unwrap())
    });
}

fn jt_inference(c: &mut Criterion) {
    let train = chain_dataset(2_000, 10, 3, 11);
    let structure = learn_structure(&train, &ScoreConfig::default()).unwrap();
    let model = fit_parameters(&structure, &train, 1.0).unwrap();
    let row = train.rows[0].clone();
    let targets: Vec<usize> = (0..10).step_by(2).collect();
    c.bench_function("jt_predict_5_of_10", |b| {
        b.iter(|| model.predict_instance(black_box(&row), &targets, &targets).unwrap())
    });
    let evidence: BTreeMap<usize, usize> = [(0usize, 1usize), (4, 2), (9, 0)].into();
    c.bench_function("jt_posterior_single", |b| {
        b.iter(|| model.posterior(black_box(&evidence), 5).unwrap())
    });
}

fn masking(c: &mut Criterion) {
    c.bench_function("mask_plan_5k_x23", |b| {
        b.iter(|| make_mask_plan(5_000, 23, 0.2, black_box(3)).unwrap())
    });
}

fn scoring(c: &mut Criterion) {
    let data = chain_dataset(5_000, 8, 3, 13);
    let plan = make_mask_plan(data.n(), data.width(), 0.2, 17).unwrap();
    let entries: Vec<PredEntry> = plan
        .masked
        .iter()
        .enumerate()
        .flat_map(|(i, cols)| {
            cols.iter().map(move |&attr| PredEntry {
                instance: i,
                attr,
                value: omnitab_core::data::Cell::Cat(0),
            })
        })
        .collect();
    let preds = PredictionTable { entries };
    c.bench_function("wapmc_5k_x8", |b| {
        b.iter(|| wapmc(black_box(&preds), &data, &plan).unwrap())
    });
}

fn encoding(c: &mut Criterion) {
    let data = factor_dataset(5_000, 12, 19);
    c.bench_function("one_hot_5k_x12", |b| b.iter(|| encode_one_hot(black_box(&data), None)));
}

fn nn_training(c: &mut Criterion) {
    let train = chain_dataset(256, 8, 3, 23);
    let cfg = tiny_train_config();
    let mut group = c.benchmark_group("nn");
    group.sample_size(10);
    group.bench_function("made_one_epoch_256_x8", |b| {
        b.iter(|| train_made(black_box(&train), &cfg, 29).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    structure_learning,
    jt_inference,
    masking,
    scoring,
    encoding,
    nn_training
);
criterion_main!(benches);
