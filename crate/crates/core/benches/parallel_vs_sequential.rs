//! Each workload runs on the global rayon pool and on a one-thread pool.
//! Built with `--no-default-features` both variants take the sequential path.

use std::hint::black_box;

use bfpo_core::dataset::{all_pairs_dataset, LabelMode, PreferenceRecord, Source};
use bfpo_core::equivalence::{audit_equivalence, AuditInputs, PASS_TOL};
use bfpo_core::losses::loss_and_grad_logits;
use bfpo_core::optim::{train_repeated, TrainConfig, TrainData};
use bfpo_core::truth::product_ground_truth;
use bfpo_core::{illustrative_ground_truth, LabelConfig, LossKind, TabularPolicy};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pools() -> [(&'static str, rayon::ThreadPool); 2] {
    [
        ("parallel", rayon::ThreadPoolBuilder::new().build().unwrap()),
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
    ]
}

fn audit(c: &mut Criterion) {
    let gt = product_ground_truth(&[0.9, -0.3, 0.4, -1.2], &[0.8, 0.1]).unwrap();
    let inputs = AuditInputs::canonical(gt, LabelConfig::canonical(0.5, 1.0).unwrap()).unwrap();
    let mut group = c.benchmark_group("audit_n8");
    for (name, pool) in pools() {
        group.bench_with_input(BenchmarkId::new(name, 256), &inputs, |b, inputs| {
            b.iter(|| pool.install(|| audit_equivalence(black_box(inputs), 256, 0, PASS_TOL).unwrap()))
        });
    }
    group.finish();
}

fn batch_gradient(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 16;
    let records: Vec<PreferenceRecord> = (0..65_536)
        .map(|_| {
            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            PreferenceRecord::new(i, j, rng.random_bool(0.5), rng.random_bool(0.5), rng.random_bool(0.5), Source::Safety).unwrap()
        })
        .collect();
    let theta: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let reference = vec![0.0; n];
    let kind = LossKind::Bfpo(LabelConfig::canonical(0.5, 1.0).unwrap());
    let mut group = c.benchmark_group("batch_gradient_65536");
    for (name, pool) in pools() {
        group.bench_function(name, |b| b.iter(|| pool.install(|| loss_and_grad_logits(&kind, black_box(&theta), &reference, &records).unwrap())));
    }
    group.finish();
}

fn repeated_training(c: &mut Criterion) {
    let data = TrainData::single(all_pairs_dataset(&illustrative_ground_truth(), LabelMode::Deterministic).unwrap());
    let u = TabularPolicy::uniform(4).unwrap();
    let kind = LossKind::Bfpo(LabelConfig::canonical(0.5, 1.0).unwrap());
    let cfg = TrainConfig { steps: 1800, ..TrainConfig::default() };
    let mut group = c.benchmark_group("train_repeated_8x1800");
    group.sample_size(20);
    for (name, pool) in pools() {
        group.bench_function(name, |b| b.iter(|| pool.install(|| train_repeated(&u, &u, &data, &kind, &cfg, 8, 0).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, audit, batch_gradient, repeated_training);
criterion_main!(benches);
