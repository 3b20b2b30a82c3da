use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nbrpred::graph::pifa;
use nbrpred::matcher::{loss_and_grad, predict, EncoderModel, RankerLevel};
use nbrpred::sparse::{spmm, DenseMatrix};
use nbrpred::tree::build_tree;
use nbrpred_bench::{batch, csbm, features, model, tree};

fn sparse_products(c: &mut Criterion) {
    let mut group = c.benchmark_group("spmm");
    for n in [1000, 4000] {
        let inst = csbm(n, 0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &inst, |b, inst| {
            b.iter(|| spmm(black_box(inst.graph.adjacency()), black_box(&inst.features)).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("pifa");
    for n in [1000, 4000] {
        let inst = csbm(n, 0);
        let x = features(&inst);
        group.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| {
            b.iter(|| pifa(black_box(&inst.graph), black_box(x)).unwrap())
        });
    }
    group.finish();
}

fn tree_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("tree_build");
    group.sample_size(10);
    for n in [1000, 4000] {
        let inst = csbm(n, 0);
        let z = pifa(&inst.graph, &features(&inst)).unwrap();
        let schedule = [8, 64, 512, n];
        group.bench_with_input(BenchmarkId::from_parameter(n), &z, |b, z| {
            b.iter(|| build_tree(black_box(z), &schedule, 0).unwrap())
        });
    }
    group.finish();
}

fn train_step(c: &mut Criterion) {
    let inst = csbm(2000, 0);
    let x = features(&inst);
    let t = tree(&inst, &[8, 64, 2000]);
    let encoder = EncoderModel::init(50, 64, 0);
    let mut group = c.benchmark_group("loss_and_grad");
    for level in 0..t.depth() {
        let b32 = batch(&inst, &t, level, 32);
        let ranker = RankerLevel {
            weight: DenseMatrix::zeros(t.level_size(level), 64),
        };
        group.bench_with_input(BenchmarkId::new("level", level), &b32, |b, b32| {
            b.iter(|| loss_and_grad(&encoder, &ranker, &x, black_box(b32), 1.0, 1e-6).unwrap())
        });
    }
    group.finish();
}

fn beam_search(c: &mut Criterion) {
    let inst = csbm(2000, 0);
    let x = features(&inst);
    let m = model(&tree(&inst, &[8, 64, 2000]), 50, 64);
    let mut group = c.benchmark_group("predict");
    for beam in [1, 10, 50] {
        group.bench_with_input(BenchmarkId::new("beam", beam), &beam, |b, &beam| {
            b.iter(|| predict(&m, &x, black_box(17), beam, 10).unwrap())
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    sparse_products,
    tree_build,
    train_step,
    beam_search
);
criterion_main!(benches);
