use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use pareto_choice::{
    generate_task, loss_grad, pareto_front, Architecture, ChoiceMask, LossWeights, NetworkParams,
    Problem,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn front(c: &mut Criterion) {
    let mut group = c.benchmark_group("pareto_front");
    for m in [10, 50, 200] {
        let z = random_matrix(m, 3, 1);
        group.bench_with_input(BenchmarkId::from_parameter(m), &z, |b, z| {
            b.iter(|| pareto_front(black_box(z.view())).unwrap())
        });
    }
    group.finish();
}

fn loss(c: &mut Criterion) {
    let mut group = c.benchmark_group("loss_grad");
    let w = LossWeights::uniform();
    for m in [10, 40] {
        let q = random_matrix(m, 6, 2);
        let z = random_matrix(m, 2, 3);
        let mask = ChoiceMask::new((0..m).map(|i| i % 3 == 0).collect());
        group.bench_function(BenchmarkId::from_parameter(m), |b| {
            b.iter(|| loss_grad(q.view(), black_box(z.view()), &mask, &w).unwrap())
        });
    }
    group.finish();
}

fn network(c: &mut Criterion) {
    let mut group = c.benchmark_group("network");
    let x = random_matrix(640, 6, 4);
    for (layers, units) in [(1, 32), (3, 64)] {
        let params = NetworkParams::init(6, &Architecture::new(layers, units, 2), 0).unwrap();
        let label = format!("{layers}x{units}");
        group.bench_function(BenchmarkId::new("infer", &label), |b| {
            b.iter(|| params.infer(black_box(x.view())).unwrap())
        });
        group.bench_function(BenchmarkId::new("forward_backward", &label), |b| {
            b.iter(|| {
                let mut p = params.clone();
                let (z, trace) = p.forward_train(x.view()).unwrap();
                p.backward(&trace, z.view()).unwrap()
            })
        });
    }
    group.finish();
}

fn generation(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate_task");
    for problem in [Problem::Tp, Problem::Dtlz7, Problem::Zdt5] {
        let spec = problem.spec();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        group.bench_function(problem.name(), |b| {
            b.iter(|| generate_task(&spec, 10, &mut rng, "bench").unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, front, loss, network, generation);
criterion_main!(benches);
