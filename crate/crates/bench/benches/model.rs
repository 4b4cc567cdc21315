use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use masknet::model::Topology;
use masknet::train::objective_and_grad;
use masknet_bench::{batch, dataset, model};

const TOPOLOGIES: [Topology; 4] = [Topology::Linear, Topology::Dnn, Topology::Serial, Topology::Parallel];

fn forward(c: &mut Criterion) {
    let data = dataset(1024);
    let mut g = c.benchmark_group("forward_1024");
    for t in TOPOLOGIES {
        let m = model(t, &data);
        let b = batch(&data, 1024);
        g.bench_with_input(BenchmarkId::from_parameter(t), &b, |bench, b| {
            bench.iter(|| m.network.forward(m.params.values(), b).unwrap().logits[0])
        });
    }
    g.finish();
}

fn forward_backward(c: &mut Criterion) {
    let data = dataset(256);
    let mut g = c.benchmark_group("forward_backward_256");
    for t in TOPOLOGIES {
        let mut m = model(t, &data);
        let b = batch(&data, 256);
        g.bench_function(BenchmarkId::from_parameter(t), |bench| {
            bench.iter(|| objective_and_grad(&m.network, &mut m.params, &b, 1e-4).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, forward, forward_backward);
criterion_main!(benches);
