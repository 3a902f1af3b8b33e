use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use grasscode::analysis::NoiseModel;
use grasscode::io::to_sparse_store;
use grasscode::rng;
use grasscode::schubert::{allocate_patterns, materialize, ParamSet};
use grasscode::simulator::{transmit, ChannelRealization, DenseDetector, SparseDetector};
use grasscode::{Constellation, C64};

const T: usize = 6;
const N: usize = 2;
const CARD: usize = 16;

fn setup(m: usize) -> (Constellation, Vec<Vec<C64>>) {
    let mut r = rng::stream(1, &[m as u64]);
    let points = allocate_patterns(T, m, T, CARD)
        .unwrap()
        .iter()
        .map(|p| materialize(p, &ParamSet::random(p, &mut r)).unwrap())
        .collect();
    let c = Constellation::new(points).unwrap();
    let noise = NoiseModel::from_snr_db(10.0).unwrap();
    let ys = (0..256)
        .map(|f| {
            let ch = ChannelRealization::sample(T, m, N, &noise, &mut r);
            transmit(&c.points()[f % CARD], &ch).unwrap().iter().copied().collect()
        })
        .collect();
    (c, ys)
}

fn glrt(crit: &mut Criterion) {
    let mut g = crit.benchmark_group("glrt");
    for m in [2usize, 3] {
        let (c, ys) = setup(m);
        let store = to_sparse_store(&c).unwrap();
        let dense = DenseDetector::new(&c);
        let sparse = SparseDetector::new(&store);
        g.bench_with_input(BenchmarkId::new("dense", m), &ys, |b, ys| {
            b.iter(|| ys.iter().map(|y| dense.detect(black_box(y), N)).sum::<usize>())
        });
        g.bench_with_input(BenchmarkId::new("sparse", m), &ys, |b, ys| {
            b.iter(|| ys.iter().map(|y| sparse.detect(black_box(y), N)).sum::<usize>())
        });
    }
    g.finish();
}

criterion_group!(benches, glrt);
criterion_main!(benches);
