use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pasm_core::fourier::dft2_centered;
use pasm_core::net::{forward, init_network, NetConfig};
use pasm_core::oracle::random_steps;
use pasm_core::scan::{cfds_order, serialize};
use pasm_core::ssm::{scan_parallel, scan_sequential};
use pasm_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn image(h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[h, w], |_| rng.random_range(0.0..1.0))
}

fn fft(c: &mut Criterion) {
    let mut g = c.benchmark_group("dft2_centered");
    for n in [32, 64, 128, 96] {
        let img = image(n, n, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &img, |b, img| b.iter(|| dft2_centered(black_box(img))));
    }
    g.finish();
}

fn scans(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut g = c.benchmark_group("ssm_scan");
    for len in [1024, 16384] {
        let steps = random_steps(len, 8, &mut rng);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        g.bench_with_input(BenchmarkId::new("sequential", len), &len, |b, _| b.iter(|| scan_sequential(&x, &steps)));
        g.bench_with_input(BenchmarkId::new("parallel", len), &len, |b, _| b.iter(|| scan_parallel(&x, &steps)));
    }
    g.finish();

    let order = cfds_order(64, 64, 0).unwrap();
    let feats = Tensor::from_fn(&[1, 8, 64, 64], |i| i as f64);
    c.bench_function("serialize_cfds_8x64x64", |b| b.iter(|| serialize(black_box(&feats), &order)));
}

fn network(c: &mut Criterion) {
    let cfg = NetConfig::default();
    let (net, _) = init_network(&cfg, 0).unwrap();
    let img = image(cfg.height, cfg.width, 3).reshape(&[1, 1, cfg.height, cfg.width]).unwrap();
    c.bench_function("forward_c8_32x32", |b| b.iter(|| forward(black_box(&img), &net)));
}

criterion_group!(benches, fft, scans, network);
criterion_main!(benches);
