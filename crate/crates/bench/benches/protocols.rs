use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use recon_bench::{cost_matrix, key_sets};
use recon_core::emd::{default_params, run_emd_protocol};
use recon_core::gap::{run_gap_protocol, GapParams};
use recon_core::geometry::GridSpec;
use recon_core::harness::planted::{generate_emd_instance, generate_gap_instance};
use recon_core::hashing::lsh::{LshKind, MlshFamilySpec};
use recon_core::iblt::reconcile_key_sets;
use recon_core::matching::min_cost_matching;
use recon_core::transport::Transport;

fn matching(c: &mut Criterion) {
    let mut g = c.benchmark_group("hungarian");
    for n in [32usize, 128, 256] {
        let cost = cost_matrix(n, n as u64);
        g.bench_with_input(BenchmarkId::from_parameter(n), &cost, |b, cost| {
            b.iter(|| min_cost_matching(black_box(cost)).unwrap())
        });
    }
    g.finish();
}

fn iblt(c: &mut Criterion) {
    let (a, b) = key_sets(10_000, 50, 1);
    c.bench_function("iblt reconcile 10k keys, 100 differences", |bench| {
        bench.iter(|| {
            let mut tr = Transport::new();
            reconcile_key_sets(black_box(&a), black_box(&b), 100, 3, 7, &mut tr).unwrap()
        })
    });
}

fn emd(c: &mut Criterion) {
    let space = GridSpec::hamming(16).unwrap();
    let inst = generate_emd_instance(&space, 128, 4, 1.0, 3.0, 2).unwrap();
    let params = default_params(&space, 128, 4, 3).unwrap();
    let mut g = c.benchmark_group("emd");
    g.sample_size(10);
    g.bench_function("hamming n=128 d=16 k=4", |b| {
        b.iter(|| {
            let mut tr = Transport::new();
            run_emd_protocol(&inst.s_a, &inst.s_b, &params, 4, &mut tr).ok()
        })
    });
    g.finish();
}

fn gap(c: &mut Criterion) {
    let space = GridSpec::hamming(1024).unwrap();
    let inst = generate_gap_instance(&space, 256, 8, 1.0, 384.0, 5).unwrap();
    let family = MlshFamilySpec::new(LshKind::HammingBit, 1024.0, space).unwrap();
    let params = GapParams::new(1.0, 384.0, 0.99, family, 256, 5.0, 6).unwrap();
    let mut g = c.benchmark_group("gap");
    g.sample_size(10);
    g.bench_function("hamming n=256 d=1024 k=8", |b| {
        b.iter(|| {
            let mut tr = Transport::new();
            run_gap_protocol(&inst.s_a, &inst.s_b, &params, 8, &mut tr).unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, matching, iblt, emd, gap);
criterion_main!(benches);
