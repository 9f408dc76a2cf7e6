use criterion::{criterion_group, criterion_main, Criterion};

use sar2opt_bench::scattering;
use sar2opt_core::dataset::synthetic::synthetic_scene;
use sar2opt_core::dataset::{normalize_sar, pauli_rgb, tile, DEFAULT_LAMBDA};

fn preparation(c: &mut Criterion) {
    let s = scattering(512, 512).unwrap();
    c.bench_function("pauli_rgb_512", |b| b.iter(|| pauli_rgb(&s, DEFAULT_LAMBDA).unwrap()));
    let (sar, _) = synthetic_scene(1024, 1024, 8, 1).unwrap();
    c.bench_function("normalize_sar_1024", |b| b.iter(|| normalize_sar(&sar, DEFAULT_LAMBDA).unwrap()));
    c.bench_function("tile_1024_256", |b| b.iter(|| tile(&sar, 256, "bench").unwrap()));
}

criterion_group!(benches, preparation);
criterion_main!(benches);
