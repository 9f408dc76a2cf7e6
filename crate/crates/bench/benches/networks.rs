use candle_core::{DType, Device};
use criterion::{criterion_group, criterion_main, Criterion};

use sar2opt_bench::{input, pairs};
use sar2opt_core::nn::{Discriminator, DiscriminatorConfig, Mode, Translator, TranslatorConfig};
use sar2opt_core::trainer::{train_step, Batch, TrainState, TrainerConfig};
use sar2opt_core::ModelConfig;

fn forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward");
    g.sample_size(10);
    let cpu = Device::Cpu;
    let tiny = Translator::build(&TranslatorConfig::tiny(1, 3), 0, 0, DType::F32, &cpu).unwrap();
    let x = input(1, 64, DType::F32).unwrap();
    g.bench_function("translator_tiny_64", |b| b.iter(|| tiny.forward(&x, &mut Mode::Eval).unwrap()));

    let full = Translator::build(&TranslatorConfig::new(1, 3), 0, 0, DType::F32, &cpu).unwrap();
    let x = input(1, 256, DType::F32).unwrap();
    g.bench_function("translator_256", |b| b.iter(|| full.forward(&x, &mut Mode::Eval).unwrap()));

    let d = Discriminator::build(&DiscriminatorConfig::new(3), 0, 0, DType::F32, &cpu).unwrap();
    let y = input(3, 256, DType::F32).unwrap();
    g.bench_function("discriminator_256", |b| b.iter(|| d.forward(&y, &mut Mode::train()).unwrap()));
    g.finish();
}

fn training(c: &mut Criterion) {
    let mut g = c.benchmark_group("train_step");
    g.sample_size(10);
    let data = pairs(4, 32).unwrap();
    let refs: Vec<_> = data.iter().take(2).collect();
    let batch = Batch::from_pairs(&refs, DType::F32, &Device::Cpu).unwrap();
    for replicas in [1usize, 2] {
        let cfg = TrainerConfig { num_replicas: replicas, ..Default::default() };
        let mut state = TrainState::new(&ModelConfig::tiny(1), &cfg, DType::F32, &Device::Cpu).unwrap();
        let batches = vec![batch.clone(); replicas];
        g.bench_function(format!("tiny_32_x2_replicas{replicas}"), |b| {
            b.iter(|| train_step(&mut state, &batches).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, forward, training);
criterion_main!(benches);
