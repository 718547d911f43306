use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use cuenet_core::analysis::bench::AttentionFixture;
use cuenet_core::analysis::flops::count_flops;
use cuenet_core::{forward, init_weights, AttentionKind, DetectionSequence, ModelConfig, ModelParams, Tensor};

const DIM: usize = 64;

fn pooled_attention(c: &mut Criterion) {
    let mut group = c.benchmark_group("pooled_attention");
    group.sample_size(10);
    for kind in AttentionKind::ALL {
        let top = if kind == AttentionKind::SelfAttention { 11 } else { 14 };
        for e in 8..=top {
            let n = 1usize << e;
            let fx = AttentionFixture::new(kind, n, DIM, 1, 0).expect("valid fixture");
            group.throughput(Throughput::Elements(n as u64));
            group.bench_with_input(BenchmarkId::new(kind.as_str(), n), &fx, |b, fx| b.iter(|| black_box(fx.run())));
        }
    }
    group.finish();
}

fn desk_forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("desk_forward");
    group.sample_size(10);
    for kind in AttentionKind::ALL {
        let cfg = ModelConfig { global_attention: kind, ..ModelConfig::desk() };
        let params = ModelParams::from_container(&init_weights(&cfg).expect("weights"), &cfg).expect("params");
        let shape = [cfg.frames, cfg.height, cfg.width, cfg.channels];
        let len = shape.iter().product();
        let x = Tensor::from_f64(&shape, (0..len).map(|i| (i % 251) as f64 / 251.0).collect()).expect("video");
        let det = DetectionSequence::empty(cfg.frames, (cfg.height, cfg.width));
        group.throughput(Throughput::Elements(count_flops(&cfg).flops()));
        group.bench_function(kind.as_str(), |b| {
            b.iter(|| black_box(forward(&x, &det, &params, &cfg).expect("forward")))
        });
    }
    group.finish();
}

criterion_group!(benches, pooled_attention, desk_forward);
criterion_main!(benches);
