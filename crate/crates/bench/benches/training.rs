use avse_bench::{magnitudes, speech_pair, visual};
use avse_core::autograd::{Tape, Tensor};
use avse_core::losses::{LossConfig, LossKind};
use avse_core::model::{MaskEstimator, ModelConfig};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn bench_training(c: &mut Criterion) {
    let (clean, noisy) = speech_pair(1.5);
    let (cm, nm) = (magnitudes(&clean).mags, magnitudes(&noisy).mags);
    let vis = visual(nm.ncols(), 32);
    let model = MaskEstimator::build(ModelConfig::default()).unwrap();

    let mut g = c.benchmark_group("mask estimator 1.5 s");
    g.sample_size(10);
    g.bench_function("forward", |b| b.iter(|| model.forward(black_box(&nm), black_box(&vis)).unwrap()));
    for kind in [LossKind::Mse, LossKind::Stoi] {
        let loss = LossConfig::new(kind);
        g.bench_function(format!("forward and backward, {kind} loss"), |b| {
            b.iter(|| {
                let mut tape = Tape::new();
                let pass = model.forward_on(&mut tape, &nm, &vis, true).unwrap();
                let target = tape.constant(Tensor::from_array2(&cm));
                let l = loss.apply(&mut tape, pass.masked, target, 16_000).unwrap();
                tape.backward(l.value).unwrap();
                black_box(tape.grad(pass.params[0]).is_some())
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench_training);
criterion_main!(benches);
