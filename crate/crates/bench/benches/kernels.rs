use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lightgan::compute::{conv2d, Differentiable, Filter};
use lightgan::metrics::{ssim, SsimParams};
use lightgan::models::{build_generator, Preset};
use lightgan::Shape4;
use lightgan_bench::{pattern_plane, pattern_tensor};
use std::hint::black_box;

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d_3x3");
    for (cin, cout, size) in [(1, 8, 128), (8, 8, 128), (64, 64, 32)] {
        let x = pattern_tensor(Shape4::new(1, cin, size, size));
        let w = pattern_tensor(Shape4::new(cout, cin, 3, 3));
        let id = BenchmarkId::from_parameter(format!("{cin}x{cout}@{size}"));
        group.bench_with_input(id, &x, |b, x| {
            b.iter(|| conv2d(black_box(x), Filter::new(w.data(), [cout, cin, 3, 3], None), 1, 1).unwrap())
        });
    }
    group.finish();
}

fn generator(c: &mut Criterion) {
    let (g, params) = build_generator(Preset::new(9).unwrap().generator(), 0).unwrap();
    let x = pattern_tensor(Shape4::new(1, 1, 128, 128));
    c.bench_function("model9_forward", |b| b.iter(|| g.forward(&params, black_box(&x)).unwrap()));
    c.bench_function("model9_forward_backward", |b| {
        b.iter(|| {
            let mut p = params.clone();
            let (y, trace) = g.forward_traced(&p, black_box(&x)).unwrap();
            g.backward(&mut p, &trace, &y).unwrap()
        })
    });
}

fn metric(c: &mut Criterion) {
    let a = pattern_plane(128, 128, 0);
    let b = pattern_plane(128, 128, 5);
    let params = SsimParams::default();
    c.bench_function("ssim_128", |bench| bench.iter(|| ssim(black_box(&a), black_box(&b), &params).unwrap()));
}

criterion_group!(benches, conv, generator, metric);
criterion_main!(benches);
