use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use zp3_bench::{camera, cloud, SIZE};
use zp3_core::splat::{render_backward, render_forward, render_reference, RenderOptions};
use zp3_core::{Domain, Image};

fn forward(c: &mut Criterion) {
    let cam = camera(30.0);
    let opts = RenderOptions::default();
    let mut group = c.benchmark_group("render_forward");
    for n in [500, 2000, 8000] {
        let cloud = cloud(n);
        group.bench_with_input(BenchmarkId::new("tiled", cloud.len()), &cloud, |b, cloud| {
            b.iter(|| render_forward(cloud, &cam, SIZE, SIZE, &opts).unwrap())
        });
    }
    let small = cloud(500);
    group.bench_function(BenchmarkId::new("reference", small.len()), |b| {
        b.iter(|| render_reference(&small, &cam, SIZE, SIZE, &opts).unwrap())
    });
    group.finish();
}

fn backward(c: &mut Criterion) {
    let cam = camera(30.0);
    let opts = RenderOptions::default();
    let upstream = Image::filled(SIZE, SIZE, 3, Domain::Pixel, 0.01);
    let alpha = Image::filled(SIZE, SIZE, 1, Domain::Pixel, 0.01);
    let mut group = c.benchmark_group("render_backward");
    for n in [500, 2000] {
        let cloud = cloud(n);
        let (_, ctx) = render_forward(&cloud, &cam, SIZE, SIZE, &opts).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(cloud.len()), &cloud, |b, cloud| {
            b.iter(|| render_backward(cloud, &cam, &ctx, &upstream, Some(&alpha)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forward, backward);
criterion_main!(benches);
