//! Criterion benches for the hot paths: mask generation, single-image
//! attacks, and batch attacks run sequentially (`jobs = 1`) versus on the
//! worker pool. Build with `--no-default-features` to measure the pure
//! sequential fallback.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use nui_core::attack::{apply_attack, attack_images, AttackSpec};
use nui_core::buffer::ImageBuffer;
use nui_core::mask::{generate_mask, MaskId};

fn batch(count: usize, side: u32) -> Vec<ImageBuffer> {
    (0..count)
        .map(|i| {
            let len = (side * side * 3) as usize;
            let pixels: Vec<u8> = (0..len).map(|j| ((j + i * 131) % 251) as u8).collect();
            ImageBuffer::new(side, side, 3, pixels).unwrap()
        })
        .collect()
}

fn bench_mask_generation(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate_mask");
    group.bench_function("canonical_all_13", |b| {
        b.iter(|| {
            for id in MaskId::ALL {
                black_box(generate_mask(id, 32, 32).unwrap());
            }
        })
    });
    group.bench_function("resampled_224", |b| {
        b.iter(|| black_box(generate_mask(MaskId::M6, 224, 224).unwrap()))
    });
    group.finish();
}

fn bench_single_attack(c: &mut Criterion) {
    let img = batch(1, 224).pop().unwrap();
    let spec = AttackSpec::uniform(MaskId::M9, -1.4).unwrap();
    c.bench_function("apply_attack_224", |b| {
        b.iter(|| black_box(apply_attack(&img, &spec).unwrap()))
    });
}

fn bench_batch_attack(c: &mut Criterion) {
    let images = batch(256, 32);
    let spec = AttackSpec::uniform(MaskId::M6, -1.4).unwrap();
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(4);

    let mut group = c.benchmark_group("attack_images_256x32");
    group.bench_with_input(BenchmarkId::new("jobs", 1), &1usize, |b, &jobs| {
        b.iter(|| black_box(attack_images(&images, &spec, jobs).unwrap()))
    });
    group.bench_with_input(
        BenchmarkId::new("jobs", workers),
        &workers,
        |b, &jobs| b.iter(|| black_box(attack_images(&images, &spec, jobs).unwrap())),
    );
    group.finish();
}

criterion_group!(
    benches,
    bench_mask_generation,
    bench_single_attack,
    bench_batch_attack
);
criterion_main!(benches);
