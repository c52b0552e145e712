//! Naive vs fast MDCT, and parallel vs single-thread execution of the
//! data-parallel kernels. With `--no-default-features` both modes run the
//! sequential fallback.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mdctgan::mdct::{mdct_forward_fast, mdct_forward_naive, vorbis_window, Mdct};
use mdctgan::neural::{Checkpoint, Graph, ModelConfig, Tensor4};
use mdctgan::psycho::{bark_partition, psychoacoustic_noise, PsychoConfig, PsychoModel};
use mdctgan::synth::white_noise;
use mdctgan::AudioBuffer;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const RATE: u32 = 22016;

fn signal(len: usize, channels: usize) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ch = (0..channels)
        .map(|_| white_noise(len, 0.3, &mut rng))
        .collect();
    AudioBuffer::new(ch, RATE).unwrap()
}

fn naive_vs_fast(c: &mut Criterion) {
    let mut group = c.benchmark_group("mdct_forward");
    group.sample_size(10);
    for (n, m) in [(128, 256), (1024, 1024)] {
        let buf = signal(n * m, 1);
        let w = vorbis_window(n);
        let id = format!("N={n},M={m}");
        group.bench_with_input(BenchmarkId::new("naive", &id), &buf, |b, buf| {
            b.iter(|| mdct_forward_naive(black_box(buf), n, &w).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("fast", &id), &buf, |b, buf| {
            b.iter(|| mdct_forward_fast(black_box(buf), n, &w).unwrap())
        });
    }
    group.finish();
}

fn single_thread() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
}

fn parallel_vs_sequential(c: &mut Criterion) {
    let pool = single_thread();
    let mut group = c.benchmark_group("modes");
    group.sample_size(10);

    let mdct = Mdct::new(128).unwrap();
    let buf = signal(128 * 4096, 2);
    group.bench_function("mdct/parallel", |b| {
        b.iter(|| mdct.forward(black_box(&buf)).unwrap())
    });
    group.bench_function("mdct/sequential", |b| {
        pool.install(|| b.iter(|| mdct.forward(black_box(&buf)).unwrap()))
    });

    let tensor = mdct.forward(&buf).unwrap();
    let model = PsychoModel::new(bark_partition(RATE, 128).unwrap(), PsychoConfig::default());
    group.bench_function("noise/parallel", |b| {
        b.iter(|| psychoacoustic_noise(black_box(&tensor), &model, 1.0, 3))
    });
    group.bench_function("noise/sequential", |b| {
        pool.install(|| b.iter(|| psychoacoustic_noise(black_box(&tensor), &model, 1.0, 3)))
    });

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Tensor4::randn([8, 256, 32, 16], 1.0, &mut rng);
    let w = Tensor4::randn([8, 3, 16, 16], 0.1, &mut rng);
    let conv = || {
        let mut g = Graph::new();
        let (xv, wv) = (g.leaf(x.clone()), g.leaf(w.clone()));
        let y = g.conv2d(xv, wv, (4, 1)).unwrap();
        g.value(y).data()[0]
    };
    group.bench_function("conv/parallel", |b| b.iter(conv));
    group.bench_function("conv/sequential", |b| pool.install(|| b.iter(conv)));
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let model = ModelConfig {
        latent_dim: 16,
        num_blocks: 2,
        seed_blocks: 4,
        seed_bands: 4,
        channels: vec![8, 8, 8],
        output_channels: 1,
    };
    let ck = Checkpoint::random(model, RATE, 0).unwrap();
    let mdct = Mdct::new(16).unwrap();
    c.bench_function("sample_8_toy", |b| {
        b.iter(|| {
            ck.generate(8, 1)
                .unwrap()
                .iter()
                .map(|t| mdct.inverse(t).unwrap().len())
                .sum::<usize>()
        })
    });
}

criterion_group!(benches, naive_vs_fast, parallel_vs_sequential, sampling);
criterion_main!(benches);
