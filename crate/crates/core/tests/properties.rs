use mdctgan::audio::{decode_wav, encode_wav, resample, slice_segments};
use mdctgan::mdct::{mdct_forward_fast, mdct_forward_naive, vorbis_window, Mdct};
use mdctgan::neural::{minibatch_stddev, Graph, ModelConfig, Tensor4};
use mdctgan::psycho::{
    bark_partition, masking_threshold, mean_tonality, psychoacoustic_noise, tonality, PsychoConfig,
    PsychoModel,
};
use mdctgan::spectral::{fold_octave, spectrogram, Spectrogram};
use mdctgan::synth::{partials, white_noise};
use mdctgan::{AudioBuffer, MdctTensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn signal(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn bands() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![8usize, 16, 32, 64])
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wav_round_trip_within_one_lsb(x in signal(257)) {
        let x: Vec<f64> = x.iter().map(|v| v * (1.0 - 1.0 / 32768.0)).collect();
        let buf = AudioBuffer::mono(x.clone(), 22016).unwrap();
        let back = decode_wav(&encode_wav(&buf).unwrap()).unwrap();
        prop_assert!(max_abs_diff(&x, back.channel(0)) <= 1.0 / 32768.0);
    }

    #[test]
    fn resample_same_rate_is_identity(x in signal(100), rate in 8000u32..48000) {
        let buf = AudioBuffer::mono(x, rate).unwrap();
        prop_assert_eq!(resample(&buf, rate).unwrap(), buf);
    }

    #[test]
    fn segments_have_exact_length(len in 1usize..400, seg in 1usize..64, hop in 1usize..64) {
        let buf = AudioBuffer::mono(vec![0.25; len], 8000).unwrap();
        for s in slice_segments(&buf, seg, hop) {
            prop_assert_eq!(s.len(), seg);
        }
    }

    #[test]
    fn mdct_perfect_reconstruction_and_energy(n in bands(), blocks in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = white_noise(n * blocks, 0.3, &mut rng);
        let mdct = Mdct::new(n).unwrap();
        let buf = AudioBuffer::mono(x.clone(), 22016).unwrap();
        let y = mdct.inverse(&mdct.forward(&buf).unwrap()).unwrap();
        prop_assert!(max_abs_diff(&x, y.channel(0)) <= 1e-10);
        let e0: f64 = x.iter().map(|v| v * v).sum();
        let e1: f64 = y.channel(0).iter().map(|v| v * v).sum();
        prop_assert!((e0 - e1).abs() <= 1e-9 * e0.max(1e-300));
    }

    #[test]
    fn mdct_is_linear(n in bands(), a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = white_noise(4 * n, 1.0, &mut rng);
        let y = white_noise(4 * n, 1.0, &mut rng);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let mdct = Mdct::new(n).unwrap();
        let f = |s: &[f64]| mdct.forward(&AudioBuffer::mono(s.to_vec(), 22016).unwrap()).unwrap();
        let (fx, fy, fm) = (f(&x), f(&y), f(&mix));
        let lin: Vec<f64> = fx.amplitudes().iter().zip(fy.amplitudes()).map(|(p, q)| a * p + b * q).collect();
        prop_assert!(max_abs_diff(&lin, fm.amplitudes()) <= 1e-10);
    }

    #[test]
    fn fast_matches_naive(n in bands(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let buf = AudioBuffer::mono(white_noise(3 * n, 1.0, &mut rng), 22016).unwrap();
        let w = vorbis_window(n);
        let a = mdct_forward_naive(&buf, n, &w).unwrap();
        let b = mdct_forward_fast(&buf, n, &w).unwrap();
        prop_assert!(max_abs_diff(a.amplitudes(), b.amplitudes()) <= 1e-9);
    }

    #[test]
    fn masking_is_homogeneous_of_degree_two(x in signal(32), lambda in 0.01f64..100.0) {
        let p = bark_partition(22016, 32).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * lambda).collect();
        let m0 = masking_threshold(&x, &p, 0.3);
        let m1 = masking_threshold(&scaled, &p, 0.3);
        for (a, b) in m0.iter().zip(&m1) {
            prop_assert!((b - lambda * lambda * a).abs() <= 1e-9 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn tonality_is_scale_invariant(x in signal(64), lambda in 1e-3f64..1e3) {
        let scaled: Vec<f64> = x.iter().map(|v| v * lambda).collect();
        prop_assert!((tonality(&x) - tonality(&scaled)).abs() <= 1e-9);
    }

    #[test]
    fn spectrogram_ignores_sign(x in signal(64)) {
        let t = MdctTensor::from_vec(x.clone(), 4, 16, 1, 22016).unwrap();
        let neg = MdctTensor::from_vec(x.iter().map(|v| -v).collect(), 4, 16, 1, 22016).unwrap();
        prop_assert_eq!(spectrogram(&t), spectrogram(&neg));
    }

    #[test]
    fn fold_halves_axes_and_conserves_top_octave(x in prop::collection::vec(0.0f64..1.0, 4 * 16)) {
        let s = Spectrogram::from_vec(x, 4, 16, 1).unwrap();
        let f = fold_octave(&s).unwrap();
        prop_assert_eq!((f.blocks(), f.bands()), (4, 8));
        let before: f64 = (0..4).map(|m| (4..16).map(|k| s.get(m, k, 0)).sum::<f64>()).sum();
        let after: f64 = (0..4).map(|m| (4..8).map(|k| f.get(m, k, 0)).sum::<f64>()).sum();
        prop_assert!((before - after).abs() <= 1e-12 * before.max(1e-300));
    }

    #[test]
    fn stddev_of_constant_batch_is_exactly_zero(x in prop::collection::vec(-1e6f64..1e6, 6), b in 1usize..5) {
        let one = Tensor4::new([1, 2, 3, 1], x).unwrap();
        let mut g = Graph::new();
        let v = g.leaf(Tensor4::stack(&vec![one; b]).unwrap());
        let y = minibatch_stddev(&mut g, v).unwrap();
        for bi in 0..b {
            for m in 0..2 {
                for k in 0..3 {
                    prop_assert_eq!(g.value(y).at(bi, m, k, 1), 0.0);
                }
            }
        }
    }
}

#[test]
fn noise_layer_zero_scale_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let buf = AudioBuffer::mono(white_noise(64 * 20, 0.1, &mut rng), 22016).unwrap();
    let t = Mdct::new(64).unwrap().forward(&buf).unwrap();
    let model = PsychoModel::new(bark_partition(22016, 64).unwrap(), PsychoConfig::default());
    assert_eq!(psychoacoustic_noise(&t, &model, 0.0, 9), t);
}

#[test]
fn shape_algebra_for_one_to_six_blocks() {
    for b in 1..=6 {
        for (m0, n0) in [(4, 2), (1, 4), (2, 2)] {
            let cfg = ModelConfig {
                num_blocks: b,
                seed_blocks: m0,
                seed_bands: n0,
                ..ModelConfig::default()
            };
            let t = cfg.shape_table().unwrap();
            let last = t.generator.last().unwrap();
            assert_eq!(last.shape, (m0 * 4usize.pow(b as u32), n0 << b, 2));
        }
    }
}

#[test]
fn tone_and_noise_corpora_separate_in_tonality() {
    // Tones centred on MDCT bins, so the whole corpus is periodic in N.
    let (rate, n) = (22016u32, 128usize);
    let mdct = Mdct::new(n).unwrap();
    let mut tone_tau = Vec::new();
    for k in [5usize, 11, 20, 37, 60] {
        let f = (k as f64 + 0.5) * rate as f64 / (2 * n) as f64;
        let x = partials(&[(f, 0.5)], 64 * n, rate);
        let t = mdct.forward(&AudioBuffer::mono(x, rate).unwrap()).unwrap();
        tone_tau.extend((0..t.blocks()).map(|m| tonality(&t.block(m, 0))));
    }
    assert!(
        mean_tonality(&tone_tau) >= 0.9,
        "{}",
        mean_tonality(&tone_tau)
    );

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let t = mdct
        .forward(&AudioBuffer::mono(white_noise(100 * n, 0.3, &mut rng), rate).unwrap())
        .unwrap();
    let noise_tau: Vec<f64> = (0..t.blocks()).map(|m| tonality(&t.block(m, 0))).collect();
    assert!(mean_tonality(&noise_tau) <= 0.1);
}
