//! Synthetic test signals and the tone dataset used for toy training.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::AudioBuffer;
use crate::error::Result;
use crate::mdct::Mdct;
use crate::MdctTensor;

/// Sum of sinusoids `(frequency_hz, amplitude)`.
pub fn partials(components: &[(f64, f64)], len: usize, sample_rate_hz: u32) -> Vec<f64> {
    let fs = sample_rate_hz as f64;
    (0..len)
        .map(|i| {
            let t = i as f64 / fs;
            components
                .iter()
                .map(|&(f, a)| a * (2.0 * PI * f * t).sin())
                .sum()
        })
        .collect()
}

pub fn sine(frequency_hz: f64, amplitude: f64, len: usize, sample_rate_hz: u32) -> Vec<f64> {
    partials(&[(frequency_hz, amplitude)], len, sample_rate_hz)
}

pub fn white_noise(len: usize, std: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect()
}

/// Parameters of the synthetic tone corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneCorpus {
    pub min_fundamental_hz: f64,
    pub max_fundamental_hz: f64,
    pub max_harmonics: usize,
    pub peak_amplitude: f64,
}

impl Default for ToneCorpus {
    fn default() -> Self {
        Self {
            min_fundamental_hz: 110.0,
            max_fundamental_hz: 880.0,
            max_harmonics: 4,
            peak_amplitude: 0.5,
        }
    }
}

impl ToneCorpus {
    /// One note: random fundamental, 1..=max_harmonics harmonics with `1/h`
    /// amplitudes, random attack and exponential decay.
    pub fn note(&self, len: usize, sample_rate_hz: u32, rng: &mut impl Rng) -> Vec<f64> {
        let fs = sample_rate_hz as f64;
        let f0 = rng.random_range(self.min_fundamental_hz..=self.max_fundamental_hz);
        let harmonics = rng.random_range(1..=self.max_harmonics.max(1));
        let phase: Vec<f64> = (0..harmonics)
            .map(|_| rng.random_range(0.0..2.0 * PI))
            .collect();
        let attack = rng.random_range(0.0..0.2) * len as f64;
        let decay = rng.random_range(0.5..4.0) / len as f64;
        let norm: f64 = (1..=harmonics).map(|h| 1.0 / h as f64).sum();
        (0..len)
            .map(|i| {
                let x = i as f64;
                let env = if x < attack {
                    x / attack
                } else {
                    (-(x - attack) * decay).exp()
                };
                let t = x / fs;
                let s: f64 = (1..=harmonics)
                    .filter(|&h| h as f64 * f0 < fs / 2.0)
                    .map(|h| (2.0 * PI * h as f64 * f0 * t + phase[h - 1]).sin() / h as f64)
                    .sum();
                self.peak_amplitude * env * s / norm
            })
            .collect()
    }

    /// `count` single-channel MDCT tensors of `blocks x bands`.
    pub fn dataset(
        &self,
        count: usize,
        blocks: usize,
        bands: usize,
        sample_rate_hz: u32,
        seed: u64,
    ) -> Result<Vec<MdctTensor>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdct = Mdct::new(bands)?;
        (0..count)
            .map(|_| {
                let note = self.note(blocks * bands, sample_rate_hz, &mut rng);
                mdct.forward(&AudioBuffer::mono(note, sample_rate_hz)?)
            })
            .collect()
    }
}
