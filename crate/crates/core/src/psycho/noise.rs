use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::PsychoModel;
use crate::par;
use crate::MdctTensor;

/// Random stream for block `m`, channel `c`: the seed picks the key, the
/// block/channel pair picks the ChaCha stream.
pub fn block_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Adds `N(0, (c Delta_k / 2)^2)` noise to one block, `Delta` taken from the
/// block's own thresholds.
pub fn add_block_noise(
    model: &PsychoModel,
    amplitudes: &[f64],
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    if scale == 0.0 {
        return amplitudes.to_vec();
    }
    let steps = model.steps(amplitudes);
    amplitudes
        .iter()
        .zip(&steps)
        .map(|(&a, &d)| {
            let z: f64 = StandardNormal.sample(rng);
            a + z * scale * d / 2.0
        })
        .collect()
}

/// Psychoacoustic noise layer.
///
/// Deterministic given `seed`; `scale = 0` returns an exact copy.
pub fn psychoacoustic_noise(
    tensor: &MdctTensor,
    model: &PsychoModel,
    scale: f64,
    seed: u64,
) -> MdctTensor {
    if scale == 0.0 {
        return tensor.clone();
    }
    let (blocks, channels) = (tensor.blocks(), tensor.channels());
    let noisy = par::map_range(blocks * channels, |task| {
        let (m, c) = (task / channels, task % channels);
        let mut rng = block_rng(seed, task as u64);
        add_block_noise(model, &tensor.block(m, c), scale, &mut rng)
    });
    let mut out = tensor.clone();
    for (task, block) in noisy.iter().enumerate() {
        out.set_block(task / channels, task % channels, block);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psycho::{bark_partition, PsychoConfig};

    fn model() -> PsychoModel {
        PsychoModel::new(bark_partition(22016, 32).unwrap(), PsychoConfig::default())
    }

    fn tensor() -> MdctTensor {
        let v: Vec<f64> = (0..4 * 32 * 2)
            .map(|i| ((i * 31) % 17) as f64 * 0.01)
            .collect();
        MdctTensor::from_vec(v, 4, 32, 2, 22016).unwrap()
    }

    #[test]
    fn zero_scale_is_identity() {
        let t = tensor();
        assert_eq!(psychoacoustic_noise(&t, &model(), 0.0, 9), t);
    }

    #[test]
    fn same_seed_same_output() {
        let t = tensor();
        let a = psychoacoustic_noise(&t, &model(), 1.0, 9);
        let b = psychoacoustic_noise(&t, &model(), 1.0, 9);
        assert_eq!(a, b);
        let c = psychoacoustic_noise(&t, &model(), 1.0, 10);
        assert_ne!(a, c);
        assert_ne!(a, t);
    }
}
