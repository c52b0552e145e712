use super::BarkPartition;

/// Amplitude-domain quantization step per bin, `sqrt(threshold)` of the
/// bin's Bark band.
pub fn quantization_step(combined_threshold: &[f64], partition: &BarkPartition) -> Vec<f64> {
    partition
        .bin_to_band()
        .iter()
        .map(|&j| combined_threshold[j].max(0.0).sqrt())
        .collect()
}

/// Nearest integer multiple of `step`; a zero step leaves `a` unchanged.
pub fn quantize(a: f64, step: f64) -> f64 {
    if step == 0.0 {
        a
    } else {
        (a / step).round() * step
    }
}

/// Integer multiple index `a_k` for amplitude `a`.
pub fn quantization_index(a: f64, step: f64) -> i64 {
    if step == 0.0 {
        0
    } else {
        (a / step).round() as i64
    }
}

pub fn quantize_block(amplitudes: &[f64], steps: &[f64]) -> Vec<f64> {
    amplitudes
        .iter()
        .zip(steps)
        .map(|(&a, &s)| quantize(a, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rounding_examples() {
        assert_eq!(quantize(0.0, 0.5), 0.0);
        let step = 0.25;
        assert_eq!(quantization_index(3.7 * step, step), 4);
        let err = (3.7 * step - quantize(3.7 * step, step)).abs();
        assert!((err - 0.3 * step).abs() < 1e-12);
        assert_eq!(quantize(1.2345, 0.0), 1.2345);
    }

    #[test]
    fn steps_broadcast_over_band() {
        let p = crate::psycho::bark_partition(22016, 16).unwrap();
        let thr: Vec<f64> = (0..p.band_count()).map(|j| (j * j) as f64).collect();
        let steps = quantization_step(&thr, &p);
        for (k, s) in steps.iter().enumerate() {
            assert_eq!(*s, (p.band_of_bin(k) as f64));
        }
    }

    proptest! {
        #[test]
        fn error_is_at_most_half_step(a in -1e4f64..1e4, step in 1e-6f64..1e2) {
            prop_assert!((a - quantize(a, step)).abs() <= step / 2.0 + 1e-15 * a.abs().max(1.0));
        }
    }
}
