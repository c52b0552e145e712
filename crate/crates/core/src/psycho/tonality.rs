/// Magnitude floor applied before taking logarithms.
pub const TONALITY_FLOOR: f64 = 1e-12;

/// Spectral-flatness tonality, 0 for a flat (noise-like) spectrum and 1 for a
/// single spectral line.
///
/// `tau = min(1, -10 log10(GM / AM) / 60)` on `|A_k|` floored at
/// [`TONALITY_FLOOR`]. An all-zero block has tau = 0. Magnitudes are divided
/// by their maximum first so a flat spectrum evaluates to exactly 0.
pub fn tonality(amplitudes: &[f64]) -> f64 {
    if amplitudes.is_empty() || amplitudes.iter().all(|&a| a == 0.0) {
        return 0.0;
    }
    let mags: Vec<f64> = amplitudes
        .iter()
        .map(|a| a.abs().max(TONALITY_FLOOR))
        .collect();
    let peak = mags.iter().copied().fold(0.0, f64::max);
    let n = mags.len() as f64;
    let mean_ln = mags.iter().map(|m| (m / peak).ln()).sum::<f64>() / n;
    let mean = mags.iter().map(|m| m / peak).sum::<f64>() / n;
    // log10(GM/AM) in natural-log form.
    let log_ratio = (mean_ln - mean.ln()) / std::f64::consts::LN_10;
    let sfm_db = 10.0 * log_ratio;
    // Adding 0.0 turns a -0.0 from the flat case into +0.0.
    (sfm_db / -60.0).clamp(0.0, 1.0) + 0.0
}

/// Mean of per-block tonality values.
pub fn mean_tonality(per_block: &[f64]) -> f64 {
    if per_block.is_empty() {
        0.0
    } else {
        per_block.iter().sum::<f64>() / per_block.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flat_is_zero_and_line_is_one() {
        assert_eq!(tonality(&[0.3; 128]), 0.0);
        assert_eq!(tonality(&[-2.0, 2.0, 2.0, -2.0]), 0.0);
        let mut line = vec![0.0; 128];
        line[5] = 1.0;
        assert_eq!(tonality(&line), 1.0);
        assert_eq!(tonality(&[0.0; 16]), 0.0);
    }

    #[test]
    fn intermediate_value() {
        // Two equal lines among four bins, rest 1e-3 of the peak:
        // GM = 1e-1.5, AM = 0.5005 -> tau = (1.5 + log10(0.5005)) / 6.
        let t = tonality(&[1.0, 1e-3, 1.0, 1e-3]);
        let expected = (1.5 + 0.5005f64.log10()) / 6.0;
        assert!((t - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bounded_and_scale_invariant(
            v in proptest::collection::vec(1e-3f64..10.0, 4..64),
            lambda in 1e-3f64..1e3,
        ) {
            let t = tonality(&v);
            prop_assert!((0.0..=1.0).contains(&t));
            let scaled: Vec<f64> = v.iter().map(|x| -x * lambda).collect();
            prop_assert!((tonality(&scaled) - t).abs() < 1e-9);
        }
    }
}
