use std::f64::consts::FRAC_PI_2;

/// Analysis/synthesis window of length `2N`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFn {
    coefficients: Vec<f64>,
}

impl WindowFn {
    /// Wraps raw coefficients; the length must be even.
    pub fn from_coefficients(coefficients: Vec<f64>) -> Self {
        assert!(
            coefficients.len().is_multiple_of(2),
            "window length must be even"
        );
        Self { coefficients }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Number of bands `N` the window serves (half its length).
    pub fn bands(&self) -> usize {
        self.coefficients.len() / 2
    }

    /// Largest deviation from `w_n = w_{2N-1-n}`.
    pub fn symmetry_error(&self) -> f64 {
        let w = &self.coefficients;
        let len = w.len();
        (0..len)
            .map(|n| (w[n] - w[len - 1 - n]).abs())
            .fold(0.0, f64::max)
    }

    /// Largest deviation from `w_n^2 + w_{n+N}^2 = 1`.
    pub fn princen_bradley_error(&self) -> f64 {
        let w = &self.coefficients;
        let n_bands = self.bands();
        (0..n_bands)
            .map(|n| (w[n] * w[n] + w[n + n_bands] * w[n + n_bands] - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// `w_n = sin(pi/2 * sin^2(pi/(2N) * (n + 1/2)))` for `n = 0..2N`.
pub fn vorbis_window(bands: usize) -> WindowFn {
    let scale = FRAC_PI_2 / bands as f64;
    let coefficients = (0..2 * bands)
        .map(|n| {
            let s = (scale * (n as f64 + 0.5)).sin();
            (FRAC_PI_2 * s * s).sin()
        })
        .collect();
    WindowFn { coefficients }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_band_window_matches_hand_evaluation() {
        // N = 2: inner angles pi/8, 3pi/8, 5pi/8, 7pi/8.
        // sin^2(pi/8) = (2 - sqrt2)/4, sin^2(3pi/8) = (2 + sqrt2)/4.
        let s2 = 2f64.sqrt();
        let lo = (FRAC_PI_2 * (2.0 - s2) / 4.0).sin();
        let hi = (FRAC_PI_2 * (2.0 + s2) / 4.0).sin();
        let w = vorbis_window(2);
        let expected = [lo, hi, hi, lo];
        for (a, b) in w.coefficients().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        // Numeric values for reference.
        assert!((lo - 0.22801432419169787).abs() < 1e-15);
        assert!((hi - 0.9736577776423312).abs() < 1e-15);
    }

    #[test]
    fn identities_hold_for_powers_of_two() {
        for p in 1..=11 {
            let w = vorbis_window(1 << p);
            assert!(w.symmetry_error() < 1e-12);
            assert!(w.princen_bradley_error() < 1e-12);
            let c = w.coefficients();
            let n = w.bands();
            assert!((c[0] * c[0] + c[n] * c[n] - 1.0).abs() < 1e-12);
        }
    }
}
