use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Type-IV DCT of even length `N` computed with one `N/2`-point complex FFT.
///
/// `X_k = sum_n u_n cos(pi/N (n + 1/2)(k + 1/2))`. Applying it twice scales
/// the input by `N/2`.
#[derive(Clone)]
pub struct Dct4 {
    len: usize,
    fft: Arc<dyn Fft<f64>>,
    pre: Vec<Complex64>,
    post: Vec<Complex64>,
}

impl std::fmt::Debug for Dct4 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dct4").field("len", &self.len).finish()
    }
}

impl Dct4 {
    pub fn new(len: usize) -> Self {
        assert!(
            len >= 2 && len.is_multiple_of(2),
            "DCT-IV length must be even"
        );
        let half = len / 2;
        let fft = FftPlanner::new().plan_fft_forward(half);
        let n = len as f64;
        let pre = (0..half)
            .map(|j| Complex64::from_polar(1.0, -PI * j as f64 / n))
            .collect();
        let post = (0..half)
            .map(|k| Complex64::from_polar(1.0, -PI * (4 * k + 1) as f64 / (4.0 * n)))
            .collect();
        Self {
            len,
            fft,
            pre,
            post,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Transforms `input` into `output`; both have length `N`.
    pub fn process(&self, input: &[f64], output: &mut [f64]) {
        let n = self.len;
        let half = n / 2;
        debug_assert_eq!(input.len(), n);
        debug_assert_eq!(output.len(), n);
        // Fold pairs (u_{2j}, u_{N-1-2j}) into one complex sample.
        let mut buf: Vec<Complex64> = (0..half)
            .map(|j| Complex64::new(input[2 * j], input[n - 1 - 2 * j]) * self.pre[j])
            .collect();
        self.fft.process(&mut buf);
        for k in 0..half {
            let c = buf[k] * self.post[k];
            output[2 * k] = c.re;
            output[n - 1 - 2 * k] = -c.im;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dct4_direct(u: &[f64]) -> Vec<f64> {
        let n = u.len();
        (0..n)
            .map(|k| {
                u.iter()
                    .enumerate()
                    .map(|(j, &x)| x * (PI / n as f64 * (j as f64 + 0.5) * (k as f64 + 0.5)).cos())
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_direct_sum() {
        for &n in &[2usize, 4, 8, 16, 64, 256] {
            let u: Vec<f64> = (0..n).map(|i| ((i * 7919) % 23) as f64 - 11.0).collect();
            let mut out = vec![0.0; n];
            Dct4::new(n).process(&u, &mut out);
            let reference = dct4_direct(&u);
            for (a, b) in out.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-9, "n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn self_inverse_up_to_scale() {
        let n = 32;
        let u: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let d = Dct4::new(n);
        let mut once = vec![0.0; n];
        let mut twice = vec![0.0; n];
        d.process(&u, &mut once);
        d.process(&once, &mut twice);
        for (a, b) in twice.iter().zip(&u) {
            assert!((a * 2.0 / n as f64 - b).abs() < 1e-12);
        }
    }
}
