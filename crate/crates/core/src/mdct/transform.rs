use std::f64::consts::PI;

use super::{vorbis_window, Dct4, MdctTensor, WindowFn};
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::par;

fn check_bands(bands: usize) -> Result<()> {
    if bands < 8 || !bands.is_power_of_two() {
        return Err(Error::shape(format!(
            "band count must be a power of two >= 8, got {bands}"
        )));
    }
    Ok(())
}

fn check_window(bands: usize, window: &WindowFn) -> Result<()> {
    if window.coefficients().len() != 2 * bands {
        return Err(Error::shape(format!(
            "window of length {} does not fit {} bands",
            window.coefficients().len(),
            bands
        )));
    }
    Ok(())
}

fn check_signal(buf: &AudioBuffer, bands: usize) -> Result<usize> {
    if !buf.len().is_multiple_of(bands) {
        return Err(Error::shape(format!(
            "signal length {} is not a multiple of {bands}",
            buf.len()
        )));
    }
    Ok(buf.len() / bands)
}

/// Windowed frame `m` of `signal`, read circularly.
fn windowed_frame(signal: &[f64], m: usize, window: &[f64], out: &mut [f64]) {
    let bands = window.len() / 2;
    let len = signal.len();
    for (n, (o, w)) in out.iter_mut().zip(window).enumerate() {
        *o = signal[(m * bands + n) % len] * w;
    }
}

/// `cos(pi/N (n + 1/2 + N/2)(k + 1/2))` with the phase reduced exactly in
/// integers before the trigonometric call.
fn kernel(bands: usize, n: usize, k: usize) -> f64 {
    let period = 8 * bands;
    let p = ((2 * n + 1 + bands) * (2 * k + 1)) % period;
    (PI * p as f64 / (4 * bands) as f64).cos()
}

fn assemble(
    frames: Vec<Vec<f64>>,
    blocks: usize,
    bands: usize,
    channels: usize,
    rate: u32,
) -> MdctTensor {
    let mut out = MdctTensor::zeros(blocks, bands, channels, rate);
    for (task, coeffs) in frames.into_iter().enumerate() {
        let (c, m) = (task / blocks.max(1), task % blocks.max(1));
        out.set_block(m, c, &coeffs);
    }
    out
}

/// Direct evaluation of the MDCT sum, `O(M N^2)`.
pub fn mdct_forward_naive(
    buf: &AudioBuffer,
    bands: usize,
    window: &WindowFn,
) -> Result<MdctTensor> {
    check_bands(bands)?;
    check_window(bands, window)?;
    let blocks = check_signal(buf, bands)?;
    let channels = buf.channel_count();
    let w = window.coefficients();
    let frames = par::map_range(channels * blocks, |task| {
        let (c, m) = (task / blocks, task % blocks);
        let mut z = vec![0.0; 2 * bands];
        windowed_frame(buf.channel(c), m, w, &mut z);
        (0..bands)
            .map(|k| {
                z.iter()
                    .enumerate()
                    .map(|(n, &x)| x * kernel(bands, n, k))
                    .sum()
            })
            .collect()
    });
    Ok(assemble(
        frames,
        blocks,
        bands,
        channels,
        buf.sample_rate_hz(),
    ))
}

/// Direct evaluation of the windowed inverse with overlap-add, `O(M N^2)`.
pub fn mdct_inverse_naive(tensor: &MdctTensor, window: &WindowFn) -> Result<AudioBuffer> {
    let bands = tensor.bands();
    check_window(bands, window)?;
    let w = window.coefficients();
    let scale = 2.0 / bands as f64;
    inverse_with(tensor, |coeffs, out| {
        for (n, o) in out.iter_mut().enumerate() {
            let s: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(k, &a)| a * kernel(bands, n, k))
                .sum();
            *o = scale * w[n] * s;
        }
    })
}

/// Overlap-adds per-block synthesis frames produced by `synth`.
fn inverse_with<F>(tensor: &MdctTensor, synth: F) -> Result<AudioBuffer>
where
    F: Fn(&[f64], &mut [f64]) + Sync + Send,
{
    if tensor.amplitudes().iter().any(|a| !a.is_finite()) {
        return Err(Error::shape("MDCT amplitudes must be finite"));
    }
    let (blocks, bands, channels) = (tensor.blocks(), tensor.bands(), tensor.channels());
    let len = blocks * bands;
    let frames = par::map_range(channels * blocks, |task| {
        let (c, m) = (task / blocks, task % blocks);
        let mut out = vec![0.0; 2 * bands];
        synth(&tensor.block(m, c), &mut out);
        out
    });
    let mut signal = vec![vec![0.0; len]; channels];
    for (task, frame) in frames.iter().enumerate() {
        let (c, m) = (task / blocks, task % blocks);
        for (n, &y) in frame.iter().enumerate() {
            signal[c][(m * bands + n) % len] += y;
        }
    }
    AudioBuffer::new(signal, tensor.sample_rate_hz())
}

/// Reusable MDCT plan for one band count.
#[derive(Debug, Clone)]
pub struct Mdct {
    bands: usize,
    window: WindowFn,
    dct: Dct4,
}

impl Mdct {
    /// Plan with the Vorbis window.
    pub fn new(bands: usize) -> Result<Self> {
        check_bands(bands)?;
        Self::with_window(vorbis_window(bands))
    }

    pub fn with_window(window: WindowFn) -> Result<Self> {
        let bands = window.bands();
        check_bands(bands)?;
        Ok(Self {
            bands,
            dct: Dct4::new(bands),
            window,
        })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn window(&self) -> &WindowFn {
        &self.window
    }

    /// MDCT of one windowed `2N` frame.
    fn frame_forward(&self, z: &[f64], out: &mut [f64]) {
        let h = self.bands / 2;
        let n = self.bands;
        // (a, b, c, d) -> (-c_r - d, a - b_r)
        let mut u = vec![0.0; n];
        for i in 0..h {
            u[i] = -z[n + h - 1 - i] - z[n + h + i];
            u[h + i] = z[i] - z[n - 1 - i];
        }
        self.dct.process(&u, out);
    }

    /// Windowed synthesis frame of length `2N` for one block.
    fn frame_inverse(&self, coeffs: &[f64], out: &mut [f64]) {
        let n = self.bands;
        let h = n / 2;
        let mut t = vec![0.0; n];
        self.dct.process(coeffs, &mut t);
        let w = self.window.coefficients();
        let scale = 2.0 / n as f64;
        for (i, o) in out.iter_mut().enumerate() {
            let z = if i < h {
                t[i + h]
            } else if i < 3 * h {
                -t[3 * h - 1 - i]
            } else {
                -t[i - 3 * h]
            };
            *o = scale * w[i] * z;
        }
    }

    /// Fast forward transform, `O(M N log N)`.
    pub fn forward(&self, buf: &AudioBuffer) -> Result<MdctTensor> {
        let bands = self.bands;
        let blocks = check_signal(buf, bands)?;
        let channels = buf.channel_count();
        let w = self.window.coefficients();
        let frames = par::map_range(channels * blocks, |task| {
            let (c, m) = (task / blocks, task % blocks);
            let mut z = vec![0.0; 2 * bands];
            windowed_frame(buf.channel(c), m, w, &mut z);
            let mut out = vec![0.0; bands];
            self.frame_forward(&z, &mut out);
            out
        });
        Ok(assemble(
            frames,
            blocks,
            bands,
            channels,
            buf.sample_rate_hz(),
        ))
    }

    /// Fast inverse transform with overlap-add.
    pub fn inverse(&self, tensor: &MdctTensor) -> Result<AudioBuffer> {
        if tensor.bands() != self.bands {
            return Err(Error::shape(format!(
                "tensor has {} bands, plan has {}",
                tensor.bands(),
                self.bands
            )));
        }
        inverse_with(tensor, |coeffs, out| self.frame_inverse(coeffs, out))
    }
}

/// FFT-backed forward transform; agrees with [`mdct_forward_naive`].
pub fn mdct_forward_fast(buf: &AudioBuffer, bands: usize, window: &WindowFn) -> Result<MdctTensor> {
    check_bands(bands)?;
    check_window(bands, window)?;
    Mdct::with_window(window.clone())?.forward(buf)
}

/// Inverse transform: per-block synthesis `(2/N) w_n sum_k A_k cos(..)`
/// overlap-added at 50%.
pub fn mdct_inverse(tensor: &MdctTensor, window: &WindowFn) -> Result<AudioBuffer> {
    check_window(tensor.bands(), window)?;
    Mdct::with_window(window.clone())?.inverse(tensor)
}
