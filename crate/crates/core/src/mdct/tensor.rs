use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MDCT";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

/// MDCT amplitudes `A_k(m)` laid out as blocks x bands x channels, row-major.
///
/// Band `k` covers `[f_s k / 2N, f_s (k+1) / 2N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MdctTensor {
    amplitudes: Vec<f64>,
    blocks: usize,
    bands: usize,
    channels: usize,
    sample_rate_hz: u32,
}

impl MdctTensor {
    pub fn zeros(blocks: usize, bands: usize, channels: usize, sample_rate_hz: u32) -> Self {
        Self {
            amplitudes: vec![0.0; blocks * bands * channels],
            blocks,
            bands,
            channels,
            sample_rate_hz,
        }
    }

    /// Wraps amplitudes in `(m, k, c)` order.
    pub fn from_vec(
        amplitudes: Vec<f64>,
        blocks: usize,
        bands: usize,
        channels: usize,
        sample_rate_hz: u32,
    ) -> Result<Self> {
        if amplitudes.len() != blocks * bands * channels {
            return Err(Error::shape(format!(
                "{} amplitudes for shape {}x{}x{}",
                amplitudes.len(),
                blocks,
                bands,
                channels
            )));
        }
        if amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::shape("MDCT amplitudes must be finite"));
        }
        Ok(Self {
            amplitudes,
            blocks,
            bands,
            channels,
            sample_rate_hz,
        })
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [f64] {
        &mut self.amplitudes
    }

    #[inline]
    pub fn index(&self, m: usize, k: usize, c: usize) -> usize {
        (m * self.bands + k) * self.channels + c
    }

    #[inline]
    pub fn get(&self, m: usize, k: usize, c: usize) -> f64 {
        self.amplitudes[self.index(m, k, c)]
    }

    #[inline]
    pub fn set(&mut self, m: usize, k: usize, c: usize, v: f64) {
        let i = self.index(m, k, c);
        self.amplitudes[i] = v;
    }

    /// Amplitudes of block `m`, channel `c`, over all bands.
    pub fn block(&self, m: usize, c: usize) -> Vec<f64> {
        (0..self.bands).map(|k| self.get(m, k, c)).collect()
    }

    pub fn set_block(&mut self, m: usize, c: usize, values: &[f64]) {
        for (k, &v) in values.iter().enumerate() {
            self.set(m, k, c, v);
        }
    }

    /// Lower edge of band `k` in Hz.
    pub fn band_low_hz(&self, k: usize) -> f64 {
        self.sample_rate_hz as f64 * k as f64 / (2.0 * self.bands as f64)
    }

    /// Width of every band in Hz.
    pub fn band_width_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / (2.0 * self.bands as f64)
    }

    /// Channel average (the MDCT of the downmixed signal, by linearity).
    pub fn downmix(&self) -> MdctTensor {
        let c = self.channels as f64;
        let amplitudes = self
            .amplitudes
            .chunks_exact(self.channels)
            .map(|v| v.iter().sum::<f64>() / c)
            .collect();
        MdctTensor {
            amplitudes,
            blocks: self.blocks,
            bands: self.bands,
            channels: 1,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// First `blocks` blocks.
    pub fn truncate_blocks(&self, blocks: usize) -> MdctTensor {
        let blocks = blocks.min(self.blocks);
        MdctTensor {
            amplitudes: self.amplitudes[..blocks * self.bands * self.channels].to_vec(),
            blocks,
            ..*self
        }
    }

    /// Little-endian image: magic, version, M, N, C, sample rate, then f64
    /// amplitudes in `(m, k, c)` order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.amplitudes.len());
        out.extend_from_slice(MAGIC);
        for v in [
            VERSION,
            self.blocks as u32,
            self.bands as u32,
            self.channels as u32,
            self.sample_rate_hz,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for a in &self.amplitudes {
            out.extend_from_slice(&a.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[0..4] != MAGIC {
            return Err(Error::parse("not an MDCT tensor file"));
        }
        let word = |i: usize| {
            let at = 4 + 4 * i;
            u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
        };
        let version = word(0);
        if version != VERSION {
            return Err(Error::UnsupportedFormat(format!(
                "MDCT tensor version {version}"
            )));
        }
        let (blocks, bands, channels, rate) = (
            word(1) as usize,
            word(2) as usize,
            word(3) as usize,
            word(4),
        );
        let count = blocks
            .checked_mul(bands)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Error::parse("tensor shape overflows"))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != count * 8 {
            return Err(Error::parse(format!(
                "expected {} amplitude bytes, found {}",
                count * 8,
                body.len()
            )));
        }
        let amplitudes = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_vec(amplitudes, blocks, bands, channels, rate)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = MdctTensor::from_vec(vec![1.5, -2.0], 1, 2, 1, 22016).unwrap();
        let b = t.to_bytes();
        assert_eq!(&b[0..4], b"MDCT");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[20..24].try_into().unwrap()), 22016);
        assert_eq!(f64::from_le_bytes(b[24..32].try_into().unwrap()), 1.5);
        assert_eq!(b.len(), 40);
    }

    #[test]
    fn rejects_truncated_and_foreign() {
        let t = MdctTensor::zeros(2, 8, 1, 8000);
        let b = t.to_bytes();
        assert!(MdctTensor::from_bytes(&b[..b.len() - 1]).is_err());
        assert!(MdctTensor::from_bytes(b"RIFF0000000000000000000000").is_err());
    }

    #[test]
    fn band_edges() {
        let t = MdctTensor::zeros(1, 128, 1, 22016);
        assert_eq!(t.band_width_hz(), 86.0);
        assert_eq!(t.band_low_hz(5), 430.0);
    }

    proptest! {
        #[test]
        fn bytes_roundtrip(v in proptest::collection::vec(-1e6f64..1e6, 12)) {
            let t = MdctTensor::from_vec(v, 3, 2, 2, 44100).unwrap();
            prop_assert_eq!(MdctTensor::from_bytes(&t.to_bytes()).unwrap(), t);
        }
    }
}
