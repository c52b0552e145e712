use std::ops::Range;

use crate::error::{Error, Result};

/// Zwicker critical-band boundaries in Hz.
pub const ZWICKER_EDGES_HZ: [f64; 25] = [
    0.0, 100.0, 200.0, 300.0, 400.0, 510.0, 630.0, 770.0, 920.0, 1080.0, 1270.0, 1480.0, 1720.0,
    2000.0, 2320.0, 2700.0, 3150.0, 3700.0, 4400.0, 5300.0, 6400.0, 7700.0, 9500.0, 12000.0,
    15500.0,
];

/// Grouping of MDCT bins into critical bands.
///
/// Bark band `j` spans `[band_edges_hz[j], band_edges_hz[j + 1])` and owns
/// the contiguous (possibly empty) bin range `band_bins(j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarkPartition {
    band_edges_hz: Vec<f64>,
    bin_to_band: Vec<usize>,
    band_bins: Vec<Range<usize>>,
    band_mid_hz: Vec<f64>,
    sample_rate_hz: u32,
}

impl BarkPartition {
    /// Partition for `bins` MDCT bands at `sample_rate_hz`.
    ///
    /// Table edges at or above Nyquist are dropped and Nyquist closes the
    /// last band. Bins are assigned by their centre frequency.
    pub fn new(sample_rate_hz: u32, bins: usize) -> Result<Self> {
        if bins < 8 || sample_rate_hz == 0 {
            return Err(Error::shape(format!(
                "bark partition needs >= 8 bins and a positive rate (got {bins} @ {sample_rate_hz})"
            )));
        }
        let nyquist = sample_rate_hz as f64 / 2.0;
        let mut edges: Vec<f64> = ZWICKER_EDGES_HZ
            .iter()
            .copied()
            .filter(|&e| e < nyquist)
            .collect();
        edges.push(nyquist);
        let bands = edges.len() - 1;

        let bin_width = sample_rate_hz as f64 / (2.0 * bins as f64);
        let bin_to_band: Vec<usize> = (0..bins)
            .map(|k| {
                let centre = bin_width * (k as f64 + 0.5);
                // Last band whose lower edge is <= centre.
                edges[..bands].partition_point(|&e| e <= centre) - 1
            })
            .collect();
        let band_bins = (0..bands)
            .map(|j| {
                let start = bin_to_band.partition_point(|&b| b < j);
                let end = bin_to_band.partition_point(|&b| b <= j);
                start..end
            })
            .collect();
        let band_mid_hz = edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
        Ok(Self {
            band_edges_hz: edges,
            bin_to_band,
            band_bins,
            band_mid_hz,
            sample_rate_hz,
        })
    }

    pub fn band_count(&self) -> usize {
        self.band_mid_hz.len()
    }

    pub fn bin_count(&self) -> usize {
        self.bin_to_band.len()
    }

    pub fn band_edges_hz(&self) -> &[f64] {
        &self.band_edges_hz
    }

    pub fn band_mid_hz(&self) -> &[f64] {
        &self.band_mid_hz
    }

    pub fn band_of_bin(&self, k: usize) -> usize {
        self.bin_to_band[k]
    }

    pub fn bin_to_band(&self) -> &[usize] {
        &self.bin_to_band
    }

    pub fn band_bins(&self, j: usize) -> Range<usize> {
        self.band_bins[j].clone()
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    /// Bark band containing frequency `hz`.
    pub fn band_of_hz(&self, hz: f64) -> usize {
        let bands = self.band_count();
        self.band_edges_hz[..bands]
            .partition_point(|&e| e <= hz)
            .saturating_sub(1)
    }

    /// Energy `sum A_k^2` per Bark band.
    pub fn band_energies(&self, amplitudes: &[f64]) -> Vec<f64> {
        self.band_bins
            .iter()
            .map(|r| amplitudes[r.clone()].iter().map(|a| a * a).sum())
            .collect()
    }
}

/// Convenience wrapper around [`BarkPartition::new`].
pub fn bark_partition(sample_rate_hz: u32, bins: usize) -> Result<BarkPartition> {
    BarkPartition::new(sample_rate_hz, bins)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_bin_maps_to_first_band() {
        let p = bark_partition(22016, 128).unwrap();
        assert_eq!(p.band_of_bin(0), 0);
        assert_eq!(p.band_of_bin(1), 1); // centre 129 Hz
    }

    #[test]
    fn table_is_clipped_at_nyquist() {
        let p = bark_partition(22016, 128).unwrap();
        let edges = p.band_edges_hz();
        assert_eq!(edges[edges.len() - 2], 9500.0);
        assert_eq!(*edges.last().unwrap(), 11008.0);
        let last = p.band_count() - 1;
        let r = p.band_bins(last);
        // Bin 110 has centre 9503 Hz, the first above 9500.
        assert_eq!(r, 110..128);
        assert_eq!(p.band_count(), 23);
    }

    #[test]
    fn wide_band_trailing_range() {
        let p = bark_partition(44100, 1024).unwrap();
        let edges = p.band_edges_hz();
        assert_eq!(edges[edges.len() - 2], 15500.0);
        assert_eq!(*edges.last().unwrap(), 22050.0);
        assert_eq!(p.band_count(), 25);
    }

    #[test]
    fn partition_property() {
        for &(rate, n) in &[
            (22016, 8),
            (22016, 128),
            (44100, 256),
            (8000, 64),
            (48000, 1024),
        ] {
            let p = bark_partition(rate, n).unwrap();
            let mut covered = 0;
            let mut next = 0;
            for j in 0..p.band_count() {
                let r = p.band_bins(j);
                assert_eq!(r.start, next, "bands must be contiguous");
                next = r.end;
                covered += r.len();
                for k in r {
                    assert_eq!(p.band_of_bin(k), j);
                }
            }
            assert_eq!(covered, n);
            assert_eq!(p.band_edges_hz()[0], 0.0);
            assert!(p.band_edges_hz().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn rejects_tiny_bin_count() {
        assert!(bark_partition(22016, 4).is_err());
    }
}
