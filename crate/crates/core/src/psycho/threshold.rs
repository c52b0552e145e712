use serde::{Deserialize, Serialize};

use super::{tonality, BarkPartition};

/// Absolute hearing threshold in dB SPL at `f_khz` kilohertz.
pub fn absolute_threshold_db(f_khz: f64) -> f64 {
    3.64 * f_khz.powf(-0.8) - 6.5 * (-0.6 * (f_khz - 3.3).powi(2)).exp() + 1e-3 * f_khz.powi(4)
}

/// Spreading of masker band `i` onto maskee band `j`, in dB.
pub fn spreading_db(i: usize, j: usize) -> f64 {
    let d = i as f64 - j as f64 + 0.474;
    15.81 + 7.5 * d - 17.5 * (1.0 + d * d).sqrt()
}

/// Masking offset of band `j` in dB for tonality `tau`.
pub fn masking_offset_db(j: usize, tau: f64) -> f64 {
    tau * (14.5 + j as f64) + (1.0 - tau) * 5.5
}

/// Tunables of the perceptual model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsychoConfig {
    /// Non-linear superposition exponent of the masking sum.
    pub alpha: f64,
    /// SPL (dB) assigned to a unit MDCT amplitude in one bin.
    pub db_reference: f64,
}

impl Default for PsychoConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            db_reference: 96.0,
        }
    }
}

/// Per-band absolute threshold intensity `10^((L(f_j) - ref) / 10)`.
///
/// The level is evaluated at each band's midpoint and held constant across
/// the band. With `db_reference = 0` this is `10^(L/10)` in SPL units.
pub fn absolute_threshold(partition: &BarkPartition, db_reference: f64) -> Vec<f64> {
    partition
        .band_mid_hz()
        .iter()
        .map(|&f| 10f64.powf((absolute_threshold_db(f / 1000.0) - db_reference) / 10.0))
        .collect()
}

/// Masking threshold intensity per Bark band for one block.
///
/// `I_j = (sum_i E_i^alpha 10^(alpha/10 (s_ij - O_j)))^(1/alpha)` with band
/// energies `E_i`, spreading `s_ij` and the tonality-dependent offset `O_j`.
pub fn masking_threshold(amplitudes: &[f64], partition: &BarkPartition, alpha: f64) -> Vec<f64> {
    let tau = tonality(amplitudes);
    masking_threshold_with_tonality(&partition.band_energies(amplitudes), tau, alpha)
}

pub(crate) fn masking_threshold_with_tonality(energies: &[f64], tau: f64, alpha: f64) -> Vec<f64> {
    let bands = energies.len();
    (0..bands)
        .map(|j| {
            let offset = masking_offset_db(j, tau);
            let sum: f64 = energies
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0.0)
                .map(|(i, &e)| {
                    e.powf(alpha) * 10f64.powf(alpha / 10.0 * (spreading_db(i, j) - offset))
                })
                .sum();
            if sum > 0.0 {
                sum.powf(1.0 / alpha)
            } else {
                0.0
            }
        })
        .collect()
}

/// Thresholds for one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockThresholds {
    pub mask: Vec<f64>,
    pub combined: Vec<f64>,
    pub tonality: f64,
}

/// Perceptual model bound to one partition.
#[derive(Debug, Clone)]
pub struct PsychoModel {
    partition: BarkPartition,
    config: PsychoConfig,
    absolute: Vec<f64>,
}

impl PsychoModel {
    pub fn new(partition: BarkPartition, config: PsychoConfig) -> Self {
        let absolute = absolute_threshold(&partition, config.db_reference);
        Self {
            partition,
            config,
            absolute,
        }
    }

    pub fn partition(&self) -> &BarkPartition {
        &self.partition
    }

    pub fn config(&self) -> &PsychoConfig {
        &self.config
    }

    /// Absolute threshold per Bark band in amplitude-squared units.
    pub fn absolute(&self) -> &[f64] {
        &self.absolute
    }

    pub fn block(&self, amplitudes: &[f64]) -> BlockThresholds {
        let tau = tonality(amplitudes);
        let mask = masking_threshold_with_tonality(
            &self.partition.band_energies(amplitudes),
            tau,
            self.config.alpha,
        );
        let combined = mask
            .iter()
            .zip(&self.absolute)
            .map(|(&m, &a)| m.max(a))
            .collect();
        BlockThresholds {
            mask,
            combined,
            tonality: tau,
        }
    }

    /// Quantization step per bin for one block.
    pub fn steps(&self, amplitudes: &[f64]) -> Vec<f64> {
        super::quantization_step(&self.block(amplitudes).combined, &self.partition)
    }
}

/// Thresholds for every block of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskingThresholds {
    /// Per Bark band.
    pub absolute: Vec<f64>,
    /// Blocks x Bark bands, row-major.
    pub mask: Vec<f64>,
    /// `max(absolute, mask)`, same layout as `mask`.
    pub combined: Vec<f64>,
    pub tonality_per_block: Vec<f64>,
    pub bands: usize,
}

impl MaskingThresholds {
    pub fn blocks(&self) -> usize {
        self.tonality_per_block.len()
    }

    pub fn mask_at(&self, m: usize, j: usize) -> f64 {
        self.mask[m * self.bands + j]
    }

    pub fn combined_at(&self, m: usize, j: usize) -> f64 {
        self.combined[m * self.bands + j]
    }

    /// Mean of the per-block tonality.
    pub fn mean_tonality(&self) -> f64 {
        super::mean_tonality(&self.tonality_per_block)
    }

    /// CSV with columns `block,bark_band,I_abs,I_mask,combined,tau`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("block,bark_band,I_abs,I_mask,combined,tau\n");
        for m in 0..self.blocks() {
            for j in 0..self.bands {
                out.push_str(&format!(
                    "{},{},{:e},{:e},{:e},{}\n",
                    m,
                    j,
                    self.absolute[j],
                    self.mask_at(m, j),
                    self.combined_at(m, j),
                    self.tonality_per_block[m]
                ));
            }
        }
        out
    }
}

impl PsychoModel {
    /// Thresholds of every block of `channel` in `tensor`.
    pub fn analyze(&self, tensor: &crate::MdctTensor, channel: usize) -> MaskingThresholds {
        let per_block =
            crate::par::map_range(tensor.blocks(), |m| self.block(&tensor.block(m, channel)));
        let bands = self.partition.band_count();
        let mut mask = Vec::with_capacity(per_block.len() * bands);
        let mut combined = Vec::with_capacity(per_block.len() * bands);
        let mut tonality_per_block = Vec::with_capacity(per_block.len());
        for b in per_block {
            mask.extend(b.mask);
            combined.extend(b.combined);
            tonality_per_block.push(b.tonality);
        }
        MaskingThresholds {
            absolute: self.absolute.clone(),
            mask,
            combined,
            tonality_per_block,
            bands,
        }
    }
}
