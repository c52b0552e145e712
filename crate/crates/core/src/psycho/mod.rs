//! Perceptual model: critical bands, hearing thresholds, masking, tonality,
//! threshold-derived quantization and the noise-injection layer.
//!
//! Intensities are expressed in squared MDCT amplitude units. A unit
//! amplitude in one bin corresponds to [`PsychoConfig::db_reference`] dB SPL,
//! which puts the absolute hearing threshold on the same scale as band
//! energies.

mod bark;
mod noise;
mod quant;
mod threshold;
mod tonality;

pub use bark::{bark_partition, BarkPartition, ZWICKER_EDGES_HZ};
pub use noise::{add_block_noise, block_rng, psychoacoustic_noise};
pub use quant::{quantization_index, quantization_step, quantize, quantize_block};
pub use threshold::{
    absolute_threshold, absolute_threshold_db, masking_offset_db, masking_threshold, spreading_db,
    BlockThresholds, MaskingThresholds, PsychoConfig, PsychoModel,
};
pub use tonality::{mean_tonality, tonality, TONALITY_FLOOR};
