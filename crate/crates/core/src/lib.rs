//! Perceptual audio toolkit built around the MDCT representation.
//!
//! The crate is organised bottom-up:
//!
//! * [`audio`]: PCM WAV ingest/emit, band-limited resampling and segment slicing.
//! * [`mdct`]: Vorbis-windowed MDCT/IMDCT with a direct-sum reference path and
//!   an FFT-backed fast path.
//! * [`psycho`]: Bark partition, hearing thresholds, masking, tonality,
//!   threshold-derived quantization and the psychoacoustic noise layer.
//! * [`spectral`]: spectrogram images, tonality series and octave folding.
//! * [`neural`]: reverse-mode autodiff and the octave up/downsampling
//!   generator/critic used for WGAN-GP training at toy scale.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

pub mod audio;
pub mod error;
pub mod mdct;
pub mod neural;
pub mod par;
pub mod psycho;
pub mod spectral;
pub mod synth;

pub use audio::AudioBuffer;
pub use error::{Error, Result};
pub use mdct::{MdctTensor, WindowFn};
