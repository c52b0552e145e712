//! Vorbis-windowed MDCT with 50% block overlap.
//!
//! A signal of `M * N` samples is treated as one period of a periodic signal,
//! so frame `m` spans samples `mN .. mN + 2N` (indices taken modulo the
//! length). Every sample lies under exactly two frames, the forward transform
//! yields exactly `M` blocks and the inverse reconstructs the input, boundary
//! samples included.

mod dct4;
mod tensor;
mod transform;
mod window;

pub use dct4::Dct4;
pub use tensor::MdctTensor;
pub use transform::{
    mdct_forward_fast, mdct_forward_naive, mdct_inverse, mdct_inverse_naive, Mdct,
};
pub use window::{vorbis_window, WindowFn};
