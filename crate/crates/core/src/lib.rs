//! Harmonic (Toeplitz-block) modeling of linear time-periodic systems and
//! state-feedback synthesis through truncated Toeplitz-block LMIs.

pub mod error;
pub mod hmodel;
pub mod linalg;
pub mod phasor;
pub mod sdp;
pub mod sim;
pub mod synth;
pub mod system;
pub mod tbalg;
pub mod tblmi;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
