//! Boundary-aware object-mask representation.
//!
//! Binary masks are encoded as a truncated Euclidean distance transform,
//! quantized into `K` one-hot bit planes, and decoded back by painting a disk
//! at every pixel (a union of per-plane dilations). Because the disks can
//! extend past the window they were predicted in, the decoded mask may go
//! beyond a proposal box; [`boxsim`] exercises that property directly.
//!
//! Module map:
//!
//! - [`grid`]: masks, label maps, boxes and the pixel-coordinate convention
//! - [`edt`]: exact truncated distance transform plus a brute-force oracle
//! - [`codec`]: quantization, hard (union-of-disks) and soft decoding
//! - [`boxsim`]: window encoding, perturbed boxes and beyond-box decoding
//! - [`eval`]: mask IoU, matching, recall curves, AR@N, AP and NMS
//! - [`io`]: plain-text file formats
//! - [`synth`]: deterministic fixture shapes and random masks
//! - [`bench`]: EDT timing harness
//! - [`cli`]: the `dtmask` command-line front end

pub mod bench;
pub mod boxsim;
pub mod cli;
pub mod codec;
pub mod edt;
mod error;
pub mod eval;
pub mod grid;
pub mod io;
pub mod synth;

pub use error::{Error, Result};
