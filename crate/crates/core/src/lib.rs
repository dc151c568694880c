//! Contact-less respiratory-rate estimation from video.
//!
//! Two motion-signal extractors feed a multichannel maximum-likelihood
//! frequency estimator:
//!
//! 1. **Amplitude path** ([`amp_path`]): Laplacian pyramid, per-pixel
//!    temporal band-pass, amplification, binarization and spatial averaging.
//! 2. **Phase path** ([`phase_path`]): Riesz pyramid, quaternionic phase
//!    differences, cumulative sum, band-pass, amplification and averaging.
//!
//! [`estimator`] grid-maximizes the summed periodogram over pyramid levels
//! and components per interlaced window, [`roi`] picks regions from a
//! per-pixel amplitude map and gates those hit by large motion, [`synth`]
//! renders ground-truth breathing videos and [`eval`] scores estimates.
//! [`pipeline`] wires everything together for the command line.

pub mod amp_path;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod frame_io;
pub mod phase_path;
pub mod pipeline;
pub mod plane;
pub mod pyramid;
pub mod quaternion;
pub mod roi;
pub mod synth;
pub mod temporal;
pub mod tolerance;

pub use error::{Error, Result};
pub use frame_io::{Frame, FrameSequence};
pub use plane::Plane;
pub use quaternion::Quaternion;
