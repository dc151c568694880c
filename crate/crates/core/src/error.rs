use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the crate. Messages carry the module that
/// produced them so the CLI can report them verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("frame-io: frame {index} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    MixedDimensions {
        index: usize,
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("frame-io: empty frame sequence")]
    EmptySequence,
    #[error("frame-io: cannot read frame {path}: {reason}")]
    UnreadableFrame { path: PathBuf, reason: String },
    #[error("frame-io: channel planes disagree in size")]
    ChannelMismatch,

    #[error("quaternion: inverse of the zero quaternion")]
    ZeroQuaternion,
    #[error("quaternion: log requires a unit quaternion (norm {0})")]
    NotUnitNorm(f64),

    #[error("pyramid: level of {width}x{height} is too small to reduce")]
    TooSmall { width: usize, height: usize },
    #[error("pyramid: cannot expand {from_w}x{from_h} to {to_w}x{to_h}")]
    DimMismatch {
        from_w: usize,
        from_h: usize,
        to_w: usize,
        to_h: usize,
    },
    #[error("pyramid: {levels} levels do not fit a {width}x{height} frame")]
    TooManyLevels {
        levels: usize,
        width: usize,
        height: usize,
    },

    #[error("temporal: invalid band [{f_lo}, {f_hi}] Hz at fs = {fs} Hz")]
    InvalidBand { f_lo: f64, f_hi: f64, fs: f64 },
    #[error("{0}: geometry changed mid-sequence")]
    GeometryMismatch(&'static str),

    #[error("estimator: window carries no signal")]
    DegenerateWindow,
    #[error("estimator: frequency {f0} Hz is within one bin of DC or Nyquist")]
    FrequencyAtEdge { f0: f64 },
    #[error("estimator: window of {window} frames exceeds the {total} available")]
    WindowTooLong { window: usize, total: usize },
    #[error("estimator: {0}")]
    InvalidEstimatorConfig(String),

    #[error("roi: {side}x{side} region does not fit a {width}x{height} frame")]
    FrameTooSmall {
        side: usize,
        width: usize,
        height: usize,
    },
    #[error("roi: need {need} calibration frames, have {have}")]
    InsufficientFrames { need: usize, have: usize },
    #[error("roi: every region is gated by large motion")]
    AllRoisGated,

    #[error("synth: {0}")]
    SpecInvalid(String),
    #[error("synth: motion regions {0} and {1} overlap")]
    OverlappingRegions(usize, usize),

    #[error("eval: {est} estimates against {reference} reference values")]
    LengthMismatch { est: usize, reference: usize },
    #[error("eval: reference frequencies are all zero")]
    ZeroReference,

    #[error("config: {0}")]
    InvalidConfig(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
