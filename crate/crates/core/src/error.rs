use alloc::string::String;
use core::fmt;

use crate::Shape5;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by tensor operations and model assembly.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands disagree on shape.
    ShapeMismatch {
        op: &'static str,
        left: Shape5,
        right: Shape5,
    },
    /// A tensor with a zero extent was handed to an op that needs data.
    ZeroExtent { op: &'static str, shape: Shape5 },
    /// Data length does not match the product of the extents.
    DataLength { expected: usize, actual: usize },
    /// Kernel geometry not allowed (even extent, bad stride, wrong view pattern...).
    InvalidKernel(String),
    /// A block or network configuration is internally inconsistent.
    InvalidConfig(String),
    /// Spatial extents not divisible by the network's downsampling factor.
    Indivisible { extent: usize, divisor: usize },
    /// Input value outside an operation's domain (non-finite, non-binary, unknown label...).
    InvalidValue(String),
    /// A forward cache was produced by a different network or parameter version.
    StaleCache,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, left, right } => {
                write!(f, "{op}: shape mismatch between {left} and {right}")
            }
            Error::ZeroExtent { op, shape } => write!(f, "{op}: zero-extent input {shape}"),
            Error::DataLength { expected, actual } => {
                write!(f, "data length {actual} does not match shape volume {expected}")
            }
            Error::InvalidKernel(msg) => write!(f, "invalid kernel: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Indivisible { extent, divisor } => write!(
                f,
                "spatial extent {extent} is not divisible by {divisor} (required by the network depth)"
            ),
            Error::InvalidValue(msg) => write!(f, "invalid value: {msg}"),
            Error::StaleCache => write!(f, "forward cache does not belong to this network state"),
        }
    }
}

impl core::error::Error for Error {}
