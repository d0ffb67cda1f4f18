use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Failure kinds shared by every module of the core crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand dimensions do not agree.
    Shape {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A value that must be finite was NaN or infinite.
    NonFinite { what: &'static str, index: usize },
    /// A hyperparameter or configuration value is out of range.
    Config(String),
    /// Input data violates a precondition (empty class, too few groups, ...).
    Data(String),
    /// An operation that needs at least one element received none.
    Empty(&'static str),
    /// Input is degenerate for the requested computation.
    Degenerate(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape {
                op,
                expected,
                found,
            } => write!(
                f,
                "{op}: shape mismatch, expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::NonFinite { what, index } => {
                write!(f, "non-finite value in {what} at flat index {index}")
            }
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Data(msg) => write!(f, "invalid data: {msg}"),
            Error::Empty(what) => write!(f, "{what} is empty"),
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
