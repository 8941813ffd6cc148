use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, expected {expected:?}, got {got:?}")]
    Shape {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("{op}: invalid parameter: {msg}")]
    Param { op: &'static str, msg: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("conjugate symmetry violated: imaginary residue {residue:e} exceeds {limit:e}")]
    ConjugateSymmetry { residue: f64, limit: f64 },

    #[error("malformed {format} data: {msg}")]
    Format { format: &'static str, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Param {
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn shape(op: &'static str, expected: &[usize], got: &[usize]) -> Self {
        Error::Shape {
            op,
            expected: expected.to_vec(),
            got: got.to_vec(),
        }
    }
}
