use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("invalid parameter for {op}: {msg}")]
    Parameter { op: &'static str, msg: String },
    #[error("precision mismatch in {op}")]
    Precision { op: &'static str },
    #[error("detections line {line}: {msg}")]
    Detections { line: usize, msg: String },
    #[error("tensor file: {0}")]
    TensorFormat(String),
    #[error("weight container entry `{entry}`: {msg}")]
    Container { entry: String, msg: String },
    #[error("crop box {box_:?} outside frame {height}x{width}")]
    Bounds { box_: [f64; 4], height: usize, width: usize },
    #[error("config: {0}")]
    Config(String),
    #[error("empty token sequence")]
    EmptySequence,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension { op, lhs: lhs.to_vec(), rhs: rhs.to_vec() }
    }

    pub(crate) fn param(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Parameter { op, msg: msg.into() }
    }
}
