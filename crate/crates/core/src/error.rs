use std::path::PathBuf;

/// Coarse error category, mapped one-to-one onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Capacity,
    Internal,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Capacity => 4,
            ErrorClass::Internal => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Data => "data",
            ErrorClass::Capacity => "capacity",
            ErrorClass::Internal => "internal",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input at {location}: {detail}")]
    Malformed { location: String, detail: String },

    #[error("event {index} at ({x}, {y}) lies outside the {width}x{height} sensor")]
    OutOfRange {
        index: usize,
        x: i64,
        y: i64,
        width: u32,
        height: u32,
    },

    #[error("timestamps decrease at event index {index}")]
    NonMonotonic { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("region of interest unattainable: best coverage {best:.4} < required {required:.4}")]
    CoverageUnattainable { best: f64, required: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown {kind} `{name}`{}", nearest.as_ref().map(|n| format!(" (did you mean `{n}`?)")).unwrap_or_default())]
    UnknownName {
        kind: &'static str,
        name: String,
        nearest: Option<String>,
    },

    #[error("capacity exceeded at step {step}: need {required} bytes, have {available}")]
    Capacity {
        step: usize,
        required: usize,
        available: usize,
    },

    #[error("{0}")]
    ProcessorCapacity(String),

    #[error("weight {index} of layer {layer} is off its quantization lattice ({value})")]
    OffLattice { layer: usize, index: usize, value: f64 },

    #[error("accumulator overflow in layer {layer}")]
    AccumulatorOverflow { layer: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn malformed(location: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Malformed {
            location: location.into(),
            detail: detail.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::UnknownName { .. } | Error::InvalidParam(_) => {
                ErrorClass::Config
            }
            Error::Io { .. }
            | Error::Malformed { .. }
            | Error::OutOfRange { .. }
            | Error::NonMonotonic { .. }
            | Error::Shape(_)
            | Error::Empty(_)
            | Error::CoverageUnattainable { .. } => ErrorClass::Data,
            Error::Capacity { .. } | Error::ProcessorCapacity(_) => ErrorClass::Capacity,
            Error::OffLattice { .. } | Error::AccumulatorOverflow { .. } | Error::Invariant(_) => {
                ErrorClass::Internal
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
