use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("individual {index}: gene {gene} has value {value}, outside [0, {cardinality})")]
    InvalidIndividual {
        index: usize,
        gene: usize,
        value: u8,
        cardinality: usize,
    },

    #[error("individual {index} has {found} genes, expected {expected}")]
    WrongLength {
        index: usize,
        found: usize,
        expected: usize,
    },

    #[error("individual {0} has not been evaluated")]
    Unevaluated(usize),

    #[error("invalid selection size {selected} for population of {population}")]
    InvalidSelection { selected: usize, population: usize },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid structure: {0}")]
    InvalidStructure(String),

    #[error("sample group `{0}` is empty")]
    EmptyGroup(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
