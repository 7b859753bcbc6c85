use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the toolkit.
///
/// Variants fall into four classes that map onto process exit codes:
/// configuration/parameter problems (2), data problems (3), and numerical
/// failures (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(
        "cholesky factorization failed: matrix is indefinite beyond the jitter cap \
         (most negative eigenvalue ~ {min_eigenvalue:e})"
    )]
    Factorization { min_eigenvalue: f64 },

    #[error("matrix inversion failed: {0}")]
    Inversion(String),

    #[error("invalid model parameter: {0}")]
    Param(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("data error at line {line}: {message}")]
    Data { line: u64, message: String },

    #[error("data error: no data rows")]
    NoData,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn file(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::File {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn at_step(step: usize) -> impl FnOnce(Error) -> Error {
        move |source| Error::Step {
            step,
            source: Box::new(source),
        }
    }

    /// Process exit code for this failure class: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Param(_) | Error::Config { .. } | Error::Json(_) => 2,
            Error::Data { .. }
            | Error::NoData
            | Error::File { .. }
            | Error::Io(_)
            | Error::Csv(_) => 3,
            Error::Dimension(_)
            | Error::Factorization { .. }
            | Error::Inversion(_)
            | Error::Numerical(_) => 4,
            Error::Step { source, .. } => source.exit_code(),
        }
    }
}
