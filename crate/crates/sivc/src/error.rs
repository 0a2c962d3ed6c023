use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic {
        expected: &'static str,
        found: Vec<u8>,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated raster: expected {expected} values, found {found}")]
    TruncatedRaster { expected: usize, found: usize },
    #[error("negative atlas label {value} at voxel {index}")]
    InvalidLabel { index: usize, value: i32 },
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] sivc_core::Error),
    #[error("{}: {source}", path.display())]
    At { path: PathBuf, source: Box<Error> },
    #[error("{context}: {source}")]
    Context { context: String, source: Box<Error> },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Innermost error, past any path or context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::At { source, .. } | Error::Context { source, .. } => source.root(),
            e => e,
        }
    }
}

pub(crate) trait ResultExt<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
    fn context(self, f: impl FnOnce() -> String) -> Result<T>;
}

impl<T, E: Into<Error>> ResultExt<T> for std::result::Result<T, E> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|e| Error::At {
            path: path.into(),
            source: Box::new(e.into()),
        })
    }

    fn context(self, f: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| Error::Context {
            context: f(),
            source: Box::new(e.into()),
        })
    }
}
