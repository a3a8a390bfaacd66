use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("mesh is not UV-mapped (face on line {line} has no texture coordinate)")]
    NotUvMapped { line: usize },

    #[error("mesh has no faces")]
    EmptyMesh,

    #[error("contour render contains no guidance lines")]
    NoGuidanceLines,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("weight file: {0}")]
    Weights(String),

    #[error("weight file layer {layer}: {message}")]
    WeightShape { layer: usize, message: String },

    #[error("style dictionary is empty")]
    EmptyDictionary,

    #[error("style region {0} has no usable style features")]
    EmptyRegion(u32),

    #[error("dictionary cache: {0}")]
    Cache(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
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

pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
