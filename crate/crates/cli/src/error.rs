use thiserror::Error;

use eclipsenet::dataset::DatasetError;
use eclipsenet::dynamics::DynamicsError;
use eclipsenet::eclipse::EclipseError;
use eclipsenet::geometry::GeometryError;
use eclipsenet::neuralnet::NetError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Eclipse(#[from] EclipseError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Network(#[from] NetError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

impl CliError {
    /// Category printed in the error line.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Input(_) => "input",
            CliError::Io { .. } => "io",
            CliError::Geometry(_) => "geometry",
            CliError::Eclipse(_) => "eclipse",
            CliError::Dataset(_) => "dataset",
            CliError::Network(NetError::Diverged { .. }) => "training",
            CliError::Network(_) => "network",
            CliError::Dynamics(_) => "dynamics",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) | CliError::Io { .. } => 3,
            _ => 4,
        }
    }
}

pub fn write_file(path: &std::path::Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}
