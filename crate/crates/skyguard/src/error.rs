use std::path::{Path, PathBuf};

/// Exit codes: 2 missing input, 3 bad configuration, 4 anything that fails
/// while running.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: no such file", .0.display())]
    MissingFile(PathBuf),
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: skyguard_core::Error,
    },
    #[error(transparent)]
    Core(#[from] skyguard_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingFile(_) => 2,
            Error::Config(_) => 3,
            Error::Core(e) | Error::InFile { source: e, .. } if is_config(e) => 3,
            _ => 4,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }

    pub(crate) fn in_file(path: &Path) -> impl FnOnce(skyguard_core::Error) -> Self + '_ {
        move |source| Error::InFile {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn is_config(e: &skyguard_core::Error) -> bool {
    matches!(e, skyguard_core::Error::Config(_))
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
