use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] psilap_core::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for anything the user can fix in the config, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        use psilap_core::Error as E;
        match self {
            Self::Config(_) => 2,
            Self::Core(e) => match e {
                E::Domain { .. }
                | E::InvalidMap(_)
                | E::Parameter { .. }
                | E::GridTooCoarse { .. }
                | E::Config(_) => 2,
                _ => 1,
            },
            Self::Io { .. } => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}
