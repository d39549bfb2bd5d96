use std::path::PathBuf;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] tbje_core::Error),

    #[error("{} input file(s) missing:\n{}", .0.len(), list(.0))]
    MissingFiles(Vec<PathBuf>),

    #[error("gradient check failed: {failed} parameter tensor(s) at or above the tolerance, max relative error {max:e}")]
    GradientCheck { failed: usize, max: f64 },
}

fn list(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| format!("  {}", p.display())).collect::<Vec<_>>().join("\n")
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use tbje_core::Error as E;
        match self {
            CliError::Core(E::Config(_) | E::Contract(_) | E::Shape { .. }) => EXIT_CONFIG,
            CliError::Core(E::Io { .. } | E::Format(_)) | CliError::MissingFiles(_) => EXIT_IO,
            CliError::Core(E::Numeric(_)) | CliError::GradientCheck { .. } => EXIT_NUMERIC,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn config_err(msg: impl Into<String>) -> CliError {
    tbje_core::Error::Config(msg.into()).into()
}

pub(crate) fn format_err(msg: impl Into<String>) -> CliError {
    tbje_core::Error::Format(msg.into()).into()
}

pub fn io_err(path: impl Into<PathBuf>, e: std::io::Error) -> CliError {
    tbje_core::Error::io(path, e).into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_map_to_distinct_codes() {
        assert_eq!(config_err("x").exit_code(), EXIT_CONFIG);
        assert_eq!(format_err("x").exit_code(), EXIT_IO);
        assert_eq!(CliError::MissingFiles(vec![]).exit_code(), EXIT_IO);
        assert_eq!(CliError::from(tbje_core::Error::Numeric("nan".into())).exit_code(), EXIT_NUMERIC);
        assert_eq!(CliError::GradientCheck { failed: 1, max: 1.0 }.exit_code(), EXIT_NUMERIC);
    }
}
