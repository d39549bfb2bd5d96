//! Library side of the `tbje` command: run configuration, the dataset
//! bundle format and one module per subcommand.

pub mod bundle;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod extract;
pub mod gradcheck;
pub mod sweep;
pub mod synth;
pub mod train;

pub use config::RunConfig;
pub use error::{CliError, Result};
