use plasticlab::bench::BenchError;
use plasticlab::config::ConfigError;
use plasticlab::genome::GenomeError;
use plasticlab::persist::PersistError;

pub const RUNTIME: u8 = 1;
pub const CONFIG: u8 = 2;
/// Some sweep cells failed, others produced results.
pub const PARTIAL: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: CONFIG,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: RUNTIME,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::runtime(e.to_string()),
            _ => Failure::config(e.to_string()),
        }
    }
}

impl From<PersistError> for Failure {
    fn from(e: PersistError) -> Self {
        Failure::runtime(e.to_string())
    }
}

impl From<GenomeError> for Failure {
    fn from(e: GenomeError) -> Self {
        Failure::runtime(e.to_string())
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Spec(_) | BenchError::CurveLength { .. } => Failure::config(e.to_string()),
            _ => Failure::runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::runtime(e.to_string())
    }
}
