//! Errors carrying the process exit code.

use std::fmt;

use pulsetrain::classifier::ClassifierError;
use pulsetrain::config::ConfigError;
use pulsetrain::synth::SynthError;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_SCHEMA: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self {
            code: EXIT_USAGE,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_DATA,
            error: error.into(),
        }
    }

    pub fn schema(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_SCHEMA,
            error: error.into(),
        }
    }

    pub fn context(mut self, what: impl fmt::Display + Send + Sync + 'static) -> Self {
        self.error = self.error.context(what);
        self
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::data(e),
            _ => Failure::schema(e),
        }
    }
}

impl From<ClassifierError> for Failure {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::SchemaVersionMismatch(_) | ClassifierError::CorruptFile(_) => Failure::schema(e),
            _ => Failure::data(e),
        }
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Spec { .. } => Failure::schema(e),
            _ => Failure::data(e),
        }
    }
}

/// Shorthand for the stage errors that all mean bad input data.
pub trait OrData<T> {
    fn or_data(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrData<T> for Result<T, E> {
    fn or_data(self) -> Result<T, Failure> {
        self.map_err(Failure::data)
    }
}
