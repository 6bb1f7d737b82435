use std::fmt;

use serde_json::json;

/// Failure class; fixes the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Numeric,
}

impl Kind {
    pub fn exit_code(self) -> u8 {
        match self {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Numeric => 4,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Kind::Config => "config",
            Kind::Data => "data",
            Kind::Numeric => "numeric",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub field: Option<String>,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        CliError { kind: Kind::Config, field: Some(field.to_string()), message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Data, field: None, message: message.into() }
    }

    /// Attaches the config key whose value led to this error.
    pub fn at(mut self, field: &str) -> Self {
        self.field.get_or_insert_with(|| field.to_string());
        self
    }

    /// One JSON object on one line, for stderr.
    pub fn line(&self) -> String {
        json!({
            "error": self.kind.name(),
            "exit_code": self.kind.exit_code(),
            "field": self.field,
            "message": self.message,
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl From<seqstruct::Error> for CliError {
    fn from(e: seqstruct::Error) -> Self {
        use seqstruct::Error as E;
        let kind = match e {
            E::InvalidConfig(_) | E::InvalidMeasure(_) => Kind::Config,
            E::Diverged { .. }
            | E::NonFiniteActivation { .. }
            | E::NonFiniteTrajectory { .. }
            | E::DivisionUndefined => Kind::Numeric,
            _ => Kind::Data,
        };
        CliError { kind, field: None, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}
