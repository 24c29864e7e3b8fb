use std::path::PathBuf;

use serde::Serialize;
use vesselcomm::scenario::Violation;

/// Failure reported to the user as a one-line JSON record on stderr.
#[derive(Debug)]
pub enum CliError {
    FileNotFound(PathBuf),
    Io { path: PathBuf, message: String },
    Parse { path: PathBuf, message: String },
    Validation(Vec<Violation>),
    UnknownPreset(String),
    UnknownParameterPath(String),
    InvalidArgument(String),
    UnsupportedCharacter(char),
    Simulation(String),
}

#[derive(Serialize)]
struct Record<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    violations: Option<&'a [Violation]>,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::FileNotFound(_) => "FileNotFound",
            Self::Io { .. } => "IoError",
            Self::Parse { .. } => "ParseError",
            Self::Validation(_) => "ValidationFailed",
            Self::UnknownPreset(_) => "UnknownPreset",
            Self::UnknownParameterPath(_) => "UnknownParameterPath",
            Self::InvalidArgument(_) => "InvalidArgument",
            Self::UnsupportedCharacter(_) => "UnsupportedCharacter",
            Self::Simulation(_) => "SimulationFailed",
        }
    }

    pub fn to_json(&self) -> String {
        let (message, path, violations) = match self {
            Self::FileNotFound(p) => ("no such file".to_string(), Some(p), None),
            Self::Io { path, message } | Self::Parse { path, message } => (message.clone(), Some(path), None),
            Self::Validation(v) => (format!("{} violation(s)", v.len()), None, Some(v.as_slice())),
            Self::UnknownPreset(n) => (format!("unknown preset {n:?}"), None, None),
            Self::UnknownParameterPath(p) => (format!("no scalar scenario field at {p:?}"), None, None),
            Self::InvalidArgument(m) | Self::Simulation(m) => (m.clone(), None, None),
            Self::UnsupportedCharacter(c) => (format!("character {c:?} is outside the ITA2 alphabet"), None, None),
        };
        let record = Record {
            error: self.kind(),
            message,
            path: path.map(|p| p.display().to_string()),
            violations,
        };
        serde_json::to_string(&record).expect("error record serializes")
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_json())
    }
}

impl std::error::Error for CliError {}

impl From<vesselcomm::ValidationReport> for CliError {
    fn from(r: vesselcomm::ValidationReport) -> Self {
        Self::Validation(r.violations)
    }
}

impl From<vesselcomm::channel::ChannelError> for CliError {
    fn from(e: vesselcomm::channel::ChannelError) -> Self {
        match e {
            vesselcomm::channel::ChannelError::Invalid(r) => r.into(),
            other => Self::Simulation(other.to_string()),
        }
    }
}

impl From<vesselcomm::comms::CommsError> for CliError {
    fn from(e: vesselcomm::comms::CommsError) -> Self {
        use vesselcomm::comms::CommsError;
        match e {
            CommsError::UnsupportedCharacter(c) => Self::UnsupportedCharacter(c),
            CommsError::Channel(c) => c.into(),
            CommsError::BadSchemeArity(m) => Self::InvalidArgument(m),
            other => Self::Simulation(other.to_string()),
        }
    }
}

impl From<vesselcomm::relay::RelayError> for CliError {
    fn from(e: vesselcomm::relay::RelayError) -> Self {
        use vesselcomm::relay::RelayError;
        match e {
            RelayError::Comms(c) => c.into(),
            RelayError::TooManyHops { .. } | RelayError::EmptyInput | RelayError::NoHops | RelayError::NegativeDelay => {
                Self::InvalidArgument(e.to_string())
            }
        }
    }
}
