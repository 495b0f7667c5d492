use trailer_lab_core::sim::CompletionStatus;

/// Process exit codes of the command-line front end.
pub mod exit {
    pub const GOAL_REACHED: u8 = 0;
    pub const IO: u8 = 1;
    pub const JACKKNIFED: u8 = 2;
    pub const TIMED_OUT: u8 = 3;
    pub const CONFIG: u8 = 4;
}

pub fn status_exit_code(status: CompletionStatus) -> u8 {
    match status {
        CompletionStatus::GoalReached => exit::GOAL_REACHED,
        CompletionStatus::Jackknifed => exit::JACKKNIFED,
        CompletionStatus::TimedOut => exit::TIMED_OUT,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Malformed or semantically invalid input; `field` names the culprit
    /// when known.
    #[error("{}", match field { Some(f) => format!("invalid {f}: {message}"), None => message.clone() })]
    Config { field: Option<String>, message: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl AppError {
    pub fn config(message: impl Into<String>) -> Self {
        Self::Config { field: None, message: message.into() }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io { context: context.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config { .. } => exit::CONFIG,
            Self::Io { .. } => exit::IO,
        }
    }
}

impl From<trailer_lab_core::Error> for AppError {
    fn from(err: trailer_lab_core::Error) -> Self {
        match err {
            trailer_lab_core::Error::Invalid { field, reason } => Self::Config { field: Some(field), message: reason },
            other => Self::config(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for AppError {
    fn from(err: serde_json::Error) -> Self {
        Self::config(format!("malformed JSON: {err}"))
    }
}
