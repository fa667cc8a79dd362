use std::fmt;
use std::path::Path;

use ambientis::aggregate::AggregateError;
use ambientis::frame::IngestError;
use ambientis::pipeline::PipelineError;
use ambientis::sim::ScenarioError;
use ambientis::stats::StatsError;

/// Failure of a command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Missing or unreadable files, bad flags or config: exit 2.
    Input(String),
    /// Malformed fixture, JSONL, CSV or scenario content: exit 3.
    Format(String),
    /// No pairs, zero baselines and similar: exit 4.
    Stats(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            Self::Input(_) => 2,
            Self::Format(_) => 3,
            Self::Stats(_) => 4,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Input(format!("{}: {e}", path.display()))
    }

    /// Prefix the message with the file it concerns.
    pub fn context(self, path: &Path) -> Self {
        let tag = |m: String| format!("{}: {m}", path.display());
        match self {
            Self::Input(m) => Self::Input(tag(m)),
            Self::Format(m) => Self::Format(tag(m)),
            Self::Stats(m) => Self::Stats(tag(m)),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Input(m) | Self::Format(m) | Self::Stats(m) => f.write_str(m),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Read { .. } | ScenarioError::Io(_) => Self::Input(e.to_string()),
            ScenarioError::Syntax(_) | ScenarioError::Invalid(_) => Self::Format(e.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Unreadable { .. } | IngestError::Io(_) | IngestError::InvalidConfig(_) => {
                Self::Input(e.to_string())
            }
            IngestError::Scenario(s) => s.into(),
            _ => Self::Format(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Ingest(i) => i.into(),
            PipelineError::Presence(_) | PipelineError::Posture(_) | PipelineError::Threshold(_) => {
                Self::Input(e.to_string())
            }
            PipelineError::Motion { .. } => Self::Format(e.to_string()),
        }
    }
}

impl From<AggregateError> for CliError {
    fn from(e: AggregateError) -> Self {
        match e {
            AggregateError::Io(_) => Self::Input(e.to_string()),
            AggregateError::EmptyProfile | AggregateError::ZeroBaseline | AggregateError::BandRange(..) => {
                Self::Stats(e.to_string())
            }
            _ => Self::Format(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        Self::Stats(e.to_string())
    }
}
