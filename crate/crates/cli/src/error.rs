use std::fmt;

use ck_core::embedding::EmbeddingError;
use ck_core::ingest::IngestError;
use ck_core::metrics::MetricsError;
use ck_core::model::ModelError;
use ck_core::train::{CheckpointError, TrainError};
use ck_core::tree::TreeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Provider,
    Internal,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 2,
            Kind::Data => 3,
            Kind::Provider => 4,
            Kind::Internal => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Data => "data",
            Kind::Provider => "provider",
            Kind::Internal => "internal",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Usage,
            message: msg.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Data,
            message: msg.into(),
        }
    }

    pub fn provider(msg: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Provider,
            message: msg.into(),
        }
    }

    /// One JSON object on one line, for scripts reading stderr.
    pub fn to_line(&self) -> String {
        serde_json::json!({
            "error": self.kind.as_str(),
            "exit_code": self.kind.exit_code(),
            "message": self.message,
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind.as_str(), self.message)
    }
}

fn with_kind(kind: Kind, e: impl fmt::Display) -> CliError {
    CliError {
        kind,
        message: e.to_string(),
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        let kind = match e {
            EmbeddingError::InvalidConfig(_) => Kind::Usage,
            EmbeddingError::EmptyWindow => Kind::Internal,
            _ => Kind::Provider,
        };
        with_kind(kind, e)
    }
}

impl From<TreeError> for CliError {
    fn from(e: TreeError) -> Self {
        with_kind(Kind::Data, e)
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        let kind = match e {
            IngestError::InvalidConfig(_) | IngestError::InvalidSplit(_) => Kind::Usage,
            _ => Kind::Data,
        };
        with_kind(kind, e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Embedding(inner) => inner.into(),
            ModelError::UnknownTarget(_) => with_kind(Kind::Data, e),
            ModelError::Kernel(_) | ModelError::Config(_) => with_kind(Kind::Usage, e),
            // the backbone disagrees with the model it is paired with
            ModelError::DimensionMismatch { .. } => with_kind(Kind::Provider, e),
            ModelError::AllMasked | ModelError::MaskLength { .. } => with_kind(Kind::Internal, e),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(inner) => inner.into(),
            TrainError::Data(inner) => inner.into(),
            TrainError::Config(_) => with_kind(Kind::Usage, e),
            TrainError::EmptyDataset(_) => with_kind(Kind::Data, e),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Model(inner) => inner.into(),
            MetricsError::Data(inner) => inner.into(),
            MetricsError::Empty => with_kind(Kind::Data, e),
            MetricsError::LengthMismatch { .. } => with_kind(Kind::Internal, e),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        with_kind(Kind::Data, e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        with_kind(Kind::Data, e)
    }
}
