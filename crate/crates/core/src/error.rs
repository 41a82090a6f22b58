use thiserror::Error;

use crate::auction::AuctionError;
use crate::bidopt::OptimizeError;
use crate::containers::ContainerError;
use crate::costmodel::CostError;

/// Configuration and type-invariant violations. Every variant names the
/// offending field so callers can report it verbatim.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    /// The document does not match the schema (wrong type, unknown key, bad JSON).
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    /// An enum-valued field holds a name that is not one of its variants.
    #[error("unknown value {value:?} for field `{field}` (expected one of: {expected})")]
    UnknownVariant {
        field: String,
        value: String,
        expected: String,
    },
    #[error("field `workload.mix`: intensity fractions must sum to 1, got {sum}")]
    MixSum { sum: f64 },
    #[error("field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Field path the error refers to.
    pub fn field(&self) -> &str {
        match self {
            Self::Schema { path, .. } => path,
            Self::UnknownVariant { field, .. } | Self::Invalid { field, .. } => field,
            Self::MixSum { .. } => "workload.mix",
        }
    }
}

/// Umbrella error for callers that drive several layers at once.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Auction(#[from] AuctionError),
    #[error(transparent)]
    Container(#[from] ContainerError),
}
