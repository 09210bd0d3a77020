use thiserror::Error;

use crate::actions::RuleViolation;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mask has no foreground (tumor) voxels to sample from")]
    NoForeground,

    #[error("mask has no tumor voxels")]
    NoTumor,

    #[error("liver mask is empty")]
    EmptyLiver,

    #[error("unknown action unit: {0}")]
    UnknownUnit(String),

    #[error("combo violates clinical rules: {}", violation_ids(.0))]
    RuleViolation(Vec<RuleViolation>),

    #[error("contrastive denominator is not positive ({0})")]
    NonPositiveDenominator(f64),

    #[error("need at least 2 events to fit a Cox model, got {0}")]
    InsufficientEvents(usize),

    #[error("result is undefined: {0}")]
    UndefinedResult(String),

    #[error("exploration dead end at {phase} step {step} (beam {beam}): no rule-valid candidate")]
    DeadEnd {
        phase: String,
        step: usize,
        beam: usize,
    },

    #[error("search space too large: {count} combos exceeds limit {limit}")]
    TooLarge { count: usize, limit: usize },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn violation_ids(v: &[RuleViolation]) -> String {
    v.iter()
        .map(|x| x.rule_id.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Short machine-readable code, used by the CLI and HTTP layers.
    pub fn code(&self) -> &'static str {
        match self.root() {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::NoForeground => "no-foreground",
            Error::NoTumor => "no-tumor",
            Error::EmptyLiver => "empty-liver",
            Error::UnknownUnit(_) => "unknown-unit",
            Error::RuleViolation(_) => "rule-violation",
            Error::NonPositiveDenominator(_) => "non-positive-denominator",
            Error::InsufficientEvents(_) => "insufficient-events",
            Error::UndefinedResult(_) => "undefined-result",
            Error::DeadEnd { .. } => "exploration-dead-end",
            Error::TooLarge { .. } => "too-large",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Context { .. } => unreachable!(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
