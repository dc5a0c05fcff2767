use thiserror::Error;

use crate::rational::RationalDuration;
use crate::report::{Code, Location};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("not a CMME piece: root element is <{0}>")]
    NotCmme(String),
    #[error("schema violation in <{element}>: {message}")]
    SchemaViolation {
        element: String,
        message: String,
        location: Option<Location>,
    },
}

impl ParseError {
    pub fn schema(element: &str, message: impl Into<String>, location: Option<Location>) -> Self {
        ParseError::SchemaViolation { element: element.to_string(), message: message.into(), location }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("document has no mensural music section")]
    EmptyScore,
    #[error("proportion {num}:{den} has a zero term")]
    NegativeState { num: u32, den: u32, location: Location },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CmnError {
    #[error("duration {0} cannot be written as a chain of note values")]
    Unrepresentable(RationalDuration),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("serialization failure: {0}")]
pub struct SerializationFailure(pub String);

/// Any failure of the conversion pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Cmn(#[from] CmnError),
    #[error(transparent)]
    Serialization(#[from] SerializationFailure),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Report code used when this error is recorded in a conversion report.
    pub fn code(&self) -> Code {
        match self {
            Error::Parse(ParseError::MalformedXml(_)) => Code::MalformedXml,
            Error::Parse(ParseError::NotCmme(_)) => Code::NotCmme,
            Error::Parse(ParseError::SchemaViolation { .. }) => Code::SchemaViolation,
            Error::Build(BuildError::EmptyScore) => Code::EmptyScore,
            Error::Build(BuildError::NegativeState { .. }) => Code::NegativeState,
            Error::Cmn(CmnError::Unrepresentable(_)) => Code::Unrepresentable,
            Error::Serialization(_) => Code::Internal,
            Error::Io { .. } => Code::Io,
        }
    }

    pub fn location(&self) -> Option<Location> {
        match self {
            Error::Parse(ParseError::SchemaViolation { location, .. }) => *location,
            Error::Build(BuildError::NegativeState { location, .. }) => Some(*location),
            _ => None,
        }
    }
}
