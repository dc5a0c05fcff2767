//! Conversion of CMME-XML mensural encodings to MEI.
//!
//! The pipeline is `cmme` (parse) → `score` (normalize durations and state)
//! → either `mei::mensural` or `cmn` (barring, ties, tuplets) → `mei::cmn`.

pub mod cmme;
pub mod cli;
pub mod cmn;
pub mod error;
pub mod mei;
pub mod music;
pub mod pipeline;
pub mod rational;
pub mod report;
pub mod score;
pub mod xml;

pub use error::Error;
pub use rational::RationalDuration;
