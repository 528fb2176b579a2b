//! Core of the myopia patient-education agent.
//!
//! - [`kbindex`]: corpus chunking, embedding, exact cosine retrieval and the
//!   on-disk index format.
//! - [`imagetool`]: the fundus grading contract, the participant-aware splitter
//!   and the classification metric engine.
//! - [`agent`]: per-turn tool routing, prompt assembly and follow-up parsing.

pub mod agent;
pub mod hashing;
pub mod imagetool;
pub mod kbindex;
pub mod language;
pub mod net;
pub mod tokenize;

pub use language::Language;
