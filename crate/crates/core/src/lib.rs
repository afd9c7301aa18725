//! Core of parley: conflict-style modelling, screenshot ingestion, scripted
//! dialogues with annotation feedback, practice branches, the provider
//! gateway and the event-sourced session store.

pub mod annotation;
pub mod catalog;
pub mod conflict_model;
pub mod dialogue;
pub mod fraction;
pub mod gateway;
pub mod ingestion;
pub mod redaction;
pub mod samples;
pub mod session;
pub mod workflow;

pub use fraction::Fraction;
pub use gateway::Gateway;
pub use session::{Session, SessionEvent, SessionState, SessionStore};
pub use workflow::Workflow;
