//! HTTP API and operator tooling for parley.

pub mod api;
pub mod config;
pub mod error;

pub use api::{router, AppState};
pub use error::ApiError;
