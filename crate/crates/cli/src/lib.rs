//! Command-line tools and the HTTP session service.

pub mod api;
pub mod commands;
pub mod server;

pub use api::{ApiError, ErrorCode};
