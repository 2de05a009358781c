//! HTTP service, CLI and file store around the oversight engine.

pub mod api;
pub mod cli;
pub mod error;
pub mod ports;
pub mod store;

pub use error::ApiError;
pub use store::Store;
