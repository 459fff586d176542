//! HTTP access to completed runs and on-demand projections.

pub mod api;
pub mod http;

pub use api::{Api, ApiError, ApiProjectionRequest, ApiProjectionResponse, Provenance};
pub use http::{router, serve};
