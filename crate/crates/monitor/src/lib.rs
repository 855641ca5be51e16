//! Monitor service and command-line front end for the simulated rig.

pub mod cli;
pub mod service;

pub use service::{router, serve, ApiError, Monitor};
