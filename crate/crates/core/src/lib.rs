//! Simulated mountain-car benchmark rig.
//!
//! The crate hosts the plant ([`dynamics`]), the camera and tracking chain
//! ([`perception`]), a gym-style environment ([`env`]), the reference and
//! Q-learning controllers ([`agents`]) and the episodic training harness
//! ([`harness`]).

pub mod agents;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod harness;
pub mod perception;

pub use error::{Error, Result};
