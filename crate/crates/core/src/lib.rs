//! Analytics for annotated learner–chatbot conversation logs.
//!
//! The pipeline runs raw export → [`event_log`] → labels from a [`schema`] →
//! inter-annotator [`agreement`] → frequency tables ([`stats`]) →
//! directly-follows models ([`mining`]).

pub mod agreement;
pub mod error;
pub mod event_log;
pub mod mining;
pub mod registry;
pub mod schema;
pub mod stats;

pub use error::{Error, Result};
