//! Domain-invariant network intrusion detection.
//!
//! The pipeline trains a domain-adversarial network on labelled source flows
//! and unlabelled target flows, projects flows through the learned feature
//! extractor, fits a one-class SVM on projected benign source flows, and
//! scores flows from either domain with it.

pub mod dann;
pub mod bundle;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod nn;
pub mod osvm;
pub mod par;
pub mod pipeline;
pub mod synthetic;

pub use error::{Error, Result};
