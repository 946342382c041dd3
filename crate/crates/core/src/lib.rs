//! Context-aware, ethics-driven tailoring of relational data.
//!
//! A Context Dimension Tree describes the situations in which data is
//! used; an Ethical Requirements Tree describes the ethical facets that
//! may apply. A context selects a contextual view over the database, the
//! view is analysed for group disparities, and a transformation chosen by
//! the ethical context produces an ethical view together with a
//! provenance record explaining every decision.

pub mod analysis;
pub mod error;
pub mod pipeline;
pub mod provenance;
pub mod relation;
pub mod transforms;
pub mod tree;
pub mod views;

pub use error::{Error, Result};
