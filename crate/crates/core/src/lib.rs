//! Lint-driven repair loop for generated CloudFormation templates.
//!
//! The crate is organised bottom-up:
//!
//! * [`json`] parses templates into trees that keep source positions.
//! * [`schema`] loads resource property schemas.
//! * [`lint`] checks templates and formats diagnostics.
//! * [`gateway`] talks to a model, or to offline stand-ins for one.
//! * [`feedback`] runs the generate / lint / refeed loop for one prompt.
//! * [`bench`] runs the loop over a case set and summarises the counts.

pub mod bench;
pub mod feedback;
pub mod gateway;
pub mod json;
pub mod lint;
pub mod schema;
pub mod seed;
