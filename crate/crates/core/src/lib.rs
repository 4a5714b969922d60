//! Survey-to-decision analytics for inland waterway transport service
//! quality: item reliability, factor extraction, latent-variable models,
//! index scoring, pairwise-comparison weighting and ordered-probit
//! satisfaction models, plus a synthetic data generator for all of them.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ahp;
pub mod dataset;
pub mod efa;
pub mod error;
pub mod numeric;
pub mod oprobit;
pub mod pipeline;
pub mod psychometrics;
pub mod schema;
pub mod scoring;
pub mod sem;
pub mod synth;

pub use error::{Error, Result};
