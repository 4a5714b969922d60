//! Covariance-structure models estimated by maximum likelihood.

mod estimate;
mod fit;
mod model;

pub use estimate::*;
pub use fit::*;
pub use model::*;
