//! Newton solvers for weighted binary (incidence) and multinomial (relative
//! hazard) regressions.

mod binary;
mod link;
mod multinomial;
pub(crate) mod newton;

pub use binary::{fit_weighted_binary, GlmFit};
pub use link::{apply_inverse_link, LinkFunction, PROB_CLAMP};
pub use multinomial::{fit_multinomial, softmax, MultinomFit};
pub use newton::NewtonOptions;
