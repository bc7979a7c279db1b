//! Numerical primitives shared by the bias metrics.

mod chisq;
mod pearson;
mod variability;
mod wasserstein;

pub use chisq::{chi_square_p, chi_square_sf, gamma_q, ln_gamma, ChiSquareResult, ContingencyTable};
pub use pearson::pearson;
pub use variability::{
    mad_max, mad_normalized, mad_raw, variability_alternatives, Alternatives, VariabilityKind,
    VariabilityScore,
};
pub use wasserstein::{max_deviation, normalized_bias, wasserstein1_categorical};
