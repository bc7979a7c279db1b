//! Shared domain types: bias axes, annotated image sets and categorical
//! distributions over axis values.

mod annotation;
mod axis;
mod distribution;

pub use annotation::{AnnotatedImageSet, ImageAnnotation, Intervention, ValidationWarning};
pub use axis::{AxisSet, BiasAxis, PromptSpec, PROMPT_PLACEHOLDER};
pub use distribution::{
    count_values, distribution_from_annotations, sum_distributions, CategoricalDistribution,
    NORMALIZED_TOLERANCE,
};

/// Reserved attribute value for answers that match no axis value.
pub const UNKNOWN: &str = "unknown";
