use serde::{Deserialize, Serialize};

use super::{AnnotatedImageSet, BiasAxis, UNKNOWN};
use crate::error::{Error, Result};

/// Tolerance on the total of a normalized distribution.
pub const NORMALIZED_TOLERANCE: f64 = 1e-12;

/// Non-negative weights over an axis's values, in declared value order.
///
/// Weights hold raw counts until a metric explicitly normalizes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDistribution {
    axis: String,
    weights: Vec<f64>,
}

impl CategoricalDistribution {
    pub fn new(axis: impl Into<String>, weights: Vec<f64>) -> Result<Self> {
        let axis = axis.into();
        if weights.is_empty() {
            return Err(Error::invalid(format!("distribution over `{axis}` has no weights")));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::invalid(format!(
                "distribution over `{axis}` has invalid weight {w}"
            )));
        }
        Ok(CategoricalDistribution { axis, weights })
    }

    /// Creates a distribution checked against the axis's value count.
    pub fn for_axis(axis: &BiasAxis, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != axis.k() {
            return Err(Error::invalid(format!(
                "axis `{}` has {} values but {} weights were given",
                axis.name,
                axis.k(),
                weights.len()
            )));
        }
        Self::new(axis.name.clone(), weights)
    }

    pub fn uniform(axis: &BiasAxis) -> Self {
        let k = axis.k();
        CategoricalDistribution {
            axis: axis.name.clone(),
            weights: vec![1.0 / k as f64; k],
        }
    }

    /// All mass on the value at `index`.
    pub fn point_mass(axis: &BiasAxis, index: usize) -> Result<Self> {
        if index >= axis.k() {
            return Err(Error::invalid(format!(
                "index {index} out of range for axis `{}`",
                axis.name
            )));
        }
        let mut weights = vec![0.0; axis.k()];
        weights[index] = 1.0;
        Self::new(axis.name.clone(), weights)
    }

    pub fn axis(&self) -> &str {
        &self.axis
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0.0
    }

    pub fn is_normalized(&self) -> bool {
        (self.total() - 1.0).abs() <= NORMALIZED_TOLERANCE
    }

    pub fn normalize(&self) -> Result<Self> {
        let total = self.total();
        if total <= 0.0 {
            return Err(Error::EmptyDistribution(self.axis.clone()));
        }
        Ok(CategoricalDistribution {
            axis: self.axis.clone(),
            weights: self.weights.iter().map(|w| w / total).collect(),
        })
    }

    /// Cumulative sums of the weights.
    pub fn cdf(&self) -> Vec<f64> {
        self.weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect()
    }

    pub(crate) fn check_same_axis(&self, other: &Self) -> Result<()> {
        if self.axis != other.axis {
            return Err(Error::AxisMismatch {
                expected: self.axis.clone(),
                found: other.axis.clone(),
            });
        }
        if self.k() != other.k() {
            return Err(Error::invalid(format!(
                "distributions over `{}` disagree on value count ({} vs {})",
                self.axis,
                self.k(),
                other.k()
            )));
        }
        Ok(())
    }

    pub(crate) fn require_normalized(&self) -> Result<()> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(Error::NotNormalized { axis: self.axis.clone(), total: self.total() })
        }
    }
}

/// Attribute counts for `axis` over an image set.
///
/// With `drop_unknown`, unknown answers are excluded; otherwise they are
/// rejected, since the unknown bucket has no place in the value order.
pub fn distribution_from_annotations(
    set: &AnnotatedImageSet,
    axis: &BiasAxis,
    drop_unknown: bool,
) -> Result<CategoricalDistribution> {
    let (counts, unknown) = count_values(set, axis);
    if unknown > 0 && !drop_unknown {
        return Err(Error::invalid(format!(
            "{unknown} annotations on axis `{}` are unknown",
            axis.name
        )));
    }
    CategoricalDistribution::for_axis(axis, counts.into_iter().map(|c| c as f64).collect())
}

/// Per-value counts plus the number of unknown answers for `axis`.
pub fn count_values(set: &AnnotatedImageSet, axis: &BiasAxis) -> (Vec<u64>, u64) {
    let mut counts = vec![0u64; axis.k()];
    let mut unknown = 0u64;
    for ann in &set.annotations {
        let value = ann.value(&axis.name);
        match axis.index_of(value) {
            Some(i) if value != UNKNOWN => counts[i] += 1,
            _ => unknown += 1,
        }
    }
    (counts, unknown)
}

/// Elementwise sum of distributions over one axis.
pub fn sum_distributions(ds: &[CategoricalDistribution]) -> Result<CategoricalDistribution> {
    let (first, rest) = ds
        .split_first()
        .ok_or_else(|| Error::invalid("cannot sum an empty list of distributions"))?;
    let mut weights = first.weights.clone();
    for d in rest {
        first.check_same_axis(d)?;
        for (acc, w) in weights.iter_mut().zip(&d.weights) {
            *acc += w;
        }
    }
    CategoricalDistribution::new(first.axis.clone(), weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ImageAnnotation;
    use proptest::prelude::*;

    fn gender() -> BiasAxis {
        BiasAxis::with_prefix_templates("gender", &["male", "female"]).unwrap()
    }

    fn set_with(values: &[(&str, usize)]) -> AnnotatedImageSet {
        let annotations = values
            .iter()
            .flat_map(|(v, n)| {
                std::iter::repeat_with(move || ImageAnnotation::from_pairs([("gender", *v)]))
                    .take(*n)
            })
            .collect();
        AnnotatedImageSet::new("chef", None, annotations)
    }

    fn dist(weights: &[f64]) -> CategoricalDistribution {
        CategoricalDistribution::new("x", weights.to_vec()).unwrap()
    }

    #[test]
    fn counts_degenerate_and_balanced_sets() {
        let d = distribution_from_annotations(&set_with(&[("male", 48)]), &gender(), true).unwrap();
        assert_eq!(d.weights(), &[48.0, 0.0]);
        let d = distribution_from_annotations(&set_with(&[("male", 24), ("female", 24)]), &gender(), true)
            .unwrap();
        assert_eq!(d.weights(), &[24.0, 24.0]);
    }

    #[test]
    fn drops_unknown_answers() {
        let set = set_with(&[("male", 10), ("female", 5), ("unknown", 3)]);
        let d = distribution_from_annotations(&set, &gender(), true).unwrap();
        assert_eq!(d.weights(), &[10.0, 5.0]);
        assert_eq!(d.total(), 15.0);
        assert!(distribution_from_annotations(&set, &gender(), false).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(dist(&[24.0, 24.0]).normalize().unwrap().weights(), &[0.5, 0.5]);
        assert_eq!(dist(&[48.0, 0.0]).normalize().unwrap().weights(), &[1.0, 0.0]);
        assert_eq!(
            dist(&[10.0, 5.0, 5.0]).normalize().unwrap().weights(),
            &[0.5, 0.25, 0.25]
        );
        assert!(matches!(
            dist(&[0.0, 0.0]).normalize(),
            Err(Error::EmptyDistribution(_))
        ));
    }

    #[test]
    fn sum_examples() {
        let s = sum_distributions(&[dist(&[48.0, 0.0]), dist(&[0.0, 48.0])]).unwrap();
        assert_eq!(s.weights(), &[48.0, 48.0]);
        let s = sum_distributions(&[dist(&[10.0, 5.0]), dist(&[2.0, 8.0]), dist(&[3.0, 3.0])])
            .unwrap();
        assert_eq!(s.weights(), &[15.0, 16.0]);
        assert!(sum_distributions(&[]).is_err());
        let other = CategoricalDistribution::new("y", vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            sum_distributions(&[dist(&[1.0, 1.0]), other]),
            Err(Error::AxisMismatch { .. })
        ));
    }

    #[test]
    fn rejects_negative_weights() {
        assert!(CategoricalDistribution::new("x", vec![1.0, -0.5]).is_err());
    }

    proptest! {
        #[test]
        fn count_conservation(males in 0usize..30, females in 0usize..30, unknown in 0usize..10) {
            let set = set_with(&[("male", males), ("female", females), ("unknown", unknown)]);
            let (counts, unk) = count_values(&set, &gender());
            prop_assert_eq!(counts.iter().sum::<u64>() + unk, set.size() as u64);
        }

        #[test]
        fn normalize_is_idempotent(ws in prop::collection::vec(0.0f64..100.0, 1..6)) {
            prop_assume!(ws.iter().sum::<f64>() > 1e-6);
            let once = dist(&ws).normalize().unwrap();
            let twice = once.normalize().unwrap();
            for (a, b) in once.weights().iter().zip(twice.weights()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            prop_assert!(once.is_normalized());
        }

        #[test]
        fn sum_is_commutative_and_associative(
            a in prop::collection::vec(0u32..50, 3),
            b in prop::collection::vec(0u32..50, 3),
            c in prop::collection::vec(0u32..50, 3),
        ) {
            let f = |v: &Vec<u32>| dist(&v.iter().map(|x| *x as f64).collect::<Vec<_>>());
            let (a, b, c) = (f(&a), f(&b), f(&c));
            let ab = sum_distributions(&[a.clone(), b.clone()]).unwrap();
            let ba = sum_distributions(&[b.clone(), a.clone()]).unwrap();
            prop_assert_eq!(ab.weights(), ba.weights());
            let left = sum_distributions(&[ab, c.clone()]).unwrap();
            let bc = sum_distributions(&[b, c]).unwrap();
            let right = sum_distributions(&[a, bc]).unwrap();
            prop_assert_eq!(left.weights(), right.weights());
        }
    }
}
