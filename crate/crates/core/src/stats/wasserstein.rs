use crate::domain::CategoricalDistribution;
use crate::error::Result;

/// Wasserstein-1 distance between two normalized distributions over the same
/// axis, with values placed at unit spacing in declared order.
///
/// Computed as `Σ_{i<K-1} |F1(i) - F2(i)|` over the cumulative sums.
pub fn wasserstein1_categorical(
    d1: &CategoricalDistribution,
    d2: &CategoricalDistribution,
) -> Result<f64> {
    d1.check_same_axis(d2)?;
    d1.require_normalized()?;
    d2.require_normalized()?;
    Ok(w1_cdf(d1.weights(), d2.weights()))
}

pub(crate) fn w1_cdf(a: &[f64], b: &[f64]) -> f64 {
    let mut fa = 0.0;
    let mut fb = 0.0;
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b).take(a.len().saturating_sub(1)) {
        fa += x;
        fb += y;
        total += (fa - fb).abs();
    }
    total
}

/// Largest W1 any distribution over the axis can reach from `ideal`.
///
/// W1 to a fixed target is convex in the source, so the maximum sits at a
/// point mass; the increments between neighbouring point masses are
/// `2F*(i) - 1`, nondecreasing in `i`, so only the two end values compete.
pub fn max_deviation(ideal: &CategoricalDistribution) -> f64 {
    let cdf = ideal.cdf();
    let head = &cdf[..cdf.len().saturating_sub(1)];
    let at_last: f64 = head.iter().sum();
    let at_first: f64 = head.iter().map(|f| 1.0 - f).sum();
    at_last.max(at_first)
}

/// W1 from `d` to `ideal`, rescaled to `[0, 1]` by [`max_deviation`];
/// 1 means `d` is as far from the ideal as any distribution can be.
pub fn normalized_bias(d: &CategoricalDistribution, ideal: &CategoricalDistribution) -> Result<f64> {
    let w = wasserstein1_categorical(d, ideal)?;
    let max = max_deviation(ideal);
    if max <= 0.0 {
        return Ok(0.0);
    }
    Ok((w / max).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BiasAxis;
    use crate::error::Error;
    use proptest::prelude::*;

    fn d(axis: &str, w: &[f64]) -> CategoricalDistribution {
        CategoricalDistribution::new(axis, w.to_vec()).unwrap()
    }

    #[test]
    fn w1_examples() {
        let a = d("x", &[0.2, 0.3, 0.5]);
        assert_eq!(wasserstein1_categorical(&a, &a).unwrap(), 0.0);
        assert_eq!(
            wasserstein1_categorical(&d("x", &[1.0, 0.0, 0.0]), &d("x", &[0.0, 0.0, 1.0])).unwrap(),
            2.0
        );
        assert_eq!(
            wasserstein1_categorical(&d("x", &[1.0, 0.0]), &d("x", &[0.5, 0.5])).unwrap(),
            0.5
        );
    }

    #[test]
    fn w1_rejects_bad_input() {
        assert!(matches!(
            wasserstein1_categorical(&d("x", &[1.0, 0.0]), &d("y", &[1.0, 0.0])),
            Err(Error::AxisMismatch { .. })
        ));
        assert!(matches!(
            wasserstein1_categorical(&d("x", &[2.0, 0.0]), &d("x", &[1.0, 0.0])),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn normalized_bias_examples() {
        let u2 = d("x", &[0.5, 0.5]);
        assert_eq!(normalized_bias(&u2, &u2).unwrap(), 0.0);
        assert_eq!(normalized_bias(&d("x", &[1.0, 0.0]), &u2).unwrap(), 1.0);
        let u3 = d("x", &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        let w = normalized_bias(&d("x", &[0.0, 1.0, 0.0]), &u3).unwrap();
        assert!((w - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_value_axis_has_zero_bias() {
        let one = d("x", &[1.0]);
        assert_eq!(normalized_bias(&one, &one).unwrap(), 0.0);
    }

    #[test]
    fn extreme_point_masses_are_fully_biased() {
        for k in 2..=10 {
            let values: Vec<String> = (0..k).map(|i| format!("v{i}")).collect();
            let refs: Vec<&str> = values.iter().map(String::as_str).collect();
            let axis = BiasAxis::with_prefix_templates("x", &refs).unwrap();
            let uniform = CategoricalDistribution::uniform(&axis);
            for end in [0, k - 1] {
                let p = CategoricalDistribution::point_mass(&axis, end).unwrap();
                assert!((normalized_bias(&p, &uniform).unwrap() - 1.0).abs() < 1e-12, "k={k}");
            }
        }
    }

    #[test]
    fn max_deviation_for_skewed_ideal() {
        // ideal [0.3, 0.4, 0.3]: point mass at either end moves 0.7 + 0.3 = 1.0
        let ideal = d("age", &[0.3, 0.4, 0.3]);
        assert!((max_deviation(&ideal) - 1.0).abs() < 1e-12);
        let ideal = d("age", &[0.8, 0.2]);
        assert!((max_deviation(&ideal) - 0.8).abs() < 1e-12);
    }

    fn normalized(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.001f64..1.0, k).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn max_deviation_matches_point_mass_scan(ideal in (1usize..=6).prop_flat_map(normalized)) {
            let ideal = d("x", &ideal);
            let k = ideal.k();
            let scan = (0..k)
                .map(|j| {
                    let mut p = vec![0.0; k];
                    p[j] = 1.0;
                    w1_cdf(&p, ideal.weights())
                })
                .fold(0.0f64, f64::max);
            prop_assert!((scan - max_deviation(&ideal)).abs() < 1e-12);
        }
    }
}
