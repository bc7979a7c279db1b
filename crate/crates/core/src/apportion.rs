//! Largest-remainder apportionment of an integer total over real quotas.

use crate::error::{Error, Result};

/// Quotas and remainders closer than this are treated as exact, so rounding
/// noise in the weights cannot reorder shares that are tied in exact
/// arithmetic.
const QUOTA_RESOLUTION: f64 = 1e-9;

/// Splits `total` in proportion to `weights` by the largest-remainder rule.
///
/// Each share starts at the floor of its quota; the leftover units go to the
/// largest fractional remainders, ties resolved toward the lower index.
pub fn largest_remainder(total: u64, weights: &[f64]) -> Result<Vec<u64>> {
    if weights.is_empty() {
        return Err(Error::invalid("cannot apportion over zero cells"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("apportionment weights must be finite and non-negative"));
    }
    let mass: f64 = weights.iter().sum();
    if mass <= 0.0 {
        return Err(Error::invalid("apportionment weights sum to zero"));
    }
    let quotas: Vec<f64> = weights
        .iter()
        .map(|w| {
            let q = total as f64 * w / mass;
            if (q - q.round()).abs() <= QUOTA_RESOLUTION * q.max(1.0) { q.round() } else { q }
        })
        .collect();
    let mut shares: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = shares.iter().sum();
    let mut leftover = total.saturating_sub(assigned);

    // remainders in units of the resolution, so near-ties compare equal
    let remainder = |i: usize| ((quotas[i] - quotas[i].floor()) / QUOTA_RESOLUTION).round() as u64;
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| remainder(b).cmp(&remainder(a)).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        if weights[i] > 0.0 {
            shares[i] += 1;
            leftover -= 1;
        }
    }
    Ok(shares)
}

/// Splits `total` evenly over `cells` cells; shares differ by at most one.
pub fn even_split(total: u64, cells: usize) -> Result<Vec<u64>> {
    largest_remainder(total, &vec![1.0; cells])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_example_from_conditioned_joint() {
        assert_eq!(largest_remainder(48, &[0.8, 0.2]).unwrap(), vec![38, 10]);
    }

    #[test]
    fn even_split_examples() {
        assert_eq!(even_split(48, 2).unwrap(), vec![24, 24]);
        assert_eq!(even_split(48, 4).unwrap(), vec![12; 4]);
        assert_eq!(even_split(48, 6).unwrap(), vec![8; 6]);
        assert_eq!(even_split(5, 3).unwrap(), vec![2, 2, 1]);
        assert_eq!(even_split(2, 3).unwrap(), vec![1, 1, 0]);
    }

    #[test]
    fn rounding_noise_does_not_break_ties() {
        // 0.1 + 0.2 style noise: quotas 1.5 and 1.5 in exact arithmetic
        let w = [0.1 + 0.2, 0.3, 0.4];
        assert_eq!(largest_remainder(5, &w).unwrap(), vec![2, 1, 2]);
        assert_eq!(largest_remainder(3, &[0.3, 0.1 + 0.2]).unwrap(), vec![2, 1]);
    }

    #[test]
    fn zero_weight_cells_get_nothing() {
        assert_eq!(largest_remainder(10, &[0.0, 1.0, 1.0]).unwrap(), vec![0, 5, 5]);
    }

    #[test]
    fn rejects_degenerate_weights() {
        assert!(largest_remainder(10, &[]).is_err());
        assert!(largest_remainder(10, &[0.0, 0.0]).is_err());
        assert!(largest_remainder(10, &[1.0, -1.0]).is_err());
    }

    proptest! {
        #[test]
        fn shares_sum_to_total_and_stay_within_one_of_quota(
            total in 0u64..500,
            weights in prop::collection::vec(0.0f64..10.0, 1..12),
        ) {
            prop_assume!(weights.iter().sum::<f64>() > 1e-3);
            let shares = largest_remainder(total, &weights).unwrap();
            prop_assert_eq!(shares.iter().sum::<u64>(), total);
            let mass: f64 = weights.iter().sum();
            for (s, w) in shares.iter().zip(&weights) {
                let quota = total as f64 * w / mass;
                prop_assert!((*s as f64 - quota).abs() < 1.0 + 1e-9);
            }
        }

        #[test]
        fn even_split_differs_by_at_most_one(total in 0u64..1000, cells in 1usize..40) {
            let shares = even_split(total, cells).unwrap();
            let max = *shares.iter().max().unwrap();
            let min = *shares.iter().min().unwrap();
            prop_assert!(max - min <= 1);
        }
    }
}
