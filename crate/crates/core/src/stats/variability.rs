use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariabilityKind {
    MadNormalized,
    WassersteinToUniform,
    Stddev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariabilityScore {
    pub kind: VariabilityKind,
    pub value: f64,
}

fn mean(scores: &[f64]) -> f64 {
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// Differences at the scale of summation round-off, which the square root
/// in the normalized scores would otherwise amplify.
fn noise_floor(scores: &[f64]) -> f64 {
    let scale = scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    scale * scores.len() as f64 * f64::EPSILON * 4.0
}

fn denoise(x: f64, floor: f64) -> f64 {
    if x.abs() <= floor {
        0.0
    } else {
        x
    }
}

/// Mean absolute deviation from the mean.
pub fn mad_raw(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::invalid("MAD of an empty score list"));
    }
    let m = mean(scores);
    let floor = noise_floor(scores);
    Ok(scores.iter().map(|s| denoise(s - m, floor).abs()).sum::<f64>() / scores.len() as f64)
}

/// MAD of the one-hot vector of length `k`: `2(k-1)/k²`.
pub fn mad_max(k: usize) -> f64 {
    if k <= 1 {
        return 0.0;
    }
    let k = k as f64;
    2.0 * (k - 1.0) / (k * k)
}

/// `sqrt(MAD / MAD_max(K))`, clamped to `[0, 1]`.
pub fn mad_normalized(scores: &[f64]) -> Result<f64> {
    if scores.len() < 2 {
        return Err(Error::invalid(format!(
            "normalized MAD needs at least two scores, got {}",
            scores.len()
        )));
    }
    let ratio = mad_raw(scores)? / mad_max(scores.len());
    Ok(ratio.sqrt().clamp(0.0, 1.0))
}

/// Positional W1 between the scores, read as mass over counterfactual
/// positions `0..K`, and the uniform vector of equal total mass.
fn positional_w1_to_uniform(scores: &[f64]) -> f64 {
    let level = mean(scores);
    let floor = noise_floor(scores);
    let mut gap = 0.0;
    let mut total = 0.0;
    for s in &scores[..scores.len() - 1] {
        gap += s - level;
        total += denoise(gap, floor).abs();
    }
    total
}

/// The two variability measures that compete with normalized MAD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alternatives {
    pub wasserstein_to_uniform: VariabilityScore,
    pub stddev: VariabilityScore,
}

/// W1-to-uniform (normalized like MAD against the one-hot vector) and
/// population standard deviation.
pub fn variability_alternatives(scores: &[f64]) -> Result<Alternatives> {
    if scores.len() < 2 {
        return Err(Error::invalid("variability needs at least two scores"));
    }
    let k = scores.len();
    // one-hot at either end of the order is the most skewed unit-mass vector
    let max_w1 = (k - 1) as f64 / 2.0;
    let w = (positional_w1_to_uniform(scores) / max_w1).sqrt().clamp(0.0, 1.0);
    let m = mean(scores);
    let floor = noise_floor(scores);
    let var = scores.iter().map(|s| denoise(s - m, floor).powi(2)).sum::<f64>() / k as f64;
    Ok(Alternatives {
        wasserstein_to_uniform: VariabilityScore {
            kind: VariabilityKind::WassersteinToUniform,
            value: w,
        },
        stddev: VariabilityScore { kind: VariabilityKind::Stddev, value: var.sqrt() },
    })
}
