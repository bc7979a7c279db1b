//! Normalized bias of an attribute distribution against uniform and custom
//! ideals.

use biasengine::domain::{BiasAxis, CategoricalDistribution};
use biasengine::stats::{max_deviation, normalized_bias, wasserstein1_categorical};

fn main() -> biasengine::Result<()> {
    let age = BiasAxis::with_prefix_templates("age", &["young", "middle-aged", "old"])?;
    let observed = CategoricalDistribution::for_axis(&age, vec![30.0, 15.0, 3.0])?.normalize()?;
    let uniform = CategoricalDistribution::uniform(&age);
    let census = CategoricalDistribution::for_axis(&age, vec![0.3, 0.45, 0.25])?;

    for (name, ideal) in [("uniform", &uniform), ("census", &census)] {
        println!(
            "{name:>8}: W1 {:.4}  max {:.4}  normalized {:.4}",
            wasserstein1_categorical(&observed, ideal)?,
            max_deviation(ideal),
            normalized_bias(&observed, ideal)?
        );
    }

    // a point mass at either end is as biased as a distribution can be
    let worst = CategoricalDistribution::point_mass(&age, 2)?;
    println!("point mass on `old`: {:.4}", normalized_bias(&worst, &uniform)?);
    Ok(())
}
