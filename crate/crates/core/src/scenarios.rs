//! Bundled axis sets and synthetic models used by the demo, the examples and
//! the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{AxisSet, BiasAxis};
use crate::error::Result;
use crate::providers::{derive_seed, SyntheticModel, SyntheticProvider};

const OCCUPATION_AXES_JSON: &str = include_str!("../data/occupation_axes.json");

pub const OCCUPATIONS: [&str; 26] = [
    "computer programmer",
    "elementary school teacher",
    "librarian",
    "announcer",
    "pharmacist",
    "chef",
    "chemist",
    "police",
    "accountant",
    "architect",
    "lawyer",
    "philosopher",
    "scientist",
    "doctor",
    "nurse",
    "engineer",
    "musician",
    "journalist",
    "athlete",
    "social worker",
    "sales person",
    "politician",
    "farmer",
    "mechanic",
    "firefighter",
    "gardener",
];

/// Seed the occupation models are derived from unless a caller picks one.
pub const OCCUPATION_SEED: u64 = 2024;

/// The eight occupation axes (26 values) with their counterfactual templates.
pub fn occupation_axes() -> AxisSet {
    AxisSet::from_json(OCCUPATION_AXES_JSON).expect("bundled occupation axes are valid")
}

/// Skewed random distribution over `k` values with full support.
fn skewed(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>().powi(3) + 0.02).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Occupation joint as a small directed model: age and body type depend on
/// gender, clothing on environment, emotion on age; the rest are
/// independent. Each occupation gets its own conditional tables.
pub fn occupation_model(occupation: &str, seed: u64) -> Result<SyntheticModel> {
    let axes = occupation_axes();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[occupation]));
    let k = |name: &str| axes.get(name).expect("bundled axis").k();
    let gender = skewed(&mut rng, k("gender"));
    let age: Vec<Vec<f64>> = (0..k("gender")).map(|_| skewed(&mut rng, k("age"))).collect();
    let ethnicity = skewed(&mut rng, k("ethnicity"));
    let body: Vec<Vec<f64>> = (0..k("gender")).map(|_| skewed(&mut rng, k("bodytype"))).collect();
    let environment = skewed(&mut rng, k("environment"));
    let clothing: Vec<Vec<f64>> = (0..k("environment")).map(|_| skewed(&mut rng, k("clothing"))).collect();
    let emotion: Vec<Vec<f64>> = (0..k("age")).map(|_| skewed(&mut rng, k("emotion"))).collect();
    let disability = skewed(&mut rng, k("disability"));
    // index order follows the axis file: gender, age, ethnicity, bodytype,
    // environment, clothing, emotion, disability
    SyntheticModel::from_fn(axes.clone(), occupation, |i| {
        gender[i[0]]
            * age[i[0]][i[1]]
            * ethnicity[i[2]]
            * body[i[0]][i[3]]
            * environment[i[4]]
            * clothing[i[4]][i[5]]
            * emotion[i[1]][i[6]]
            * disability[i[7]]
    })
}

/// One model per bundled occupation.
pub fn occupation_provider(seed: u64) -> Result<SyntheticProvider> {
    SyntheticProvider::new(
        OCCUPATIONS
            .iter()
            .map(|o| occupation_model(o, seed))
            .collect::<Result<Vec<_>>>()?,
    )
}

fn axis(name: &str, values: &[&str]) -> BiasAxis {
    BiasAxis::with_prefix_templates(name, values).expect("scenario axes are valid")
}

/// gender, environment and clothing with the occupation templates.
pub fn coupled_axes() -> AxisSet {
    let all = occupation_axes();
    AxisSet::new(
        ["gender", "environment", "clothing"]
            .iter()
            .map(|n| all.get(n).expect("bundled axis").clone())
            .collect(),
    )
    .expect("subset of valid axes")
}

/// Priorities for [`coupled_model`]: gender, environment, clothing.
pub const COUPLED_PRIORITY: [f64; 3] = [0.5, 0.25, 0.25];

/// Mostly male, mostly indoors, and dressed formally whenever indoors.
///
/// Gender is independent of the other two, so mitigating it alone leaves
/// the environment and clothing bias; mitigating clothing then also
/// balances the environment.
pub fn coupled_model(prompt_key: &str) -> Result<SyntheticModel> {
    let gender = [0.95, 0.05];
    let environment = [0.9, 0.1];
    let formal_given_env = [1.0, 0.2];
    SyntheticModel::from_fn(coupled_axes(), prompt_key, |i| {
        let formal = formal_given_env[i[1]];
        gender[i[0]] * environment[i[1]] * if i[2] == 0 { formal } else { 1.0 - formal }
    })
}

pub fn adversarial_axes() -> AxisSet {
    AxisSet::new(vec![axis("gender", &["male", "female"]), axis("age", &["young", "old"])])
        .expect("scenario axes are valid")
}

/// Priorities for [`adversarial_model`]: gender, age.
pub const ADVERSARIAL_PRIORITY: [f64; 2] = [0.7, 0.3];

/// Men split evenly between young and old, women all old. Age looks almost
/// balanced until gender is balanced, which makes it skew old.
pub fn adversarial_model(prompt_key: &str) -> Result<SyntheticModel> {
    let weights = [[0.45, 0.45], [0.0, 0.1]];
    SyntheticModel::from_fn(adversarial_axes(), prompt_key, |i| weights[i[0]][i[1]])
}

/// Joint in which every axis is independent of the others. Marginal weights
/// are integers so exact-count generation reproduces them without rounding
/// when `n` is a multiple of the returned denominator.
pub fn independent_model(axes: AxisSet, marginals: &[Vec<u64>], prompt_key: &str) -> Result<(SyntheticModel, u64)> {
    let denominator: u64 = marginals.iter().map(|m| m.iter().sum::<u64>()).product();
    let model = SyntheticModel::from_fn(axes, prompt_key, |i| {
        i.iter().zip(marginals).map(|(&v, m)| m[v] as f64).product()
    })?;
    Ok((model, denominator))
}

/// A uniform joint: every axis already balanced.
pub fn fair_model(axes: AxisSet, prompt_key: &str) -> Result<SyntheticModel> {
    SyntheticModel::from_fn(axes, prompt_key, |_| 1.0)
}

/// Joint over gender, environment and clothing whose tuple counts out of 48
/// make every conditional split of a 48-image budget integral, both for a
/// full counterfactual set and for one prompt-modification cell.
pub fn consistency_model(prompt_key: &str) -> Result<SyntheticModel> {
    let counts = [0.0, 0.0, 3.0, 9.0, 21.0, 3.0, 12.0, 0.0];
    SyntheticModel::from_fn(coupled_axes(), prompt_key, |i| counts[i[0] * 4 + i[1] * 2 + i[2]] / 48.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PromptSpec;
    use crate::providers::template_counterfactuals;

    #[test]
    fn occupation_axes_match_the_dataset() {
        let axes = occupation_axes();
        assert_eq!(axes.len(), 8);
        let values: usize = axes.axes().iter().map(|a| a.k()).sum();
        assert_eq!(values, 26);
        let cfs = template_counterfactuals(PromptSpec::new("chef", &axes).unwrap()).unwrap();
        assert_eq!(cfs.iter().map(|c| c.prompts.len()).sum::<usize>(), 26);
        assert_eq!(cfs[0].prompts[0].1, "A photo of a male chef");
        assert_eq!(cfs[6].prompts[1].1, "A photo of a sad chef who is sad");
    }

    #[test]
    fn occupation_models_differ_and_are_reproducible() {
        let a = occupation_model("chef", OCCUPATION_SEED).unwrap();
        let b = occupation_model("chef", OCCUPATION_SEED).unwrap();
        let c = occupation_model("nurse", OCCUPATION_SEED).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.joint()[0].p, c.joint()[0].p);
        assert_eq!(a.joint().len(), 2 * 3 * 6 * 3 * 2 * 2 * 4 * 4);
    }

    #[test]
    fn scenario_models_build() {
        coupled_model("nurse").unwrap();
        adversarial_model("nurse").unwrap();
        consistency_model("nurse").unwrap();
        let (_, d) = independent_model(coupled_axes(), &[vec![3, 1], vec![1, 1], vec![1, 2]], "x").unwrap();
        assert_eq!(d, 24);
    }
}
