//! Intersectional Sensitivity: how making one axis's values equally
//! represented moves the bias measured on another axis.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    count_values, sum_distributions, AnnotatedImageSet, AxisSet, BiasAxis, CategoricalDistribution,
    Intervention, PromptSpec,
};
use crate::error::{Error, MissingSet, Result};
use crate::plan::GenerationPlan;
use crate::providers::{render_template, GenerationMode, ImageSetProvider};
use crate::stats::normalized_bias;

/// Target distribution per axis; axes without an override use uniform.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ideals {
    overrides: BTreeMap<String, CategoricalDistribution>,
}

impl Ideals {
    pub fn uniform() -> Self {
        Ideals::default()
    }

    /// Validates raw per-axis weights against `axes` and normalizes them.
    pub fn from_weights(axes: &AxisSet, raw: &BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let mut overrides = BTreeMap::new();
        for (name, weights) in raw {
            let axis = axes.require(name)?;
            let d = CategoricalDistribution::for_axis(axis, weights.clone())
                .and_then(|d| d.normalize())
                .map_err(|e| Error::config(format!("ideal for `{name}`: {e}")))?;
            overrides.insert(name.clone(), d);
        }
        Ok(Ideals { overrides })
    }

    pub fn set(&mut self, ideal: CategoricalDistribution) {
        self.overrides.insert(ideal.axis().to_string(), ideal);
    }

    pub fn get(&self, axis: &BiasAxis) -> CategoricalDistribution {
        self.overrides
            .get(&axis.name)
            .cloned()
            .unwrap_or_else(|| CategoricalDistribution::uniform(axis))
    }

    pub fn weights_for(&self, axes: &[&BiasAxis]) -> BTreeMap<String, Vec<f64>> {
        axes.iter().map(|a| (a.name.clone(), self.get(a).weights().to_vec())).collect()
    }
}

/// The initial image set for a prompt and its counterfactual sets, keyed by
/// the intervention that produced each.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptData {
    pub prompt: String,
    pub initial: AnnotatedImageSet,
    pub counterfactuals: BTreeMap<Intervention, AnnotatedImageSet>,
}

impl PromptData {
    pub fn new(
        prompt: impl Into<String>,
        initial: AnnotatedImageSet,
        counterfactuals: Vec<AnnotatedImageSet>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for set in counterfactuals {
            let key = set.intervention.clone().ok_or_else(|| {
                Error::invalid(format!("counterfactual set for `{}` has no intervention", set.prompt))
            })?;
            if map.insert(key.clone(), set).is_some() {
                return Err(Error::invalid(format!(
                    "two counterfactual sets for {}={}",
                    key.axis, key.value
                )));
            }
        }
        Ok(PromptData { prompt: prompt.into(), initial, counterfactuals: map })
    }

    /// Every `(axis, value)` among `axes` lacking a counterfactual set.
    pub fn missing(&self, axes: &[&BiasAxis]) -> Vec<MissingSet> {
        axes.iter()
            .flat_map(|a| a.values.iter().map(move |v| (a, v)))
            .filter(|(a, v)| !self.counterfactuals.contains_key(&Intervention::new(&a.name, *v)))
            .map(|(a, v)| MissingSet { axis: a.name.clone(), value: v.clone() })
            .collect()
    }

    pub fn check_coverage(&self, axes: &[&BiasAxis]) -> Result<()> {
        let missing = self.missing(axes);
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingCoverage(missing))
        }
    }

    /// Counterfactual sets for `axis` in value order.
    pub fn cf_sets(&self, axis: &BiasAxis) -> Result<Vec<&AnnotatedImageSet>> {
        self.check_coverage(&[axis])?;
        Ok(axis
            .values
            .iter()
            .map(|v| &self.counterfactuals[&Intervention::new(&axis.name, v)])
            .collect())
    }

    /// Groups recorded sets by base prompt.
    ///
    /// A counterfactual belongs to base prompt `P` when its prompt is `P`
    /// itself or its axis template rendered with `P`.
    pub fn group_corpus(sets: &[AnnotatedImageSet], axes: &AxisSet) -> Result<Vec<PromptData>> {
        let mut out = Vec::new();
        for initial in sets.iter().filter(|s| s.intervention.is_none()) {
            if out.iter().any(|d: &PromptData| d.prompt == initial.prompt) {
                return Err(Error::invalid(format!("two unintervened sets for `{}`", initial.prompt)));
            }
            let base = &initial.prompt;
            let mut cfs = Vec::new();
            for set in sets {
                let Some(iv) = &set.intervention else { continue };
                let axis = axes.require(&iv.axis)?;
                let template = axis.template_for(&iv.value).ok_or_else(|| {
                    Error::invalid(format!("`{}` is not a value of `{}`", iv.value, iv.axis))
                })?;
                if &set.prompt == base || set.prompt == render_template(template, base)? {
                    cfs.push(set.clone());
                }
            }
            out.push(PromptData::new(base.clone(), initial.clone(), cfs)?);
        }
        Ok(out)
    }
}

/// Generates the initial set and one counterfactual set per axis value,
/// starting from `plan` (the unmitigated plan for a fresh audit).
pub fn collect_prompt_data(
    provider: &dyn ImageSetProvider,
    prompt: PromptSpec<'_>,
    plan: &GenerationPlan,
    mode: GenerationMode,
) -> Result<PromptData> {
    let initial = plan.generate(provider, mode, None)?;
    let targets: Vec<Intervention> = prompt
        .axes
        .axes()
        .iter()
        .flat_map(|a| a.values.iter().map(move |v| Intervention::new(&a.name, v)))
        .collect();
    let cfs = targets
        .into_par_iter()
        .map(|iv| plan.with_forced(&iv, prompt.axes)?.generate(provider, mode, Some(iv)))
        .collect::<Result<Vec<_>>>()?;
    PromptData::new(prompt.text, initial, cfs)
}

/// Normalized attribute distribution with unknown answers dropped.
fn usable_distribution(set: &AnnotatedImageSet, axis: &BiasAxis) -> Result<(CategoricalDistribution, u64)> {
    let (counts, _) = count_values(set, axis);
    let usable: u64 = counts.iter().sum();
    let d = CategoricalDistribution::for_axis(axis, counts.into_iter().map(|c| c as f64).collect())?;
    if usable == 0 {
        return Err(Error::EmptyDistribution(axis.name.clone()));
    }
    Ok((d, usable))
}

/// Normalized initial distribution on `axis` and its normalized bias.
pub fn initial_bias(
    init_set: &AnnotatedImageSet,
    axis: &BiasAxis,
    ideal: &CategoricalDistribution,
) -> Result<(CategoricalDistribution, f64)> {
    let d = usable_distribution(init_set, axis)?.0.normalize()?;
    let w = normalized_bias(&d, ideal)?;
    Ok((d, w))
}

/// Distribution on `target` when every counterfactual of the source axis is
/// equally represented.
///
/// Equal usable sizes sum raw counts; otherwise each set is normalized first
/// so a larger set does not outweigh the others.
pub fn intervention_distribution(
    cf_sets: &[&AnnotatedImageSet],
    target: &BiasAxis,
) -> Result<CategoricalDistribution> {
    if cf_sets.is_empty() {
        return Err(Error::invalid("no counterfactual sets supplied"));
    }
    let parts = cf_sets
        .iter()
        .map(|s| usable_distribution(s, target))
        .collect::<Result<Vec<_>>>()?;
    let equal = parts.windows(2).all(|w| w[0].1 == w[1].1);
    let ds = if equal {
        parts.into_iter().map(|(d, _)| d).collect::<Vec<_>>()
    } else {
        parts
            .into_iter()
            .map(|(d, _)| d.normalize())
            .collect::<Result<Vec<_>>>()?
    };
    sum_distributions(&ds)?.normalize()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionResult {
    pub source_axis: String,
    pub target_axis: String,
    pub d_init: CategoricalDistribution,
    pub d_intervened: CategoricalDistribution,
    pub w_init: f64,
    pub w_intervened: f64,
    pub is_value: f64,
}

/// `w̄_init − w̄_intervened` on `target` for an intervention on `source`.
/// Positive means equalizing `source` reduces the bias on `target`.
pub fn intersectional_sensitivity(
    init_set: &AnnotatedImageSet,
    cf_sets: &[&AnnotatedImageSet],
    source: &BiasAxis,
    target: &BiasAxis,
    ideal: &CategoricalDistribution,
) -> Result<InterventionResult> {
    if cf_sets.len() != source.k() {
        return Err(Error::invalid(format!(
            "axis `{}` has {} values but {} counterfactual sets were given",
            source.name,
            source.k(),
            cf_sets.len()
        )));
    }
    let (d_init, w_init) = initial_bias(init_set, target, ideal)?;
    let d_intervened = intervention_distribution(cf_sets, target)?;
    let w_intervened = normalized_bias(&d_intervened, ideal)?;
    Ok(InterventionResult {
        source_axis: source.name.clone(),
        target_axis: target.name.clone(),
        d_init,
        d_intervened,
        w_init,
        w_intervened,
        is_value: w_init - w_intervened,
    })
}

/// IS for every (intervened row, measured column) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionalityMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub ideals: BTreeMap<String, Vec<f64>>,
}

impl IntersectionalityMatrix {
    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        let i = self.rows.iter().position(|r| r == row)?;
        let j = self.cols.iter().position(|c| c == col)?;
        Some(self.values[i][j])
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Fixed-width text rendering for terminals and logs.
    pub fn to_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .chain(&self.cols)
            .map(|s| s.len())
            .max()
            .unwrap_or(0)
            .max(7);
        let mut out = format!("{:width$}", "");
        for c in &self.cols {
            out.push_str(&format!(" {c:>width$}"));
        }
        out.push('\n');
        for (r, row) in self.rows.iter().zip(&self.values) {
            out.push_str(&format!("{r:width$}"));
            for v in row {
                out.push_str(&format!(" {v:>width$.3}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the matrix with rows in `axes` order and columns in `measured`
/// order; every row axis needs full counterfactual coverage.
pub fn build_matrix(
    data: &PromptData,
    axes: &AxisSet,
    measured: &[&BiasAxis],
    ideals: &Ideals,
) -> Result<IntersectionalityMatrix> {
    let rows: Vec<&BiasAxis> = axes.axes().iter().collect();
    data.check_coverage(&rows)?;
    let values = rows
        .par_iter()
        .map(|source| {
            let cfs = data.cf_sets(source)?;
            measured
                .iter()
                .map(|target| {
                    Ok(intersectional_sensitivity(&data.initial, &cfs, source, target, &ideals.get(target))?
                        .is_value)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IntersectionalityMatrix {
        rows: rows.iter().map(|a| a.name.clone()).collect(),
        cols: measured.iter().map(|a| a.name.clone()).collect(),
        values,
        ideals: ideals.weights_for(measured),
    })
}

/// Normalized bias of the initial set on each axis, in the given order.
pub fn initial_biases(data: &PromptData, axes: &[&BiasAxis], ideals: &Ideals) -> Result<Vec<f64>> {
    axes.iter()
        .map(|a| Ok(initial_bias(&data.initial, a, &ideals.get(a))?.1))
        .collect()
}

/// Sum of absolute off-diagonal entries of a square matrix.
pub fn aggregate_entanglement(m: &IntersectionalityMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::invalid("entanglement needs the full square matrix"));
    }
    Ok(m.values
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().filter(move |(j, _)| *j != i).map(|(_, v)| v.abs()))
        .sum())
}
