//! Per-prompt concept-level bias: CAS of each counterfactual against the
//! initial set, and the variability of those scores per axis.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::concepts::{cas, concept_set_from_annotations, ConceptSet, SynonymTable};
use crate::connect::PromptData;
use crate::domain::{AxisSet, BiasAxis};
use crate::error::Result;
use crate::stats::{mad_normalized, variability_alternatives, Alternatives};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueCas {
    pub value: String,
    pub cas: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisEvaluation {
    pub axis: String,
    pub cas: Vec<ValueCas>,
    pub mad: f64,
    pub alternatives: Alternatives,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptEvaluation {
    pub prompt: String,
    pub axes: Vec<AxisEvaluation>,
    /// Axes with fewer than two values, which carry no variability.
    pub skipped_axes: Vec<String>,
}

/// Concept sets come from the attribute answers recorded on each image.
pub fn evaluate_prompt(
    data: &PromptData,
    axes: &AxisSet,
    synonyms: &SynonymTable,
    stopwords: &HashSet<String>,
) -> Result<PromptEvaluation> {
    let initial = concept_set_from_annotations(&data.initial, axes, stopwords)?;
    let mut evaluated = Vec::new();
    let mut skipped = Vec::new();
    for axis in axes.axes() {
        if axis.is_inert() {
            skipped.push(axis.name.clone());
            continue;
        }
        evaluated.push(evaluate_axis(data, axis, axes, &initial, synonyms, stopwords)?);
    }
    Ok(PromptEvaluation { prompt: data.prompt.clone(), axes: evaluated, skipped_axes: skipped })
}

fn evaluate_axis(
    data: &PromptData,
    axis: &BiasAxis,
    axes: &AxisSet,
    initial: &ConceptSet,
    synonyms: &SynonymTable,
    stopwords: &HashSet<String>,
) -> Result<AxisEvaluation> {
    let cfs = data.cf_sets(axis)?;
    let scores = cfs
        .iter()
        .zip(&axis.values)
        .map(|(set, value)| {
            let concepts = concept_set_from_annotations(set, axes, stopwords)?;
            Ok(ValueCas { value: value.clone(), cas: cas(initial, &concepts, synonyms) })
        })
        .collect::<Result<Vec<_>>>()?;
    let raw: Vec<f64> = scores.iter().map(|s| s.cas).collect();
    Ok(AxisEvaluation {
        axis: axis.name.clone(),
        mad: mad_normalized(&raw)?,
        alternatives: variability_alternatives(&raw)?,
        cas: scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concepts::default_stopwords;
    use crate::domain::{AnnotatedImageSet, ImageAnnotation, Intervention};

    #[test]
    fn identical_counterfactuals_have_zero_mad() {
        let axes = AxisSet::new(vec![BiasAxis::with_prefix_templates("gender", &["male", "female"]).unwrap()]).unwrap();
        let images = vec![ImageAnnotation::from_pairs([("gender", "male")]); 4];
        let mk = |v: Option<&str>| {
            AnnotatedImageSet::new("chef", v.map(|v| Intervention::new("gender", v)), images.clone())
        };
        let data = PromptData::new("chef", mk(None), vec![mk(Some("male")), mk(Some("female"))]).unwrap();
        let e = evaluate_prompt(&data, &axes, &SynonymTable::empty(), &default_stopwords()).unwrap();
        assert_eq!(e.axes[0].mad, 0.0);
        assert_eq!(e.axes[0].cas[0].cas, 1.0);
    }
}
