//! The state a prompt is generated under: a set of prompt cells, each making
//! some attribute values explicit, with an image allocation per cell.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apportion::even_split;
use crate::domain::{AnnotatedImageSet, AxisSet, BiasAxis, Intervention};
use crate::error::{Error, Result};
use crate::providers::{compose_for, derive_seed, GenerationMode, GenerationRequest, ImageSetProvider};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCell {
    pub prompt: String,
    pub constraints: Vec<Intervention>,
    pub count: u64,
}

/// Prompt cells with their image allocations.
///
/// Built by prompt modification, the cells are the Cartesian product of the
/// mitigated axes' values and the budget is split as evenly as possible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationPlan {
    pub base_prompt: String,
    pub mitigated_axes: Vec<String>,
    pub cells: Vec<PlanCell>,
    /// Set when there are more cells than images, so some cells get none.
    pub underfunded: bool,
}

impl GenerationPlan {
    /// The base prompt alone with the whole budget.
    pub fn unmitigated(base_prompt: &str, budget: u64) -> Result<Self> {
        if budget == 0 {
            return Err(Error::invalid("image budget must be at least 1"));
        }
        Ok(GenerationPlan {
            base_prompt: base_prompt.to_string(),
            mitigated_axes: Vec::new(),
            cells: vec![PlanCell { prompt: base_prompt.to_string(), constraints: Vec::new(), count: budget }],
            underfunded: false,
        })
    }

    /// Cartesian product of the axes' values, in mitigation order, with
    /// `budget` apportioned evenly over the cells.
    pub fn prompt_modification(base_prompt: &str, axes: &[&BiasAxis], budget: u64) -> Result<Self> {
        if budget == 0 {
            return Err(Error::invalid("image budget must be at least 1"));
        }
        let mut combos: Vec<Vec<Intervention>> = vec![Vec::new()];
        for axis in axes {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |v| {
                        let mut next = prefix.clone();
                        next.push(Intervention::new(&axis.name, v));
                        next
                    })
                })
                .collect();
        }
        let counts = even_split(budget, combos.len())?;
        let cells = combos
            .into_iter()
            .zip(counts)
            .map(|(constraints, count)| {
                let resolved: Vec<(&BiasAxis, &str)> = constraints
                    .iter()
                    .zip(axes)
                    .map(|(c, a)| (*a, c.value.as_str()))
                    .collect();
                Ok(PlanCell {
                    prompt: crate::providers::compose_prompt(base_prompt, &resolved)?,
                    constraints,
                    count,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let underfunded = cells.len() as u64 > budget;
        if underfunded {
            log::warn!(
                "{} prompt cells exceed the budget of {budget} images; some cells receive none",
                cells.len()
            );
        }
        Ok(GenerationPlan {
            base_prompt: base_prompt.to_string(),
            mitigated_axes: axes.iter().map(|a| a.name.clone()).collect(),
            cells,
            underfunded,
        })
    }

    pub fn budget(&self) -> u64 {
        self.cells.iter().map(|c| c.count).sum()
    }

    /// Same allocations with `forced` made explicit in every cell, replacing
    /// any existing constraint on that axis.
    pub fn with_forced(&self, forced: &Intervention, axes: &AxisSet) -> Result<Self> {
        let cells = self
            .cells
            .iter()
            .map(|cell| {
                let mut constraints = cell.constraints.clone();
                match constraints.iter_mut().find(|c| c.axis == forced.axis) {
                    Some(c) => c.value = forced.value.clone(),
                    None => constraints.push(forced.clone()),
                }
                Ok(PlanCell {
                    prompt: compose_for(&self.base_prompt, axes, &constraints)?,
                    constraints,
                    count: cell.count,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GenerationPlan { cells, ..self.clone() })
    }

    /// Generates every funded cell and concatenates the results in cell order.
    pub fn generate(
        &self,
        provider: &dyn ImageSetProvider,
        mode: GenerationMode,
        label: Option<Intervention>,
    ) -> Result<AnnotatedImageSet> {
        let parts = self
            .cells
            .par_iter()
            .enumerate()
            .filter(|(_, c)| c.count > 0)
            .map(|(i, cell)| {
                let request = GenerationRequest::new(
                    cell.prompt.clone(),
                    self.base_prompt.clone(),
                    cell.constraints.clone(),
                    cell.count as usize,
                    mode,
                )?
                .with_derived_seed(mode);
                let request = match request.mode {
                    GenerationMode::Sampled { seed } => GenerationRequest {
                        mode: GenerationMode::Sampled { seed: derive_seed(seed, &[i.to_string()]) },
                        ..request
                    },
                    GenerationMode::ExactCounts => request,
                };
                provider.generate(&request)
            })
            .collect::<Result<Vec<_>>>()?;
        let prompt = match self.cells.as_slice() {
            [only] => only.prompt.clone(),
            _ => self.base_prompt.clone(),
        };
        let mut set = AnnotatedImageSet::concat(prompt, parts);
        set.intervention = label;
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis(name: &str, values: &[&str]) -> BiasAxis {
        BiasAxis::with_prefix_templates(name, values).unwrap()
    }

    #[test]
    fn pm_plan_counts() {
        let g = axis("gender", &["male", "female"]);
        let e = axis("environment", &["indoors", "outdoors"]);
        let a = axis("age", &["old", "middle-aged", "young"]);
        let one = GenerationPlan::prompt_modification("chef", &[&g], 48).unwrap();
        assert_eq!(one.cells.iter().map(|c| c.count).collect::<Vec<_>>(), vec![24, 24]);
        assert_eq!(one.cells[0].prompt, "A photo of a male chef");
        let two = GenerationPlan::prompt_modification("chef", &[&g, &e], 48).unwrap();
        assert_eq!(two.cells.iter().map(|c| c.count).collect::<Vec<_>>(), vec![12; 4]);
        let six = GenerationPlan::prompt_modification("chef", &[&g, &a], 48).unwrap();
        assert_eq!(six.cells.iter().map(|c| c.count).collect::<Vec<_>>(), vec![8; 6]);
        assert!(!six.underfunded);
        let tight = GenerationPlan::prompt_modification("chef", &[&g, &a], 5).unwrap();
        assert!(tight.underfunded);
        assert_eq!(tight.budget(), 5);
    }

    #[test]
    fn forcing_replaces_or_appends() {
        let g = axis("gender", &["male", "female"]);
        let e = axis("environment", &["indoors", "outdoors"]);
        let axes = AxisSet::new(vec![g.clone(), e.clone()]).unwrap();
        let plan = GenerationPlan::prompt_modification("chef", &[&g], 48).unwrap();
        let forced = plan.with_forced(&Intervention::new("gender", "female"), &axes).unwrap();
        assert!(forced.cells.iter().all(|c| c.constraints == vec![Intervention::new("gender", "female")]));
        let appended = plan.with_forced(&Intervention::new("environment", "indoors"), &axes).unwrap();
        assert_eq!(appended.cells[1].constraints.len(), 2);
        assert_eq!(appended.cells[1].prompt, "A photo of an indoors female chef");
        assert_eq!(appended.budget(), 48);
    }
}
