//! Priority-weighted greedy mitigation.
//!
//! Each step measures the priority-weighted bias τ over the selected axes,
//! scores every axis by how well its sensitivity row aligns with the
//! priorities, and mitigates the best-aligned axis not yet mitigated by
//! adding its counterfactual values to the prompt plan.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::connect::{build_matrix, collect_prompt_data, initial_bias, Ideals, IntersectionalityMatrix};
use crate::domain::{AnnotatedImageSet, AxisSet, BiasAxis, PromptSpec};
use crate::error::{Error, Result};
use crate::plan::GenerationPlan;
use crate::providers::{GenerationMode, ImageSetProvider};
use crate::stats::pearson;

pub const DEFAULT_EPSILON: f64 = 0.35;
pub const DEFAULT_WORSEN_DELTA: f64 = 0.05;
const PRIORITY_TOLERANCE: f64 = 1e-9;

/// Non-negative weights over the selected axes with unit L1 norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityVector {
    entries: Vec<(String, f64)>,
}

impl PriorityVector {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::config("priority vector is empty"));
        }
        let mut seen = std::collections::HashSet::new();
        for (axis, w) in &entries {
            if !seen.insert(axis.as_str()) {
                return Err(Error::config(format!("priority lists `{axis}` twice")));
            }
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::config(format!("priority for `{axis}` is {w}")));
            }
        }
        let norm: f64 = entries.iter().map(|(_, w)| w).sum();
        if (norm - 1.0).abs() > PRIORITY_TOLERANCE {
            return Err(Error::config(format!("priority weights sum to {norm}, not 1")));
        }
        Ok(PriorityVector { entries })
    }

    /// Equal weight on every axis.
    pub fn equal(axes: &[&BiasAxis]) -> Result<Self> {
        let w = 1.0 / axes.len().max(1) as f64;
        let mut entries: Vec<(String, f64)> = axes.iter().map(|a| (a.name.clone(), w)).collect();
        // keep the L1 norm at exactly 1 despite rounding
        if let Some(last) = entries.last_mut() {
            last.1 = 1.0 - w * (axes.len() - 1) as f64;
        }
        Self::new(entries)
    }

    /// Weights for `order`, looked up by name; every axis must be present.
    pub fn from_map(order: &[String], weights: &BTreeMap<String, f64>) -> Result<Self> {
        if let Some(extra) = weights.keys().find(|k| !order.contains(k)) {
            return Err(Error::config(format!("priority names `{extra}`, which is not a selected axis")));
        }
        let entries = order
            .iter()
            .map(|a| {
                weights
                    .get(a)
                    .map(|w| (a.clone(), *w))
                    .ok_or_else(|| Error::config(format!("no priority given for `{a}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn axes(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(a, _)| a.as_str())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, w)| *w).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `⟨w̄, p⟩` with `w_bar` in the priority vector's axis order.
pub fn tau(w_bar: &[f64], p: &PriorityVector) -> Result<f64> {
    if w_bar.len() != p.len() {
        return Err(Error::invalid(format!("{} bias values for {} priorities", w_bar.len(), p.len())));
    }
    let t: f64 = w_bar.iter().zip(p.weights()).map(|(w, q)| w * q).sum();
    Ok(t.clamp(0.0, 1.0))
}

/// `γ_i = ⟨s'_i, p⟩` for every row of the sensitivity submatrix.
pub fn gamma_scores(s_prime: &IntersectionalityMatrix, p: &PriorityVector) -> Result<Vec<f64>> {
    if !s_prime.cols.iter().map(String::as_str).eq(p.axes()) {
        return Err(Error::invalid(format!(
            "matrix columns {:?} do not match priority axes {:?}",
            s_prime.cols,
            p.axes().collect::<Vec<_>>()
        )));
    }
    let weights = p.weights();
    Ok(s_prime
        .values
        .iter()
        .map(|row| row.iter().zip(&weights).map(|(s, q)| s * q).sum())
        .collect())
}

/// Index of the largest γ among axes not yet mitigated; the lowest index
/// wins ties. `None` once every axis is mitigated.
pub fn select_axis(gammas: &[f64], mitigated: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, g) in gammas.iter().enumerate() {
        if mitigated.get(i).copied().unwrap_or(false) {
            continue;
        }
        if best.is_none_or(|b| *g > gammas[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct MitigationConfig {
    pub epsilon: f64,
    /// Defaults to the number of axes.
    pub max_steps: Option<usize>,
    pub worsen_delta: f64,
    pub ideals: Ideals,
    pub budget: u64,
    pub mode: GenerationMode,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        MitigationConfig {
            epsilon: DEFAULT_EPSILON,
            max_steps: None,
            worsen_delta: DEFAULT_WORSEN_DELTA,
            ideals: Ideals::uniform(),
            budget: 48,
            mode: GenerationMode::ExactCounts,
        }
    }
}

impl MitigationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::config(format!("epsilon must lie in (0, 1], got {}", self.epsilon)));
        }
        if self.max_steps == Some(0) {
            return Err(Error::config("max_steps must be at least 1"));
        }
        if !(self.worsen_delta >= 0.0) {
            return Err(Error::config("worsen_delta must be non-negative"));
        }
        if self.budget == 0 {
            return Err(Error::config("image budget must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisScore {
    pub axis: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorsenAlert {
    pub axis: String,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationStep {
    pub selected_axis: String,
    /// Empty when a single selected axis makes the choice trivial.
    pub gamma_scores: Vec<AxisScore>,
    pub tau_before: f64,
    pub tau_after: f64,
    pub w_before: Vec<AxisScore>,
    pub w_after: Vec<AxisScore>,
    pub alerts: Vec<WorsenAlert>,
    pub prompts: usize,
    pub underfunded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    Exhausted,
    MaxSteps,
    ProviderError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationTrace {
    pub prompt: String,
    pub b_star: Vec<String>,
    pub priority: PriorityVector,
    pub epsilon: f64,
    pub steps: Vec<MitigationStep>,
    pub mitigated_axes: Vec<String>,
    pub initial_tau: f64,
    pub final_tau: f64,
    pub mit_amt: f64,
    pub mit_steps_ratio: f64,
    pub termination: Termination,
    pub error: Option<String>,
}

fn biases(set: &AnnotatedImageSet, axes: &[&BiasAxis], ideals: &Ideals) -> Result<Vec<AxisScore>> {
    axes.iter()
        .map(|a| {
            Ok(AxisScore { axis: a.name.clone(), value: initial_bias(set, a, &ideals.get(a))?.1 })
        })
        .collect()
}

fn tau_of(scores: &[AxisScore], b_star: &[&BiasAxis], p: &PriorityVector) -> Result<f64> {
    let w: Vec<f64> = b_star
        .iter()
        .map(|a| scores.iter().find(|s| s.axis == a.name).map(|s| s.value).unwrap_or(0.0))
        .collect();
    tau(&w, p)
}

struct StepOutcome {
    step: MitigationStep,
    plan: GenerationPlan,
    scores: Vec<AxisScore>,
}

/// Runs the loop for one prompt. Provider failures after the initial
/// measurement end the run with a partial trace.
pub fn intermit_run(
    provider: &dyn ImageSetProvider,
    prompt: PromptSpec<'_>,
    b_star: &[String],
    priority: &PriorityVector,
    cfg: &MitigationConfig,
) -> Result<MitigationTrace> {
    cfg.validate()?;
    let axes = prompt.axes;
    let selected = axes.subset(b_star)?;
    if selected.is_empty() {
        return Err(Error::config("at least one axis must be selected"));
    }
    if !priority.axes().eq(b_star.iter().map(String::as_str)) {
        return Err(Error::config("priority axes must match the selected axes in order"));
    }
    let all: Vec<&BiasAxis> = axes.axes().iter().collect();
    let measured: Vec<&BiasAxis> = all.iter().copied().filter(|a| !a.is_inert()).collect();
    let max_steps = cfg.max_steps.unwrap_or(axes.len());

    let mut plan = GenerationPlan::unmitigated(prompt.text, cfg.budget)?;
    let current = plan.generate(provider, cfg.mode, None)?;
    let mut scores = biases(&current, &measured, &cfg.ideals)?;
    let initial_tau = tau_of(&scores, &selected, priority)?;
    let mut current_tau = initial_tau;
    let mut mitigated = vec![false; all.len()];
    let mut steps = Vec::new();
    let mut error = None;

    let termination = loop {
        if current_tau < cfg.epsilon {
            break Termination::Converged;
        }
        if steps.len() >= max_steps {
            break Termination::MaxSteps;
        }
        let outcome = mitigation_step(
            provider, prompt, &selected, priority, cfg, &plan, &scores, current_tau, &mut mitigated,
        );
        match outcome {
            Ok(Some(o)) => {
                current_tau = o.step.tau_after;
                steps.push(o.step);
                plan = o.plan;
                scores = o.scores;
            }
            Ok(None) => break Termination::Exhausted,
            Err(Error::Provider(e)) => {
                log::error!("provider failed during mitigation of `{}`: {e}", prompt.text);
                error = Some(e.to_string());
                break Termination::ProviderError;
            }
            Err(e) => return Err(e),
        }
    };
    let mitigated_axes = plan.mitigated_axes.clone();
    Ok(MitigationTrace {
        prompt: prompt.text.to_string(),
        b_star: b_star.to_vec(),
        priority: priority.clone(),
        epsilon: cfg.epsilon,
        mit_steps_ratio: mitigated_axes.len() as f64 / b_star.len() as f64,
        mitigated_axes,
        steps,
        initial_tau,
        final_tau: current_tau,
        mit_amt: current_tau,
        termination,
        error,
    })
}

#[allow(clippy::too_many_arguments)]
fn mitigation_step(
    provider: &dyn ImageSetProvider,
    prompt: PromptSpec<'_>,
    selected: &[&BiasAxis],
    priority: &PriorityVector,
    cfg: &MitigationConfig,
    plan: &GenerationPlan,
    scores: &[AxisScore],
    tau_before: f64,
    mitigated: &mut [bool],
) -> Result<Option<StepOutcome>> {
    let axes = prompt.axes;
    let (choice, gamma_scores) = if selected.len() == 1 {
        let idx = axes.position(&selected[0].name).expect("selected axes come from the set");
        ((!mitigated[idx]).then_some(idx), Vec::new())
    } else {
        let data = collect_prompt_data(provider, prompt, plan, cfg.mode)?;
        let s_prime = build_matrix(&data, axes, selected, &cfg.ideals)?;
        let gammas = gamma_scores(&s_prime, priority)?;
        let named = axes
            .names()
            .zip(&gammas)
            .map(|(a, g)| AxisScore { axis: a.to_string(), value: *g })
            .collect();
        (select_axis(&gammas, mitigated), named)
    };
    let Some(idx) = choice else { return Ok(None) };
    mitigated[idx] = true;
    let chosen = &axes.axes()[idx];

    let mut order: Vec<&BiasAxis> = plan.mitigated_axes.iter().map(|n| axes.require(n)).collect::<Result<_>>()?;
    order.push(chosen);
    let next_plan = GenerationPlan::prompt_modification(prompt.text, &order, cfg.budget)?;
    let set = next_plan.generate(provider, cfg.mode, None)?;
    let measured: Vec<&BiasAxis> = axes.axes().iter().filter(|a| !a.is_inert()).collect();
    let after = biases(&set, &measured, &cfg.ideals)?;
    let tau_after = tau_of(&after, selected, priority)?;
    let alerts = scores
        .iter()
        .zip(&after)
        .filter(|(b, a)| a.value - b.value > cfg.worsen_delta)
        .map(|(b, a)| WorsenAlert { axis: b.axis.clone(), before: b.value, after: a.value })
        .collect::<Vec<_>>();
    for alert in &alerts {
        log::warn!(
            "mitigating `{}` raised bias on `{}` from {:.3} to {:.3}",
            chosen.name,
            alert.axis,
            alert.before,
            alert.after
        );
    }
    Ok(Some(StepOutcome {
        step: MitigationStep {
            selected_axis: chosen.name.clone(),
            gamma_scores,
            tau_before,
            tau_after,
            w_before: scores.to_vec(),
            w_after: after.clone(),
            alerts,
            prompts: next_plan.cells.len(),
            underfunded: next_plan.underfunded,
        },
        plan: next_plan,
        scores: after,
    }))
}

/// MitAmt (mean final τ) and MitSteps (mean fraction of selected axes
/// mitigated) over one or more traces.
pub fn mitigation_metrics(traces: &[MitigationTrace]) -> Result<(f64, f64)> {
    if traces.is_empty() {
        return Err(Error::invalid("no traces to summarize"));
    }
    let n = traces.len() as f64;
    Ok((
        traces.iter().map(|t| t.final_tau).sum::<f64>() / n,
        traces.iter().map(|t| t.mit_steps_ratio).sum::<f64>() / n,
    ))
}

/// Estimated and realized sensitivity for one ordered axis pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateCheck {
    pub source: String,
    pub target: String,
    pub estimated: f64,
    pub realized: f64,
}

/// For every ordered pair of distinct measurable axes, compares the
/// counterfactual IS estimate with the change actually produced by
/// prompt-modification mitigation of the source axis.
pub fn estimate_checks(
    provider: &dyn ImageSetProvider,
    prompt: PromptSpec<'_>,
    ideals: &Ideals,
    budget: u64,
    mode: GenerationMode,
) -> Result<Vec<EstimateCheck>> {
    let axes: &AxisSet = prompt.axes;
    let plan = GenerationPlan::unmitigated(prompt.text, budget)?;
    let data = collect_prompt_data(provider, prompt, &plan, mode)?;
    let measured: Vec<&BiasAxis> = axes.axes().iter().filter(|a| !a.is_inert()).collect();
    let matrix = build_matrix(&data, axes, &measured, ideals)?;
    let mut out = Vec::new();
    for source in &measured {
        let mitigated = GenerationPlan::prompt_modification(prompt.text, &[source], budget)?
            .generate(provider, mode, None)?;
        for target in measured.iter().filter(|t| t.name != source.name) {
            let ideal = ideals.get(target);
            let w_init = initial_bias(&data.initial, target, &ideal)?.1;
            let w_mit = initial_bias(&mitigated, target, &ideal)?.1;
            out.push(EstimateCheck {
                source: source.name.clone(),
                target: target.name.clone(),
                estimated: matrix.get(&source.name, &target.name).expect("pair is in the matrix"),
                realized: w_init - w_mit,
            });
        }
    }
    Ok(out)
}

/// Pearson correlation between estimated and realized sensitivities.
pub fn validate_estimates(estimated: &[f64], realized: &[f64]) -> Result<f64> {
    pearson(estimated, realized)
}
