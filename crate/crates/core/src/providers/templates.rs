//! Counterfactual prompt construction from per-value templates.

use crate::domain::{BiasAxis, Intervention, PromptSpec, PROMPT_PLACEHOLDER};
use crate::error::{Error, Result};

const FRAMES: [&str; 2] = ["A photo of an ", "A photo of a "];

/// Substitutes `base` into one template.
pub fn render_template(template: &str, base: &str) -> Result<String> {
    if !template.contains(PROMPT_PLACEHOLDER) {
        return Err(Error::config(format!(
            "template `{template}` has no {PROMPT_PLACEHOLDER} placeholder"
        )));
    }
    Ok(template.replace(PROMPT_PLACEHOLDER, base))
}

/// Counterfactual prompts for one axis, one per value in declared order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisCounterfactuals {
    pub axis: String,
    pub prompts: Vec<(String, String)>,
}

/// One counterfactual prompt per `(axis, value)`, axes in canonical order.
pub fn template_counterfactuals(prompt: PromptSpec<'_>) -> Result<Vec<AxisCounterfactuals>> {
    prompt
        .axes
        .axes()
        .iter()
        .map(|axis| {
            let prompts = axis
                .values
                .iter()
                .zip(&axis.cf_prompt_templates)
                .map(|(v, t)| Ok((v.clone(), render_template(t, prompt.text)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(AxisCounterfactuals { axis: axis.name.clone(), prompts })
        })
        .collect()
}

fn strip_frame(template: &str) -> Option<&str> {
    FRAMES.iter().find_map(|f| template.strip_prefix(f))
}

fn template<'a>(axis: &'a BiasAxis, value: &str) -> Result<&'a str> {
    axis.template_for(value)
        .ok_or_else(|| Error::invalid(format!("`{value}` is not a value of axis `{}`", axis.name)))
}

fn article(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// Prompt text making every constraint explicit.
///
/// A single constraint uses its template verbatim. Several constraints nest
/// their modifiers in order inside one shared "A photo of a ..." frame, so
/// gender then environment on "nurse" gives
/// "A photo of a male nurse working indoors".
pub fn compose_prompt(base: &str, constraints: &[(&BiasAxis, &str)]) -> Result<String> {
    match constraints {
        [] => Ok(base.to_string()),
        [(axis, value)] => render_template(template(axis, value)?, base),
        _ => {
            let mut subject = base.to_string();
            let mut framed = false;
            for (axis, value) in constraints {
                let t = template(axis, value)?;
                let core = match strip_frame(t) {
                    Some(core) => {
                        framed = true;
                        core
                    }
                    None => t,
                };
                subject = render_template(core, &subject)?;
            }
            Ok(if framed {
                format!("A photo of {} {subject}", article(&subject))
            } else {
                subject
            })
        }
    }
}

/// [`compose_prompt`] for interventions resolved against an axis list.
pub fn compose_for(
    base: &str,
    axes: &crate::domain::AxisSet,
    constraints: &[Intervention],
) -> Result<String> {
    let resolved = constraints
        .iter()
        .map(|c| Ok((axes.require(&c.axis)?, c.value.as_str())))
        .collect::<Result<Vec<_>>>()?;
    compose_prompt(base, &resolved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AxisSet;

    fn axis(name: &str, values: &[&str], templates: &[&str]) -> BiasAxis {
        BiasAxis::new(
            name,
            values.iter().map(|s| s.to_string()).collect(),
            "q",
            templates.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn gender_counterfactuals() {
        let axes = AxisSet::new(vec![BiasAxis::with_prefix_templates("gender", &["male", "female"]).unwrap()]).unwrap();
        let cfs = template_counterfactuals(PromptSpec::new("chef", &axes).unwrap()).unwrap();
        assert_eq!(
            cfs[0].prompts,
            vec![
                ("male".to_string(), "A photo of a male chef".to_string()),
                ("female".to_string(), "A photo of a female chef".to_string()),
            ]
        );
    }

    #[test]
    fn inert_axis_has_single_counterfactual() {
        let axes = AxisSet::new(vec![BiasAxis::with_prefix_templates("species", &["human"]).unwrap()]).unwrap();
        let cfs = template_counterfactuals(PromptSpec::new("chef", &axes).unwrap()).unwrap();
        assert_eq!(cfs[0].prompts.len(), 1);
    }

    #[test]
    fn missing_placeholder_is_an_error() {
        assert!(render_template("A photo of a chef", "nurse").is_err());
    }

    #[test]
    fn nested_composition() {
        let env = axis(
            "environment",
            &["indoors", "outdoors"],
            &["A photo of a {prompt} working indoors", "A photo of a {prompt} working outdoors"],
        );
        let clothing = axis(
            "clothing",
            &["formal", "informal"],
            &["A photo of a {prompt} in formal attire", "A photo of a {prompt} in informal attire"],
        );
        let age = axis(
            "age",
            &["old", "young"],
            &["A photo of an old {prompt}", "A photo of a young {prompt}"],
        );
        assert_eq!(
            compose_prompt("nurse", &[(&env, "indoors")]).unwrap(),
            "A photo of a nurse working indoors"
        );
        assert_eq!(
            compose_prompt("nurse", &[(&env, "indoors"), (&clothing, "formal")]).unwrap(),
            "A photo of a nurse working indoors in formal attire"
        );
        assert_eq!(
            compose_prompt("engineer", &[(&age, "old"), (&env, "outdoors")]).unwrap(),
            "A photo of an old engineer working outdoors"
        );
    }
}
