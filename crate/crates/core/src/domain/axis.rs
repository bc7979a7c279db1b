use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placeholder substituted with the base prompt inside counterfactual templates.
pub const PROMPT_PLACEHOLDER: &str = "{prompt}";

/// A named bias dimension with its ordered counterfactual attribute values.
///
/// Value order is significant: it is the ground ordering used by the
/// categorical Wasserstein distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasAxis {
    pub name: String,
    pub values: Vec<String>,
    pub question: String,
    pub cf_prompt_templates: Vec<String>,
}

impl BiasAxis {
    pub fn new(
        name: impl Into<String>,
        values: Vec<String>,
        question: impl Into<String>,
        cf_prompt_templates: Vec<String>,
    ) -> Result<Self> {
        let axis = BiasAxis {
            name: name.into(),
            values,
            question: question.into(),
            cf_prompt_templates,
        };
        axis.validate()?;
        Ok(axis)
    }

    /// Builds an axis whose templates prefix the prompt with each value, e.g.
    /// `"A photo of a {value} {prompt}"`.
    pub fn with_prefix_templates(name: &str, values: &[&str]) -> Result<Self> {
        let values: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        let templates = values
            .iter()
            .map(|v| format!("A photo of a {v} {PROMPT_PLACEHOLDER}"))
            .collect();
        let question = format!(
            "[vqa] What is the {name} ({}) of the person?",
            values.join(", ")
        );
        BiasAxis::new(name, values, question, templates)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::config("axis name must be non-empty"));
        }
        if self.values.is_empty() {
            return Err(Error::config(format!("axis `{}` has no values", self.name)));
        }
        let mut seen = HashSet::new();
        for value in &self.values {
            if value.is_empty() {
                return Err(Error::config(format!("axis `{}` has an empty value", self.name)));
            }
            if value == super::UNKNOWN {
                return Err(Error::config(format!(
                    "axis `{}` uses the reserved value `{}`",
                    self.name,
                    super::UNKNOWN
                )));
            }
            if !seen.insert(value.as_str()) {
                return Err(Error::config(format!(
                    "axis `{}` repeats value `{value}`",
                    self.name
                )));
            }
        }
        if self.cf_prompt_templates.len() != self.values.len() {
            return Err(Error::config(format!(
                "axis `{}` has {} values but {} counterfactual templates",
                self.name,
                self.values.len(),
                self.cf_prompt_templates.len()
            )));
        }
        Ok(())
    }

    /// Number of attribute values (K).
    pub fn k(&self) -> usize {
        self.values.len()
    }

    /// Axes with a single value carry no bias by definition.
    pub fn is_inert(&self) -> bool {
        self.values.len() < 2
    }

    pub fn index_of(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }

    pub fn contains(&self, value: &str) -> bool {
        self.index_of(value).is_some()
    }

    pub fn template_for(&self, value: &str) -> Option<&str> {
        self.index_of(value).map(|i| self.cf_prompt_templates[i].as_str())
    }
}

/// Ordered collection of bias axes; the order is canonical for matrix and
/// graph indexing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AxisSetRepr", into = "AxisSetRepr")]
pub struct AxisSet {
    axes: Vec<BiasAxis>,
}

#[derive(Serialize, Deserialize)]
struct AxisSetRepr {
    axes: Vec<BiasAxis>,
}

impl TryFrom<AxisSetRepr> for AxisSet {
    type Error = Error;

    fn try_from(repr: AxisSetRepr) -> Result<Self> {
        AxisSet::new(repr.axes)
    }
}

impl From<AxisSet> for AxisSetRepr {
    fn from(set: AxisSet) -> Self {
        AxisSetRepr { axes: set.axes }
    }
}

impl AxisSet {
    pub fn new(axes: Vec<BiasAxis>) -> Result<Self> {
        let mut names = HashSet::new();
        for axis in &axes {
            axis.validate()?;
            if !names.insert(axis.name.as_str()) {
                return Err(Error::config(format!("duplicate axis `{}`", axis.name)));
            }
        }
        Ok(AxisSet { axes })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema {
            location: format!("axis set line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Schema { location, message } => Error::Schema {
                location: format!("{}: {location}", path.display()),
                message,
            },
            other => Error::config(format!("{}: {other}", path.display())),
        })
    }

    pub fn axes(&self) -> &[BiasAxis] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.axes.iter().map(|a| a.name.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&BiasAxis> {
        self.axes.iter().find(|a| a.name == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.axes.iter().position(|a| a.name == name)
    }

    /// Looks an axis up, reporting an unknown name as a configuration error.
    pub fn require(&self, name: &str) -> Result<&BiasAxis> {
        self.get(name)
            .ok_or_else(|| Error::config(format!("unknown axis `{name}`")))
    }

    /// Resolves a list of names into axes, preserving the given order.
    pub fn subset(&self, names: &[String]) -> Result<Vec<&BiasAxis>> {
        let mut seen = HashSet::new();
        names
            .iter()
            .map(|n| {
                if !seen.insert(n.as_str()) {
                    return Err(Error::config(format!("axis `{n}` listed twice")));
                }
                self.require(n)
            })
            .collect()
    }
}

/// An input prompt together with the axes it is audited on.
#[derive(Debug, Clone, Copy)]
pub struct PromptSpec<'a> {
    pub text: &'a str,
    pub axes: &'a AxisSet,
}

impl<'a> PromptSpec<'a> {
    pub fn new(text: &'a str, axes: &'a AxisSet) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::config("prompt text must be non-empty"));
        }
        Ok(PromptSpec { text, axes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gender() -> BiasAxis {
        BiasAxis::with_prefix_templates("gender", &["male", "female"]).unwrap()
    }

    #[test]
    fn rejects_duplicate_values() {
        let err = BiasAxis::new(
            "g",
            vec!["a".into(), "a".into()],
            "q",
            vec!["{prompt}".into(), "{prompt}".into()],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn rejects_template_count_mismatch() {
        let err = BiasAxis::new("g", vec!["a".into(), "b".into()], "q", vec!["x".into()]);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_reserved_unknown_value() {
        assert!(BiasAxis::with_prefix_templates("g", &["a", "unknown"]).is_err());
    }

    #[test]
    fn single_value_axis_is_inert() {
        let axis = BiasAxis::with_prefix_templates("style", &["photo"]).unwrap();
        assert!(axis.is_inert());
    }

    #[test]
    fn axis_set_json_roundtrip_and_validation() {
        let set = AxisSet::new(vec![gender()]).unwrap();
        let json = serde_json::to_string(&set).unwrap();
        assert!(json.starts_with("{\"axes\":[{\"name\":\"gender\",\"values\":"));
        assert_eq!(AxisSet::from_json(&json).unwrap(), set);

        let dup = format!(
            "{{\"axes\":[{0},{0}]}}",
            serde_json::to_string(&gender()).unwrap()
        );
        assert!(AxisSet::from_json(&dup).is_err());
    }

    #[test]
    fn prompt_must_be_non_empty() {
        let set = AxisSet::new(vec![gender()]).unwrap();
        assert!(PromptSpec::new("  ", &set).is_err());
        assert!(PromptSpec::new("chef", &set).is_ok());
    }
}
