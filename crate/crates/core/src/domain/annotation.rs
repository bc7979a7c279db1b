use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AxisSet, UNKNOWN};
use crate::error::{Error, Result};

/// Identifies the counterfactual that produced an image set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Intervention {
    pub axis: String,
    pub value: String,
}

impl Intervention {
    pub fn new(axis: impl Into<String>, value: impl Into<String>) -> Self {
        Intervention { axis: axis.into(), value: value.into() }
    }
}

/// Per-image attribute answers, one per bias axis.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageAnnotation {
    pub attrs: BTreeMap<String, String>,
}

impl ImageAnnotation {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        ImageAnnotation {
            attrs: pairs
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    /// The recorded value for `axis`; missing keys read as unknown.
    pub fn value(&self, axis: &str) -> &str {
        self.attrs.get(axis).map(String::as_str).unwrap_or(UNKNOWN)
    }
}

/// Attribute annotations for the images generated from one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedImageSet {
    pub prompt: String,
    pub intervention: Option<Intervention>,
    #[serde(rename = "images")]
    pub annotations: Vec<ImageAnnotation>,
}

/// Non-fatal issue found while validating an image set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationWarning {
    pub image: usize,
    pub axis: String,
    pub value: String,
}

impl std::fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "image {}: value `{}` is not listed for axis `{}`; recorded as unknown",
            self.image, self.value, self.axis
        )
    }
}

impl AnnotatedImageSet {
    pub fn new(
        prompt: impl Into<String>,
        intervention: Option<Intervention>,
        annotations: Vec<ImageAnnotation>,
    ) -> Self {
        AnnotatedImageSet { prompt: prompt.into(), intervention, annotations }
    }

    pub fn size(&self) -> usize {
        self.annotations.len()
    }

    /// Checks the set against `axes`.
    ///
    /// Unlisted attribute values are rewritten to `unknown` and reported as
    /// warnings; unknown axis names and invalid interventions are errors.
    pub fn validate(&mut self, axes: &AxisSet) -> Result<Vec<ValidationWarning>> {
        if let Some(iv) = &self.intervention {
            let axis = axes.get(&iv.axis).ok_or_else(|| Error::Schema {
                location: "intervention.axis".into(),
                message: format!("unknown axis `{}`", iv.axis),
            })?;
            if !axis.contains(&iv.value) {
                return Err(Error::Schema {
                    location: "intervention.value".into(),
                    message: format!("`{}` is not a value of axis `{}`", iv.value, iv.axis),
                });
            }
        }
        let mut warnings = Vec::new();
        for (i, ann) in self.annotations.iter_mut().enumerate() {
            for (axis_name, value) in ann.attrs.iter_mut() {
                let axis = axes.get(axis_name).ok_or_else(|| Error::Schema {
                    location: format!("images[{i}].attrs"),
                    message: format!("unknown axis `{axis_name}`"),
                })?;
                if value != UNKNOWN && !axis.contains(value) {
                    warnings.push(ValidationWarning {
                        image: i,
                        axis: axis_name.clone(),
                        value: std::mem::replace(value, UNKNOWN.to_string()),
                    });
                }
            }
        }
        Ok(warnings)
    }

    /// Concatenates several sets into one under a new prompt label.
    pub fn concat(prompt: impl Into<String>, sets: Vec<AnnotatedImageSet>) -> Self {
        let annotations = sets.into_iter().flat_map(|s| s.annotations).collect();
        AnnotatedImageSet::new(prompt, None, annotations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BiasAxis;

    fn axes() -> AxisSet {
        AxisSet::new(vec![
            BiasAxis::with_prefix_templates("gender", &["male", "female"]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn json_layout_matches_wire_schema() {
        let set = AnnotatedImageSet::new(
            "chef",
            Some(Intervention::new("gender", "male")),
            vec![ImageAnnotation::from_pairs([("gender", "male")])],
        );
        let json = serde_json::to_string(&set).unwrap();
        assert_eq!(
            json,
            r#"{"prompt":"chef","intervention":{"axis":"gender","value":"male"},"images":[{"attrs":{"gender":"male"}}]}"#
        );
        let back: AnnotatedImageSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn null_intervention_serializes_as_null() {
        let set = AnnotatedImageSet::new("chef", None, vec![]);
        assert_eq!(
            serde_json::to_string(&set).unwrap(),
            r#"{"prompt":"chef","intervention":null,"images":[]}"#
        );
    }

    #[test]
    fn unlisted_value_becomes_unknown_with_warning() {
        let mut set = AnnotatedImageSet::new(
            "chef",
            None,
            vec![ImageAnnotation::from_pairs([("gender", "nonbinary")])],
        );
        let warnings = set.validate(&axes()).unwrap();
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].value, "nonbinary");
        assert_eq!(set.annotations[0].value("gender"), UNKNOWN);
    }

    #[test]
    fn unknown_axis_is_schema_error() {
        let mut set = AnnotatedImageSet::new(
            "chef",
            None,
            vec![ImageAnnotation::from_pairs([("hat", "yes")])],
        );
        assert!(matches!(set.validate(&axes()), Err(Error::Schema { .. })));
    }

    #[test]
    fn invalid_intervention_is_schema_error() {
        let mut set =
            AnnotatedImageSet::new("chef", Some(Intervention::new("gender", "robot")), vec![]);
        assert!(set.validate(&axes()).is_err());
    }
}
