//! Annotated image sets recorded by an external generation and VQA stack.

use std::path::{Path, PathBuf};

use super::{GenerationRequest, ImageSetProvider};
use crate::domain::{AnnotatedImageSet, AxisSet, ValidationWarning};
use crate::error::{Error, ProviderError, Result};

/// A validation warning tied to the record it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusWarning {
    pub location: String,
    pub warning: ValidationWarning,
}

impl std::fmt::Display for CorpusWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.location, self.warning)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RecordedCorpus {
    pub sets: Vec<AnnotatedImageSet>,
    pub warnings: Vec<CorpusWarning>,
}

fn json_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path.display(), e))?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(path.display(), e))?.path();
        if p.extension().is_some_and(|e| e == "json") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Parses and validates one document holding a set or a list of sets.
pub fn parse_sets(text: &str, source: &str, axes: &AxisSet) -> Result<RecordedCorpus> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Schema {
        location: source.to_string(),
        message: e.to_string(),
    })?;
    let records = match value {
        serde_json::Value::Array(items) => items.into_iter().enumerate().map(|(i, v)| (Some(i), v)).collect(),
        other => vec![(None, other)],
    };
    let mut corpus = RecordedCorpus::default();
    for (index, record) in records {
        let location = match index {
            Some(i) => format!("{source}[{i}]"),
            None => source.to_string(),
        };
        let mut set: AnnotatedImageSet = serde_json::from_value(record).map_err(|e| Error::Schema {
            location: location.clone(),
            message: e.to_string(),
        })?;
        let warnings = set.validate(axes).map_err(|e| match e {
            Error::Schema { location: inner, message } => Error::Schema {
                location: format!("{location}: {inner}"),
                message,
            },
            other => other,
        })?;
        for w in warnings {
            log::warn!("{location}: {w}");
            corpus.warnings.push(CorpusWarning { location: location.clone(), warning: w });
        }
        corpus.sets.push(set);
    }
    Ok(corpus)
}

/// Loads every `*.json` file under `path` (or `path` itself if it is a file),
/// in file-name order.
pub fn load_recorded_corpus(path: &Path, axes: &AxisSet) -> Result<RecordedCorpus> {
    let mut corpus = RecordedCorpus::default();
    for file in json_files(path)? {
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(file.display(), e))?;
        let part = parse_sets(&text, &file.display().to_string(), axes)?;
        corpus.sets.extend(part.sets);
        corpus.warnings.extend(part.warnings);
    }
    if corpus.sets.is_empty() {
        return Err(Error::config(format!("no image sets found under {}", path.display())));
    }
    Ok(corpus)
}

impl RecordedCorpus {
    /// Prompts that have an unintervened set, in first-seen order.
    pub fn base_prompts(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in self.sets.iter().filter(|s| s.intervention.is_none()) {
            if !out.contains(&s.prompt) {
                out.push(s.prompt.clone());
            }
        }
        out
    }
}

/// Serves recorded sets back by prompt and intervention.
///
/// A counterfactual set matches a request when its intervention equals the
/// request's single constraint and its prompt equals either the rendered
/// counterfactual text or the base prompt.
#[derive(Debug, Clone)]
pub struct RecordedProvider {
    corpus: RecordedCorpus,
}

impl RecordedProvider {
    pub fn new(corpus: RecordedCorpus) -> Self {
        RecordedProvider { corpus }
    }

    pub fn corpus(&self) -> &RecordedCorpus {
        &self.corpus
    }
}

impl ImageSetProvider for RecordedProvider {
    fn generate(&self, request: &GenerationRequest) -> Result<AnnotatedImageSet> {
        if request.intervention.len() > 1 {
            return Err(ProviderError::Unavailable(
                "recorded corpora hold single-intervention sets only".into(),
            )
            .into());
        }
        let label = request.set_label();
        self.corpus
            .sets
            .iter()
            .find(|s| {
                s.intervention == label
                    && (s.prompt == request.prompt || s.prompt == request.base_prompt)
            })
            .cloned()
            .ok_or_else(|| {
                ProviderError::Unavailable(format!(
                    "no recorded set for `{}`{}",
                    request.base_prompt,
                    label.map(|l| format!(" with {}={}", l.axis, l.value)).unwrap_or_default()
                ))
                .into()
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BiasAxis, UNKNOWN};

    fn axes() -> AxisSet {
        AxisSet::new(vec![BiasAxis::with_prefix_templates("gender", &["male", "female"]).unwrap()]).unwrap()
    }

    #[test]
    fn valid_set_parses() {
        let images: Vec<String> = (0..48).map(|_| r#"{"attrs":{"gender":"male"}}"#.to_string()).collect();
        let text = format!(r#"{{"prompt":"chef","intervention":null,"images":[{}]}}"#, images.join(","));
        let c = parse_sets(&text, "a.json", &axes()).unwrap();
        assert_eq!(c.sets[0].size(), 48);
        assert!(c.warnings.is_empty());
    }

    #[test]
    fn unlisted_value_becomes_unknown() {
        let text = r#"[{"prompt":"chef","intervention":null,"images":[{"attrs":{"gender":"nonbinary"}}]}]"#;
        let c = parse_sets(text, "a.json", &axes()).unwrap();
        assert_eq!(c.sets[0].annotations[0].value("gender"), UNKNOWN);
        assert_eq!(c.warnings.len(), 1);
        assert_eq!(c.warnings[0].location, "a.json[0]");
    }

    #[test]
    fn missing_images_key_is_named() {
        let err = parse_sets(r#"{"prompt":"chef","intervention":null}"#, "a.json", &axes()).unwrap_err();
        match err {
            Error::Schema { location, message } => {
                assert_eq!(location, "a.json");
                assert!(message.contains("images"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
