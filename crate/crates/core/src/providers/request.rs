use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{AnnotatedImageSet, Intervention};
use crate::error::{Error, Result};

/// How a provider turns a distribution into concrete images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenerationMode {
    /// Expected counts apportioned by largest remainder; no randomness.
    ExactCounts,
    /// Independent seeded draws.
    Sampled { seed: u64 },
}

/// One request for an annotated image set.
///
/// `prompt` is the text handed to the generator; `base_prompt` names the
/// audited prompt it was derived from, and `intervention` lists the attribute
/// values the text makes explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub base_prompt: String,
    #[serde(default)]
    pub intervention: Vec<Intervention>,
    pub n: usize,
    pub mode: GenerationMode,
}

impl GenerationRequest {
    pub fn new(
        prompt: impl Into<String>,
        base_prompt: impl Into<String>,
        intervention: Vec<Intervention>,
        n: usize,
        mode: GenerationMode,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("image budget must be at least 1"));
        }
        Ok(GenerationRequest {
            prompt: prompt.into(),
            base_prompt: base_prompt.into(),
            intervention,
            n,
            mode,
        })
    }

    /// The single intervention recorded on the produced set, if there is one.
    pub fn set_label(&self) -> Option<Intervention> {
        match self.intervention.as_slice() {
            [one] => Some(one.clone()),
            _ => None,
        }
    }

    /// Same request with its sampling seed derived from `base` and the
    /// request identity, so results do not depend on evaluation order.
    pub fn with_derived_seed(mut self, base: GenerationMode) -> Self {
        self.mode = match base {
            GenerationMode::ExactCounts => GenerationMode::ExactCounts,
            GenerationMode::Sampled { seed } => {
                let mut parts: Vec<String> = vec![self.base_prompt.clone(), self.prompt.clone()];
                parts.extend(self.intervention.iter().map(|i| format!("{}={}", i.axis, i.value)));
                GenerationMode::Sampled { seed: derive_seed(seed, &parts) }
            }
        };
        self
    }
}

/// Stable 64-bit seed from a base seed and identifying strings.
pub fn derive_seed(base: u64, parts: &[impl AsRef<str>]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for p in parts {
        hasher.update((p.as_ref().len() as u64).to_le_bytes());
        hasher.update(p.as_ref().as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
}

/// A source of annotated image sets.
pub trait ImageSetProvider: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<AnnotatedImageSet>;
}

impl<P: ImageSetProvider + ?Sized> ImageSetProvider for &P {
    fn generate(&self, request: &GenerationRequest) -> Result<AnnotatedImageSet> {
        (**self).generate(request)
    }
}

impl<P: ImageSetProvider + ?Sized> ImageSetProvider for Box<P> {
    fn generate(&self, request: &GenerationRequest) -> Result<AnnotatedImageSet> {
        (**self).generate(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_wire_format() {
        let req = GenerationRequest::new(
            "A photo of a male chef",
            "chef",
            vec![Intervention::new("gender", "male")],
            48,
            GenerationMode::Sampled { seed: 7 },
        )
        .unwrap();
        let json = serde_json::to_string(&req).unwrap();
        assert_eq!(
            json,
            r#"{"prompt":"A photo of a male chef","base_prompt":"chef","intervention":[{"axis":"gender","value":"male"}],"n":48,"mode":{"kind":"sampled","seed":7}}"#
        );
        let exact: GenerationMode = serde_json::from_str(r#"{"kind":"exact_counts"}"#).unwrap();
        assert_eq!(exact, GenerationMode::ExactCounts);
    }

    #[test]
    fn zero_budget_is_rejected() {
        assert!(GenerationRequest::new("a", "a", vec![], 0, GenerationMode::ExactCounts).is_err());
    }

    #[test]
    fn derived_seeds_depend_on_identity_only() {
        let base = GenerationMode::Sampled { seed: 1 };
        let mk = |value: &str| {
            GenerationRequest::new("p", "chef", vec![Intervention::new("gender", value)], 4, base)
                .unwrap()
                .with_derived_seed(base)
                .mode
        };
        assert_eq!(mk("male"), mk("male"));
        assert_ne!(mk("male"), mk("female"));
    }
}
