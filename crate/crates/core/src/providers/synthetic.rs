//! Deterministic synthetic generator.
//!
//! A [`SyntheticModel`] is an explicit joint distribution over attribute
//! tuples. A prompt that names attribute values is simulated by conditioning
//! the joint on them, which is exactly the hard-prompt assumption behind
//! prompt-modification mitigation. In exact-counts mode the output is the
//! expected image set, so every downstream metric has a closed-form oracle.

use std::collections::{BTreeMap, HashSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GenerationMode, GenerationRequest, ImageSetProvider};
use crate::apportion::largest_remainder;
use crate::domain::{AnnotatedImageSet, AxisSet, ImageAnnotation, Intervention};
use crate::error::{Error, Result};

const JOINT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEntry {
    pub values: Vec<String>,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct SyntheticModel {
    axes: AxisSet,
    joint: Vec<JointEntry>,
    prompt_key: String,
    indices: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    axes: AxisSet,
    joint: Vec<JointEntry>,
    prompt_key: String,
}

impl TryFrom<ModelRepr> for SyntheticModel {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        SyntheticModel::new(r.axes, r.joint, r.prompt_key)
    }
}

impl From<SyntheticModel> for ModelRepr {
    fn from(m: SyntheticModel) -> Self {
        ModelRepr { axes: m.axes, joint: m.joint, prompt_key: m.prompt_key }
    }
}

impl SyntheticModel {
    pub fn new(axes: AxisSet, joint: Vec<JointEntry>, prompt_key: impl Into<String>) -> Result<Self> {
        let mut indices = Vec::with_capacity(joint.len());
        let mut seen = HashSet::new();
        let mut mass = 0.0;
        for entry in &joint {
            if entry.values.len() != axes.len() {
                return Err(Error::invalid(format!(
                    "joint tuple {:?} has {} values for {} axes",
                    entry.values,
                    entry.values.len(),
                    axes.len()
                )));
            }
            if !entry.p.is_finite() || entry.p < 0.0 {
                return Err(Error::invalid(format!("joint tuple {:?} has probability {}", entry.values, entry.p)));
            }
            let idx = entry
                .values
                .iter()
                .zip(axes.axes())
                .map(|(v, axis)| {
                    axis.index_of(v).ok_or_else(|| {
                        Error::invalid(format!("`{v}` is not a value of axis `{}`", axis.name))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if !seen.insert(idx.clone()) {
                return Err(Error::invalid(format!("joint tuple {:?} listed twice", entry.values)));
            }
            indices.push(idx);
            mass += entry.p;
        }
        if (mass - 1.0).abs() > JOINT_TOLERANCE {
            return Err(Error::invalid(format!("joint probabilities sum to {mass}, not 1")));
        }
        Ok(SyntheticModel { axes, joint, prompt_key: prompt_key.into(), indices })
    }

    /// Builds a model from non-negative tuple weights, normalizing them.
    pub fn from_weights(
        axes: AxisSet,
        weights: Vec<(Vec<String>, f64)>,
        prompt_key: impl Into<String>,
    ) -> Result<Self> {
        let mass: f64 = weights.iter().map(|(_, w)| w).sum();
        if mass <= 0.0 || !mass.is_finite() {
            return Err(Error::invalid("joint weights must have positive finite mass"));
        }
        let joint = weights
            .into_iter()
            .map(|(values, w)| JointEntry { values, p: w / mass })
            .collect();
        Self::new(axes, joint, prompt_key)
    }

    /// Builds a model over the full product of axis values from a weight
    /// function of value indices.
    pub fn from_fn(
        axes: AxisSet,
        prompt_key: impl Into<String>,
        mut weight: impl FnMut(&[usize]) -> f64,
    ) -> Result<Self> {
        let sizes: Vec<usize> = axes.axes().iter().map(|a| a.k()).collect();
        let mut weights = Vec::new();
        for idx in product_indices(&sizes) {
            let w = weight(&idx);
            if w > 0.0 {
                let values = idx
                    .iter()
                    .zip(axes.axes())
                    .map(|(&i, a)| a.values[i].clone())
                    .collect();
                weights.push((values, w));
            }
        }
        Self::from_weights(axes, weights, prompt_key)
    }

    pub fn axes(&self) -> &AxisSet {
        &self.axes
    }

    pub fn joint(&self) -> &[JointEntry] {
        &self.joint
    }

    pub fn prompt_key(&self) -> &str {
        &self.prompt_key
    }

    /// Joint restricted to tuples consistent with `constraints`, renormalized.
    /// Returns `(value indices, probability)` pairs in joint order.
    ///
    /// A combination the joint never produces is still rendered as asked:
    /// the constrained axes take the requested values and every other axis
    /// follows the unconditioned joint.
    pub fn condition(&self, constraints: &[Intervention]) -> Result<Vec<(Vec<usize>, f64)>> {
        let resolved = constraints
            .iter()
            .map(|c| {
                let pos = self.axes.position(&c.axis).ok_or_else(|| {
                    Error::invalid(format!("constraint on unknown axis `{}`", c.axis))
                })?;
                let vi = self.axes.axes()[pos].index_of(&c.value).ok_or_else(|| {
                    Error::invalid(format!("`{}` is not a value of axis `{}`", c.value, c.axis))
                })?;
                Ok((pos, vi))
            })
            .collect::<Result<Vec<_>>>()?;
        let support = || {
            self.indices
                .iter()
                .zip(&self.joint)
                .filter(|(_, e)| e.p > 0.0)
                .map(|(idx, e)| (idx, e.p))
        };
        let kept: Vec<(Vec<usize>, f64)> = support()
            .filter(|(idx, _)| resolved.iter().all(|&(pos, vi)| idx[pos] == vi))
            .map(|(idx, p)| (idx.clone(), p))
            .collect();
        let mass: f64 = kept.iter().map(|(_, p)| p).sum();
        if mass > 0.0 {
            return Ok(kept.into_iter().map(|(t, p)| (t, p / mass)).collect());
        }
        log::debug!(
            "`{}` gives {} zero probability; overriding the constrained axes",
            self.prompt_key,
            constraints.iter().map(|c| format!("{}={}", c.axis, c.value)).collect::<Vec<_>>().join(",")
        );
        let mut merged: Vec<(Vec<usize>, f64)> = Vec::new();
        for (idx, p) in support() {
            let mut forced = idx.clone();
            for &(pos, vi) in &resolved {
                forced[pos] = vi;
            }
            match merged.iter_mut().find(|(t, _)| *t == forced) {
                Some(slot) => slot.1 += p,
                None => merged.push((forced, p)),
            }
        }
        Ok(merged)
    }

    fn annotation(&self, tuple: &[usize]) -> ImageAnnotation {
        ImageAnnotation {
            attrs: self
                .axes
                .axes()
                .iter()
                .zip(tuple)
                .map(|(a, &i)| (a.name.clone(), a.values[i].clone()))
                .collect::<BTreeMap<_, _>>(),
        }
    }

    /// Generates an annotated image set for `req` from the conditioned joint.
    pub fn generate(&self, req: &GenerationRequest) -> Result<AnnotatedImageSet> {
        let conditional = self.condition(&req.intervention)?;
        let probs: Vec<f64> = conditional.iter().map(|(_, p)| *p).collect();
        let mut annotations = Vec::with_capacity(req.n);
        match req.mode {
            GenerationMode::ExactCounts => {
                let counts = largest_remainder(req.n as u64, &probs)?;
                for ((tuple, _), count) in conditional.iter().zip(counts) {
                    let ann = self.annotation(tuple);
                    annotations.extend(std::iter::repeat_n(ann, count as usize));
                }
            }
            GenerationMode::Sampled { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let dist = WeightedIndex::new(&probs)
                    .map_err(|e| Error::invalid(format!("cannot sample joint: {e}")))?;
                let cache: Vec<ImageAnnotation> =
                    conditional.iter().map(|(t, _)| self.annotation(t)).collect();
                for _ in 0..req.n {
                    annotations.push(cache[dist.sample(&mut rng)].clone());
                }
            }
        }
        Ok(AnnotatedImageSet::new(req.prompt.clone(), req.set_label(), annotations))
    }
}

fn product_indices(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &k in sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..k).map(move |i| {
                    let mut next = prefix.clone();
                    next.push(i);
                    next
                })
            })
            .collect();
    }
    out
}

/// Provider backed by one synthetic model per prompt.
#[derive(Debug, Clone, Default)]
pub struct SyntheticProvider {
    models: Vec<SyntheticModel>,
}

impl SyntheticProvider {
    pub fn new(models: Vec<SyntheticModel>) -> Result<Self> {
        let mut keys = HashSet::new();
        for m in &models {
            if !keys.insert(m.prompt_key.clone()) {
                return Err(Error::config(format!("two synthetic models answer `{}`", m.prompt_key)));
            }
        }
        Ok(SyntheticProvider { models })
    }

    pub fn single(model: SyntheticModel) -> Self {
        SyntheticProvider { models: vec![model] }
    }

    pub fn models(&self) -> &[SyntheticModel] {
        &self.models
    }

    pub fn model(&self, prompt_key: &str) -> Option<&SyntheticModel> {
        self.models.iter().find(|m| m.prompt_key == prompt_key)
    }

    /// Loads one model, or a JSON array of models, from a file.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Schema {
            location: path.display().to_string(),
            message: e.to_string(),
        })?;
        let schema_err = |e: serde_json::Error| Error::Schema {
            location: path.display().to_string(),
            message: e.to_string(),
        };
        let models = if value.is_array() {
            serde_json::from_value::<Vec<SyntheticModel>>(value).map_err(schema_err)?
        } else {
            vec![serde_json::from_value::<SyntheticModel>(value).map_err(schema_err)?]
        };
        Self::new(models)
    }
}

impl ImageSetProvider for SyntheticProvider {
    fn generate(&self, request: &GenerationRequest) -> Result<AnnotatedImageSet> {
        let model = self.model(&request.base_prompt).ok_or_else(|| {
            crate::ProviderError::Unavailable(format!(
                "no synthetic model for prompt `{}`",
                request.base_prompt
            ))
        })?;
        model.generate(request)
    }
}
