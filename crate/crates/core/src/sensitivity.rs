//! Robustness of the metrics to attribute-extraction errors and to smaller
//! image sets.

use std::collections::{BTreeMap, HashSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concepts::SynonymTable;
use crate::connect::{build_matrix, Ideals, PromptData};
use crate::domain::{AnnotatedImageSet, AxisSet, BiasAxis};
use crate::error::{Error, Result};
use crate::evaluate::evaluate_prompt;
use crate::providers::derive_seed;

const RELATIVE_FLOOR: f64 = 1e-9;

fn set_identity(set: &AnnotatedImageSet) -> Vec<String> {
    let mut parts = vec![set.prompt.clone()];
    if let Some(iv) = &set.intervention {
        parts.push(format!("{}={}", iv.axis, iv.value));
    }
    parts
}

/// Replaces each known `(image, axis)` answer, with probability `rate`, by a
/// uniformly chosen different value. The stream for each set is seeded from
/// `seed` and the set's prompt and intervention, so results do not depend on
/// where a set sits in a corpus. Returns the perturbed set and the number of
/// changed answers.
pub fn inject_vqa_errors_into(
    set: &AnnotatedImageSet,
    axes: &AxisSet,
    rate: f64,
    seed: u64,
) -> Result<(AnnotatedImageSet, u64)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("error rate must lie in [0, 1], got {rate}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &set_identity(set)));
    let mut out = set.clone();
    let mut flips = 0;
    for ann in &mut out.annotations {
        for axis in axes.axes().iter().filter(|a| !a.is_inert()) {
            let Some(current) = ann.attrs.get_mut(&axis.name) else { continue };
            let Some(idx) = axis.index_of(current) else { continue };
            if !rng.gen_bool(rate) {
                continue;
            }
            let mut other = rng.gen_range(0..axis.k() - 1);
            if other >= idx {
                other += 1;
            }
            *current = axis.values[other].clone();
            flips += 1;
        }
    }
    Ok((out, flips))
}

/// [`inject_vqa_errors_into`] over a list of sets.
pub fn inject_vqa_errors(
    sets: &[AnnotatedImageSet],
    axes: &AxisSet,
    rate: f64,
    seed: u64,
) -> Result<(Vec<AnnotatedImageSet>, u64)> {
    let mut out = Vec::with_capacity(sets.len());
    let mut flips = 0;
    for s in sets {
        let (p, f) = inject_vqa_errors_into(s, axes, rate, seed)?;
        out.push(p);
        flips += f;
    }
    Ok((out, flips))
}

/// Uniform sample of `n` images without replacement, original order kept.
pub fn subsample_images(set: &AnnotatedImageSet, n: usize, seed: u64) -> Result<AnnotatedImageSet> {
    if n == 0 || n > set.size() {
        return Err(Error::invalid(format!(
            "cannot keep {n} of {} images",
            set.size()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &set_identity(set)));
    let mut keep = sample(&mut rng, set.size(), n).into_vec();
    keep.sort_unstable();
    Ok(AnnotatedImageSet {
        annotations: keep.into_iter().map(|i| set.annotations[i].clone()).collect(),
        ..set.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Level is the per-answer error rate.
    VqaError,
    /// Level is the number of images kept per set.
    ImageCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cas,
    Mad,
    Is,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Cas => "cas",
            Metric::Mad => "mad",
            Metric::Is => "is",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDrift {
    pub metric: Metric,
    /// Mean over runs of the mean absolute change.
    pub mean_abs_delta: f64,
    /// Mean over runs of `sum |m' - m| / sum |m|`.
    pub mean_rel_delta: f64,
    /// Population standard deviation of the per-run mean relative change.
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub level: f64,
    pub metrics: Vec<MetricDrift>,
    /// Answers changed per run (error sweeps only).
    pub flips: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub sweep_kind: SweepKind,
    pub levels: Vec<LevelResult>,
    pub seeds: Vec<u64>,
}

impl SensitivityReport {
    pub fn drift(&self, level_index: usize, metric: Metric) -> Option<&MetricDrift> {
        self.levels.get(level_index)?.metrics.iter().find(|m| m.metric == metric)
    }
}

/// Inputs shared by every run of a sweep.
pub struct SweepInputs<'a> {
    pub corpus: &'a [PromptData],
    pub axes: &'a AxisSet,
    pub ideals: &'a Ideals,
    pub synonyms: &'a SynonymTable,
    pub stopwords: &'a HashSet<String>,
}

type MetricValues = BTreeMap<(Metric, String), f64>;

fn metric_values(inputs: &SweepInputs<'_>, corpus: &[PromptData]) -> Result<MetricValues> {
    let measured: Vec<&BiasAxis> = inputs.axes.axes().iter().filter(|a| !a.is_inert()).collect();
    let mut out = BTreeMap::new();
    for data in corpus {
        let eval = evaluate_prompt(data, inputs.axes, inputs.synonyms, inputs.stopwords)?;
        for a in &eval.axes {
            out.insert((Metric::Mad, format!("{}|{}", data.prompt, a.axis)), a.mad);
            for c in &a.cas {
                out.insert((Metric::Cas, format!("{}|{}={}", data.prompt, a.axis, c.value)), c.cas);
            }
        }
        let matrix = build_matrix(data, inputs.axes, &measured, inputs.ideals)?;
        for (r, row) in matrix.rows.iter().zip(&matrix.values) {
            for (c, v) in matrix.cols.iter().zip(row) {
                out.insert((Metric::Is, format!("{}|{r}->{c}", data.prompt)), *v);
            }
        }
    }
    Ok(out)
}

fn perturb(data: &PromptData, f: &dyn Fn(&AnnotatedImageSet) -> Result<(AnnotatedImageSet, u64)>) -> Result<(PromptData, u64)> {
    let (initial, mut flips) = f(&data.initial)?;
    let mut cfs = BTreeMap::new();
    for (k, s) in &data.counterfactuals {
        let (p, n) = f(s)?;
        flips += n;
        cfs.insert(k.clone(), p);
    }
    Ok((PromptData { prompt: data.prompt.clone(), initial, counterfactuals: cfs }, flips))
}

/// Per-run mean absolute change and relative change for each metric. The
/// relative change is total absolute change over total baseline magnitude,
/// which stays finite when individual baseline values are zero.
fn run_deltas(base: &MetricValues, perturbed: &MetricValues) -> BTreeMap<Metric, (f64, f64)> {
    let mut sums: BTreeMap<Metric, (f64, f64, usize)> = BTreeMap::new();
    for (key, m) in base {
        let Some(m2) = perturbed.get(key) else { continue };
        let e = sums.entry(key.0).or_insert((0.0, 0.0, 0));
        e.0 += (m2 - m).abs();
        e.1 += m.abs();
        e.2 += 1;
    }
    sums.into_iter()
        .map(|(k, (change, magnitude, n))| (k, (change / n as f64, change / magnitude.max(RELATIVE_FLOOR))))
        .collect()
}

/// Runs the full metric pipeline on perturbed copies of the corpus at each
/// level and reports drift from the unperturbed baseline.
pub fn sensitivity_sweep(
    inputs: &SweepInputs<'_>,
    kind: SweepKind,
    levels: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<SensitivityReport> {
    if repeats == 0 {
        return Err(Error::invalid("repeats must be at least 1"));
    }
    if levels.is_empty() {
        return Err(Error::invalid("at least one level is required"));
    }
    let mut levels = levels.to_vec();
    levels.sort_by(f64::total_cmp);
    for &l in &levels {
        let ok = match kind {
            SweepKind::VqaError => (0.0..=1.0).contains(&l),
            SweepKind::ImageCount => l >= 1.0 && l.fract() == 0.0,
        };
        if !ok {
            return Err(Error::invalid(format!("level {l} is not valid for {kind:?}")));
        }
    }
    let seeds: Vec<u64> = (0..repeats).map(|r| derive_seed(seed, &[r.to_string()])).collect();
    let baseline = metric_values(inputs, inputs.corpus)?;
    /// Per-metric (relative, absolute) drift of one run and its flip count.
    type RunDrift = (BTreeMap<Metric, (f64, f64)>, u64);

    let jobs: Vec<(usize, usize)> = (0..levels.len()).flat_map(|l| (0..repeats).map(move |r| (l, r))).collect();
    let runs: Vec<Result<RunDrift>> = jobs
        .par_iter()
        .map(|&(l, r)| {
            let level = levels[l];
            let run_seed = seeds[r];
            let perturbed = inputs
                .corpus
                .iter()
                .map(|d| match kind {
                    SweepKind::VqaError => perturb(d, &|s| inject_vqa_errors_into(s, inputs.axes, level, run_seed)),
                    SweepKind::ImageCount => perturb(d, &|s| {
                        Ok((subsample_images(s, (level as usize).min(s.size()), run_seed)?, 0))
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            let flips = perturbed.iter().map(|(_, f)| f).sum();
            let corpus: Vec<PromptData> = perturbed.into_iter().map(|(d, _)| d).collect();
            Ok((run_deltas(&baseline, &metric_values(inputs, &corpus)?), flips))
        })
        .collect();

    let failures: Vec<String> = runs
        .iter()
        .zip(&jobs)
        .filter_map(|(r, (l, rep))| r.as_ref().err().map(|e| format!("level {} run {rep}: {e}", levels[*l])))
        .collect();
    if !failures.is_empty() {
        return Err(Error::invalid(format!("sensitivity runs failed: {}", failures.join("; "))));
    }
    let runs: Vec<_> = runs.into_iter().map(|r| r.expect("failures handled above")).collect();

    let results = levels
        .iter()
        .enumerate()
        .map(|(l, &level)| {
            let chunk = &runs[l * repeats..(l + 1) * repeats];
            let metrics = [Metric::Cas, Metric::Mad, Metric::Is]
                .into_iter()
                .map(|metric| {
                    let per_run: Vec<(f64, f64)> = chunk
                        .iter()
                        .map(|(d, _)| d.get(&metric).copied().unwrap_or((0.0, 0.0)))
                        .collect();
                    let n = per_run.len() as f64;
                    let mean_abs = per_run.iter().map(|p| p.0).sum::<f64>() / n;
                    let mean_rel = per_run.iter().map(|p| p.1).sum::<f64>() / n;
                    let var = per_run.iter().map(|p| (p.1 - mean_rel).powi(2)).sum::<f64>() / n;
                    MetricDrift { metric, mean_abs_delta: mean_abs, mean_rel_delta: mean_rel, stddev: var.sqrt() }
                })
                .collect();
            LevelResult { level, metrics, flips: chunk.iter().map(|(_, f)| *f).collect() }
        })
        .collect();
    Ok(SensitivityReport { sweep_kind: kind, levels: results, seeds })
}

impl SensitivityReport {
    /// `level,metric,mean_delta,stddev` rows at six significant digits,
    /// where `mean_delta` is the mean relative change.
    pub fn to_csv(&self) -> Result<String> {
        use crate::numfmt::sig;
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::invalid(e.to_string());
        w.write_record(["level", "metric", "mean_delta", "stddev", "mean_abs_delta"]).map_err(io)?;
        for l in &self.levels {
            for m in &l.metrics {
                w.write_record([
                    sig(l.level, 6),
                    m.metric.name().to_string(),
                    sig(m.mean_rel_delta, 6),
                    sig(m.stddev, 6),
                    sig(m.mean_abs_delta, 6),
                ])
                .map_err(io)?;
            }
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::invalid(e.to_string()))?)
            .map_err(|e| Error::invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ImageAnnotation;

    fn axes() -> AxisSet {
        AxisSet::new(vec![
            BiasAxis::with_prefix_templates("gender", &["male", "female"]).unwrap(),
            BiasAxis::with_prefix_templates("age", &["young", "middle-aged", "old"]).unwrap(),
        ])
        .unwrap()
    }

    fn set(n: usize) -> AnnotatedImageSet {
        AnnotatedImageSet::new(
            "chef",
            None,
            (0..n)
                .map(|i| ImageAnnotation::from_pairs([("gender", "male"), ("age", ["young", "old"][i % 2])]))
                .collect(),
        )
    }

    #[test]
    fn zero_rate_is_identity() {
        let s = set(10);
        let (out, flips) = inject_vqa_errors_into(&s, &axes(), 0.0, 1).unwrap();
        assert_eq!(out, s);
        assert_eq!(flips, 0);
    }

    #[test]
    fn full_rate_flips_binary_axes() {
        let s = set(10);
        let (out, flips) = inject_vqa_errors_into(&s, &axes(), 1.0, 1).unwrap();
        assert!(out.annotations.iter().all(|a| a.value("gender") == "female"));
        assert!(out.annotations.iter().zip(&s.annotations).all(|(a, b)| a.value("age") != b.value("age")));
        assert_eq!(flips, 20);
    }

    #[test]
    fn unknown_answers_are_left_alone() {
        let s = AnnotatedImageSet::new("chef", None, vec![ImageAnnotation::from_pairs([("gender", "unknown")])]);
        let (out, flips) = inject_vqa_errors_into(&s, &axes(), 1.0, 3).unwrap();
        assert_eq!(out, s);
        assert_eq!(flips, 0);
    }

    #[test]
    fn subsample_examples() {
        let s = set(48);
        assert_eq!(subsample_images(&s, 48, 1).unwrap(), s);
        assert_eq!(subsample_images(&s, 1, 1).unwrap().size(), 1);
        let forty = subsample_images(&s, 40, 1).unwrap();
        assert_eq!(forty.size(), 40);
        assert!(subsample_images(&s, 0, 1).is_err());
        assert!(subsample_images(&s, 49, 1).is_err());
    }
}
