//! Pairwise causal discovery over bias axes.
//!
//! For each ordered pair of axes a contingency table of counterfactual value
//! against target value is tested for independence; pairs that survive the
//! p-value filter become edges weighted by Intersectional Sensitivity.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connect::{Ideals, PromptData};
use crate::domain::{count_values, AnnotatedImageSet, AxisSet, BiasAxis, CategoricalDistribution};
use crate::error::{Error, Result};
use crate::numfmt::sig;
use crate::stats::{chi_square_p, normalized_bias, ContingencyTable};

pub const PROMPT_P_THRESHOLD: f64 = 1e-4;
pub const GLOBAL_P_THRESHOLD: f64 = 5e-5;
pub const GLOBAL_IS_FLOOR: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphScope {
    Prompt,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub is_weight: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    pub scope: GraphScope,
}

/// An axis pair that could not be tested, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub source: String,
    pub target: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discovery {
    pub graph: BiasGraph,
    pub skipped: Vec<SkippedPair>,
}

/// Rows are the source axis's counterfactual values, columns the target
/// axis's values; unknown answers are left out.
pub fn contingency_table(
    cf_sets: &[&AnnotatedImageSet],
    source: &BiasAxis,
    target: &BiasAxis,
) -> Result<ContingencyTable> {
    if cf_sets.len() != source.k() {
        return Err(Error::invalid(format!(
            "axis `{}` has {} values but {} counterfactual sets were given",
            source.name,
            source.k(),
            cf_sets.len()
        )));
    }
    let counts: Vec<Vec<u64>> = cf_sets.iter().map(|s| count_values(s, target).0).collect();
    let table = ContingencyTable::new(source.values.clone(), target.values.clone(), counts)?;
    if table.grand_total() == 0 {
        return Err(Error::NotTestable(format!(
            "no usable `{}` answers in the `{}` counterfactual sets",
            target.name, source.name
        )));
    }
    Ok(table)
}

/// Counts needed to test and weight one ordered axis pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTable {
    pub source: String,
    pub target: String,
    pub table: ContingencyTable,
}

/// Everything global aggregation needs from one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTables {
    pub prompt: String,
    pub initial_counts: BTreeMap<String, Vec<u64>>,
    pub pairs: Vec<PairTable>,
}

impl PromptTables {
    /// Tables for every ordered pair of distinct axes. Pairs whose table is
    /// empty are recorded as all-zero tables so schemas stay aligned.
    pub fn from_data(data: &PromptData, axes: &AxisSet) -> Result<Self> {
        let all: Vec<&BiasAxis> = axes.axes().iter().collect();
        data.check_coverage(&all)?;
        let initial_counts = all
            .iter()
            .map(|a| (a.name.clone(), count_values(&data.initial, a).0))
            .collect();
        let mut pairs = Vec::new();
        for source in &all {
            let cfs = data.cf_sets(source)?;
            for target in all.iter().filter(|t| t.name != source.name) {
                let counts = cfs.iter().map(|s| count_values(s, target).0).collect();
                pairs.push(PairTable {
                    source: source.name.clone(),
                    target: target.name.clone(),
                    table: ContingencyTable::new(source.values.clone(), target.values.clone(), counts)?,
                });
            }
        }
        Ok(PromptTables { prompt: data.prompt.clone(), initial_counts, pairs })
    }
}

/// Intervened distribution from a table's rows: raw column sums when rows
/// have equal totals, otherwise the sum of normalized rows.
fn distribution_from_rows(table: &ContingencyTable, target: &BiasAxis) -> Result<CategoricalDistribution> {
    let totals = table.row_totals();
    let used: Vec<usize> = (0..totals.len()).filter(|&i| totals[i] > 0).collect();
    if used.len() != totals.len() {
        return Err(Error::EmptyDistribution(target.name.clone()));
    }
    let equal = totals.windows(2).all(|w| w[0] == w[1]);
    let mut acc = vec![0.0; target.k()];
    for (row, total) in table.counts.iter().zip(&totals) {
        for (a, c) in acc.iter_mut().zip(row) {
            *a += if equal { *c as f64 } else { *c as f64 / *total as f64 };
        }
    }
    CategoricalDistribution::for_axis(target, acc)?.normalize()
}

fn weigh_pair(
    initial_counts: &[u64],
    table: &ContingencyTable,
    target: &BiasAxis,
    ideal: &CategoricalDistribution,
) -> Result<(f64, f64)> {
    let chi = chi_square_p(table)?;
    let d_init = CategoricalDistribution::for_axis(target, initial_counts.iter().map(|&c| c as f64).collect())?
        .normalize()
        .map_err(|_| Error::EmptyDistribution(target.name.clone()))?;
    let d_int = distribution_from_rows(table, target)?;
    let is_value = normalized_bias(&d_init, ideal)? - normalized_bias(&d_int, ideal)?;
    Ok((is_value, chi.p))
}

fn sort_edges(edges: &mut [Edge]) {
    edges.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
}

/// Sums per-prompt tables cellwise and keeps pairs with `p < p_threshold`
/// and, when given, `|IS| > is_floor`.
pub fn aggregate(
    per_prompt: &[PromptTables],
    axes: &AxisSet,
    p_threshold: f64,
    is_floor: Option<f64>,
    ideals: &Ideals,
    scope: GraphScope,
) -> Result<Discovery> {
    let first = per_prompt
        .first()
        .ok_or_else(|| Error::invalid("aggregation needs at least one prompt"))?;
    for other in &per_prompt[1..] {
        let same = other.pairs.len() == first.pairs.len()
            && other
                .pairs
                .iter()
                .zip(&first.pairs)
                .all(|(a, b)| a.source == b.source && a.target == b.target);
        if !same {
            return Err(Error::invalid(format!(
                "prompt `{}` has a different pair layout from `{}`",
                other.prompt, first.prompt
            )));
        }
    }
    let results = (0..first.pairs.len())
        .into_par_iter()
        .map(|k| {
            let pair = &first.pairs[k];
            let tables: Vec<ContingencyTable> = per_prompt.iter().map(|p| p.pairs[k].table.clone()).collect();
            let summed = ContingencyTable::sum(&tables)?;
            let target = axes.require(&pair.target)?;
            let mut init = vec![0u64; target.k()];
            for p in per_prompt {
                let counts = p.initial_counts.get(&pair.target).ok_or_else(|| {
                    Error::invalid(format!("prompt `{}` lacks counts for `{}`", p.prompt, pair.target))
                })?;
                if counts.len() != init.len() {
                    return Err(Error::invalid(format!("count layout mismatch on `{}`", pair.target)));
                }
                for (a, c) in init.iter_mut().zip(counts) {
                    *a += c;
                }
            }
            Ok(match weigh_pair(&init, &summed, target, &ideals.get(target)) {
                Ok((is_weight, p_value)) => Ok(Edge {
                    source: pair.source.clone(),
                    target: pair.target.clone(),
                    is_weight,
                    p_value,
                }),
                Err(e @ (Error::NotTestable(_) | Error::EmptyDistribution(_))) => Err(SkippedPair {
                    source: pair.source.clone(),
                    target: pair.target.clone(),
                    reason: e.to_string(),
                }),
                Err(e) => return Err(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut edges = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(edge) => {
                let floor_ok = is_floor.is_none_or(|f| edge.is_weight.abs() > f);
                if edge.p_value < p_threshold && floor_ok {
                    edges.push(edge);
                }
            }
            Err(skip) => {
                log::info!("skipping {} -> {}: {}", skip.source, skip.target, skip.reason);
                skipped.push(skip);
            }
        }
    }
    sort_edges(&mut edges);
    Ok(Discovery {
        graph: BiasGraph { nodes: axes.names().map(String::from).collect(), edges, scope },
        skipped,
    })
}

/// Prompt-level graph: p filter only.
pub fn discover_edges(
    data: &PromptData,
    axes: &AxisSet,
    p_threshold: f64,
    ideals: &Ideals,
) -> Result<Discovery> {
    let tables = PromptTables::from_data(data, axes)?;
    aggregate(&[tables], axes, p_threshold, None, ideals, GraphScope::Prompt)
}

/// Corpus-level graph over summed tables with both filters.
pub fn global_aggregate(
    per_prompt: &[PromptTables],
    axes: &AxisSet,
    p_threshold: f64,
    is_floor: f64,
    ideals: &Ideals,
) -> Result<Discovery> {
    aggregate(per_prompt, axes, p_threshold, Some(is_floor), ideals, GraphScope::Global)
}

/// How edge magnitudes combine into a node's influence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfluenceAggregation {
    #[default]
    Sum,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub axis: String,
    pub out_influence: f64,
    pub in_influence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub nodes: Vec<NodeStats>,
    /// Node with the largest outgoing influence; `None` when every node is 0.
    pub max_impact: Option<String>,
    /// Node with the largest incoming influence; `None` when every node is 0.
    pub max_influenced: Option<String>,
}

fn argmax(nodes: &[NodeStats], key: impl Fn(&NodeStats) -> f64) -> Option<String> {
    let mut best: Option<&NodeStats> = None;
    for n in nodes {
        if key(n) > best.map_or(0.0, &key) {
            best = Some(n);
        }
    }
    best.map(|n| n.axis.clone())
}

pub fn node_stats(g: &BiasGraph, aggregation: InfluenceAggregation) -> NodeReport {
    let combine = |acc: f64, w: f64| match aggregation {
        InfluenceAggregation::Sum => acc + w.abs(),
        InfluenceAggregation::Max => acc.max(w.abs()),
    };
    let nodes: Vec<NodeStats> = g
        .nodes
        .iter()
        .map(|axis| NodeStats {
            axis: axis.clone(),
            out_influence: g.edges.iter().filter(|e| &e.source == axis).fold(0.0, |a, e| combine(a, e.is_weight)),
            in_influence: g.edges.iter().filter(|e| &e.target == axis).fold(0.0, |a, e| combine(a, e.is_weight)),
        })
        .collect();
    NodeReport {
        max_impact: argmax(&nodes, |n| n.out_influence),
        max_influenced: argmax(&nodes, |n| n.in_influence),
        nodes,
    }
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

impl BiasGraph {
    /// Self-loops are never exported.
    fn exported_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.source != e.target)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph bias {\n");
        for n in &self.nodes {
            let _ = writeln!(out, "  {};", dot_quote(n));
        }
        for e in self.exported_edges() {
            let _ = writeln!(
                out,
                "  {} -> {} [label=\"IS={:.3} p={:.1e}\"];",
                dot_quote(&e.source),
                dot_quote(&e.target),
                e.is_weight,
                e.p_value
            );
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let exported = BiasGraph {
            edges: self.exported_edges().cloned().collect(),
            ..self.clone()
        };
        serde_json::to_string_pretty(&exported).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema { location: "graph".into(), message: e.to_string() })
    }

    /// `source,target,is,p` rows at six significant digits.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::invalid(e.to_string());
        w.write_record(["source", "target", "is", "p"]).map_err(io)?;
        for e in self.exported_edges() {
            w.write_record([&e.source, &e.target, &sig(e.is_weight, 6), &sig(e.p_value, 6)])
                .map_err(io)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::invalid(e.to_string()))?)
            .map_err(|e| Error::invalid(e.to_string()))
    }
}

impl NodeReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::invalid(e.to_string());
        w.write_record(["axis", "out_influence", "in_influence"]).map_err(io)?;
        for n in &self.nodes {
            w.write_record([&n.axis, &sig(n.out_influence, 6), &sig(n.in_influence, 6)]).map_err(io)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::invalid(e.to_string()))?)
            .map_err(|e| Error::invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(s: &str, t: &str, w: f64) -> Edge {
        Edge { source: s.into(), target: t.into(), is_weight: w, p_value: 1.2e-5 }
    }

    fn graph(edges: Vec<Edge>) -> BiasGraph {
        BiasGraph { nodes: vec!["a".into(), "b".into(), "c".into()], edges, scope: GraphScope::Prompt }
    }

    #[test]
    fn node_stats_examples() {
        let empty = node_stats(&graph(vec![]), InfluenceAggregation::Sum);
        assert!(empty.nodes.iter().all(|n| n.out_influence == 0.0 && n.in_influence == 0.0));
        assert_eq!(empty.max_impact, None);
        let one = node_stats(&graph(vec![edge("a", "b", -0.4)]), InfluenceAggregation::Sum);
        assert_eq!(one.nodes[0].out_influence, 0.4);
        assert_eq!(one.nodes[1].in_influence, 0.4);
        let star = node_stats(
            &graph(vec![edge("b", "a", 0.1), edge("b", "c", 0.2), edge("a", "c", 0.25)]),
            InfluenceAggregation::Sum,
        );
        assert_eq!(star.max_impact.as_deref(), Some("b"));
        assert_eq!(star.max_influenced.as_deref(), Some("c"));
        let max = node_stats(
            &graph(vec![edge("b", "a", 0.1), edge("b", "c", 0.2), edge("a", "c", 0.25)]),
            InfluenceAggregation::Max,
        );
        assert_eq!(max.max_impact.as_deref(), Some("a"));
    }

    #[test]
    fn ties_follow_node_order() {
        let g = graph(vec![edge("c", "a", 0.3), edge("b", "a", 0.3)]);
        assert_eq!(node_stats(&g, InfluenceAggregation::Sum).max_impact.as_deref(), Some("b"));
    }

    #[test]
    fn dot_layout() {
        let empty = graph(vec![]).to_dot();
        assert_eq!(empty, "digraph bias {\n  \"a\";\n  \"b\";\n  \"c\";\n}\n");
        let one = graph(vec![edge("a", "b", 0.4)]).to_dot();
        assert!(one.contains("  \"a\" -> \"b\" [label=\"IS=0.400 p=1.2e-5\"];\n"), "{one}");
        let looped = graph(vec![edge("a", "a", 0.4)]).to_dot();
        assert!(!looped.contains("->"));
    }

    #[test]
    fn json_roundtrip() {
        let g = graph(vec![edge("a", "b", 0.4), edge("b", "c", -1.0 / 3.0)]);
        assert_eq!(BiasGraph::from_json(&g.to_json().unwrap()).unwrap(), g);
    }

    #[test]
    fn csv_layout() {
        let g = graph(vec![edge("a", "b", 1.0 / 3.0)]);
        assert_eq!(g.to_csv().unwrap(), "source,target,is,p\na,b,0.333333,1.2e-5\n");
    }

    #[test]
    fn deterministic_table() {
        let g = BiasAxis::with_prefix_templates("gender", &["male", "female"]).unwrap();
        let a = BiasAxis::with_prefix_templates("age", &["young", "old"]).unwrap();
        let ann = |v: &str| crate::domain::ImageAnnotation::from_pairs([("age", v)]);
        let m = AnnotatedImageSet::new("x", None, vec![ann("young"); 48]);
        let f = AnnotatedImageSet::new("x", None, vec![ann("old"); 48]);
        let t = contingency_table(&[&m, &f], &g, &a).unwrap();
        assert_eq!(t.counts, vec![vec![48, 0], vec![0, 48]]);
        let blank = AnnotatedImageSet::new("x", None, vec![ann("unknown"); 2]);
        assert!(matches!(contingency_table(&[&blank, &blank], &g, &a), Err(Error::NotTestable(_))));
    }
}
