//! Command pipelines. Inputs are loaded and checked before any
//! computation; artifacts are written only once a command has finished.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::artifacts::{check_output_dir, slug, ArtifactSet, Header};
use super::config::{Command, ModeName, OutputFormat, ProviderConfig, RunConfig, ScenarioName};
use crate::concepts::{default_stopwords, SynonymTable};
use crate::connect::{aggregate_entanglement, build_matrix, collect_prompt_data, Ideals, IntersectionalityMatrix, PromptData};
use crate::domain::{AxisSet, BiasAxis, PromptSpec};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_prompt, PromptEvaluation};
use crate::graph::{
    discover_edges, global_aggregate, node_stats, Discovery, GraphScope, InfluenceAggregation, NodeReport,
    PromptTables, GLOBAL_IS_FLOOR, GLOBAL_P_THRESHOLD, PROMPT_P_THRESHOLD,
};
use crate::intermit::{
    intermit_run, mitigation_metrics, MitigationConfig, MitigationTrace, PriorityVector, Termination,
    DEFAULT_EPSILON, DEFAULT_WORSEN_DELTA,
};
use crate::numfmt::sig;
use crate::plan::GenerationPlan;
use crate::providers::{
    effective_timeout, load_recorded_corpus, GenerationMode, HttpAdapter, ImageSetProvider, RecordedCorpus,
    SubprocessAdapter, SyntheticProvider,
};
use crate::scenarios::{
    adversarial_model, coupled_model, occupation_axes, occupation_provider, OCCUPATIONS, OCCUPATION_SEED,
};
use crate::sensitivity::{sensitivity_sweep, SweepInputs};

pub const DEFAULT_OUT_DIR: &str = "biasengine-out";

/// Exit status when mitigation stops without reaching its target.
pub const EXIT_NOT_CONVERGED: i32 = 5;

/// Command-line settings that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub force: bool,
    pub p_threshold: Option<f64>,
    pub epsilon: Option<f64>,
    pub format: Option<OutputFormat>,
}

#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub summary: String,
    pub written: Vec<PathBuf>,
}

/// Demo scenario: every occupation, sampled generation, one mitigation.
pub const DEMO_MITIGATION_PROMPT: &str = "nurse";
pub const DEMO_B_STAR: [&str; 3] = ["gender", "environment", "clothing"];
pub const DEMO_PRIORITY: [f64; 3] = [0.5, 0.25, 0.25];

pub fn demo_config(seed: u64) -> RunConfig {
    RunConfig {
        command: Some(Command::Demo),
        provider: Some(ProviderConfig::Scenario { name: ScenarioName::Occupation }),
        prompts: OCCUPATIONS.iter().map(|s| s.to_string()).collect(),
        mode: ModeName::Sampled,
        seed,
        b_star: DEMO_B_STAR.iter().map(|s| s.to_string()).collect(),
        priority: DEMO_B_STAR.iter().map(|s| s.to_string()).zip(DEMO_PRIORITY).collect(),
        ..RunConfig::default()
    }
}

/// Loads the config, applies overrides and runs `command`.
pub fn run(command: Command, config_path: Option<&Path>, overrides: &Overrides) -> Result<Outcome> {
    let mut cfg = match (command, config_path) {
        (Command::Demo, Some(_)) => return Err(Error::config("demo runs the bundled scenario and takes no --config")),
        (Command::Demo, None) => demo_config(overrides.seed.unwrap_or(0)),
        (_, Some(p)) => RunConfig::load(p)?,
        (_, None) => return Err(Error::config(format!("`{}` needs --config", command.name()))),
    };
    if let Some(c) = cfg.command.filter(|c| *c != command) {
        log::warn!("config names command `{}`; running `{}`", c.name(), command.name());
    }
    cfg.command = Some(command);
    apply_overrides(&mut cfg, overrides);
    cfg.validate()?;
    let out = overrides.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    check_output_dir(&out, overrides.force)?;

    let ctx = Context::load(&cfg)?;
    let header = Header::new(cfg.seed, cfg.hash());
    let mut artifacts = ArtifactSet::new(header, cfg.format);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let (exit_code, summary) = pool.install(|| match command {
        Command::Evaluate => cmd_evaluate(&cfg, &ctx, &mut artifacts),
        Command::Connect => cmd_connect(&cfg, &ctx, &mut artifacts),
        Command::Graph => cmd_graph(&cfg, &ctx, &mut artifacts),
        Command::Mitigate => cmd_mitigate(&cfg, &ctx, &mut artifacts),
        Command::Sensitivity => cmd_sensitivity(&cfg, &ctx, &mut artifacts),
        Command::Demo => cmd_demo(&cfg, &ctx, &mut artifacts),
    })?;
    if command == Command::Demo {
        artifacts.text("summary.txt", &summary);
    }
    let written = artifacts.write(&out)?;
    Ok(Outcome { exit_code, summary, written })
}

fn apply_overrides(cfg: &mut RunConfig, o: &Overrides) {
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if o.jobs.is_some() {
        cfg.jobs = o.jobs;
    }
    if o.p_threshold.is_some() {
        cfg.p_threshold = o.p_threshold;
    }
    if o.epsilon.is_some() {
        cfg.epsilon = o.epsilon;
    }
    if o.format.is_some() {
        cfg.format = o.format;
    }
}

/// Missing or unreadable input files are configuration errors.
fn input_error(e: Error) -> Error {
    match e {
        Error::Io { path, source } => Error::config(format!("cannot read {path}: {source}")),
        other => other,
    }
}

enum Source {
    Generator(Box<dyn ImageSetProvider>),
    Recorded(RecordedCorpus),
}

/// Validated inputs shared by every command.
struct Context {
    axes: AxisSet,
    source: Source,
    prompts: Vec<String>,
    ideals: Ideals,
    synonyms: SynonymTable,
    mode: GenerationMode,
}

impl Context {
    fn load(cfg: &RunConfig) -> Result<Self> {
        let provider = cfg
            .provider
            .clone()
            .ok_or_else(|| Error::config("config names no provider"))?;
        let file_axes = cfg.axes.as_deref().map(AxisSet::load).transpose().map_err(input_error)?;
        let need_axes = || file_axes.clone().ok_or_else(|| Error::config("this provider needs an `axes` file"));
        let parallelism = cfg
            .jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        let scenario_prompts = |default: &str| {
            if cfg.prompts.is_empty() {
                vec![default.to_string()]
            } else {
                cfg.prompts.clone()
            }
        };
        let (axes, source, default_prompts) = match &provider {
            ProviderConfig::Synthetic { path } => {
                let p = SyntheticProvider::load(path).map_err(input_error)?;
                let axes = match &file_axes {
                    Some(a) => a.clone(),
                    None => p.models()[0].axes().clone(),
                };
                if let Some(m) = p.models().iter().find(|m| m.axes() != &axes) {
                    return Err(Error::config(format!("model `{}` uses different axes", m.prompt_key())));
                }
                let keys = p.models().iter().map(|m| m.prompt_key().to_string()).collect();
                (axes, Source::Generator(Box::new(p)), keys)
            }
            ProviderConfig::Scenario { name } => {
                let (provider, axes, prompts) = match name {
                    ScenarioName::Occupation => {
                        let prompts = if cfg.prompts.is_empty() {
                            OCCUPATIONS.iter().map(|s| s.to_string()).collect()
                        } else {
                            cfg.prompts.clone()
                        };
                        (occupation_provider(OCCUPATION_SEED)?, occupation_axes(), prompts)
                    }
                    ScenarioName::Coupled | ScenarioName::Adversarial => {
                        let prompts = scenario_prompts("nurse");
                        let build = if *name == ScenarioName::Coupled { coupled_model } else { adversarial_model };
                        let models = prompts.iter().map(|p| build(p)).collect::<Result<Vec<_>>>()?;
                        let axes = models[0].axes().clone();
                        (SyntheticProvider::new(models)?, axes, prompts)
                    }
                };
                if file_axes.is_some() {
                    log::warn!("scenario providers use their own axes; ignoring the `axes` file");
                }
                (axes, Source::Generator(Box::new(provider)), prompts)
            }
            ProviderConfig::Recorded { path } => {
                let axes = need_axes()?;
                let corpus = load_recorded_corpus(path, &axes).map_err(input_error)?;
                let prompts = corpus.base_prompts();
                (axes, Source::Recorded(corpus), prompts)
            }
            ProviderConfig::Subprocess { command, .. } => {
                let axes = need_axes()?;
                let timeout = effective_timeout(provider.timeout())?;
                let mut adapter = SubprocessAdapter::new(command, axes.clone(), timeout, parallelism)?;
                if let Some(dir) = &cfg.base_dir {
                    adapter = adapter.with_working_dir(dir);
                }
                (axes, Source::Generator(Box::new(adapter)), Vec::new())
            }
            ProviderConfig::Http { url, .. } => {
                let axes = need_axes()?;
                let timeout = effective_timeout(provider.timeout())?;
                let adapter = HttpAdapter::new(url.clone(), axes.clone(), timeout, parallelism);
                (axes, Source::Generator(Box::new(adapter)), Vec::new())
            }
        };
        let prompts = if cfg.prompts.is_empty() { default_prompts } else { cfg.prompts.clone() };
        if prompts.is_empty() {
            return Err(Error::config("no prompts to audit; list them under `prompts`"));
        }
        let ideals = Ideals::from_weights(&axes, &cfg.ideals)?;
        let synonyms = match &cfg.synonyms {
            Some(p) => SynonymTable::load(p).map_err(input_error)?,
            None => SynonymTable::empty(),
        };
        let mode = match cfg.mode {
            ModeName::ExactCounts => GenerationMode::ExactCounts,
            ModeName::Sampled => GenerationMode::Sampled { seed: cfg.seed },
        };
        Ok(Context { axes, source, prompts, ideals, synonyms, mode })
    }

    fn generator(&self) -> Result<&dyn ImageSetProvider> {
        match &self.source {
            Source::Generator(p) => Ok(p.as_ref()),
            Source::Recorded(_) => Err(Error::config("this command needs a provider that can generate images")),
        }
    }

    fn measured(&self) -> Vec<&BiasAxis> {
        self.axes.axes().iter().filter(|a| !a.is_inert()).collect()
    }

    /// Initial and counterfactual sets for every prompt, in prompt order.
    fn corpus(&self, budget: u64) -> Result<Vec<PromptData>> {
        match &self.source {
            Source::Recorded(corpus) => {
                let grouped = PromptData::group_corpus(&corpus.sets, &self.axes)?;
                self.prompts
                    .iter()
                    .map(|p| {
                        grouped
                            .iter()
                            .find(|d| &d.prompt == p)
                            .cloned()
                            .ok_or_else(|| Error::invalid(format!("no initial set recorded for prompt `{p}`")))
                    })
                    .collect()
            }
            Source::Generator(provider) => self
                .prompts
                .par_iter()
                .map(|p| {
                    let plan = GenerationPlan::unmitigated(p, budget)?;
                    collect_prompt_data(provider.as_ref(), PromptSpec::new(p, &self.axes)?, &plan, self.mode)
                })
                .collect(),
        }
    }
}

type Run = Result<(i32, String)>;

fn csv_text(rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).map_err(|e| Error::invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

fn strings<const N: usize>(items: [&str; N]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn evaluate_stage(ctx: &Context, corpus: &[PromptData], artifacts: &mut ArtifactSet) -> Result<String> {
    let stopwords = default_stopwords();
    let reports = corpus
        .par_iter()
        .map(|d| evaluate_prompt(d, &ctx.axes, &ctx.synonyms, &stopwords))
        .collect::<Result<Vec<PromptEvaluation>>>()?;
    artifacts.json("evaluate.json", "prompts", &reports)?;
    let mut cas_rows = vec![strings(["prompt", "axis", "value", "cas"])];
    let mut mad_rows = vec![strings(["prompt", "axis", "mad", "wasserstein_to_uniform", "stddev"])];
    for r in &reports {
        for a in &r.axes {
            for c in &a.cas {
                cas_rows.push(vec![r.prompt.clone(), a.axis.clone(), c.value.clone(), sig(c.cas, 6)]);
            }
            mad_rows.push(vec![
                r.prompt.clone(),
                a.axis.clone(),
                sig(a.mad, 6),
                sig(a.alternatives.wasserstein_to_uniform.value, 6),
                sig(a.alternatives.stddev.value, 6),
            ]);
        }
    }
    artifacts.csv("evaluate_cas.csv", &csv_text(cas_rows)?);
    artifacts.csv("evaluate_mad.csv", &csv_text(mad_rows)?);

    let mut summary = format!("evaluate: {} prompts\n  mean MAD per axis:\n", reports.len());
    for axis in ctx.measured() {
        let mads: Vec<f64> = reports
            .iter()
            .flat_map(|r| r.axes.iter().filter(|a| a.axis == axis.name).map(|a| a.mad))
            .collect();
        if !mads.is_empty() {
            let mean = mads.iter().sum::<f64>() / mads.len() as f64;
            summary.push_str(&format!("    {:<12} {:.3}\n", axis.name, mean));
        }
    }
    Ok(summary)
}

#[derive(Serialize)]
struct PromptMatrix {
    prompt: String,
    matrix: IntersectionalityMatrix,
    entanglement: f64,
}

fn connect_stage(ctx: &Context, corpus: &[PromptData], artifacts: &mut ArtifactSet) -> Result<String> {
    let measured = ctx.measured();
    let rows: Vec<&BiasAxis> = measured.clone();
    let axes = AxisSet::new(rows.iter().map(|a| (*a).clone()).collect())?;
    let matrices = corpus
        .par_iter()
        .map(|d| {
            let matrix = build_matrix(d, &axes, &measured, &ctx.ideals)?;
            let entanglement = aggregate_entanglement(&matrix)?;
            Ok(PromptMatrix { prompt: d.prompt.clone(), matrix, entanglement })
        })
        .collect::<Result<Vec<_>>>()?;
    artifacts.json("connect.json", "matrices", &matrices)?;
    let mut rows = vec![strings(["prompt", "source", "target", "is"])];
    let mut table = String::new();
    for m in &matrices {
        table.push_str(&format!("{}  (entanglement {:.3})\n{}\n", m.prompt, m.entanglement, m.matrix.to_table()));
        for (r, vals) in m.matrix.rows.iter().zip(&m.matrix.values) {
            for (c, v) in m.matrix.cols.iter().zip(vals) {
                rows.push(vec![m.prompt.clone(), r.clone(), c.clone(), sig(*v, 6)]);
            }
        }
    }
    artifacts.csv("connect.csv", &csv_text(rows)?);
    artifacts.text("connect.txt", &table);
    let most = matrices
        .iter()
        .max_by(|a, b| a.entanglement.total_cmp(&b.entanglement))
        .expect("corpus is non-empty");
    Ok(format!(
        "connect: {} matrices\n  most entangled prompt: {} ({:.3})\n",
        matrices.len(),
        most.prompt,
        most.entanglement
    ))
}

#[derive(Serialize)]
struct GraphArtifact<'a> {
    prompt: Option<&'a str>,
    p_threshold: f64,
    is_floor: Option<f64>,
    discovery: &'a Discovery,
    node_stats: &'a NodeReport,
}

fn write_graph(artifacts: &mut ArtifactSet, stem: &str, g: &GraphArtifact<'_>) -> Result<()> {
    artifacts.dot(&format!("{stem}.dot"), &g.discovery.graph.to_dot());
    artifacts.json(&format!("{stem}.json"), "graph", g)?;
    artifacts.csv(&format!("{stem}_edges.csv"), &g.discovery.graph.to_csv()?);
    artifacts.csv(&format!("{stem}_nodes.csv"), &g.node_stats.to_csv()?);
    Ok(())
}

fn graph_summary(label: &str, g: &GraphArtifact<'_>) -> String {
    format!(
        "graph ({label}): {} edges, {} skipped pairs; max impact {}, max influenced {}\n",
        g.discovery.graph.edges.iter().filter(|e| e.source != e.target).count(),
        g.discovery.skipped.len(),
        g.node_stats.max_impact.as_deref().unwrap_or("none"),
        g.node_stats.max_influenced.as_deref().unwrap_or("none"),
    )
}

fn graph_stage(
    cfg: &RunConfig,
    ctx: &Context,
    corpus: &[PromptData],
    scope: GraphScope,
    artifacts: &mut ArtifactSet,
) -> Result<String> {
    let axes = AxisSet::new(ctx.measured().into_iter().cloned().collect())?;
    match scope {
        GraphScope::Global => {
            let p = cfg.p_threshold.unwrap_or(GLOBAL_P_THRESHOLD);
            let floor = cfg.is_floor.unwrap_or(GLOBAL_IS_FLOOR);
            let tables = corpus
                .par_iter()
                .map(|d| PromptTables::from_data(d, &axes))
                .collect::<Result<Vec<_>>>()?;
            let discovery = global_aggregate(&tables, &axes, p, floor, &ctx.ideals)?;
            let report = node_stats(&discovery.graph, InfluenceAggregation::Sum);
            let g = GraphArtifact { prompt: None, p_threshold: p, is_floor: Some(floor), discovery: &discovery, node_stats: &report };
            write_graph(artifacts, "graph", &g)?;
            Ok(graph_summary(&format!("global over {} prompts", corpus.len()), &g))
        }
        GraphScope::Prompt => {
            let p = cfg.p_threshold.unwrap_or(PROMPT_P_THRESHOLD);
            let found = corpus
                .par_iter()
                .map(|d| discover_edges(d, &axes, p, &ctx.ideals))
                .collect::<Result<Vec<_>>>()?;
            let mut summary = String::new();
            for (d, discovery) in corpus.iter().zip(&found) {
                let report = node_stats(&discovery.graph, InfluenceAggregation::Sum);
                let g = GraphArtifact { prompt: Some(&d.prompt), p_threshold: p, is_floor: None, discovery, node_stats: &report };
                write_graph(artifacts, &format!("graph-{}", slug(&d.prompt)), &g)?;
                summary.push_str(&graph_summary(&d.prompt, &g));
            }
            Ok(summary)
        }
    }
}

#[derive(Serialize)]
struct MitigationReport<'a> {
    traces: &'a [MitigationTrace],
    mit_amt: f64,
    mit_steps: f64,
}

fn mitigation_stage(
    cfg: &RunConfig,
    ctx: &Context,
    prompts: &[String],
    artifacts: &mut ArtifactSet,
) -> Result<(Vec<MitigationTrace>, String)> {
    let provider = ctx.generator()?;
    let b_star: Vec<String> = if cfg.b_star.is_empty() {
        ctx.measured().iter().map(|a| a.name.clone()).collect()
    } else {
        cfg.b_star.clone()
    };
    ctx.axes.subset(&b_star).map_err(|e| Error::config(e.to_string()))?;
    let priority = if cfg.priority.is_empty() {
        PriorityVector::equal(&ctx.axes.subset(&b_star)?)?
    } else {
        PriorityVector::from_map(&b_star, &cfg.priority)?
    };
    let mcfg = MitigationConfig {
        epsilon: cfg.epsilon.unwrap_or(DEFAULT_EPSILON),
        max_steps: cfg.max_steps,
        worsen_delta: cfg.worsen_delta.unwrap_or(DEFAULT_WORSEN_DELTA),
        ideals: ctx.ideals.clone(),
        budget: cfg.budget_n,
        mode: ctx.mode,
    };
    mcfg.validate()?;
    let traces = prompts
        .par_iter()
        .map(|p| intermit_run(provider, PromptSpec::new(p, &ctx.axes)?, &b_star, &priority, &mcfg))
        .collect::<Result<Vec<_>>>()?;
    let (mit_amt, mit_steps) = mitigation_metrics(&traces)?;
    artifacts.json("mitigate.json", "mitigation", &MitigationReport { traces: &traces, mit_amt, mit_steps })?;

    let mut rows = vec![strings([
        "prompt", "step", "selected_axis", "tau_before", "tau_after", "axis", "w_before", "w_after", "alert",
    ])];
    let mut summary = String::new();
    for t in &traces {
        summary.push_str(&format!(
            "mitigate {}: tau {:.3} -> {:.3} in {} steps ({:?})\n",
            t.prompt,
            t.initial_tau,
            t.final_tau,
            t.steps.len(),
            t.termination
        ));
        for (i, s) in t.steps.iter().enumerate() {
            summary.push_str(&format!("  step {}: {} (tau {:.3} -> {:.3})\n", i + 1, s.selected_axis, s.tau_before, s.tau_after));
            for a in &s.alerts {
                summary.push_str(&format!("  ALERT {}: bias rose {:.3} -> {:.3}\n", a.axis, a.before, a.after));
            }
            for (before, after) in s.w_before.iter().zip(&s.w_after) {
                let alert = s.alerts.iter().any(|a| a.axis == before.axis);
                rows.push(vec![
                    t.prompt.clone(),
                    (i + 1).to_string(),
                    s.selected_axis.clone(),
                    sig(s.tau_before, 6),
                    sig(s.tau_after, 6),
                    before.axis.clone(),
                    sig(before.value, 6),
                    sig(after.value, 6),
                    alert.to_string(),
                ]);
            }
        }
        if let Some(e) = &t.error {
            summary.push_str(&format!("  stopped by provider error: {e}\n"));
        }
    }
    summary.push_str(&format!("MitAmt {:.4}  MitSteps {:.4}\n", mit_amt, mit_steps));
    artifacts.csv("mitigate_steps.csv", &csv_text(rows)?);
    Ok((traces, summary))
}

fn cmd_evaluate(cfg: &RunConfig, ctx: &Context, artifacts: &mut ArtifactSet) -> Run {
    let corpus = ctx.corpus(cfg.budget_n)?;
    Ok((0, evaluate_stage(ctx, &corpus, artifacts)?))
}

fn cmd_connect(cfg: &RunConfig, ctx: &Context, artifacts: &mut ArtifactSet) -> Run {
    let corpus = ctx.corpus(cfg.budget_n)?;
    Ok((0, connect_stage(ctx, &corpus, artifacts)?))
}

fn default_scope(cfg: &RunConfig, ctx: &Context) -> GraphScope {
    cfg.scope.unwrap_or(if ctx.prompts.len() > 1 { GraphScope::Global } else { GraphScope::Prompt })
}

fn cmd_graph(cfg: &RunConfig, ctx: &Context, artifacts: &mut ArtifactSet) -> Run {
    let corpus = ctx.corpus(cfg.budget_n)?;
    Ok((0, graph_stage(cfg, ctx, &corpus, default_scope(cfg, ctx), artifacts)?))
}

fn cmd_mitigate(cfg: &RunConfig, ctx: &Context, artifacts: &mut ArtifactSet) -> Run {
    let (traces, summary) = mitigation_stage(cfg, ctx, &ctx.prompts, artifacts)?;
    let code = if traces.iter().any(|t| t.termination == Termination::ProviderError) {
        4
    } else if traces
        .iter()
        .any(|t| matches!(t.termination, Termination::Exhausted | Termination::MaxSteps))
    {
        EXIT_NOT_CONVERGED
    } else {
        0
    };
    Ok((code, summary))
}

fn cmd_sensitivity(cfg: &RunConfig, ctx: &Context, artifacts: &mut ArtifactSet) -> Run {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("sensitivity needs a `sweep` block"))?;
    let corpus = ctx.corpus(cfg.budget_n)?;
    let stopwords = default_stopwords();
    let inputs = SweepInputs {
        corpus: &corpus,
        axes: &ctx.axes,
        ideals: &ctx.ideals,
        synonyms: &ctx.synonyms,
        stopwords: &stopwords,
    };
    let report = sensitivity_sweep(&inputs, sweep.kind, &sweep.levels, sweep.repeats, cfg.seed)?;
    artifacts.json("sensitivity.json", "report", &report)?;
    artifacts.csv("sensitivity.csv", &report.to_csv()?);
    let mut summary = format!("sensitivity ({:?}, {} repeats)\n", sweep.kind, sweep.repeats);
    for l in &report.levels {
        let parts: Vec<String> = l
            .metrics
            .iter()
            .map(|m| format!("{} {:.2}%", m.metric.name(), 100.0 * m.mean_rel_delta))
            .collect();
        summary.push_str(&format!("  level {}: {}\n", sig(l.level, 6), parts.join(", ")));
    }
    Ok((0, summary))
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.inspect_err(|e| log::error!("demo stage `{name}` failed: {e}"))
}

fn cmd_demo(cfg: &RunConfig, ctx: &Context, artifacts: &mut ArtifactSet) -> Run {
    let corpus = stage("generate", ctx.corpus(cfg.budget_n))?;
    let mut summary = format!(
        "demo: {} occupations x {} axes, {} images per set, seed {}\n",
        corpus.len(),
        ctx.axes.len(),
        cfg.budget_n,
        cfg.seed
    );
    summary.push_str(&stage("evaluate", evaluate_stage(ctx, &corpus, artifacts))?);
    summary.push_str(&stage("connect", connect_stage(ctx, &corpus, artifacts))?);
    summary.push_str(&stage("graph", graph_stage(cfg, ctx, &corpus, GraphScope::Global, artifacts))?);
    let prompts = [DEMO_MITIGATION_PROMPT.to_string()];
    let (_, text) = stage("mitigate", mitigation_stage(cfg, ctx, &prompts, artifacts))?;
    summary.push_str(&text);
    Ok((0, summary))
}
