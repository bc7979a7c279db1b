//! Prompt-level bias graph: keep the sensitivities whose counterfactual
//! contingency tables reject independence.

use biasengine::connect::{collect_prompt_data, Ideals};
use biasengine::domain::PromptSpec;
use biasengine::graph::{discover_edges, node_stats, InfluenceAggregation, PROMPT_P_THRESHOLD};
use biasengine::plan::GenerationPlan;
use biasengine::providers::{GenerationMode, SyntheticProvider};
use biasengine::scenarios::{coupled_axes, coupled_model};

fn main() -> biasengine::Result<()> {
    let axes = coupled_axes();
    let provider = SyntheticProvider::single(coupled_model("nurse")?);
    let plan = GenerationPlan::unmitigated("nurse", 96)?;
    let data = collect_prompt_data(&provider, PromptSpec::new("nurse", &axes)?, &plan, GenerationMode::ExactCounts)?;

    let found = discover_edges(&data, &axes, PROMPT_P_THRESHOLD, &Ideals::uniform())?;
    print!("{}", found.graph.to_dot());
    for s in &found.skipped {
        println!("// untestable {} -> {}: {}", s.source, s.target, s.reason);
    }
    let report = node_stats(&found.graph, InfluenceAggregation::Sum);
    println!("\nmax impact: {:?}, max influenced: {:?}", report.max_impact, report.max_influenced);
    Ok(())
}
