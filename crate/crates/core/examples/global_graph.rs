//! Corpus-level graph across the bundled occupations: tables are summed
//! over prompts before testing, with a stricter threshold and an IS floor.

use biasengine::connect::{collect_prompt_data, Ideals};
use biasengine::domain::PromptSpec;
use biasengine::graph::{global_aggregate, node_stats, InfluenceAggregation, PromptTables, GLOBAL_IS_FLOOR, GLOBAL_P_THRESHOLD};
use biasengine::plan::GenerationPlan;
use biasengine::providers::GenerationMode;
use biasengine::scenarios::{occupation_axes, occupation_provider, OCCUPATIONS, OCCUPATION_SEED};

fn main() -> biasengine::Result<()> {
    let axes = occupation_axes();
    let provider = occupation_provider(OCCUPATION_SEED)?;
    let mode = GenerationMode::Sampled { seed: 11 };
    let tables = OCCUPATIONS
        .iter()
        .map(|occ| {
            let plan = GenerationPlan::unmitigated(occ, 48)?;
            let data = collect_prompt_data(&provider, PromptSpec::new(occ, &axes)?, &plan, mode)?;
            PromptTables::from_data(&data, &axes)
        })
        .collect::<biasengine::Result<Vec<_>>>()?;

    let found = global_aggregate(&tables, &axes, GLOBAL_P_THRESHOLD, GLOBAL_IS_FLOOR, &Ideals::uniform())?;
    print!("{}", found.graph.to_dot());
    let report = node_stats(&found.graph, InfluenceAggregation::Sum);
    print!("{}", report.to_csv()?);
    Ok(())
}
