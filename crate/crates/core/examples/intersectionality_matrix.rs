//! Counterfactual sensitivity matrix for one prompt on a synthetic model
//! where clothing depends on environment.

use biasengine::connect::{aggregate_entanglement, build_matrix, collect_prompt_data, Ideals};
use biasengine::domain::{BiasAxis, PromptSpec};
use biasengine::plan::GenerationPlan;
use biasengine::providers::{GenerationMode, SyntheticProvider};
use biasengine::scenarios::{coupled_axes, coupled_model};

fn main() -> biasengine::Result<()> {
    let axes = coupled_axes();
    let provider = SyntheticProvider::single(coupled_model("nurse")?);
    let plan = GenerationPlan::unmitigated("nurse", 48)?;
    let data = collect_prompt_data(&provider, PromptSpec::new("nurse", &axes)?, &plan, GenerationMode::ExactCounts)?;

    let measured: Vec<&BiasAxis> = axes.axes().iter().collect();
    let matrix = build_matrix(&data, &axes, &measured, &Ideals::uniform())?;
    println!("rows: intervened axis, columns: measured axis\n");
    print!("{}", matrix.to_table());
    println!("\nentanglement = {:.4}", aggregate_entanglement(&matrix)?);
    Ok(())
}
