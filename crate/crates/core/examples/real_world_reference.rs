//! Measuring bias against a non-uniform reference distribution, such as
//! workforce statistics, instead of parity.

use std::collections::BTreeMap;

use biasengine::connect::{build_matrix, collect_prompt_data, initial_biases, Ideals};
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

    // hypothetical reference: 12% of nurses are men
    let reference = Ideals::from_weights(&axes, &BTreeMap::from([("gender".to_string(), vec![0.12, 0.88])]))?;
    for (name, ideals) in [("uniform", Ideals::uniform()), ("reference", reference)] {
        let w = initial_biases(&data, &measured, &ideals)?;
        println!("{name}: gender bias {:.3}, environment {:.3}, clothing {:.3}", w[0], w[1], w[2]);
        print!("{}", build_matrix(&data, &axes, &measured, &ideals)?.to_table());
    }
    Ok(())
}
