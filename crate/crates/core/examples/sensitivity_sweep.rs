//! Metric drift when a fraction of attribute answers is wrong, and when
//! fewer images are generated per set.

use biasengine::concepts::{default_stopwords, SynonymTable};
use biasengine::connect::{collect_prompt_data, Ideals};
use biasengine::domain::PromptSpec;
use biasengine::plan::GenerationPlan;
use biasengine::providers::GenerationMode;
use biasengine::scenarios::{occupation_axes, occupation_provider, OCCUPATION_SEED};
use biasengine::sensitivity::{sensitivity_sweep, SweepInputs, SweepKind};

fn main() -> biasengine::Result<()> {
    let axes = occupation_axes();
    let provider = occupation_provider(OCCUPATION_SEED)?;
    let corpus = ["chef", "nurse", "lawyer"]
        .iter()
        .map(|p| {
            let plan = GenerationPlan::unmitigated(p, 48)?;
            collect_prompt_data(&provider, PromptSpec::new(p, &axes)?, &plan, GenerationMode::Sampled { seed: 5 })
        })
        .collect::<biasengine::Result<Vec<_>>>()?;

    let stopwords = default_stopwords();
    let synonyms = SynonymTable::empty();
    let ideals = Ideals::uniform();
    let inputs = SweepInputs { corpus: &corpus, axes: &axes, ideals: &ideals, synonyms: &synonyms, stopwords: &stopwords };

    let errors = sensitivity_sweep(&inputs, SweepKind::VqaError, &[0.0, 0.05, 0.1, 0.2], 3, 1)?;
    println!("answer error rate sweep");
    print!("{}", errors.to_csv()?);

    let sizes = sensitivity_sweep(&inputs, SweepKind::ImageCount, &[10.0, 20.0, 40.0], 3, 1)?;
    println!("\nimage count sweep");
    print!("{}", sizes.to_csv()?);
    Ok(())
}
