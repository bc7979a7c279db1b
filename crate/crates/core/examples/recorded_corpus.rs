//! Auditing image sets recorded by an external generation and VQA stack:
//! write a corpus to disk, load it back with validation, and evaluate it.

use biasengine::concepts::{default_stopwords, SynonymTable};
use biasengine::connect::{collect_prompt_data, PromptData};
use biasengine::domain::PromptSpec;
use biasengine::evaluate::evaluate_prompt;
use biasengine::plan::GenerationPlan;
use biasengine::providers::{load_recorded_corpus, GenerationMode, SyntheticProvider};
use biasengine::scenarios::{coupled_axes, coupled_model};

fn main() -> biasengine::Result<()> {
    let axes = coupled_axes();
    let provider = SyntheticProvider::single(coupled_model("nurse")?);
    let plan = GenerationPlan::unmitigated("nurse", 24)?;
    let data = collect_prompt_data(&provider, PromptSpec::new("nurse", &axes)?, &plan, GenerationMode::ExactCounts)?;

    // one file per set, as an external pipeline might leave them
    let dir = std::env::temp_dir().join(format!("biasengine-recorded-{}", std::process::id()));
    let io = |e: std::io::Error| biasengine::Error::Config(e.to_string());
    std::fs::create_dir_all(&dir).map_err(io)?;
    let sets = std::iter::once(&data.initial).chain(data.counterfactuals.values());
    for (i, set) in sets.enumerate() {
        let text = serde_json::to_string_pretty(set).map_err(|e| biasengine::Error::Config(e.to_string()))?;
        std::fs::write(dir.join(format!("set_{i:02}.json")), text).map_err(io)?;
    }

    let corpus = load_recorded_corpus(&dir, &axes)?;
    println!("loaded {} sets for prompts {:?}", corpus.sets.len(), corpus.base_prompts());
    for data in PromptData::group_corpus(&corpus.sets, &axes)? {
        let eval = evaluate_prompt(&data, &axes, &SynonymTable::empty(), &default_stopwords())?;
        for a in &eval.axes {
            let cas: Vec<String> = a.cas.iter().map(|c| format!("{} {:.3}", c.value, c.cas)).collect();
            println!("{:<12} MAD {:.3}  CAS [{}]", a.axis, a.mad, cas.join(", "));
        }
    }
    std::fs::remove_dir_all(&dir).map_err(io)?;
    Ok(())
}
