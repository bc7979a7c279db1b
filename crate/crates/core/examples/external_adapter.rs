//! Auditing through an external generator. The example re-runs itself with
//! `--serve` as the adapter process: it reads one JSON request per line on
//! stdin and answers with one annotated image set on stdout.

use std::io::{BufRead, Write};

use biasengine::connect::{build_matrix, collect_prompt_data, Ideals};
use biasengine::domain::{AnnotatedImageSet, BiasAxis, ImageAnnotation, PromptSpec};
use biasengine::plan::GenerationPlan;
use biasengine::providers::{effective_timeout, GenerationMode, GenerationRequest, SubprocessAdapter};
use biasengine::scenarios::coupled_axes;

/// Stand-in generator: images follow the requested constraints and are
/// otherwise male, indoors and formal.
fn serve() -> biasengine::Result<()> {
    let mut line = String::new();
    std::io::stdin().lock().read_line(&mut line).map_err(|e| biasengine::Error::Config(e.to_string()))?;
    let req: GenerationRequest =
        serde_json::from_str(&line).map_err(|e| biasengine::Error::Config(e.to_string()))?;
    let mut attrs = [("gender", "male"), ("environment", "indoors"), ("clothing", "formal")]
        .map(|(a, v)| (a.to_string(), v.to_string()));
    for c in &req.intervention {
        if let Some(slot) = attrs.iter_mut().find(|(a, _)| *a == c.axis) {
            slot.1 = c.value.clone();
        }
    }
    let image = ImageAnnotation { attrs: attrs.into_iter().collect() };
    let set = AnnotatedImageSet::new(req.prompt.clone(), req.set_label(), vec![image; req.n]);
    let text = serde_json::to_string(&set).map_err(|e| biasengine::Error::Config(e.to_string()))?;
    writeln!(std::io::stdout(), "{text}").map_err(|e| biasengine::Error::Config(e.to_string()))?;
    Ok(())
}

fn main() -> biasengine::Result<()> {
    if std::env::args().nth(1).as_deref() == Some("--serve") {
        return serve();
    }
    let exe = std::env::current_exe().map_err(|e| biasengine::Error::Config(e.to_string()))?;
    let command = vec![exe.display().to_string(), "--serve".to_string()];
    let axes = coupled_axes();
    let adapter = SubprocessAdapter::new(&command, axes.clone(), effective_timeout(None)?, 4)?;

    let plan = GenerationPlan::unmitigated("nurse", 12)?;
    let data = collect_prompt_data(&adapter, PromptSpec::new("nurse", &axes)?, &plan, GenerationMode::ExactCounts)?;
    println!("initial set: {} images, {} counterfactual sets", data.initial.size(), data.counterfactuals.len());
    let measured: Vec<&BiasAxis> = axes.axes().iter().collect();
    print!("{}", build_matrix(&data, &axes, &measured, &Ideals::uniform())?.to_table());
    Ok(())
}
