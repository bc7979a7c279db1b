//! Priority-driven mitigation on two constructed scenarios: one where a
//! coupled axis is fixed along the way, and one where balancing gender
//! skews age and raises an alert.

use biasengine::domain::PromptSpec;
use biasengine::intermit::{intermit_run, MitigationConfig, MitigationTrace, PriorityVector};
use biasengine::providers::SyntheticProvider;
use biasengine::scenarios::{
    adversarial_axes, adversarial_model, coupled_axes, coupled_model, ADVERSARIAL_PRIORITY, COUPLED_PRIORITY,
};

fn report(trace: &MitigationTrace) {
    println!("{}: tau {:.3} -> {:.3} ({:?})", trace.prompt, trace.initial_tau, trace.final_tau, trace.termination);
    for (i, s) in trace.steps.iter().enumerate() {
        let gammas: Vec<String> = s.gamma_scores.iter().map(|g| format!("{} {:.3}", g.axis, g.value)).collect();
        println!("  step {}: mitigate {} [{}] tau {:.3} -> {:.3}", i + 1, s.selected_axis, gammas.join(", "), s.tau_before, s.tau_after);
        for a in &s.alerts {
            println!("    alert: {} bias {:.3} -> {:.3}", a.axis, a.before, a.after);
        }
    }
}

fn main() -> biasengine::Result<()> {
    let cfg = MitigationConfig::default();

    let axes = coupled_axes();
    let b_star: Vec<String> = axes.names().map(String::from).collect();
    let priority = PriorityVector::new(b_star.iter().cloned().zip(COUPLED_PRIORITY).collect())?;
    let provider = SyntheticProvider::single(coupled_model("nurse")?);
    report(&intermit_run(&provider, PromptSpec::new("nurse", &axes)?, &b_star, &priority, &cfg)?);

    let axes = adversarial_axes();
    let b_star: Vec<String> = axes.names().map(String::from).collect();
    let priority = PriorityVector::new(b_star.iter().cloned().zip(ADVERSARIAL_PRIORITY).collect())?;
    let provider = SyntheticProvider::single(adversarial_model("doctor")?);
    report(&intermit_run(&provider, PromptSpec::new("doctor", &axes)?, &b_star, &priority, &cfg)?);
    Ok(())
}
