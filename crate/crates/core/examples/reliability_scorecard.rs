//! Per-model reliability metrics and the intervention lift of two
//! flagging policies.

use std::error::Error;

use pathdrift::canonical::SpecTemplate;
use pathdrift::reliability::{intervention_lift, per_model_metrics, InterventionPolicy};
use pathdrift::stats::Resampler;
use pathdrift::synth::{generate, Coupling, GeneratorConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let config = GeneratorConfig {
        tasks: 20,
        rate_spread: 0.8,
        coupling: Coupling::Logistic {
            intercept: -3.0,
            slope: 6.0,
        },
        seed: 21,
        ..Default::default()
    };
    let (corpus, _) = generate(&config)?;

    println!("{:<10} {:>6} {:>6} {:>6} {:>8}", "model", "P@1", "P@3", "P^3", "MO/P@3");
    for m in per_model_metrics(&corpus) {
        println!(
            "{:<10} {:>6.3} {:>6.3} {:>6.3} {:>8}",
            m.model,
            m.p_at_1,
            m.p_at_k,
            m.p_hat_k,
            m.mo_over_patk.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into())
        );
    }

    let template = SpecTemplate::default();
    let resampler = Resampler::new(300, 21);
    for policy in [
        InterventionPolicy::bottom_tercile(),
        InterventionPolicy::below_unit_mean(0.1),
    ] {
        let r = intervention_lift(&corpus, &template, &policy, &resampler)?;
        println!(
            "{policy}: flagged {}/{} runs, lift {:+.1}pp [{:+.1}, {:+.1}]",
            r.flagged_runs,
            r.eligible_runs,
            r.lift.point * 100.0,
            r.lift.ci_low * 100.0,
            r.lift.ci_high * 100.0
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
