//! Headline within-unit gap and its specification table on a synthetic
//! corpus where success depends on adherence.

use std::error::Error;

use pathdrift::canonical::SpecTemplate;
use pathdrift::stats::Resampler;
use pathdrift::synth::{generate, Coupling, GeneratorConfig};
use pathdrift::within_unit::{main_gap, placebo_first_tool, robustness_suite, sample_funnel, success_lift, TieRule};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let config = GeneratorConfig {
        tasks: 20,
        coupling: Coupling::Logistic {
            intercept: -3.0,
            slope: 6.0,
        },
        seed: 11,
        ..Default::default()
    };
    let (corpus, _) = generate(&config)?;
    let template = SpecTemplate::default();
    let resampler = Resampler::new(500, 11);

    let funnel = sample_funnel(&corpus, &template)?;
    println!(
        "units {} -> mixed {} -> analyzed {}",
        funnel.units, funnel.mixed_units, funnel.analyzed_units
    );

    let gap = main_gap(&corpus, &template, &resampler)?;
    let e = &gap.estimate;
    println!(
        "gap {:+.3} [{:+.3}, {:+.3}] p={:.2e} n={} positive={:.0}%",
        e.point,
        e.ci_low,
        e.ci_high,
        e.p_value,
        e.n,
        gap.fraction_positive * 100.0
    );

    for row in robustness_suite(&corpus, &template, &resampler) {
        match &row.gap {
            Some(g) => println!(
                "  {:<14} {:+.3} {}",
                row.spec.label(),
                g.estimate.point,
                g.estimate.stars()
            ),
            None => println!("  {:<14} -- {}", row.spec.label(), row.reason.unwrap_or_default()),
        }
    }

    let lift = success_lift(&corpus, &template, &[e.point])?;
    println!(
        "logistic coef {:.3}; lift at p=0.5 {:+.1}pp",
        lift.fit.coefficient,
        lift.rows[0].lift_at_half * 100.0
    );

    let placebo = placebo_first_tool(&corpus, TieRule::Exclude)?;
    println!(
        "first-tool placebo: {} minority runs, success {:.2}, p={:.2}",
        placebo.minority_runs, placebo.estimate.point, placebo.estimate.p_value
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
