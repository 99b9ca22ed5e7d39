//! Drift curve, transition regression, DiD, and variance signatures.

use std::error::Error;

use pathdrift::canonical::SpecTemplate;
use pathdrift::drift::{
    adherence_gradient, did_early_branching, drift_curve, transition_regression, variance_signature, ClusterLevel,
    DidWindow, DEFAULT_CHECKPOINTS,
};
use pathdrift::stats::Resampler;
use pathdrift::synth::{generate, GeneratorConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let config = GeneratorConfig {
        tasks: 15,
        persistence_boost: 0.25,
        seed: 5,
        ..Default::default()
    };
    let (corpus, truth) = generate(&config)?;
    let template = SpecTemplate::default();
    let resampler = Resampler::new(300, 5);

    let curve = drift_curve(&corpus, &template, &DEFAULT_CHECKPOINTS, &resampler)?;
    for p in &curve.points {
        match &p.gap {
            Some(g) => println!(
                "{:>4.0}%  {:+.3} {}",
                p.fraction * 100.0,
                g.estimate.point,
                g.estimate.stars()
            ),
            None => println!(
                "{:>4.0}%  -- {}",
                p.fraction * 100.0,
                p.reason.clone().unwrap_or_default()
            ),
        }
    }

    let t = transition_regression(&corpus, &template, ClusterLevel::Unit)?;
    println!(
        "beta {:.3} (injected {:.2}) over {} pairs; baseline off-rate {:.3}",
        t.overall.beta, truth.injected_beta, t.n_pairs, t.baseline_off_rate
    );

    let did = did_early_branching(&corpus, &template, DidWindow::PrefixVsFull)?;
    println!(
        "deviating runs {} (early {}, late {})",
        did.deviating_runs, did.early, did.late
    );
    if let Some(e) = &did.pretrend.estimate {
        println!("pre-trend difference {:+.3} p={:.3}", e.point, e.p_value);
    }

    let v = variance_signature(&corpus, &template)?;
    for s in &v.signatures {
        println!(
            "{:<15} units {:>3} mean sd {:?} locked-in {:?}",
            s.class.label(),
            s.n_units,
            s.mean_std,
            s.locked_in_fraction
        );
    }

    let g = adherence_gradient(&corpus, &template)?;
    for l in &g.levels {
        println!("{:<15} {:?}", l.group.label(), l.mean);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
