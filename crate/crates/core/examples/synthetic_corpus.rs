//! Generate a corpus with known ground truth and round-trip it through the
//! record format.

use std::error::Error;

use pathdrift::store::{ingest, DomainTokens, IngestOptions};
use pathdrift::synth::{expected_metrics, generate, Coupling, GeneratorConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let config = GeneratorConfig {
        models: 4,
        families: 2,
        tasks: 10,
        persistence_boost: 0.3,
        coupling: Coupling::DeviationAfter { fraction: 0.5 },
        seed: 2,
        ..Default::default()
    };
    let truth = expected_metrics(&config)?;
    println!(
        "injected beta {:.2}, stationary off-rate {:.3}, gap sign {}",
        truth.injected_beta, truth.stationary_off_rate, truth.expected_gap_sign
    );

    let (corpus, _) = generate(&config)?;
    let mut jsonl = Vec::new();
    corpus.write_jsonl(&mut jsonl)?;
    let (again, report) = ingest(
        jsonl.as_slice(),
        config.family_map(),
        DomainTokens::new(),
        &IngestOptions::default(),
    )?;
    assert_eq!(again.fingerprint(), corpus.fingerprint());
    println!(
        "{} runs, {} units ({} mixed), fingerprint {}",
        report.records,
        report.units,
        report.mixed,
        &corpus.fingerprint()[..12]
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
