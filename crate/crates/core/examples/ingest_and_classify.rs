//! Load trajectory records, classify units, and see what ingestion rejects.

use std::error::Error;

use pathdrift::fixtures::{self, GIT_MILESTONE_JSONL};
use pathdrift::store::{classify_unit, distinct_tools, ingest, DomainTokens, IngestOptions, OutcomeClass};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let families = fixtures::git_milestone_families()?;
    let (corpus, report) = ingest(
        GIT_MILESTONE_JSONL.as_bytes(),
        families.clone(),
        DomainTokens::new(),
        &IngestOptions::default(),
    )?;
    println!("{} records -> {} units", report.records, report.units);
    for class in OutcomeClass::ALL {
        println!("  {:<15} {}", class.label(), report.count(class));
    }

    for unit in corpus.units() {
        let outcomes: String = unit.runs.iter().map(|r| if r.success { 'S' } else { 'F' }).collect();
        println!("{:<18} {} {}", unit.model, outcomes, unit.outcome_class.label());
        assert_eq!(classify_unit(&unit.runs)?, unit.outcome_class);
    }

    let glm = corpus
        .units()
        .iter()
        .find(|u| u.model == "glm-4.6")
        .ok_or("missing glm unit")?;
    let success = &glm.runs[1];
    println!("success run tools: {}", distinct_tools(success));

    // a repeated (model, task, run_index) is rejected with both line numbers
    let mut doubled = GIT_MILESTONE_JSONL.to_string();
    doubled.push_str(GIT_MILESTONE_JSONL.lines().next().unwrap_or_default());
    match ingest(
        doubled.as_bytes(),
        families,
        DomainTokens::new(),
        &IngestOptions::default(),
    ) {
        Err(e) => println!("duplicate rejected: {e}"),
        Ok(_) => return Err("duplicate was accepted".into()),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
