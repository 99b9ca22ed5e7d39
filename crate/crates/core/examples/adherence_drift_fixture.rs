//! Walk through the git-milestone unit: full and partial adherence, the
//! within-unit gap, and a monitor replay of the 38-call failure.

use std::error::Error;

use pathdrift::adherence::{adherence, partial_adherence, prefix_length};
use pathdrift::canonical::{CanonicalIndex, SpecTemplate};
use pathdrift::fixtures::{self, GIT_MILESTONE_MODEL, GIT_MILESTONE_TASK};
use pathdrift::monitor::{replay, DecisionKind, MonitorProfile};
use pathdrift::within_unit::unit_gaps;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let corpus = fixtures::git_milestone()?;
    let template = SpecTemplate::default();
    let index = CanonicalIndex::build(&corpus, &template)?;
    let unit = corpus
        .units()
        .iter()
        .find(|u| u.model == GIT_MILESTONE_MODEL)
        .ok_or("missing unit")?;
    let canon = index.for_unit(unit, &corpus).ok_or("no canonical set")?;
    println!("canonical: {}", canon.tools);

    for run in &unit.runs {
        let a = adherence(run, canon)?;
        print!(
            "run {} ({}, {} calls): {:.3} |",
            run.run_index,
            run.success,
            run.len(),
            a.value
        );
        for f in [0.10, 0.25, 0.50, 0.75] {
            print!(" {:.0}%={:.3}", f * 100.0, partial_adherence(run, canon, f)?.value);
        }
        println!();
    }

    let gap = unit_gaps(&corpus, &template)?
        .into_iter()
        .find(|g| g.model == GIT_MILESTONE_MODEL)
        .ok_or("unit not analyzed")?;
    println!("within-unit gap: {:+.3}", gap.delta);

    let failure = &unit.runs[0];
    let profile = MonitorProfile::fixed(GIT_MILESTONE_TASK, canon.tools.clone(), 0.75, 0.35)?;
    let session = replay(&profile, failure)?;
    let d = session.decide()?;
    println!(
        "monitor: checkpoint call {} of {}, adherence {:.3}, {:?}",
        prefix_length(0.75, failure.len()),
        failure.len(),
        d.adherence,
        d.kind
    );
    assert_eq!(d.kind, DecisionKind::FlagRestart);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
