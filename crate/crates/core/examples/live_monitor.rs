//! Calibrate a monitor profile from history, then feed it one call at a
//! time as a run would arrive, including a run longer than its budget.

use std::error::Error;

use pathdrift::canonical::{CanonicalSpec, Scope};
use pathdrift::monitor::{calibrate, read_transcript, CalibrationOptions, MonitorProfile, MonitorSession};
use pathdrift::synth::{generate, GeneratorConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let config = GeneratorConfig {
        tasks: 6,
        seed: 9,
        ..Default::default()
    };
    let (corpus, _) = generate(&config)?;
    let task = config.task_name(0);
    let spec = CanonicalSpec {
        scope: Scope::Naive,
        ..Default::default()
    };
    let profile = calibrate(&corpus, &task, &spec, &CalibrationOptions::default())?;
    println!(
        "{task}: threshold {:.3} from {:?}; canonical {}",
        profile.threshold, profile.source, profile.canonical
    );

    // profiles round-trip through JSON
    let profile = MonitorProfile::from_json(&profile.to_json()?)?;

    // the agent expects 12 calls but keeps going; the checkpoint moves out
    // with the doubled budget
    let mut session = MonitorSession::new(profile, 12)?;
    let tools = ["t000-tool00", "t000-tool01", "web-search", "web-search", "scratch-pad"];
    for i in 0..30 {
        if let Some(d) = session.observe_tool(tools[i % tools.len()])? {
            println!(
                "call {:>2}: adherence {:.3} vs {:.3} -> {:?} (budget {})",
                d.at_call, d.adherence, d.threshold, d.kind, d.budget
            );
        }
    }
    session.close();

    let mut buf = Vec::new();
    session.write_transcript(&mut buf)?;
    let events = read_transcript(buf.as_slice())?;
    println!("{} transcript events", events.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
