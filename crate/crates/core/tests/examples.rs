//! Every example in `examples/` runs to completion.

#[path = "../examples/ingest_and_classify.rs"]
mod ingest_and_classify;

#[path = "../examples/canonical_paths.rs"]
mod canonical_paths;

#[path = "../examples/adherence_drift_fixture.rs"]
mod adherence_drift_fixture;

#[path = "../examples/within_unit_gap.rs"]
mod within_unit_gap;

#[path = "../examples/drift_dynamics.rs"]
mod drift_dynamics;

#[path = "../examples/reliability_scorecard.rs"]
mod reliability_scorecard;

#[path = "../examples/live_monitor.rs"]
mod live_monitor;

#[path = "../examples/synthetic_corpus.rs"]
mod synthetic_corpus;

#[test]
fn ingest_and_classify_runs() {
    ingest_and_classify::run_example().unwrap();
}

#[test]
fn canonical_paths_runs() {
    canonical_paths::run_example().unwrap();
}

#[test]
fn adherence_drift_fixture_runs() {
    adherence_drift_fixture::run_example().unwrap();
}

#[test]
fn within_unit_gap_runs() {
    within_unit_gap::run_example().unwrap();
}

#[test]
fn drift_dynamics_runs() {
    drift_dynamics::run_example().unwrap();
}

#[test]
fn reliability_scorecard_runs() {
    reliability_scorecard::run_example().unwrap();
}

#[test]
fn live_monitor_runs() {
    live_monitor::run_example().unwrap();
}

#[test]
fn synthetic_corpus_runs() {
    synthetic_corpus::run_example().unwrap();
}
