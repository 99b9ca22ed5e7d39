//! Flat tables for every analysis, written as CSV with `#` metadata lines
//! or bundled into one JSON document.
//!
//! Numbers are formatted with a fixed rule so identical inputs give
//! byte-identical files.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::canonical::{CanonicalTable, Scope, SpecTemplate};
use crate::drift::{DidReport, DriftCurve, EstimateOrReason, GradientReport, TransitionReport, VarianceReport};
use crate::error::Result;
use crate::monitor::ReplayReport;
use crate::reliability::{InterventionReport, ModelReliability};
use crate::stats::{Estimate, FeLpmFit};
use crate::store::{IngestReport, OutcomeClass};
use crate::within_unit::{
    FamilyRow, GapEstimate, PlaceboResult, RobustnessRow, SampleFunnel, SuccessLift, TaskBreakdown,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance embedded in every emitted file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub resamples: usize,
    pub spec: SpecTemplate,
    /// Content hash of the analyzed corpus.
    pub fingerprint: String,
}

impl ReportMeta {
    fn lines(&self) -> Vec<(String, String)> {
        vec![
            ("version".into(), self.version.clone()),
            ("command".into(), self.command.clone()),
            ("seed".into(), self.seed.to_string()),
            ("resamples".into(), self.resamples.to_string()),
            ("spec".into(), self.spec.id()),
            ("min_successes".into(), self.spec.min_successes.to_string()),
            ("fingerprint".into(), self.fingerprint.clone()),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    /// Value of `column` in row `row`, for tests and quick lookups.
    pub fn get(&self, row: usize, column: &str) -> Option<&str> {
        let c = self.columns.iter().position(|c| c == column)?;
        self.rows.get(row).map(|r| r[c].as_str())
    }

    pub fn write_csv<W: Write>(&self, mut w: W, meta: &ReportMeta) -> Result<()> {
        for (k, v) in meta.lines() {
            writeln!(w, "# {k}: {v}")?;
        }
        writeln!(w, "# table: {}", self.name)?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(&self.columns)?;
        for r in &self.rows {
            csv.write_record(r)?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// One JSON object per table, plus the provenance block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub meta: ReportMeta,
    pub tables: Vec<Table>,
}

impl Document {
    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Six decimals, switching to scientific notation for small magnitudes
/// so p-values stay readable.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x == 0.0 {
        "0".into()
    } else if x.abs() < 1e-4 {
        format!("{x:.3e}")
    } else {
        format!("{x:.6}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn text(s: &Option<String>) -> String {
    s.clone().unwrap_or_default()
}

const ESTIMATE_COLS: [&str; 6] = ["estimate", "ci_low", "ci_high", "p_value", "n", "stars"];

fn estimate_cells(e: Option<&Estimate>) -> Vec<String> {
    match e {
        Some(e) => vec![
            num(e.point),
            num(e.ci_low),
            num(e.ci_high),
            num(e.p_value),
            e.n.to_string(),
            e.stars().into(),
        ],
        None => vec![String::new(); ESTIMATE_COLS.len()],
    }
}

fn cols(lead: &[&'static str], tail: &[&'static str]) -> Vec<&'static str> {
    lead.iter().chain(ESTIMATE_COLS.iter()).chain(tail).copied().collect()
}

pub fn units_table(r: &IngestReport) -> Table {
    let mut t = Table::new("units", &["class", "units"]);
    for class in OutcomeClass::ALL {
        t.push(vec![class.label().into(), r.count(class).to_string()]);
    }
    for (k, n) in &r.mixed_by_successes {
        t.push(vec![format!("mixed-{k}-successes"), n.to_string()]);
    }
    t.push(vec!["total".into(), r.units.to_string()]);
    t.push(vec!["dropped".into(), r.dropped_units.len().to_string()]);
    t
}

fn scope_cells(s: &Scope) -> (String, String) {
    match s {
        Scope::Naive => ("naive".into(), String::new()),
        Scope::LeaveOneOut(m) => ("loo".into(), m.clone()),
        Scope::CrossFamily(f) => ("cfloo".into(), f.clone()),
    }
}

pub fn canonical_rows(c: &CanonicalTable) -> Table {
    let mut t = Table::new(
        "canonical",
        &[
            "task",
            "scope",
            "excluded",
            "threshold",
            "support_count",
            "tools",
            "strength",
        ],
    );
    for r in &c.rows {
        let (scope, excluded) = scope_cells(&r.scope);
        t.push(vec![
            r.task.clone(),
            scope,
            excluded,
            num(r.threshold),
            r.support_count.to_string(),
            r.tools.to_pipe_list(),
            opt(r.strength),
        ]);
    }
    t
}

pub fn canonical_summary(c: &CanonicalTable) -> Table {
    let mut t = Table::new("canonical_summary", &["metric", "value"]);
    let s = &c.summary;
    t.push(vec!["tasks_total".into(), s.tasks_total.to_string()]);
    t.push(vec!["tasks_with_support".into(), s.tasks_with_support.to_string()]);
    t.push(vec!["strong_fraction".into(), opt(s.strong_fraction)]);
    t.push(vec!["mean_domain_tool_share".into(), opt(s.mean_domain_tool_share)]);
    t.push(vec!["skipped_targets".into(), c.skipped.len().to_string()]);
    t
}

pub fn main_gap_table(g: &GapEstimate, spec: &SpecTemplate) -> Table {
    let mut t = Table::new("main_gap", &cols(&["spec"], &["fraction_positive"]));
    let mut row = vec![spec.id()];
    row.extend(estimate_cells(Some(&g.estimate)));
    row.push(num(g.fraction_positive));
    t.push(row);
    t
}

pub fn funnel_table(f: &SampleFunnel) -> Table {
    let mut t = Table::new("funnel", &["stage", "units"]);
    for (k, v) in [
        ("units", f.units),
        ("mixed_units", f.mixed_units),
        ("analyzed_units", f.analyzed_units),
        ("excluded_no_support", f.excluded_no_support),
        ("excluded_insufficient_support", f.excluded_insufficient_support),
        ("excluded_other", f.excluded_other),
    ] {
        t.push(vec![k.into(), v.to_string()]);
    }
    t
}

pub fn success_lift_table(l: &SuccessLift) -> Table {
    let mut t = Table::new(
        "success_lift",
        &[
            "gap",
            "coefficient",
            "std_error",
            "odds_ratio",
            "lift_at_half",
            "marginal_lift_at_half",
            "lift_at_mean",
        ],
    );
    for r in &l.rows {
        t.push(vec![
            num(r.gap),
            num(l.fit.coefficient),
            num(l.fit.std_error),
            num(r.odds_ratio),
            num(r.lift_at_half),
            num(r.marginal_lift_at_half),
            num(r.lift_at_mean),
        ]);
    }
    t
}

pub fn robustness_table(rows: &[RobustnessRow]) -> Table {
    let mut t = Table::new(
        "robustness",
        &cols(&["spec"], &["fraction_positive", "dropped_task", "reason"]),
    );
    for r in rows {
        let mut row = vec![r.spec.label()];
        row.extend(estimate_cells(r.gap.as_ref().map(|g| &g.estimate)));
        row.push(opt(r.gap.as_ref().map(|g| g.fraction_positive)));
        row.push(text(&r.dropped_task));
        row.push(text(&r.reason));
        t.push(row);
    }
    t
}

pub fn placebo_table(p: &PlaceboResult) -> Table {
    let mut t = Table::new(
        "placebo_first_tool",
        &[
            "minority_runs",
            "successes",
            "units",
            "tied_units",
            "tie_rule",
            "success_rate",
            "p_value",
        ],
    );
    t.push(vec![
        p.minority_runs.to_string(),
        p.successes.to_string(),
        p.units.to_string(),
        p.tied_units.to_string(),
        format!("{:?}", p.tie_rule).to_lowercase(),
        num(p.estimate.point),
        num(p.estimate.p_value),
    ]);
    t
}

pub fn family_table(rows: &[FamilyRow]) -> Table {
    let mut t = Table::new("families", &cols(&["family", "units"], &["significant", "reason"]));
    for r in rows {
        let mut row = vec![r.family.clone(), r.n_units.to_string()];
        row.extend(estimate_cells(r.gap.as_ref().map(|g| &g.estimate)));
        row.push(r.significant.to_string());
        row.push(text(&r.reason));
        t.push(row);
    }
    t
}

pub fn task_table(b: &TaskBreakdown) -> Table {
    let mut t = Table::new(
        "tasks",
        &[
            "task",
            "strength",
            "canonical_size",
            "effect",
            "mixed_units",
            "success_rate",
            "mean_length",
            "unique_tools",
        ],
    );
    for r in &b.rows {
        t.push(vec![
            r.task.clone(),
            opt(r.strength),
            r.canonical_size.map(|s| s.to_string()).unwrap_or_default(),
            opt(r.effect),
            r.n_mixed.to_string(),
            num(r.success_rate),
            num(r.mean_length),
            r.unique_tools.to_string(),
        ]);
    }
    t
}

pub fn correlation_table(b: &TaskBreakdown) -> Table {
    let mut t = Table::new("task_correlations", &cols(&["pair"], &["reason"]));
    for c in &b.correlations {
        let mut row = vec![c.name.clone()];
        row.extend(estimate_cells(c.estimate.as_ref()));
        row.push(text(&c.reason));
        t.push(row);
    }
    t
}

pub fn drift_curve_table(c: &DriftCurve) -> Table {
    let mut t = Table::new("drift_curve", &cols(&["fraction"], &["reason"]));
    for p in &c.points {
        let mut row = vec![num(p.fraction)];
        let mut cells = estimate_cells(p.gap.as_ref().map(|g| &g.estimate));
        // the panel is fixed, so n is known even when the estimate failed
        cells[4] = p.n_units.to_string();
        row.extend(cells);
        row.push(text(&p.reason));
        t.push(row);
    }
    t
}

fn fit_cells(f: Option<&FeLpmFit>) -> Vec<String> {
    match f {
        Some(f) => vec![
            num(f.beta),
            num(f.std_error),
            num(f.ci_low),
            num(f.ci_high),
            num(f.p_value),
            f.n_pairs.to_string(),
            f.n_clusters.to_string(),
        ],
        None => vec![String::new(); 7],
    }
}

pub fn transitions_table(r: &TransitionReport) -> Table {
    let mut t = Table::new(
        "transitions",
        &[
            "stratum",
            "beta",
            "std_error",
            "ci_low",
            "ci_high",
            "p_value",
            "pairs",
            "clusters",
            "reason",
        ],
    );
    let mut overall = vec!["all".to_string()];
    overall.extend(fit_cells(Some(&r.overall)));
    overall.push(String::new());
    t.push(overall);
    for (name, s) in [("failing", &r.failing_runs), ("succeeding", &r.succeeding_runs)] {
        let mut row = vec![name.to_string()];
        row.extend(fit_cells(s.fit.as_ref()));
        row.push(text(&s.reason));
        t.push(row);
    }
    if let Some(d) = &r.stratum_difference {
        t.push(vec![
            "failing-minus-succeeding".into(),
            num(d.point),
            String::new(),
            num(d.ci_low),
            num(d.ci_high),
            num(d.p_value),
            String::new(),
            String::new(),
            String::new(),
        ]);
    }
    t
}

pub fn transition_rates_table(r: &TransitionReport) -> Table {
    let mut t = Table::new("transition_rates", &["metric", "value"]);
    t.push(vec!["baseline_off_rate".into(), num(r.baseline_off_rate)]);
    t.push(vec!["off_rate".into(), num(r.off_rate)]);
    t.push(vec!["pairs".into(), r.n_pairs.to_string()]);
    t.push(vec!["cluster".into(), format!("{:?}", r.cluster).to_lowercase()]);
    t
}

fn reason_row(name: &str, e: &EstimateOrReason) -> Vec<String> {
    let mut row = vec![name.to_string()];
    row.extend(estimate_cells(e.estimate.as_ref()));
    row.push(text(&e.reason));
    row
}

pub fn did_table(d: &DidReport) -> Table {
    let mut t = Table::new("did", &cols(&["test"], &["reason"]));
    t.push(reason_row("pretrend", &d.pretrend));
    t.push(reason_row("did", &d.did));
    t.push(reason_row("dose_response", &d.dose_response));
    t
}

pub fn did_summary_table(d: &DidReport) -> Table {
    let mut t = Table::new("did_summary", &["metric", "value"]);
    t.push(vec!["deviating_runs".into(), d.deviating_runs.to_string()]);
    t.push(vec!["median_fraction".into(), num(d.median_fraction)]);
    t.push(vec!["early".into(), d.early.to_string()]);
    t.push(vec!["late".into(), d.late.to_string()]);
    t.push(vec!["window".into(), format!("{:?}", d.window).to_lowercase()]);
    t
}

pub fn variance_table(v: &VarianceReport) -> Table {
    let mut t = Table::new("variance", &["class", "units", "mean_std", "locked_in_fraction"]);
    for s in &v.signatures {
        t.push(vec![
            s.class.label().into(),
            s.n_units.to_string(),
            opt(s.mean_std),
            opt(s.locked_in_fraction),
        ]);
    }
    t
}

pub fn variance_tests_table(v: &VarianceReport) -> Table {
    let mut t = Table::new("variance_tests", &cols(&["comparison"], &["reason"]));
    for c in &v.comparisons {
        t.push(reason_row(
            &format!("{}-vs-{}", c.first.label(), c.second.label()),
            &c.test,
        ));
    }
    t
}

pub fn gradient_table(g: &GradientReport) -> Table {
    let mut t = Table::new("gradient", &["group", "runs", "mean_adherence"]);
    for l in &g.levels {
        t.push(vec![l.group.label().into(), l.n_runs.to_string(), opt(l.mean)]);
    }
    t
}

pub fn gradient_tests_table(g: &GradientReport) -> Table {
    let mut t = Table::new("gradient_tests", &cols(&["step"], &["reason"]));
    for a in &g.tests {
        t.push(reason_row(
            &format!("{}-to-{}", a.lower.label(), a.upper.label()),
            &a.test,
        ));
    }
    t
}

pub fn reliability_table(rows: &[ModelReliability]) -> Table {
    let mut t = Table::new(
        "reliability",
        &[
            "model",
            "p_at_1",
            "p_at_k",
            "p_hat_k",
            "mo_over_p_at_k",
            "tasks",
            "runs",
        ],
    );
    for r in rows {
        t.push(vec![
            r.model.clone(),
            num(r.p_at_1),
            num(r.p_at_k),
            num(r.p_hat_k),
            opt(r.mo_over_patk),
            r.tasks.to_string(),
            r.runs.to_string(),
        ]);
    }
    t
}

pub fn intervention_table(reports: &[InterventionReport]) -> Table {
    let mut t = Table::new(
        "intervention",
        &cols(
            &[
                "policy",
                "eligible_runs",
                "flagged_runs",
                "flagged_fraction",
                "threshold",
            ],
            &["observed_success_rate", "predicted_baseline", "counterfactual_rate"],
        ),
    );
    for r in reports {
        let mut row = vec![
            r.policy.to_string(),
            r.eligible_runs.to_string(),
            r.flagged_runs.to_string(),
            num(r.flagged_fraction),
            opt(r.threshold),
        ];
        row.extend(estimate_cells(Some(&r.lift)));
        row.push(opt(r.observed_success_rate));
        row.push(opt(r.predicted_baseline));
        row.push(opt(r.counterfactual_rate));
        t.push(row);
    }
    t
}

pub fn replay_table(reports: &[ReplayReport]) -> Table {
    let mut t = Table::new(
        "monitor_replay",
        &[
            "policy",
            "runs_replayed",
            "flagged",
            "flagged_failure_rate",
            "unflagged_failure_rate",
            "sets_agree",
            "reason",
        ],
    );
    for r in reports {
        t.push(vec![
            r.policy.to_string(),
            r.runs_replayed.to_string(),
            r.flagged.len().to_string(),
            opt(r.flagged_failure_rate),
            opt(r.unflagged_failure_rate),
            r.sets_agree.map(|b| b.to_string()).unwrap_or_default(),
            text(&r.reason),
        ]);
    }
    t
}

pub fn flagged_runs_table(reports: &[ReplayReport]) -> Table {
    let mut t = Table::new("flagged_runs", &["policy", "model", "task", "run_index"]);
    for r in reports {
        for k in &r.flagged {
            t.push(vec![
                r.policy.to_string(),
                k.model.clone(),
                k.task.clone(),
                k.run_index.to_string(),
            ]);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> ReportMeta {
        ReportMeta {
            version: VERSION.into(),
            command: "test".into(),
            seed: 7,
            resamples: 10,
            spec: SpecTemplate::default(),
            fingerprint: "abc".into(),
        }
    }

    #[test]
    fn number_format() {
        assert_eq!(num(0.0), "0");
        assert_eq!(num(0.0825), "0.082500");
        assert_eq!(num(3.2e-7), "3.200e-7");
        assert_eq!(num(f64::NAN), "NaN");
        assert_eq!(num(-1.5), "-1.500000");
    }

    #[test]
    fn csv_has_meta_then_header() {
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec!["1".into(), "two, three".into()]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf, &meta()).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], format!("# version: {VERSION}"));
        assert!(lines.contains(&"# seed: 7"));
        assert!(lines.contains(&"# spec: cfloo@0.5"));
        assert_eq!(lines[lines.len() - 2], "a,b");
        assert_eq!(lines[lines.len() - 1], "1,\"two, three\"");
        assert_eq!(t.get(0, "b"), Some("two, three"));
    }
}
