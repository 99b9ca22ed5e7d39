//! Trajectory corpora: loading, validation, unit grouping, and outcome classes.
//!
//! A corpus is read from line-delimited JSON, one record per run:
//!
//! ```text
//! {"model":"glm-4.6","task":"git-milestone","run_index":2,"success":true,
//!  "calls":[{"tool":"fetch-fetch_json"},{"tool":"local-claim_done","errored":false}]}
//! ```
//!
//! Runs are grouped into units (one model on one task). Once built, a
//! [`Corpus`] is never mutated, so it can be shared freely between analyses.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Set of distinct tool names, kept sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ToolSet(BTreeSet<String>);

impl ToolSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, tool: &str) -> bool {
        self.0.contains(tool)
    }

    /// Returns true if the tool was not already present.
    pub fn insert(&mut self, tool: impl Into<String>) -> bool {
        self.0.insert(tool.into())
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn intersection_len(&self, other: &ToolSet) -> usize {
        self.0.intersection(&other.0).count()
    }

    pub fn union_len(&self, other: &ToolSet) -> usize {
        self.len() + other.len() - self.intersection_len(other)
    }

    pub fn is_subset(&self, other: &ToolSet) -> bool {
        self.0.is_subset(&other.0)
    }

    /// Sorted, pipe-delimited rendering used in tabular output.
    pub fn to_pipe_list(&self) -> String {
        self.iter().collect::<Vec<_>>().join("|")
    }
}

impl<S: Into<String>> FromIterator<S> for ToolSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        ToolSet(iter.into_iter().map(Into::into).collect())
    }
}

impl fmt::Display for ToolSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.iter().collect::<Vec<_>>().join(", "))
    }
}

/// One tool invocation within a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    /// 1-based index within the run.
    pub position: usize,
    pub tool_name: String,
    /// The tool returned an error. Loaded and preserved; no analysis reads it.
    pub errored: bool,
}

/// One trajectory of a model on a task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub model: String,
    pub task: String,
    pub run_index: u32,
    pub success: bool,
    pub calls: Vec<ToolCall>,
}

impl Run {
    /// Builds a run from tool names, numbering positions from 1.
    pub fn from_tools<I, S>(model: &str, task: &str, run_index: u32, success: bool, tools: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let calls = tools
            .into_iter()
            .enumerate()
            .map(|(i, t)| ToolCall {
                position: i + 1,
                tool_name: t.into(),
                errored: false,
            })
            .collect();
        Run {
            model: model.to_string(),
            task: task.to_string(),
            run_index,
            success,
            calls,
        }
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    pub fn tool_set(&self) -> ToolSet {
        distinct_tools(self)
    }

    /// Distinct tools among the first `n` calls.
    pub fn prefix_tool_set(&self, n: usize) -> ToolSet {
        self.calls.iter().take(n).map(|c| c.tool_name.as_str()).collect()
    }
}

/// The set of unique tool names used anywhere in the run.
pub fn distinct_tools(run: &Run) -> ToolSet {
    run.calls.iter().map(|c| c.tool_name.as_str()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeClass {
    AlwaysSucceed,
    AlwaysFail,
    Mixed,
}

impl OutcomeClass {
    pub const ALL: [OutcomeClass; 3] = [
        OutcomeClass::AlwaysSucceed,
        OutcomeClass::AlwaysFail,
        OutcomeClass::Mixed,
    ];

    pub fn label(self) -> &'static str {
        match self {
            OutcomeClass::AlwaysSucceed => "always-succeed",
            OutcomeClass::AlwaysFail => "always-fail",
            OutcomeClass::Mixed => "mixed",
        }
    }
}

/// Classifies a set of runs of one (model, task) pair by how many succeeded.
pub fn classify_unit(runs: &[Run]) -> Result<OutcomeClass> {
    let first = runs
        .first()
        .ok_or_else(|| Error::NoEligible("cannot classify a unit with no runs".into()))?;
    if runs.iter().any(|r| r.model != first.model || r.task != first.task) {
        return Err(Error::MixedUnitKeys);
    }
    let successes = runs.iter().filter(|r| r.success).count();
    Ok(if successes == runs.len() {
        OutcomeClass::AlwaysSucceed
    } else if successes == 0 {
        OutcomeClass::AlwaysFail
    } else {
        OutcomeClass::Mixed
    })
}

/// All runs of one model on one task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub model: String,
    pub task: String,
    pub runs: Vec<Run>,
    pub outcome_class: OutcomeClass,
}

impl Unit {
    pub fn new(runs: Vec<Run>) -> Result<Self> {
        let outcome_class = classify_unit(&runs)?;
        let mut runs = runs;
        runs.sort_by_key(|r| r.run_index);
        Ok(Unit {
            model: runs[0].model.clone(),
            task: runs[0].task.clone(),
            runs,
            outcome_class,
        })
    }

    pub fn key(&self) -> UnitKey {
        UnitKey {
            model: self.model.clone(),
            task: self.task.clone(),
        }
    }

    pub fn success_count(&self) -> usize {
        self.runs.iter().filter(|r| r.success).count()
    }

    pub fn is_mixed(&self) -> bool {
        self.outcome_class == OutcomeClass::Mixed
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnitKey {
    pub model: String,
    pub task: String,
}

impl fmt::Display for UnitKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.model, self.task)
    }
}

/// Model id to family id.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FamilyMap(BTreeMap<String, String>);

impl FamilyMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model: impl Into<String>, family: impl Into<String>) {
        self.0.insert(model.into(), family.into());
    }

    pub fn family_of(&self, model: &str) -> Option<&str> {
        self.0.get(model).map(String::as_str)
    }

    pub fn families(&self) -> BTreeSet<&str> {
        self.0.values().map(String::as_str).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(m, f)| (m.as_str(), f.as_str()))
    }

    /// Reads a two-column `model,family` table (comma or tab separated).
    /// Blank lines and `#` comments are skipped, as is a `model,family` header.
    pub fn from_reader<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let delimiter = text
            .lines()
            .find(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .map(|l| if l.contains('\t') { b'\t' } else { b',' })
            .unwrap_or(b',');
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .delimiter(delimiter)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut map = FamilyMap::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(i + 1);
            if record.len() != 2 {
                return Err(Error::Malformed {
                    line,
                    reason: format!("family map rows need 2 columns, found {}", record.len()),
                });
            }
            let (model, family) = (&record[0], &record[1]);
            if i == 0 && model.eq_ignore_ascii_case("model") && family.eq_ignore_ascii_case("family") {
                continue;
            }
            if model.is_empty() || family.is_empty() {
                return Err(Error::Malformed {
                    line,
                    reason: "empty model or family".into(),
                });
            }
            map.insert(model, family);
        }
        Ok(map)
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["model", "family"])?;
        for (m, f) in self.iter() {
            w.write_record([m, f])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fallback family rule: everything before the first digit group, with
/// trailing separators removed (`claude-4.5-opus` -> `claude`).
/// Only used when explicitly enabled in [`IngestOptions`].
pub fn version_stripped_family(model: &str) -> String {
    let cut = model.find(|c: char| c.is_ascii_digit()).unwrap_or(model.len());
    let head = model[..cut].trim_end_matches(['-', '_', '.', ' ']);
    if head.is_empty() {
        model.to_string()
    } else {
        head.to_string()
    }
}

/// Per-task domain identifiers (e.g. `notion` for Notion tasks), used by the
/// generic-tool filter.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainTokens(BTreeMap<String, BTreeSet<String>>);

impl DomainTokens {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert<I, S>(&mut self, task: impl Into<String>, tokens: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.0
            .entry(task.into())
            .or_default()
            .extend(tokens.into_iter().map(Into::into));
    }

    pub fn tokens_for(&self, task: &str) -> Option<&BTreeSet<String>> {
        self.0.get(task).filter(|t| !t.is_empty())
    }

    /// True if the tool name contains any of the task's tokens (case-insensitive).
    pub fn is_domain_tool(&self, task: &str, tool: &str) -> bool {
        let Some(tokens) = self.tokens_for(task) else {
            return false;
        };
        let tool = tool.to_lowercase();
        tokens.iter().any(|t| tool.contains(&t.to_lowercase()))
    }

    /// Reads a JSON object mapping task id to a list of tokens.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }
}

/// Wire format of one run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub model: String,
    pub task: String,
    pub run_index: u32,
    pub success: bool,
    pub calls: Vec<CallRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallRecord {
    pub tool: String,
    #[serde(default)]
    pub errored: bool,
}

impl From<&Run> for RunRecord {
    fn from(run: &Run) -> Self {
        RunRecord {
            model: run.model.clone(),
            task: run.task.clone(),
            run_index: run.run_index,
            success: run.success,
            calls: run
                .calls
                .iter()
                .map(|c| CallRecord {
                    tool: c.tool_name.clone(),
                    errored: c.errored,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum WrongCountPolicy {
    /// Drop the unit and record a warning.
    #[default]
    Drop,
    Reject,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IngestOptions {
    pub runs_per_unit: usize,
    pub wrong_count: WrongCountPolicy,
    pub allow_empty_runs: bool,
    /// Derive missing families with [`version_stripped_family`].
    pub family_fallback: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            runs_per_unit: 3,
            wrong_count: WrongCountPolicy::Drop,
            allow_empty_runs: false,
            family_fallback: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedUnit {
    pub model: String,
    pub task: String,
    pub runs: usize,
}

/// Counts produced while building a corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records: usize,
    pub units: usize,
    pub always_succeed: usize,
    pub always_fail: usize,
    pub mixed: usize,
    /// Mixed units keyed by their number of successful runs.
    pub mixed_by_successes: BTreeMap<usize, usize>,
    pub dropped_units: Vec<DroppedUnit>,
    pub warnings: Vec<String>,
}

impl IngestReport {
    pub fn count(&self, class: OutcomeClass) -> usize {
        match class {
            OutcomeClass::AlwaysSucceed => self.always_succeed,
            OutcomeClass::AlwaysFail => self.always_fail,
            OutcomeClass::Mixed => self.mixed,
        }
    }
}

/// An immutable, validated collection of units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    units: Vec<Unit>,
    family_map: FamilyMap,
    task_domain_tokens: DomainTokens,
    by_task: BTreeMap<String, Vec<usize>>,
}

impl Corpus {
    /// Groups runs into units, validates them, and classifies outcomes.
    pub fn from_runs(
        runs: Vec<Run>,
        family_map: FamilyMap,
        task_domain_tokens: DomainTokens,
        options: &IngestOptions,
    ) -> Result<(Corpus, IngestReport)> {
        let lines: Vec<usize> = (1..=runs.len()).collect();
        build_corpus(runs, &lines, family_map, task_domain_tokens, options)
    }

    pub fn empty() -> Corpus {
        Corpus {
            units: Vec::new(),
            family_map: FamilyMap::new(),
            task_domain_tokens: DomainTokens::new(),
            by_task: BTreeMap::new(),
        }
    }

    /// Units sorted by (model, task).
    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn family_map(&self) -> &FamilyMap {
        &self.family_map
    }

    pub fn domain_tokens(&self) -> &DomainTokens {
        &self.task_domain_tokens
    }

    pub fn family_of(&self, model: &str) -> Option<&str> {
        self.family_map.family_of(model)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &str> {
        self.by_task.keys().map(String::as_str)
    }

    pub fn models(&self) -> BTreeSet<&str> {
        self.units.iter().map(|u| u.model.as_str()).collect()
    }

    pub fn units_for_task<'a>(&'a self, task: &str) -> impl Iterator<Item = &'a Unit> + 'a {
        self.by_task
            .get(task)
            .into_iter()
            .flatten()
            .map(move |&i| &self.units[i])
    }

    pub fn runs(&self) -> impl Iterator<Item = &Run> {
        self.units.iter().flat_map(|u| u.runs.iter())
    }

    pub fn mixed_units(&self) -> impl Iterator<Item = &Unit> {
        self.units.iter().filter(|u| u.is_mixed())
    }

    pub fn class_counts(&self) -> BTreeMap<OutcomeClass, usize> {
        let mut counts: BTreeMap<OutcomeClass, usize> = OutcomeClass::ALL.iter().map(|&c| (c, 0)).collect();
        for u in &self.units {
            *counts.entry(u.outcome_class).or_default() += 1;
        }
        counts
    }

    pub fn to_records(&self) -> Vec<RunRecord> {
        self.runs().map(RunRecord::from).collect()
    }

    /// Writes every run as one JSON line, in (model, task, run_index) order.
    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for record in self.to_records() {
            serde_json::to_writer(&mut writer, &record)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    /// SHA-256 over the exported runs, family map, and domain tokens.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        hasher.update(&buf);
        hasher.update(serde_json::to_vec(&self.family_map).expect("family map serializes"));
        hasher.update(serde_json::to_vec(&self.task_domain_tokens).expect("tokens serialize"));
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Reads a line-delimited record stream into a corpus.
pub fn ingest<R: BufRead>(
    source: R,
    family_map: FamilyMap,
    task_domain_tokens: DomainTokens,
    options: &IngestOptions,
) -> Result<(Corpus, IngestReport)> {
    let mut runs = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RunRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: line_no,
            reason: e.to_string(),
        })?;
        runs.push(run_from_record(record, line_no)?);
        lines.push(line_no);
    }
    build_corpus(runs, &lines, family_map, task_domain_tokens, options)
}

fn run_from_record(record: RunRecord, line: usize) -> Result<Run> {
    let model = record.model.trim().to_string();
    let task = record.task.trim().to_string();
    if model.is_empty() || task.is_empty() {
        return Err(Error::Malformed {
            line,
            reason: "model and task must be non-empty".into(),
        });
    }
    let mut calls = Vec::with_capacity(record.calls.len());
    for (i, c) in record.calls.into_iter().enumerate() {
        let tool_name = c.tool.trim().to_string();
        if tool_name.is_empty() {
            return Err(Error::Malformed {
                line,
                reason: format!("call {} has an empty tool name", i + 1),
            });
        }
        calls.push(ToolCall {
            position: i + 1,
            tool_name,
            errored: c.errored,
        });
    }
    Ok(Run {
        model,
        task,
        run_index: record.run_index,
        success: record.success,
        calls,
    })
}

fn build_corpus(
    runs: Vec<Run>,
    lines: &[usize],
    mut family_map: FamilyMap,
    task_domain_tokens: DomainTokens,
    options: &IngestOptions,
) -> Result<(Corpus, IngestReport)> {
    if options.runs_per_unit == 0 {
        return Err(Error::InvalidConfig("runs_per_unit must be at least 1".into()));
    }
    let mut report = IngestReport {
        records: runs.len(),
        ..Default::default()
    };
    let mut seen: BTreeMap<(String, String, u32), usize> = BTreeMap::new();
    let mut grouped: BTreeMap<(String, String), Vec<Run>> = BTreeMap::new();
    for (mut run, &line) in runs.into_iter().zip(lines) {
        if run.calls.is_empty() && !options.allow_empty_runs {
            return Err(Error::EmptyRun { line });
        }
        for (i, call) in run.calls.iter_mut().enumerate() {
            call.position = i + 1;
            call.tool_name = call.tool_name.trim().to_string();
            if call.tool_name.is_empty() {
                return Err(Error::Malformed {
                    line,
                    reason: format!("call {} has an empty tool name", i + 1),
                });
            }
        }
        let key = (run.model.clone(), run.task.clone(), run.run_index);
        if let Some(&first_line) = seen.get(&key) {
            return Err(Error::DuplicateRun {
                model: key.0,
                task: key.1,
                run_index: key.2,
                first_line,
                second_line: line,
            });
        }
        seen.insert(key, line);
        if family_map.family_of(&run.model).is_none() {
            if options.family_fallback {
                let family = version_stripped_family(&run.model);
                report
                    .warnings
                    .push(format!("family for {} derived as {}", run.model, family));
                family_map.insert(run.model.clone(), family);
            } else {
                return Err(Error::UnknownFamily(run.model));
            }
        }
        grouped
            .entry((run.model.clone(), run.task.clone()))
            .or_default()
            .push(run);
    }

    let mut units = Vec::with_capacity(grouped.len());
    for ((model, task), runs) in grouped {
        if runs.len() != options.runs_per_unit {
            match options.wrong_count {
                WrongCountPolicy::Reject => {
                    return Err(Error::WrongRunCount {
                        model,
                        task,
                        found: runs.len(),
                        expected: options.runs_per_unit,
                    })
                }
                WrongCountPolicy::Drop => {
                    report.warnings.push(format!(
                        "dropped unit {model}/{task}: {} runs, expected {}",
                        runs.len(),
                        options.runs_per_unit
                    ));
                    report.dropped_units.push(DroppedUnit {
                        model,
                        task,
                        runs: runs.len(),
                    });
                    continue;
                }
            }
        }
        let unit = Unit::new(runs)?;
        match unit.outcome_class {
            OutcomeClass::AlwaysSucceed => report.always_succeed += 1,
            OutcomeClass::AlwaysFail => report.always_fail += 1,
            OutcomeClass::Mixed => {
                report.mixed += 1;
                *report.mixed_by_successes.entry(unit.success_count()).or_default() += 1;
            }
        }
        units.push(unit);
    }
    report.units = units.len();

    let mut by_task: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, u) in units.iter().enumerate() {
        by_task.entry(u.task.clone()).or_default().push(i);
    }
    Ok((
        Corpus {
            units,
            family_map,
            task_domain_tokens,
            by_task,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(pairs: &[(&str, &str)]) -> FamilyMap {
        let mut m = FamilyMap::new();
        for (a, b) in pairs {
            m.insert(*a, *b);
        }
        m
    }

    fn line(model: &str, task: &str, idx: u32, success: bool, tools: &[&str]) -> String {
        let calls: Vec<_> = tools.iter().map(|t| serde_json::json!({ "tool": t })).collect();
        serde_json::json!({
            "model": model, "task": task, "run_index": idx, "success": success, "calls": calls
        })
        .to_string()
    }

    #[test]
    fn classify_basic_cases() {
        let r = |s| Run::from_tools("m", "t", 1, s, ["a"]);
        assert_eq!(
            classify_unit(&[r(true), r(true), r(true)]).unwrap(),
            OutcomeClass::AlwaysSucceed
        );
        assert_eq!(
            classify_unit(&[r(true), r(false), r(false)]).unwrap(),
            OutcomeClass::Mixed
        );
        assert_eq!(
            classify_unit(&[r(false), r(false), r(false)]).unwrap(),
            OutcomeClass::AlwaysFail
        );
    }

    #[test]
    fn classify_rejects_mixed_keys() {
        let a = Run::from_tools("m", "t", 1, true, ["a"]);
        let b = Run::from_tools("m", "u", 2, false, ["a"]);
        assert!(matches!(classify_unit(&[a, b]), Err(Error::MixedUnitKeys)));
    }

    #[test]
    fn distinct_tools_is_a_set() {
        let run = Run::from_tools("m", "t", 1, true, ["a", "b", "a", "c"]);
        assert_eq!(distinct_tools(&run), ToolSet::from_iter(["a", "b", "c"]));
        let empty = Run::from_tools("m", "t", 1, true, Vec::<String>::new());
        assert!(distinct_tools(&empty).is_empty());
    }

    #[test]
    fn empty_input_gives_empty_corpus() {
        let (corpus, report) = ingest(
            "".as_bytes(),
            FamilyMap::new(),
            DomainTokens::new(),
            &IngestOptions::default(),
        )
        .unwrap();
        assert!(corpus.units().is_empty());
        assert_eq!(report.units, 0);
        assert_eq!(report.always_succeed + report.always_fail + report.mixed, 0);
    }

    #[test]
    fn duplicate_names_both_lines() {
        let text = [
            line("m", "t", 1, true, &["a"]),
            line("m", "t", 2, true, &["a"]),
            line("m", "t", 1, false, &["b"]),
        ]
        .join("\n");
        let err = ingest(
            text.as_bytes(),
            fm(&[("m", "f")]),
            DomainTokens::new(),
            &IngestOptions::default(),
        )
        .unwrap_err();
        match err {
            Error::DuplicateRun {
                first_line,
                second_line,
                ..
            } => assert_eq!((first_line, second_line), (1, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_is_reported() {
        let text = format!("{}\n{{not json\n", line("m", "t", 1, true, &["a"]));
        let err = ingest(
            text.as_bytes(),
            fm(&[("m", "f")]),
            DomainTokens::new(),
            &IngestOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }));
    }

    #[test]
    fn wrong_run_count_dropped_or_rejected() {
        let text = [
            line("m", "t", 1, true, &["a"]),
            line("m", "t", 2, false, &["a"]),
            line("m", "u", 1, true, &["a"]),
            line("m", "u", 2, true, &["a"]),
            line("m", "u", 3, false, &["b"]),
        ]
        .join("\n");
        let (corpus, report) = ingest(
            text.as_bytes(),
            fm(&[("m", "f")]),
            DomainTokens::new(),
            &IngestOptions::default(),
        )
        .unwrap();
        assert_eq!(corpus.units().len(), 1);
        assert_eq!(report.dropped_units.len(), 1);
        assert_eq!(report.mixed_by_successes.get(&2), Some(&1));

        let strict = IngestOptions {
            wrong_count: WrongCountPolicy::Reject,
            ..Default::default()
        };
        let err = ingest(text.as_bytes(), fm(&[("m", "f")]), DomainTokens::new(), &strict).unwrap_err();
        assert!(matches!(err, Error::WrongRunCount { found: 2, .. }));
    }

    #[test]
    fn missing_family_and_fallback() {
        let text = line("claude-4.5-opus", "t", 1, true, &["a"]);
        let opts = IngestOptions {
            runs_per_unit: 1,
            ..Default::default()
        };
        let err = ingest(text.as_bytes(), FamilyMap::new(), DomainTokens::new(), &opts).unwrap_err();
        assert!(matches!(err, Error::UnknownFamily(ref m) if m == "claude-4.5-opus"));

        let opts = IngestOptions {
            family_fallback: true,
            ..opts
        };
        let (corpus, _) = ingest(text.as_bytes(), FamilyMap::new(), DomainTokens::new(), &opts).unwrap();
        assert_eq!(corpus.family_of("claude-4.5-opus"), Some("claude"));
    }

    #[test]
    fn version_stripping() {
        assert_eq!(version_stripped_family("gpt-5.1"), "gpt");
        assert_eq!(version_stripped_family("claude-4.5-sonnet"), "claude");
        assert_eq!(version_stripped_family("kimi-k2-0905"), "kimi-k");
        assert_eq!(version_stripped_family("42"), "42");
    }

    #[test]
    fn empty_runs_rejected_by_default() {
        let text = line("m", "t", 1, true, &[]);
        let opts = IngestOptions {
            runs_per_unit: 1,
            ..Default::default()
        };
        let err = ingest(text.as_bytes(), fm(&[("m", "f")]), DomainTokens::new(), &opts).unwrap_err();
        assert!(matches!(err, Error::EmptyRun { line: 1 }));
        let opts = IngestOptions {
            allow_empty_runs: true,
            ..opts
        };
        assert!(ingest(text.as_bytes(), fm(&[("m", "f")]), DomainTokens::new(), &opts).is_ok());
    }

    #[test]
    fn tool_names_are_trimmed_case_preserved() {
        let text = line("m", "t", 1, true, &["  Fetch-JSON ", "fetch-json"]);
        let opts = IngestOptions {
            runs_per_unit: 1,
            ..Default::default()
        };
        let (corpus, _) = ingest(text.as_bytes(), fm(&[("m", "f")]), DomainTokens::new(), &opts).unwrap();
        let set = corpus.units()[0].runs[0].tool_set();
        assert_eq!(set, ToolSet::from_iter(["Fetch-JSON", "fetch-json"]));
    }

    #[test]
    fn family_map_file_formats() {
        let csv_text = "model,family\nclaude-4.5-opus,claude\n# comment\ngpt-5, gpt\n";
        let map = FamilyMap::from_reader(csv_text.as_bytes()).unwrap();
        assert_eq!(map.family_of("gpt-5"), Some("gpt"));
        assert_eq!(map.family_of("model"), None);
        let tsv = "o3\topenai-o\no4-mini\topenai-o\n";
        let map = FamilyMap::from_reader(tsv.as_bytes()).unwrap();
        assert_eq!(map.family_of("o4-mini"), Some("openai-o"));
        assert!(FamilyMap::from_reader("a,b,c\n".as_bytes()).is_err());
    }

    #[test]
    fn domain_token_matching_is_case_insensitive_substring() {
        let tokens: DomainTokens = DomainTokens::from_reader(r#"{"notion-hr": ["Notion"]}"#.as_bytes()).unwrap();
        assert!(tokens.is_domain_tool("notion-hr", "notion-search_pages"));
        assert!(!tokens.is_domain_tool("notion-hr", "filesystem-read_file"));
        assert!(!tokens.is_domain_tool("other", "notion-search_pages"));
    }
}
