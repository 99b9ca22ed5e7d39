//! Live adherence monitoring: calibrate a cutoff from history, follow a run
//! call by call, and decide at a checkpoint whether to flag it for restart.
//!
//! The monitor only emits decisions; acting on them is up to the caller.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::adherence::{adherence_to, partial_adherence, prefix_length};
use crate::canonical::{consensus_set, CanonicalSpec, SpecTemplate};
use crate::error::{Error, Result};
use crate::reliability::{
    flag_runs, intervention_on, population, tercile_cutoff, InterventionPolicy, InterventionReport, PolicyKind, RunKey,
};
use crate::stats::Resampler;
use crate::store::{Corpus, Run, ToolCall, ToolSet};

pub const DEFAULT_MIN_HISTORY: usize = 9;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CalibrationSource {
    PerTask {
        history_runs: usize,
    },
    Global {
        history_runs: usize,
    },
    /// Threshold supplied directly rather than calibrated.
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorProfile {
    pub task: String,
    pub canonical: ToolSet,
    pub checkpoint: f64,
    /// Runs at or below this adherence are flagged.
    pub threshold: f64,
    pub source: CalibrationSource,
}

impl MonitorProfile {
    pub fn fixed(task: &str, canonical: ToolSet, checkpoint: f64, threshold: f64) -> Result<Self> {
        let p = MonitorProfile {
            task: task.to_string(),
            canonical,
            checkpoint,
            threshold,
            source: CalibrationSource::Fixed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        if !(self.checkpoint > 0.0 && self.checkpoint <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "checkpoint must lie in (0, 1], got {}",
                self.checkpoint
            )));
        }
        if self.canonical.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "empty canonical set for task {}",
                self.task
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: MonitorProfile = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub checkpoint: f64,
    /// Task history needed before falling back to the global pool.
    pub min_history: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            checkpoint: 0.75,
            min_history: DEFAULT_MIN_HISTORY,
        }
    }
}

/// Calibrates a profile for `task`: the threshold is the lower-tercile
/// boundary of historical checkpoint adherence on the task, or over every
/// task with a canonical set when the task's own history is too short.
pub fn calibrate(
    corpus: &Corpus,
    task: &str,
    spec: &CanonicalSpec,
    opts: &CalibrationOptions,
) -> Result<MonitorProfile> {
    let canonical = consensus_set(task, corpus, spec)?;
    let history = |t: &str, canon: &ToolSet| -> Vec<f64> {
        corpus
            .units_for_task(t)
            .flat_map(|u| u.runs.iter())
            .filter_map(|r| adherence_to(&r.prefix_tool_set(prefix_length(opts.checkpoint, r.len())), canon).ok())
            .map(|a| a.value)
            .collect()
    };
    let own = history(task, &canonical.tools);
    let (values, source) = if own.len() >= opts.min_history {
        let n = own.len();
        (own, CalibrationSource::PerTask { history_runs: n })
    } else {
        let mut pooled = Vec::new();
        for t in corpus.tasks() {
            if let Ok(c) = consensus_set(t, corpus, spec) {
                pooled.extend(history(t, &c.tools));
            }
        }
        let n = pooled.len();
        (pooled, CalibrationSource::Global { history_runs: n })
    };
    if values.is_empty() {
        return Err(Error::NoEligible(format!("no calibration history for task {task}")));
    }
    let threshold = if values.len() >= 3 {
        tercile_cutoff(&values)?
    } else {
        values.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let profile = MonitorProfile {
        task: task.to_string(),
        canonical: canonical.tools,
        checkpoint: opts.checkpoint,
        threshold,
        source,
    };
    profile.validate()?;
    Ok(profile)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionKind {
    Continue,
    FlagRestart,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub kind: DecisionKind,
    pub adherence: f64,
    pub threshold: f64,
    /// Call count at which the checkpoint was evaluated.
    pub at_call: usize,
    pub budget: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum TranscriptEvent {
    Observe {
        call: usize,
        tool: String,
        distinct_tools: usize,
    },
    Decide(Decision),
    BudgetOverrun {
        at_call: usize,
        old_budget: usize,
        new_budget: usize,
    },
    Close {
        calls: usize,
    },
}

/// The running state of one monitored run.
#[derive(Clone, Debug)]
pub struct MonitorSession {
    profile: MonitorProfile,
    budget: usize,
    observed: usize,
    running: ToolSet,
    decisions: Vec<Decision>,
    transcript: Vec<TranscriptEvent>,
    closed: bool,
}

impl MonitorSession {
    /// `budget` is the caller's expected total call count; the checkpoint
    /// fires at `ceil(checkpoint * budget)` calls.
    pub fn new(profile: MonitorProfile, budget: usize) -> Result<Self> {
        profile.validate()?;
        if budget == 0 {
            return Err(Error::InvalidConfig("call budget must be positive".into()));
        }
        Ok(MonitorSession {
            profile,
            budget,
            observed: 0,
            running: ToolSet::new(),
            decisions: Vec::new(),
            transcript: Vec::new(),
            closed: false,
        })
    }

    pub fn profile(&self) -> &MonitorProfile {
        &self.profile
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn observed(&self) -> usize {
        self.observed
    }

    pub fn running_set(&self) -> &ToolSet {
        &self.running
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn transcript(&self) -> &[TranscriptEvent] {
        &self.transcript
    }

    pub fn checkpoint_call(&self) -> usize {
        prefix_length(self.profile.checkpoint, self.budget)
    }

    /// Adherence of everything observed so far.
    pub fn running_adherence(&self) -> Result<f64> {
        Ok(adherence_to(&self.running, &self.profile.canonical)?.value)
    }

    /// Records one call by tool name. Returns the decision if this call
    /// reached the checkpoint.
    pub fn observe_tool(&mut self, tool: &str) -> Result<Option<Decision>> {
        if self.closed {
            return Err(Error::SessionClosed);
        }
        self.observed += 1;
        self.running.insert(tool.trim());
        self.transcript.push(TranscriptEvent::Observe {
            call: self.observed,
            tool: tool.trim().to_string(),
            distinct_tools: self.running.len(),
        });
        if self.observed > self.budget {
            let new_budget = self.budget * 2;
            self.transcript.push(TranscriptEvent::BudgetOverrun {
                at_call: self.observed,
                old_budget: self.budget,
                new_budget,
            });
            self.budget = new_budget;
        }
        if self.observed == self.checkpoint_call() && self.decisions.last().is_none_or(|d| d.budget != self.budget) {
            let adherence = self.running_adherence()?;
            let kind = if adherence <= self.profile.threshold {
                DecisionKind::FlagRestart
            } else {
                DecisionKind::Continue
            };
            let d = Decision {
                kind,
                adherence,
                threshold: self.profile.threshold,
                at_call: self.observed,
                budget: self.budget,
            };
            self.decisions.push(d.clone());
            self.transcript.push(TranscriptEvent::Decide(d.clone()));
            return Ok(Some(d));
        }
        Ok(None)
    }

    pub fn observe(&mut self, call: &ToolCall) -> Result<Option<Decision>> {
        self.observe_tool(&call.tool_name)
    }

    /// The decision for the most recent checkpoint reached.
    pub fn decide(&self) -> Result<Decision> {
        self.decisions.last().cloned().ok_or(Error::CheckpointNotReached {
            observed: self.observed,
            required: self.checkpoint_call(),
        })
    }

    pub fn close(&mut self) {
        if !self.closed {
            self.closed = true;
            self.transcript.push(TranscriptEvent::Close { calls: self.observed });
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// One JSON object per transcript event.
    pub fn write_transcript<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.transcript {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn read_transcript<R: BufRead>(r: R) -> Result<Vec<TranscriptEvent>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Runs a complete trajectory through a fresh session with the budget set
/// to its true length.
pub fn replay(profile: &MonitorProfile, run: &Run) -> Result<MonitorSession> {
    let mut s = MonitorSession::new(profile.clone(), run.len().max(1))?;
    for c in &run.calls {
        s.observe(c)?;
    }
    s.close();
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub policy: InterventionPolicy,
    pub runs_replayed: usize,
    pub flagged: BTreeSet<RunKey>,
    /// Failure rate among flagged and unflagged runs.
    pub flagged_failure_rate: Option<f64>,
    pub unflagged_failure_rate: Option<f64>,
    pub intervention: Option<InterventionReport>,
    /// Monitor flags equal the intervention estimator's flags.
    pub sets_agree: Option<bool>,
    pub reason: Option<String>,
}

/// Replays every run of the intervention population through the monitor
/// with thresholds from the same policy, and reconciles the flagged set
/// with the intervention estimator.
pub fn simulate_policy(
    corpus: &Corpus,
    template: &SpecTemplate,
    policy: &InterventionPolicy,
    resampler: &Resampler,
) -> Result<ReplayReport> {
    policy.validate()?;
    let pop = population(corpus, template, policy.checkpoint)?;
    let mut report = ReplayReport {
        policy: *policy,
        runs_replayed: 0,
        flagged: BTreeSet::new(),
        flagged_failure_rate: None,
        unflagged_failure_rate: None,
        intervention: None,
        sets_agree: None,
        reason: None,
    };
    if pop.runs.is_empty() {
        return Ok(report);
    }
    let thresholds: Vec<f64> = match policy.kind {
        PolicyKind::BottomTercile => match flag_runs(&pop, policy) {
            Ok((_, Some(cut))) => vec![cut; pop.units.len()],
            Ok(_) => unreachable!("tercile policy always yields a cutoff"),
            Err(e) => {
                report.reason = Some(e.to_string());
                return Ok(report);
            }
        },
        // A threshold may fall below zero; nothing is flagged then.
        PolicyKind::BelowUnitMeanBy(m) => pop.checkpoint_unit_means().iter().map(|u| u - m).collect(),
    };

    let runs: BTreeMap<RunKey, &Run> = corpus.runs().map(|r| (RunKey::from(r), r)).collect();
    let (mut flagged_fail, mut unflagged_fail, mut unflagged) = (0usize, 0usize, 0usize);
    for pr in &pop.runs {
        let run = runs[&pr.key];
        let profile = MonitorProfile {
            task: pr.key.task.clone(),
            canonical: pop.canonical_sets[pr.unit].clone(),
            checkpoint: policy.checkpoint,
            threshold: thresholds[pr.unit].clamp(-1.0, 1.0),
            source: CalibrationSource::Fixed,
        };
        // validate() would reject a negative threshold; sessions only compare.
        let mut session = MonitorSession {
            profile,
            budget: run.len(),
            observed: 0,
            running: ToolSet::new(),
            decisions: Vec::new(),
            transcript: Vec::new(),
            closed: false,
        };
        for c in &run.calls {
            session.observe(c)?;
        }
        report.runs_replayed += 1;
        let flagged = session.decide()?.kind == DecisionKind::FlagRestart;
        if flagged {
            report.flagged.insert(pr.key.clone());
            flagged_fail += usize::from(!pr.success);
        } else {
            unflagged += 1;
            unflagged_fail += usize::from(!pr.success);
        }
    }
    let nf = report.flagged.len();
    report.flagged_failure_rate = (nf > 0).then(|| flagged_fail as f64 / nf as f64);
    report.unflagged_failure_rate = (unflagged > 0).then(|| unflagged_fail as f64 / unflagged as f64);
    match intervention_on(&pop, policy, resampler) {
        Ok(iv) => {
            report.sets_agree = Some(iv.flagged == report.flagged);
            report.intervention = Some(iv);
        }
        Err(e) => {
            let (offline, _) = flag_runs(&pop, policy)?;
            report.sets_agree = Some(offline == report.flagged);
            report.reason = Some(e.to_string());
        }
    }
    Ok(report)
}

/// Checkpoint adherence the monitor would compute for a finished run.
pub fn offline_checkpoint_adherence(
    run: &Run,
    canonical: &crate::canonical::CanonicalSet,
    checkpoint: f64,
) -> Result<f64> {
    Ok(partial_adherence(run, canonical, checkpoint)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(threshold: f64) -> MonitorProfile {
        MonitorProfile::fixed("t", ToolSet::from_iter(["a", "b", "c"]), 0.75, threshold).unwrap()
    }

    #[test]
    fn checkpoint_fires_once_at_ceiling() {
        let mut s = MonitorSession::new(profile(0.45), 20).unwrap();
        assert_eq!(s.checkpoint_call(), 15);
        for i in 1..=14 {
            assert!(s.observe_tool(if i % 2 == 0 { "a" } else { "x" }).unwrap().is_none());
        }
        assert!(matches!(
            s.decide(),
            Err(Error::CheckpointNotReached {
                observed: 14,
                required: 15
            })
        ));
        let d = s.observe_tool("b").unwrap().unwrap();
        // {a, b, x} vs {a, b, c} = 2/4
        assert_eq!(d.adherence, 0.5);
        assert_eq!(d.kind, DecisionKind::Continue);
        assert_eq!(d.at_call, 15);
        assert!(s.observe_tool("c").unwrap().is_none());
        assert_eq!(s.decide().unwrap(), d);
        assert_eq!(s.decide().unwrap(), s.decide().unwrap());
    }

    #[test]
    fn inclusive_threshold_and_maximal_adherence() {
        let mut s = MonitorSession::new(profile(0.5), 4).unwrap();
        for t in ["a", "b", "x"] {
            s.observe_tool(t).unwrap();
        }
        assert_eq!(s.decide().unwrap().kind, DecisionKind::FlagRestart);

        let mut s = MonitorSession::new(profile(0.99), 4).unwrap();
        for t in ["a", "b", "c"] {
            s.observe_tool(t).unwrap();
        }
        let d = s.decide().unwrap();
        assert_eq!(d.adherence, 1.0);
        assert_eq!(d.kind, DecisionKind::Continue);
    }

    #[test]
    fn closed_session_rejects_calls() {
        let mut s = MonitorSession::new(profile(0.3), 4).unwrap();
        s.close();
        assert!(matches!(s.observe_tool("a"), Err(Error::SessionClosed)));
    }

    #[test]
    fn budget_overrun_doubles_and_reevaluates() {
        let mut s = MonitorSession::new(profile(0.3), 4).unwrap();
        let mut decisions = 0;
        for t in ["x", "y", "a", "a", "b", "c", "c"] {
            decisions += usize::from(s.observe_tool(t).unwrap().is_some());
        }
        // checkpoint 3 of 4, then budget 8 with checkpoint 6
        assert_eq!(decisions, 2);
        assert_eq!(s.budget(), 8);
        assert!(s.transcript().iter().any(|e| matches!(
            e,
            TranscriptEvent::BudgetOverrun {
                at_call: 5,
                old_budget: 4,
                new_budget: 8
            }
        )));
        assert_eq!(s.decisions()[0].kind, DecisionKind::FlagRestart);
        assert_eq!(s.decisions()[1].kind, DecisionKind::Continue);
    }

    #[test]
    fn transcript_and_profile_round_trip() {
        let p = profile(0.4);
        assert_eq!(MonitorProfile::from_json(&p.to_json().unwrap()).unwrap(), p);
        let mut s = MonitorSession::new(p, 4).unwrap();
        for t in ["a", "x", "b", "c"] {
            s.observe_tool(t).unwrap();
        }
        s.close();
        let mut buf = Vec::new();
        s.write_transcript(&mut buf).unwrap();
        assert_eq!(read_transcript(&buf[..]).unwrap(), s.transcript());
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 6);
    }

    #[test]
    fn running_set_never_shrinks() {
        let mut s = MonitorSession::new(profile(0.4), 10).unwrap();
        let mut last = 0;
        for t in ["a", "a", "x", "b", "x", "a"] {
            s.observe_tool(t).unwrap();
            assert!(s.running_set().len() >= last);
            last = s.running_set().len();
        }
    }
}
