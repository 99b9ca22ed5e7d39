//! Per-model reliability scorecards and the counterfactual lift of
//! restarting runs that drift from their canonical set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adherence::partial_adherence;
use crate::canonical::{CanonicalIndex, SpecTemplate};
use crate::error::{Error, Result};
use crate::stats::{bootstrap_ci, logistic_demeaned, mean, Estimate, LogisticFit, Resampler};
use crate::store::{Corpus, OutcomeClass, Run, ToolSet};
use crate::within_unit::{logistic_groups, scored_mixed_units};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReliability {
    pub model: String,
    /// Mean run success.
    pub p_at_1: f64,
    /// Share of tasks with at least one success.
    pub p_at_k: f64,
    /// Share of tasks succeeding on every run.
    pub p_hat_k: f64,
    /// Mixed tasks over tasks with at least one success; `None` when the
    /// model never succeeds.
    pub mo_over_patk: Option<f64>,
    pub tasks: usize,
    pub runs: usize,
}

/// Reliability metrics per model, sorted by P@1 descending (ties by name).
pub fn per_model_metrics(corpus: &Corpus) -> Vec<ModelReliability> {
    let mut by_model: BTreeMap<&str, Vec<&crate::store::Unit>> = BTreeMap::new();
    for u in corpus.units() {
        by_model.entry(u.model.as_str()).or_default().push(u);
    }
    let mut rows: Vec<ModelReliability> = by_model
        .into_iter()
        .map(|(model, units)| {
            let runs: usize = units.iter().map(|u| u.runs.len()).sum();
            let successes: usize = units.iter().map(|u| u.success_count()).sum();
            let count = |c: OutcomeClass| units.iter().filter(|u| u.outcome_class == c).count();
            let (succeed, mixed) = (count(OutcomeClass::AlwaysSucceed), count(OutcomeClass::Mixed));
            let tasks = units.len() as f64;
            ModelReliability {
                model: model.to_string(),
                p_at_1: successes as f64 / runs as f64,
                p_at_k: (succeed + mixed) as f64 / tasks,
                p_hat_k: succeed as f64 / tasks,
                mo_over_patk: (succeed + mixed > 0).then(|| mixed as f64 / (succeed + mixed) as f64),
                tasks: units.len(),
                runs,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.p_at_1.total_cmp(&a.p_at_1).then_with(|| a.model.cmp(&b.model)));
    rows
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PolicyKind {
    /// Flag runs in the lowest third of pooled checkpoint adherence.
    BottomTercile,
    /// Flag runs whose checkpoint adherence is at least `margin` below the
    /// mean checkpoint adherence of their unit.
    BelowUnitMeanBy(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionPolicy {
    pub kind: PolicyKind,
    pub checkpoint: f64,
}

pub const DEFAULT_POLICY_CHECKPOINT: f64 = 0.75;

impl InterventionPolicy {
    pub fn bottom_tercile() -> Self {
        InterventionPolicy {
            kind: PolicyKind::BottomTercile,
            checkpoint: DEFAULT_POLICY_CHECKPOINT,
        }
    }

    pub fn below_unit_mean(margin: f64) -> Self {
        InterventionPolicy {
            kind: PolicyKind::BelowUnitMeanBy(margin),
            checkpoint: DEFAULT_POLICY_CHECKPOINT,
        }
    }

    pub fn at(mut self, checkpoint: f64) -> Self {
        self.checkpoint = checkpoint;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.checkpoint > 0.0 && self.checkpoint <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "policy checkpoint must lie in (0, 1], got {}",
                self.checkpoint
            )));
        }
        if let PolicyKind::BelowUnitMeanBy(m) = self.kind {
            if !(m > 0.0 && m < 1.0) {
                return Err(Error::InvalidConfig(format!("margin must lie in (0, 1), got {m}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for InterventionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PolicyKind::BottomTercile => write!(f, "tercile@{}", self.checkpoint),
            PolicyKind::BelowUnitMeanBy(m) => write!(f, "below-mean:{m}@{}", self.checkpoint),
        }
    }
}

/// Parses `tercile` or `below-mean:MARGIN` at the default checkpoint.
impl FromStr for InterventionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let policy = match s.trim() {
            "tercile" => InterventionPolicy::bottom_tercile(),
            other => match other.strip_prefix("below-mean:") {
                Some(m) => InterventionPolicy::below_unit_mean(
                    m.parse()
                        .map_err(|_| Error::InvalidConfig(format!("bad margin in policy '{s}'")))?,
                ),
                None => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown policy '{s}' (expected tercile or below-mean:MARGIN)"
                    )))
                }
            },
        };
        policy.validate()?;
        Ok(policy)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunKey {
    pub model: String,
    pub task: String,
    pub run_index: u32,
}

impl From<&Run> for RunKey {
    fn from(r: &Run) -> Self {
        RunKey {
            model: r.model.clone(),
            task: r.task.clone(),
            run_index: r.run_index,
        }
    }
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}#{}", self.model, self.task, self.run_index)
    }
}

/// One run of the intervention reference population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationRun {
    pub key: RunKey,
    /// Index of the run's unit in the population's unit list.
    pub unit: usize,
    pub success: bool,
    pub checkpoint_adherence: f64,
    pub full_adherence: f64,
    pub run_length: usize,
}

/// All runs of analyzed mixed units, scored at `checkpoint`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub checkpoint: f64,
    pub runs: Vec<PopulationRun>,
    /// `(model, task)` per unit index.
    pub units: Vec<(String, String)>,
    /// Per unit: mean full adherence of its successful runs.
    pub success_targets: Vec<f64>,
    /// Per unit: mean full adherence over all its runs.
    pub unit_means: Vec<f64>,
    /// Per unit: the canonical tool set runs were scored against.
    pub canonical_sets: Vec<ToolSet>,
    /// Logistic fit of success on within-unit demeaned full adherence.
    pub fit: Option<LogisticFit>,
    pub fit_error: Option<String>,
}

/// Builds the shared reference population for intervention analysis and
/// monitor replay.
pub fn population(corpus: &Corpus, template: &SpecTemplate, checkpoint: f64) -> Result<Population> {
    let index = CanonicalIndex::build(corpus, template)?;
    let scored = scored_mixed_units(corpus, &index);
    let mut pop = Population {
        checkpoint,
        runs: Vec::new(),
        units: Vec::new(),
        success_targets: Vec::new(),
        unit_means: Vec::new(),
        canonical_sets: Vec::new(),
        fit: None,
        fit_error: None,
    };
    for (i, s) in scored.iter().enumerate() {
        pop.units.push((s.unit.model.clone(), s.unit.task.clone()));
        pop.success_targets.push(s.success_mean());
        pop.unit_means.push(mean(&s.adherence));
        pop.canonical_sets.push(s.canonical.tools.clone());
        for (run, &full) in s.unit.runs.iter().zip(&s.adherence) {
            pop.runs.push(PopulationRun {
                key: RunKey::from(run),
                unit: i,
                success: run.success,
                checkpoint_adherence: partial_adherence(run, s.canonical, checkpoint)?.value,
                full_adherence: full,
                run_length: run.len(),
            });
        }
    }
    match logistic_demeaned(&logistic_groups(&scored)) {
        Ok(fit) => pop.fit = Some(fit),
        Err(e) => pop.fit_error = Some(e.to_string()),
    }
    Ok(pop)
}

impl Population {
    /// Mean checkpoint adherence per unit.
    pub fn checkpoint_unit_means(&self) -> Vec<f64> {
        let mut sums = vec![(0.0, 0usize); self.units.len()];
        for r in &self.runs {
            sums[r.unit].0 += r.checkpoint_adherence;
            sums[r.unit].1 += 1;
        }
        sums.into_iter().map(|(s, n)| s / n as f64).collect()
    }
}

/// Lower-tercile boundary: the value at rank `ceil(n/3)` of the sorted
/// data. Runs at or below it are flagged.
pub fn tercile_cutoff(values: &[f64]) -> Result<f64> {
    if values.len() < 3 {
        return Err(Error::NoEligible(format!(
            "tercile cutoff needs at least 3 runs, found {}",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[values.len().div_ceil(3) - 1])
}

/// The runs a policy flags, plus the pooled threshold when there is one.
pub fn flag_runs(pop: &Population, policy: &InterventionPolicy) -> Result<(BTreeSet<RunKey>, Option<f64>)> {
    policy.validate()?;
    match policy.kind {
        PolicyKind::BottomTercile => {
            let values: Vec<f64> = pop.runs.iter().map(|r| r.checkpoint_adherence).collect();
            let cut = tercile_cutoff(&values)?;
            let flagged = pop
                .runs
                .iter()
                .filter(|r| r.checkpoint_adherence <= cut)
                .map(|r| r.key.clone())
                .collect();
            Ok((flagged, Some(cut)))
        }
        PolicyKind::BelowUnitMeanBy(margin) => {
            let means = pop.checkpoint_unit_means();
            let flagged = pop
                .runs
                .iter()
                .filter(|r| r.checkpoint_adherence <= means[r.unit] - margin)
                .map(|r| r.key.clone())
                .collect();
            Ok((flagged, None))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionReport {
    pub policy: InterventionPolicy,
    pub eligible_runs: usize,
    pub flagged_runs: usize,
    pub flagged_fraction: f64,
    pub threshold: Option<f64>,
    /// Mean per-run lift in success probability, with a unit-clustered CI.
    pub lift: Estimate,
    /// Observed success rate among flagged runs.
    pub observed_success_rate: Option<f64>,
    /// Mean fitted success probability of flagged runs.
    pub predicted_baseline: Option<f64>,
    /// Mean fitted probability at the counterfactual adherence.
    pub counterfactual_rate: Option<f64>,
    pub flagged: BTreeSet<RunKey>,
}

/// Estimated success lift if flagged runs had reached the mean adherence
/// of their unit's successful runs, evaluated through the within-unit
/// logistic fit (held fixed during the bootstrap).
pub fn intervention_lift(
    corpus: &Corpus,
    template: &SpecTemplate,
    policy: &InterventionPolicy,
    resampler: &Resampler,
) -> Result<InterventionReport> {
    policy.validate()?;
    let pop = population(corpus, template, policy.checkpoint)?;
    intervention_on(&pop, policy, resampler)
}

type FlaggedRow = (usize, f64, f64, bool);

pub fn intervention_on(
    pop: &Population,
    policy: &InterventionPolicy,
    resampler: &Resampler,
) -> Result<InterventionReport> {
    if pop.runs.is_empty() {
        return Err(Error::NoEligible("no mixed-unit runs with a canonical set".into()));
    }
    let (flagged, threshold) = flag_runs(pop, policy)?;
    let fit = pop.fit.as_ref().ok_or_else(|| {
        Error::NoEligible(format!(
            "logistic fit failed: {}",
            pop.fit_error.as_deref().unwrap_or("?")
        ))
    })?;

    // (unit, observed prob, counterfactual prob, success) per flagged run
    let rows: Vec<FlaggedRow> = pop
        .runs
        .iter()
        .filter(|r| flagged.contains(&r.key))
        .map(|r| {
            let centre = pop.unit_means[r.unit];
            let observed = fit.predict(r.full_adherence - centre);
            let counterfactual = fit.predict(pop.success_targets[r.unit] - centre);
            (r.unit, observed, counterfactual, r.success)
        })
        .collect();

    let n = rows.len();
    let lift = if n == 0 {
        Estimate {
            point: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
            p_value: 1.0,
            n: 0,
            method: "no flagged runs".into(),
            statistic: None,
        }
    } else {
        let mut clusters: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for &(u, obs, cf, _) in &rows {
            clusters.entry(u).or_default().push(cf - obs);
        }
        let clusters: Vec<Vec<f64>> = clusters.into_values().collect();
        let statistic = |draw: &[&Vec<f64>]| {
            let (s, c) = draw
                .iter()
                .fold((0.0, 0usize), |(s, c), v| (s + v.iter().sum::<f64>(), c + v.len()));
            s / c as f64
        };
        let point = rows.iter().map(|r| r.2 - r.1).sum::<f64>() / n as f64;
        if clusters.len() >= 2 {
            let mut e = bootstrap_ci(
                &clusters,
                statistic,
                &resampler.derive(&format!("intervention/{policy}")),
            )?;
            e.point = point;
            e.n = n;
            e
        } else {
            Estimate {
                point,
                ci_low: f64::NAN,
                ci_high: f64::NAN,
                p_value: f64::NAN,
                n,
                method: "single flagged unit; no interval".into(),
                statistic: None,
            }
        }
    };
    let avg = |f: &dyn Fn(&FlaggedRow) -> f64| (n > 0).then(|| rows.iter().map(f).sum::<f64>() / n as f64);
    Ok(InterventionReport {
        policy: *policy,
        eligible_runs: pop.runs.len(),
        flagged_runs: n,
        flagged_fraction: n as f64 / pop.runs.len() as f64,
        threshold,
        lift,
        observed_success_rate: avg(&|r| f64::from(u8::from(r.3))),
        predicted_baseline: avg(&|r| r.1),
        counterfactual_rate: avg(&|r| r.2),
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{DomainTokens, FamilyMap, IngestOptions};

    fn corpus(runs: Vec<Run>) -> Corpus {
        let mut fm = FamilyMap::new();
        for r in &runs {
            fm.insert(r.model.clone(), "f");
        }
        Corpus::from_runs(runs, fm, DomainTokens::new(), &IngestOptions::default())
            .unwrap()
            .0
    }

    fn unit(model: &str, task: &str, outcomes: [bool; 3]) -> Vec<Run> {
        outcomes
            .iter()
            .enumerate()
            .map(|(i, &s)| Run::from_tools(model, task, i as u32 + 1, s, ["a"]))
            .collect()
    }

    #[test]
    fn scorecard_by_hand() {
        let mut runs = Vec::new();
        runs.extend(unit("m", "t1", [true, true, true]));
        runs.extend(unit("m", "t2", [true, false, false]));
        runs.extend(unit("m", "t3", [false, false, false]));
        runs.extend(unit("m", "t4", [true, true, false]));
        runs.extend(unit("z", "t1", [false, false, false]));
        let rows = per_model_metrics(&corpus(runs));
        let m = &rows[0];
        assert_eq!(m.model, "m");
        assert_eq!(m.p_at_1, 6.0 / 12.0);
        assert_eq!(m.p_at_k, 0.75);
        assert_eq!(m.p_hat_k, 0.25);
        assert_eq!(m.mo_over_patk, Some(2.0 / 3.0));
        assert_eq!(rows[1].mo_over_patk, None);
        assert_eq!(rows[1].p_at_1, 0.0);
    }

    #[test]
    fn policy_parsing() {
        assert_eq!(
            "tercile".parse::<InterventionPolicy>().unwrap(),
            InterventionPolicy::bottom_tercile()
        );
        let p: InterventionPolicy = "below-mean:0.1".parse().unwrap();
        assert_eq!(p.kind, PolicyKind::BelowUnitMeanBy(0.1));
        assert_eq!(p.checkpoint, 0.75);
        assert!("below-mean:1.5".parse::<InterventionPolicy>().is_err());
        assert!("random".parse::<InterventionPolicy>().is_err());
    }

    #[test]
    fn tercile_rank() {
        let v: Vec<f64> = (1..=12).map(|i| i as f64 / 12.0).rev().collect();
        assert_eq!(tercile_cutoff(&v).unwrap(), 4.0 / 12.0);
        assert_eq!(tercile_cutoff(&[0.5, 0.2, 0.9, 0.4]).unwrap(), 0.4);
        assert!(tercile_cutoff(&[0.1, 0.2]).is_err());
    }
}
