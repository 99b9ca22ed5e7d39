//! Within-unit success/failure adherence gaps and their robustness program.
//!
//! Every estimate here compares runs of the same model on the same task, so
//! anything fixed within a unit (capability, task difficulty) cancels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::adherence::{adherence, length_residualize};
use crate::canonical::{
    canonical_strength, consensus_set, CanonicalIndex, CanonicalSet, CanonicalSpec, Scope, ScopeKind, SpecTemplate,
};
use crate::error::{Error, Result};
use crate::stats::{
    binomial_test, bootstrap_ci, logistic_demeaned, mean, paired_t, pearson, Estimate, LogisticFit, Resampler,
    SIGNIFICANCE,
};
use crate::store::{Corpus, Unit};

/// A mixed unit scored against its canonical set.
#[derive(Clone, Debug)]
pub struct ScoredUnit<'a> {
    pub unit: &'a Unit,
    pub canonical: &'a CanonicalSet,
    /// Full-run adherence, aligned with `unit.runs`.
    pub adherence: Vec<f64>,
}

impl ScoredUnit<'_> {
    pub fn success_mean(&self) -> f64 {
        self.side_mean(true)
    }

    pub fn failure_mean(&self) -> f64 {
        self.side_mean(false)
    }

    fn side_mean(&self, success: bool) -> f64 {
        let vals: Vec<f64> = self
            .unit
            .runs
            .iter()
            .zip(&self.adherence)
            .filter(|(r, _)| r.success == success)
            .map(|(_, &a)| a)
            .collect();
        mean(&vals)
    }
}

/// Mixed units that have a usable canonical set under `index`, in corpus
/// order (sorted by model, then task).
pub fn scored_mixed_units<'a>(corpus: &'a Corpus, index: &'a CanonicalIndex) -> Vec<ScoredUnit<'a>> {
    corpus
        .mixed_units()
        .filter_map(|unit| score_unit(unit, corpus, index))
        .collect()
}

/// Scores one unit of any outcome class; `None` when it has no usable
/// canonical set.
pub fn score_unit<'a>(unit: &'a Unit, corpus: &'a Corpus, index: &'a CanonicalIndex) -> Option<ScoredUnit<'a>> {
    let canonical = index.for_unit(unit, corpus)?;
    let adherence = unit
        .runs
        .iter()
        .map(|r| adherence(r, canonical).map(|a| a.value))
        .collect::<Result<Vec<f64>>>()
        .ok()?;
    Some(ScoredUnit {
        unit,
        canonical,
        adherence,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitGap {
    pub model: String,
    pub task: String,
    pub success_mean: f64,
    pub failure_mean: f64,
    pub delta: f64,
    pub spec: CanonicalSpec,
}

impl UnitGap {
    fn from_scored(s: &ScoredUnit<'_>) -> Self {
        let (sm, fm) = (s.success_mean(), s.failure_mean());
        UnitGap {
            model: s.unit.model.clone(),
            task: s.unit.task.clone(),
            success_mean: sm,
            failure_mean: fm,
            delta: sm - fm,
            spec: s.canonical.spec.clone(),
        }
    }
}

/// Mean success adherence minus mean failure adherence for one mixed unit.
pub fn unit_gap(unit: &Unit, corpus: &Corpus, spec: &CanonicalSpec) -> Result<UnitGap> {
    if !unit.is_mixed() {
        return Err(Error::NoEligible(format!(
            "unit {} is {}, not mixed",
            unit.key(),
            unit.outcome_class.label()
        )));
    }
    let canonical = consensus_set(&unit.task, corpus, spec)?;
    let adherence = unit
        .runs
        .iter()
        .map(|r| adherence(r, &canonical).map(|a| a.value))
        .collect::<Result<Vec<f64>>>()?;
    Ok(UnitGap::from_scored(&ScoredUnit {
        unit,
        canonical: &canonical,
        adherence,
    }))
}

/// Unit gaps for every mixed unit with a usable canonical set.
pub fn unit_gaps(corpus: &Corpus, template: &SpecTemplate) -> Result<Vec<UnitGap>> {
    let index = CanonicalIndex::build(corpus, template)?;
    Ok(scored_mixed_units(corpus, &index)
        .iter()
        .map(UnitGap::from_scored)
        .collect())
}

/// A paired estimate over unit deltas: paired-t p-value, cluster-bootstrap
/// interval, and the share of units with a positive delta.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub estimate: Estimate,
    pub fraction_positive: f64,
}

impl GapEstimate {
    pub fn n(&self) -> usize {
        self.estimate.n
    }
}

/// Mean of `deltas` with a paired t p-value and a percentile bootstrap CI
/// that resamples units.
pub fn gap_estimate(deltas: &[f64], resampler: &Resampler) -> Result<GapEstimate> {
    if deltas.len() < 2 {
        return Err(Error::TooFewClusters {
            found: deltas.len(),
            required: 2,
        });
    }
    let t = paired_t(deltas)?;
    let boot = bootstrap_ci(
        deltas,
        |d: &[&f64]| d.iter().copied().sum::<f64>() / d.len() as f64,
        resampler,
    )?;
    let positive = deltas.iter().filter(|&&d| d > 0.0).count();
    Ok(GapEstimate {
        estimate: Estimate {
            point: t.point,
            ci_low: boot.ci_low,
            ci_high: boot.ci_high,
            p_value: t.p_value,
            n: deltas.len(),
            method: "paired-t; cluster-bootstrap CI".into(),
            statistic: t.statistic,
        },
        fraction_positive: positive as f64 / deltas.len() as f64,
    })
}

/// The headline within-unit gap under `template`.
pub fn main_gap(corpus: &Corpus, template: &SpecTemplate, resampler: &Resampler) -> Result<GapEstimate> {
    let deltas: Vec<f64> = unit_gaps(corpus, template)?.iter().map(|g| g.delta).collect();
    gap_estimate(&deltas, &resampler.derive(&format!("main-gap/{}", template.id())))
}

/// How many units survive each stage of sample construction.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFunnel {
    pub units: usize,
    pub mixed_units: usize,
    /// Mixed units with a usable canonical set.
    pub analyzed_units: usize,
    /// Excluded because no successful run remained after scope exclusion.
    pub excluded_no_support: usize,
    /// Excluded because some, but too few, successful runs remained.
    pub excluded_insufficient_support: usize,
    /// Excluded for any other reason (e.g. an empty filtered canonical set).
    pub excluded_other: usize,
}

pub fn sample_funnel(corpus: &Corpus, template: &SpecTemplate) -> Result<SampleFunnel> {
    let index = CanonicalIndex::build(corpus, template)?;
    let analyzed = scored_mixed_units(corpus, &index);
    let mut funnel = SampleFunnel {
        units: corpus.units().len(),
        mixed_units: corpus.mixed_units().count(),
        analyzed_units: analyzed.len(),
        ..Default::default()
    };
    let analyzed_keys: Vec<_> = analyzed.iter().map(|s| s.unit.key()).collect();
    for unit in corpus.mixed_units() {
        if analyzed_keys.contains(&unit.key()) {
            continue;
        }
        match index.support_for(unit, corpus) {
            Some(0) => funnel.excluded_no_support += 1,
            Some(s) if s < template.min_successes => funnel.excluded_insufficient_support += 1,
            _ => funnel.excluded_other += 1,
        }
    }
    Ok(funnel)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RobustnessSpec {
    Naive,
    Loo,
    Cfloo,
    /// Cross-family scope with domain-named tools removed from the canonical set.
    GenericOnly,
    /// Cross-family scope, adherence residualized on run length within unit.
    LengthResid,
    /// Cross-family scope without the single most influential task.
    Loto,
    /// Cross-family scope at another consensus threshold.
    Threshold(f64),
}

impl RobustnessSpec {
    pub fn label(&self) -> String {
        match self {
            RobustnessSpec::Naive => "naive".into(),
            RobustnessSpec::Loo => "loo".into(),
            RobustnessSpec::Cfloo => "cfloo".into(),
            RobustnessSpec::GenericOnly => "generic-only".into(),
            RobustnessSpec::LengthResid => "length-resid".into(),
            RobustnessSpec::Loto => "loto".into(),
            RobustnessSpec::Threshold(t) => format!("threshold-{t}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub spec: RobustnessSpec,
    pub gap: Option<GapEstimate>,
    /// Task removed by the leave-one-task-out row.
    pub dropped_task: Option<String>,
    /// Why the row could not be computed.
    pub reason: Option<String>,
}

pub const THRESHOLD_SWEEP: [f64; 4] = [0.4, 0.5, 0.6, 0.7];

/// The full specification table. `base` supplies the threshold and
/// support minimum; its scope is ignored (each row fixes its own).
pub fn robustness_suite(corpus: &Corpus, base: &SpecTemplate, resampler: &Resampler) -> Vec<RobustnessRow> {
    let with = |scope: ScopeKind, threshold: f64, generic_only: bool| SpecTemplate {
        scope,
        threshold,
        min_successes: base.min_successes,
        generic_only,
    };
    let cfloo = with(ScopeKind::CrossFamily, base.threshold, false);
    let mut specs = vec![
        (RobustnessSpec::Naive, with(ScopeKind::Naive, base.threshold, false)),
        (RobustnessSpec::Loo, with(ScopeKind::LeaveOneOut, base.threshold, false)),
        (RobustnessSpec::Cfloo, cfloo.clone()),
        (
            RobustnessSpec::GenericOnly,
            with(ScopeKind::CrossFamily, base.threshold, true),
        ),
        (RobustnessSpec::LengthResid, cfloo.clone()),
        (RobustnessSpec::Loto, cfloo.clone()),
    ];
    for t in THRESHOLD_SWEEP {
        specs.push((RobustnessSpec::Threshold(t), with(ScopeKind::CrossFamily, t, false)));
    }

    specs
        .into_iter()
        .map(|(spec, template)| {
            let r = resampler.derive(&format!("robustness/{}", spec.label()));
            let outcome = robustness_row(corpus, &spec, &template, &r);
            match outcome {
                Ok((gap, dropped_task)) => RobustnessRow {
                    spec,
                    gap: Some(gap),
                    dropped_task,
                    reason: None,
                },
                Err(e) => RobustnessRow {
                    spec,
                    gap: None,
                    dropped_task: None,
                    reason: Some(e.to_string()),
                },
            }
        })
        .collect()
}

fn robustness_row(
    corpus: &Corpus,
    spec: &RobustnessSpec,
    template: &SpecTemplate,
    resampler: &Resampler,
) -> Result<(GapEstimate, Option<String>)> {
    let index = CanonicalIndex::build(corpus, template)?;
    let scored = scored_mixed_units(corpus, &index);
    match spec {
        RobustnessSpec::LengthResid => {
            let deltas: Vec<f64> = scored.iter().map(residualized_delta).collect();
            Ok((gap_estimate(&deltas, resampler)?, None))
        }
        RobustnessSpec::Loto => {
            let gaps: Vec<UnitGap> = scored.iter().map(UnitGap::from_scored).collect();
            let task = most_influential_task(&gaps)?;
            let deltas: Vec<f64> = gaps.iter().filter(|g| g.task != task).map(|g| g.delta).collect();
            Ok((gap_estimate(&deltas, resampler)?, Some(task)))
        }
        _ => {
            let deltas: Vec<f64> = scored.iter().map(|s| UnitGap::from_scored(s).delta).collect();
            Ok((gap_estimate(&deltas, resampler)?, None))
        }
    }
}

fn residualized_delta(s: &ScoredUnit<'_>) -> f64 {
    let pairs: Vec<(f64, usize)> = s
        .unit
        .runs
        .iter()
        .zip(&s.adherence)
        .map(|(r, &a)| (a, r.len()))
        .collect();
    let resid = length_residualize(&pairs);
    let side = |success: bool| {
        let v: Vec<f64> = s
            .unit
            .runs
            .iter()
            .zip(&resid)
            .filter(|(r, _)| r.success == success)
            .map(|(_, &e)| e)
            .collect();
        mean(&v)
    };
    side(true) - side(false)
}

/// The task whose removal moves the mean unit delta the most. Ties go to
/// the lexicographically first task.
pub fn most_influential_task(gaps: &[UnitGap]) -> Result<String> {
    let mut by_task: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for g in gaps {
        let e = by_task.entry(g.task.as_str()).or_default();
        e.0 += g.delta;
        e.1 += 1;
    }
    if by_task.len() < 2 {
        return Err(Error::NoEligible(format!(
            "leave-one-task-out needs at least 2 tasks, found {}",
            by_task.len()
        )));
    }
    let total: f64 = gaps.iter().map(|g| g.delta).sum();
    let n = gaps.len() as f64;
    let full = total / n;
    let mut best: Option<(&str, f64)> = None;
    for (task, (sum, count)) in &by_task {
        let rest = (total - sum) / (n - *count as f64);
        let shift = (rest - full).abs();
        if best.is_none_or(|(_, b)| shift > b) {
            best = Some((task, shift));
        }
    }
    Ok(best.expect("at least two tasks").0.to_string())
}

/// How runs count as "minority" when no first tool is in the majority.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieRule {
    /// Units where every first tool is used equally often are skipped.
    #[default]
    Exclude,
    /// In such units every run counts as a minority choice.
    AllMinority,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaceboResult {
    /// Success rate of minority-first-tool runs, tested against 0.5.
    pub estimate: Estimate,
    pub minority_runs: usize,
    pub successes: usize,
    pub units: usize,
    pub tied_units: usize,
    pub tie_rule: TieRule,
}

/// First-tool placebo: within mixed units whose runs disagree on their
/// first tool, do runs that opened with a less common tool succeed at a
/// rate different from one half?
pub fn placebo_first_tool(corpus: &Corpus, tie_rule: TieRule) -> Result<PlaceboResult> {
    let mut minority = 0usize;
    let mut successes = 0usize;
    let mut units = 0usize;
    let mut tied = 0usize;
    for unit in corpus.mixed_units() {
        let firsts: Vec<(&str, bool)> = unit
            .runs
            .iter()
            .filter_map(|r| r.calls.first().map(|c| (c.tool_name.as_str(), r.success)))
            .collect();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for (t, _) in &firsts {
            *counts.entry(t).or_default() += 1;
        }
        if counts.len() < 2 {
            continue;
        }
        let modal = *counts.values().max().expect("non-empty");
        let all_tied = counts.values().all(|&c| c == modal);
        let chosen: Vec<bool> = if all_tied {
            tied += 1;
            match tie_rule {
                TieRule::Exclude => continue,
                TieRule::AllMinority => firsts.iter().map(|f| f.1).collect(),
            }
        } else {
            firsts.iter().filter(|(t, _)| counts[t] < modal).map(|f| f.1).collect()
        };
        units += 1;
        minority += chosen.len();
        successes += chosen.iter().filter(|&&s| s).count();
    }
    if minority == 0 {
        return Err(Error::NoEligible(
            "no mixed unit has runs that disagree on their first tool".into(),
        ));
    }
    Ok(PlaceboResult {
        estimate: binomial_test(successes as u64, minority as u64, 0.5)?,
        minority_runs: minority,
        successes,
        units,
        tied_units: tied,
        tie_rule,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub family: String,
    pub n_units: usize,
    pub gap: Option<GapEstimate>,
    pub significant: bool,
    pub reason: Option<String>,
}

/// The headline gap restricted to each family's units.
pub fn family_breakdown(corpus: &Corpus, template: &SpecTemplate, resampler: &Resampler) -> Result<Vec<FamilyRow>> {
    let gaps = unit_gaps(corpus, template)?;
    let mut by_family: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for g in &gaps {
        let family = corpus
            .family_of(&g.model)
            .ok_or_else(|| Error::UnknownFamily(g.model.clone()))?;
        by_family.entry(family).or_default().push(g.delta);
    }
    Ok(by_family
        .into_iter()
        .map(|(family, deltas)| {
            let r = resampler.derive(&format!("family/{family}/{}", template.id()));
            match gap_estimate(&deltas, &r) {
                Ok(gap) => FamilyRow {
                    family: family.to_string(),
                    n_units: deltas.len(),
                    significant: gap.estimate.is_significant(SIGNIFICANCE),
                    gap: Some(gap),
                    reason: None,
                },
                Err(e) => FamilyRow {
                    family: family.to_string(),
                    n_units: deltas.len(),
                    gap: None,
                    significant: false,
                    reason: Some(e.to_string()),
                },
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub task: String,
    pub strength: Option<f64>,
    /// Size of the task's naive canonical set, when it has enough support.
    pub canonical_size: Option<usize>,
    /// Mean unit delta over the task's analyzed mixed units.
    pub effect: Option<f64>,
    pub n_mixed: usize,
    pub success_rate: f64,
    pub mean_length: f64,
    pub unique_tools: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedCorrelation {
    pub name: String,
    pub estimate: Option<Estimate>,
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskBreakdown {
    pub rows: Vec<TaskRow>,
    pub correlations: Vec<NamedCorrelation>,
    pub tasks_total: usize,
    pub tasks_with_effect: usize,
    pub tasks_positive: usize,
}

/// Per-task statistics and the task-level predictor correlations.
pub fn task_breakdown(corpus: &Corpus, template: &SpecTemplate) -> Result<TaskBreakdown> {
    let gaps = unit_gaps(corpus, template)?;
    let naive = CanonicalSpec {
        scope: Scope::Naive,
        threshold: template.threshold,
        min_successes: template.min_successes,
        generic_only: template.generic_only,
    };
    let mut rows = Vec::new();
    for task in corpus.tasks() {
        let units: Vec<&Unit> = corpus.units_for_task(task).collect();
        let runs: Vec<_> = units.iter().flat_map(|u| u.runs.iter()).collect();
        let deltas: Vec<f64> = gaps.iter().filter(|g| g.task == task).map(|g| g.delta).collect();
        let mut tools = crate::store::ToolSet::new();
        for r in &runs {
            for c in &r.calls {
                tools.insert(c.tool_name.as_str());
            }
        }
        rows.push(TaskRow {
            task: task.to_string(),
            strength: canonical_strength(task, corpus).ok(),
            canonical_size: consensus_set(task, corpus, &naive).ok().map(|c| c.tools.len()),
            effect: (!deltas.is_empty()).then(|| mean(&deltas)),
            n_mixed: units.iter().filter(|u| u.is_mixed()).count(),
            success_rate: runs.iter().filter(|r| r.success).count() as f64 / runs.len() as f64,
            mean_length: runs.iter().map(|r| r.len()).sum::<usize>() as f64 / runs.len() as f64,
            unique_tools: tools.len(),
        });
    }

    let strength_vs = |name: &str, f: &dyn Fn(&TaskRow) -> Option<f64>| {
        let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| Some((r.strength?, f(r)?))).unzip();
        correlation(name, &x, &y)
    };
    let effect_vs = |name: &str, f: &dyn Fn(&TaskRow) -> f64| {
        let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| Some((r.effect?, f(r)))).unzip();
        correlation(name, &x, &y)
    };
    let correlations = vec![
        strength_vs("strength~canonical_size", &|r| r.canonical_size.map(|s| s as f64)),
        strength_vs("strength~success_rate", &|r| Some(r.success_rate)),
        strength_vs("strength~mean_length", &|r| Some(r.mean_length)),
        effect_vs("effect~mean_length", &|r| r.mean_length),
        effect_vs("effect~unique_tools", &|r| r.unique_tools as f64),
    ];
    let tasks_with_effect = rows.iter().filter(|r| r.effect.is_some()).count();
    let tasks_positive = rows.iter().filter(|r| r.effect.is_some_and(|e| e > 0.0)).count();
    Ok(TaskBreakdown {
        tasks_total: rows.len(),
        rows,
        correlations,
        tasks_with_effect,
        tasks_positive,
    })
}

fn correlation(name: &str, x: &[f64], y: &[f64]) -> NamedCorrelation {
    match pearson(x, y) {
        Ok(e) => NamedCorrelation {
            name: name.to_string(),
            estimate: Some(e),
            reason: None,
        },
        Err(e) => NamedCorrelation {
            name: name.to_string(),
            estimate: None,
            reason: Some(e.to_string()),
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftRow {
    pub gap: f64,
    pub odds_ratio: f64,
    /// sigmoid(logit(0.5) + coef * gap) - 0.5, in probability units.
    pub lift_at_half: f64,
    /// coef * 0.25 * gap.
    pub marginal_lift_at_half: f64,
    /// Discrete lift from the fitted probability at mean adherence.
    pub lift_at_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessLift {
    pub fit: LogisticFit,
    pub rows: Vec<LiftRow>,
}

/// Groups of `(adherence, success)` per analyzed mixed unit.
pub fn logistic_groups(scored: &[ScoredUnit<'_>]) -> Vec<Vec<(f64, bool)>> {
    scored
        .iter()
        .map(|s| {
            s.unit
                .runs
                .iter()
                .zip(&s.adherence)
                .map(|(r, &a)| (a, r.success))
                .collect()
        })
        .collect()
}

/// Translates Jaccard gaps into success-probability lifts through a
/// within-unit logistic fit.
pub fn success_lift(corpus: &Corpus, template: &SpecTemplate, gaps: &[f64]) -> Result<SuccessLift> {
    let index = CanonicalIndex::build(corpus, template)?;
    let scored = scored_mixed_units(corpus, &index);
    let fit = logistic_demeaned(&logistic_groups(&scored))?;
    let base = fit.mean_probability();
    let rows = gaps
        .iter()
        .map(|&g| LiftRow {
            gap: g,
            odds_ratio: fit.odds_ratio(g),
            lift_at_half: fit.discrete_lift(g, 0.5),
            marginal_lift_at_half: fit.marginal_lift(g, 0.5),
            lift_at_mean: fit.discrete_lift(g, base),
        })
        .collect();
    Ok(SuccessLift { fit, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{DomainTokens, FamilyMap, IngestOptions, Run};

    fn corpus(runs: Vec<Run>, families: &[(&str, &str)]) -> Corpus {
        let mut fm = FamilyMap::new();
        for (m, f) in families {
            fm.insert(*m, *f);
        }
        Corpus::from_runs(runs, fm, DomainTokens::new(), &IngestOptions::default())
            .unwrap()
            .0
    }

    #[test]
    fn hand_built_unit_gap() {
        let c = corpus(
            vec![
                Run::from_tools("m", "t", 1, true, ["a", "b"]),
                Run::from_tools("m", "t", 2, false, ["a"]),
                Run::from_tools("m", "t", 3, false, ["c"]),
            ],
            &[("m", "f")],
        );
        let spec = CanonicalSpec {
            min_successes: 1,
            ..Default::default()
        };
        let g = unit_gap(&c.units()[0], &c, &spec).unwrap();
        assert_eq!(g.success_mean, 1.0);
        assert_eq!(g.failure_mean, 0.25);
        assert_eq!(g.delta, 0.75);
    }

    #[test]
    fn identical_behaviour_gives_zero_gap() {
        let c = corpus(
            vec![
                Run::from_tools("m", "t", 1, true, ["a", "b"]),
                Run::from_tools("m", "t", 2, false, ["b", "a"]),
                Run::from_tools("m", "t", 3, true, ["a", "b", "b"]),
            ],
            &[("m", "f")],
        );
        let spec = CanonicalSpec {
            min_successes: 1,
            ..Default::default()
        };
        assert_eq!(unit_gap(&c.units()[0], &c, &spec).unwrap().delta, 0.0);
    }

    #[test]
    fn non_mixed_unit_rejected() {
        let c = corpus(
            vec![
                Run::from_tools("m", "t", 1, true, ["a"]),
                Run::from_tools("m", "t", 2, true, ["a"]),
                Run::from_tools("m", "t", 3, true, ["a"]),
            ],
            &[("m", "f")],
        );
        assert!(unit_gap(&c.units()[0], &c, &CanonicalSpec::default()).is_err());
    }

    #[test]
    fn loto_picks_largest_shift() {
        let g = |task: &str, delta: f64| UnitGap {
            model: "m".into(),
            task: task.into(),
            success_mean: 0.0,
            failure_mean: 0.0,
            delta,
            spec: CanonicalSpec::default(),
        };
        let gaps = [g("a", 0.1), g("a", 0.1), g("b", 0.9), g("c", 0.0), g("c", 0.2)];
        // full mean 0.26; without a: 1.1/3, without b: 0.4/4, without c: 1.1/3
        assert_eq!(most_influential_task(&gaps).unwrap(), "b");
        assert!(most_influential_task(&gaps[..2]).is_err());
    }

    fn placebo_corpus() -> Corpus {
        corpus(
            vec![
                // 2-1 split: run 3 is the minority and succeeds
                Run::from_tools("m", "t1", 1, false, ["a", "x"]),
                Run::from_tools("m", "t1", 2, false, ["a"]),
                Run::from_tools("m", "t1", 3, true, ["b"]),
                // three-way tie
                Run::from_tools("m", "t2", 1, true, ["a"]),
                Run::from_tools("m", "t2", 2, false, ["b"]),
                Run::from_tools("m", "t2", 3, true, ["c"]),
                // shared first tool: skipped
                Run::from_tools("m", "t3", 1, true, ["a"]),
                Run::from_tools("m", "t3", 2, false, ["a", "b"]),
                Run::from_tools("m", "t3", 3, false, ["a"]),
            ],
            &[("m", "f")],
        )
    }

    #[test]
    fn placebo_tie_rules() {
        let c = placebo_corpus();
        let ex = placebo_first_tool(&c, TieRule::Exclude).unwrap();
        assert_eq!((ex.minority_runs, ex.successes, ex.units, ex.tied_units), (1, 1, 1, 1));
        let all = placebo_first_tool(&c, TieRule::AllMinority).unwrap();
        assert_eq!((all.minority_runs, all.successes, all.units), (4, 3, 2));
        assert_eq!(all.estimate.point, 0.75);
    }

    #[test]
    fn placebo_without_disagreement_errors() {
        let c = corpus(
            vec![
                Run::from_tools("m", "t", 1, true, ["a"]),
                Run::from_tools("m", "t", 2, false, ["a", "b"]),
                Run::from_tools("m", "t", 3, false, ["a"]),
            ],
            &[("m", "f")],
        );
        assert!(matches!(
            placebo_first_tool(&c, TieRule::Exclude),
            Err(Error::NoEligible(_))
        ));
    }
}
