//! How adherence gaps develop over a run: checkpoint curves, call-to-call
//! persistence of off-canonical behaviour, an early-branching test, variance
//! signatures, and the adherence gradient across outcome classes.

use serde::{Deserialize, Serialize};

use crate::adherence::{adherence_to, partial_adherence_min, MIN_PREFIX_CALLS};
use crate::canonical::{CanonicalIndex, CanonicalSet, SpecTemplate};
use crate::error::{Error, Result};
use crate::stats::{fe_lpm, mean, pearson, sample_std, welch_t, Estimate, FeLpmFit, PanelObs, Resampler};
use crate::store::{Corpus, OutcomeClass, Run, Unit};
use crate::within_unit::{gap_estimate, score_unit, scored_mixed_units, GapEstimate};

pub const DEFAULT_CHECKPOINTS: [f64; 5] = [0.10, 0.25, 0.50, 0.75, 1.00];

/// Locked-in units have a within-unit adherence std below this.
pub const LOCKED_IN_STD: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftCurvePoint {
    pub fraction: f64,
    pub n_units: usize,
    pub gap: Option<GapEstimate>,
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftCurve {
    pub points: Vec<DriftCurvePoint>,
    /// Units in the fixed panel (same at every checkpoint).
    pub n_units: usize,
    pub excluded_short_runs: usize,
}

/// Within-unit gap of partial adherence at each checkpoint.
///
/// Runs with fewer than four calls are dropped; a unit enters the panel
/// only if it still has a success and a failure afterwards, and the same
/// panel is used at every checkpoint.
pub fn drift_curve(
    corpus: &Corpus,
    template: &SpecTemplate,
    checkpoints: &[f64],
    resampler: &Resampler,
) -> Result<DriftCurve> {
    let index = CanonicalIndex::build(corpus, template)?;
    let mut excluded_short_runs = 0;
    let mut panel: Vec<(Vec<&Run>, &CanonicalSet)> = Vec::new();
    for s in scored_mixed_units(corpus, &index) {
        let runs: Vec<&Run> = s.unit.runs.iter().filter(|r| r.len() >= MIN_PREFIX_CALLS).collect();
        excluded_short_runs += s.unit.runs.len() - runs.len();
        if runs.iter().any(|r| r.success) && runs.iter().any(|r| !r.success) {
            panel.push((runs, s.canonical));
        }
    }
    if panel.len() < 2 {
        return Err(Error::NoEligible(format!(
            "drift curve needs at least 2 mixed units with runs of {MIN_PREFIX_CALLS}+ calls, found {}",
            panel.len()
        )));
    }
    let mut points = Vec::with_capacity(checkpoints.len());
    for &fraction in checkpoints {
        let mut deltas = Vec::with_capacity(panel.len());
        for (runs, canonical) in &panel {
            let (mut succ, mut fail) = (Vec::new(), Vec::new());
            for r in runs {
                let a = partial_adherence_min(r, canonical, fraction, MIN_PREFIX_CALLS)?.value;
                if r.success {
                    succ.push(a);
                } else {
                    fail.push(a);
                }
            }
            deltas.push(mean(&succ) - mean(&fail));
        }
        let r = resampler.derive(&format!("drift/{}/{fraction}", template.id()));
        let (gap, reason) = match gap_estimate(&deltas, &r) {
            Ok(g) => (Some(g), None),
            Err(e) => (None, Some(e.to_string())),
        };
        points.push(DriftCurvePoint {
            fraction,
            n_units: deltas.len(),
            gap,
            reason,
        });
    }
    Ok(DriftCurve {
        points,
        n_units: panel.len(),
        excluded_short_runs,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionPair {
    pub model: String,
    pub task: String,
    pub run_index: u32,
    /// 1-based position of the earlier call.
    pub position: usize,
    pub prev_off: bool,
    pub next_off: bool,
    pub run_success: bool,
}

/// One pair per consecutive call pair in every analyzed mixed-unit run.
/// A call is off-canonical when its tool is not in the run's canonical set.
pub fn transition_pairs(corpus: &Corpus, template: &SpecTemplate) -> Result<Vec<TransitionPair>> {
    let index = CanonicalIndex::build(corpus, template)?;
    let mut pairs = Vec::new();
    for s in scored_mixed_units(corpus, &index) {
        for run in &s.unit.runs {
            let off: Vec<bool> = run
                .calls
                .iter()
                .map(|c| !s.canonical.tools.contains(&c.tool_name))
                .collect();
            for (t, w) in off.windows(2).enumerate() {
                pairs.push(TransitionPair {
                    model: run.model.clone(),
                    task: run.task.clone(),
                    run_index: run.run_index,
                    position: t + 1,
                    prev_off: w[0],
                    next_off: w[1],
                    run_success: run.success,
                });
            }
        }
    }
    Ok(pairs)
}

/// Level at which transition-regression errors are clustered.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterLevel {
    #[default]
    Unit,
    Trajectory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumFit {
    pub fit: Option<FeLpmFit>,
    pub reason: Option<String>,
}

impl StratumFit {
    fn from(r: Result<FeLpmFit>) -> Self {
        match r {
            Ok(fit) => StratumFit {
                fit: Some(fit),
                reason: None,
            },
            Err(e) => StratumFit {
                fit: None,
                reason: Some(e.to_string()),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    pub overall: FeLpmFit,
    pub failing_runs: StratumFit,
    pub succeeding_runs: StratumFit,
    /// z-test of failing minus succeeding slopes, when both exist.
    pub stratum_difference: Option<Estimate>,
    /// P(next off | previous on canonical).
    pub baseline_off_rate: f64,
    /// P(next off) over all pairs.
    pub off_rate: f64,
    pub n_pairs: usize,
    pub cluster: ClusterLevel,
}

/// Fixed-effects LPM of next-call off-canonical status on previous-call
/// off-canonical status, with one intercept per run.
pub fn transition_regression(
    corpus: &Corpus,
    template: &SpecTemplate,
    cluster: ClusterLevel,
) -> Result<TransitionReport> {
    let pairs = transition_pairs(corpus, template)?;
    if pairs.is_empty() {
        return Err(Error::NoEligible("no transition pairs".into()));
    }
    let to_obs = |p: &TransitionPair| {
        let trajectory = format!("{}\u{1f}{}\u{1f}{}", p.model, p.task, p.run_index);
        let cluster = match cluster {
            ClusterLevel::Unit => format!("{}\u{1f}{}", p.model, p.task),
            ClusterLevel::Trajectory => trajectory.clone(),
        };
        PanelObs {
            trajectory,
            cluster,
            x: f64::from(u8::from(p.prev_off)),
            y: f64::from(u8::from(p.next_off)),
        }
    };
    let all: Vec<PanelObs> = pairs.iter().map(to_obs).collect();
    let overall = fe_lpm(&all)?;
    let stratum = |success: bool| {
        let obs: Vec<PanelObs> = pairs.iter().filter(|p| p.run_success == success).map(to_obs).collect();
        StratumFit::from(fe_lpm(&obs))
    };
    let failing_runs = stratum(false);
    let succeeding_runs = stratum(true);
    let stratum_difference = match (&failing_runs.fit, &succeeding_runs.fit) {
        (Some(f), Some(s)) => {
            let diff = f.beta - s.beta;
            let se = (f.std_error.powi(2) + s.std_error.powi(2)).sqrt();
            (se > 0.0).then(|| {
                let z = diff / se;
                let normal = statrs::distribution::Normal::standard();
                use statrs::distribution::ContinuousCDF;
                Estimate {
                    point: diff,
                    ci_low: diff - 1.959963984540054 * se,
                    ci_high: diff + 1.959963984540054 * se,
                    p_value: (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0),
                    n: f.n_pairs + s.n_pairs,
                    method: "z-difference".into(),
                    statistic: Some(z),
                }
            })
        }
        _ => None,
    };
    let after_on: Vec<&TransitionPair> = pairs.iter().filter(|p| !p.prev_off).collect();
    let baseline_off_rate = if after_on.is_empty() {
        f64::NAN
    } else {
        after_on.iter().filter(|p| p.next_off).count() as f64 / after_on.len() as f64
    };
    Ok(TransitionReport {
        overall,
        failing_runs,
        succeeding_runs,
        stratum_difference,
        baseline_off_rate,
        off_rate: pairs.iter().filter(|p| p.next_off).count() as f64 / pairs.len() as f64,
        n_pairs: pairs.len(),
        cluster,
    })
}

/// What the difference-in-differences compares around the first deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum DidWindow {
    /// Pre-deviation prefix vs the whole run.
    #[default]
    PrefixVsFull,
    /// Pre-deviation prefix vs the prefix extended by this many calls.
    Calls(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationRecord {
    pub model: String,
    pub task: String,
    pub run_index: u32,
    pub success: bool,
    /// 1-based position of the first off-canonical call.
    pub first_deviation: usize,
    /// `first_deviation / run length`.
    pub fraction: f64,
    pub pre_adherence: f64,
    pub post_adherence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateOrReason {
    pub estimate: Option<Estimate>,
    pub reason: Option<String>,
}

impl From<Result<Estimate>> for EstimateOrReason {
    fn from(r: Result<Estimate>) -> Self {
        match r {
            Ok(e) => EstimateOrReason {
                estimate: Some(e),
                reason: None,
            },
            Err(e) => EstimateOrReason {
                estimate: None,
                reason: Some(e.to_string()),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DidReport {
    pub deviating_runs: usize,
    pub median_fraction: f64,
    pub early: usize,
    pub late: usize,
    /// Pre-deviation adherence, early minus late deviators.
    pub pretrend: EstimateOrReason,
    /// Change in adherence around the deviation, early minus late.
    pub did: EstimateOrReason,
    /// Correlation of first-deviation fraction with success.
    pub dose_response: EstimateOrReason,
    pub window: DidWindow,
}

/// First-deviation records for every analyzed mixed-unit run that leaves
/// its canonical set at least once.
pub fn deviation_records(corpus: &Corpus, template: &SpecTemplate, window: DidWindow) -> Result<Vec<DeviationRecord>> {
    let index = CanonicalIndex::build(corpus, template)?;
    let mut out = Vec::new();
    for s in scored_mixed_units(corpus, &index) {
        let canon = &s.canonical.tools;
        for run in &s.unit.runs {
            let Some(k) = run.calls.iter().position(|c| !canon.contains(&c.tool_name)) else {
                continue;
            };
            let pre = prefix_adherence(run, k, s.canonical);
            let post = match window {
                DidWindow::PrefixVsFull => prefix_adherence(run, run.len(), s.canonical),
                DidWindow::Calls(w) => prefix_adherence(run, (k + w).min(run.len()), s.canonical),
            };
            out.push(DeviationRecord {
                model: run.model.clone(),
                task: run.task.clone(),
                run_index: run.run_index,
                success: run.success,
                first_deviation: k + 1,
                fraction: (k + 1) as f64 / run.len() as f64,
                pre_adherence: pre,
                post_adherence: post,
            });
        }
    }
    Ok(out)
}

/// Adherence of the first `n` calls; an empty prefix scores 0.
fn prefix_adherence(run: &Run, n: usize, canonical: &CanonicalSet) -> f64 {
    adherence_to(&run.prefix_tool_set(n), &canonical.tools)
        .map(|a| a.value)
        .unwrap_or(0.0)
}

/// Tests whether failures come from a discrete early wrong turn: if they
/// did, early and late deviators would share pre-deviation adherence and
/// deviation timing would predict success.
pub fn did_early_branching(corpus: &Corpus, template: &SpecTemplate, window: DidWindow) -> Result<DidReport> {
    let records = deviation_records(corpus, template, window)?;
    if records.is_empty() {
        return Err(Error::NoEligible("no run deviates from its canonical set".into()));
    }
    let mut fractions: Vec<f64> = records.iter().map(|r| r.fraction).collect();
    fractions.sort_by(f64::total_cmp);
    let median = crate::stats::percentile(&fractions, 0.5);
    let (early, late): (Vec<&DeviationRecord>, Vec<&DeviationRecord>) =
        records.iter().partition(|r| r.fraction <= median);

    let split = |f: &dyn Fn(&DeviationRecord) -> f64| -> Result<Estimate> {
        if early.is_empty() || late.is_empty() {
            return Err(Error::NoEligible(format!(
                "median split is degenerate: {} early, {} late",
                early.len(),
                late.len()
            )));
        }
        let a: Vec<f64> = early.iter().map(|r| f(r)).collect();
        let b: Vec<f64> = late.iter().map(|r| f(r)).collect();
        welch_t(&a, &b)
    };
    let pretrend = split(&|r| r.pre_adherence).into();
    let did = split(&|r| r.post_adherence - r.pre_adherence).into();
    let success: Vec<f64> = records.iter().map(|r| f64::from(u8::from(r.success))).collect();
    let frac: Vec<f64> = records.iter().map(|r| r.fraction).collect();
    Ok(DidReport {
        deviating_runs: records.len(),
        median_fraction: median,
        early: early.len(),
        late: late.len(),
        pretrend,
        did,
        dose_response: pearson(&frac, &success).into(),
        window,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceSignature {
    pub class: OutcomeClass,
    pub n_units: usize,
    pub mean_std: Option<f64>,
    pub locked_in_fraction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassComparison {
    pub first: OutcomeClass,
    pub second: OutcomeClass,
    pub test: EstimateOrReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub signatures: Vec<VarianceSignature>,
    pub comparisons: Vec<ClassComparison>,
}

/// Within-unit sample standard deviation of adherence (all runs), per unit.
pub fn unit_adherence_stds(corpus: &Corpus, template: &SpecTemplate) -> Result<Vec<(OutcomeClass, f64)>> {
    let index = CanonicalIndex::build(corpus, template)?;
    Ok(corpus
        .units()
        .iter()
        .filter_map(|u| score_unit(u, corpus, &index))
        .filter(|s| s.adherence.len() >= 2)
        .map(|s| (s.unit.outcome_class, sample_std(&s.adherence)))
        .collect())
}

/// Mean within-unit adherence dispersion and locked-in share per outcome
/// class, with Welch tests between classes.
pub fn variance_signature(corpus: &Corpus, template: &SpecTemplate) -> Result<VarianceReport> {
    let stds = unit_adherence_stds(corpus, template)?;
    let of = |c: OutcomeClass| -> Vec<f64> { stds.iter().filter(|s| s.0 == c).map(|s| s.1).collect() };
    let signatures = OutcomeClass::ALL
        .iter()
        .map(|&class| {
            let v = of(class);
            let empty = v.is_empty();
            VarianceSignature {
                class,
                n_units: v.len(),
                mean_std: (!empty).then(|| mean(&v)),
                locked_in_fraction: (!empty)
                    .then(|| v.iter().filter(|&&s| s < LOCKED_IN_STD).count() as f64 / v.len() as f64),
            }
        })
        .collect();
    let pairs = [
        (OutcomeClass::Mixed, OutcomeClass::AlwaysSucceed),
        (OutcomeClass::Mixed, OutcomeClass::AlwaysFail),
        (OutcomeClass::AlwaysFail, OutcomeClass::AlwaysSucceed),
    ];
    let comparisons = pairs
        .iter()
        .map(|&(a, b)| ClassComparison {
            first: a,
            second: b,
            test: welch_t(&of(a), &of(b)).into(),
        })
        .collect();
    Ok(VarianceReport {
        signatures,
        comparisons,
    })
}

/// Run groups of the adherence gradient, in ascending expected order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GradientGroup {
    AlwaysFail,
    MixedFailure,
    MixedSuccess,
    AlwaysSucceed,
}

impl GradientGroup {
    pub const ALL: [GradientGroup; 4] = [
        GradientGroup::AlwaysFail,
        GradientGroup::MixedFailure,
        GradientGroup::MixedSuccess,
        GradientGroup::AlwaysSucceed,
    ];

    pub fn label(self) -> &'static str {
        match self {
            GradientGroup::AlwaysFail => "always-fail",
            GradientGroup::MixedFailure => "mixed-failure",
            GradientGroup::MixedSuccess => "mixed-success",
            GradientGroup::AlwaysSucceed => "always-succeed",
        }
    }

    fn of(unit: &Unit, run: &Run) -> GradientGroup {
        match (unit.outcome_class, run.success) {
            (OutcomeClass::AlwaysFail, _) => GradientGroup::AlwaysFail,
            (OutcomeClass::AlwaysSucceed, _) => GradientGroup::AlwaysSucceed,
            (OutcomeClass::Mixed, false) => GradientGroup::MixedFailure,
            (OutcomeClass::Mixed, true) => GradientGroup::MixedSuccess,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientLevel {
    pub group: GradientGroup,
    pub n_runs: usize,
    pub mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjacentTest {
    pub lower: GradientGroup,
    pub upper: GradientGroup,
    /// Welch test of upper minus lower.
    pub test: EstimateOrReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub levels: Vec<GradientLevel>,
    pub tests: Vec<AdjacentTest>,
}

impl GradientReport {
    /// True when all four means exist and strictly increase.
    pub fn strictly_increasing(&self) -> bool {
        let means: Option<Vec<f64>> = self.levels.iter().map(|l| l.mean).collect();
        means.is_some_and(|m| m.windows(2).all(|w| w[0] < w[1]))
    }
}

/// Mean run adherence for always-fail runs, failed and successful runs of
/// mixed units, and always-succeed runs.
pub fn adherence_gradient(corpus: &Corpus, template: &SpecTemplate) -> Result<GradientReport> {
    let index = CanonicalIndex::build(corpus, template)?;
    let mut groups: [Vec<f64>; 4] = Default::default();
    for unit in corpus.units() {
        let Some(s) = score_unit(unit, corpus, &index) else {
            continue;
        };
        for (run, &a) in unit.runs.iter().zip(&s.adherence) {
            groups[GradientGroup::of(unit, run) as usize].push(a);
        }
    }
    let levels = GradientGroup::ALL
        .iter()
        .map(|&g| {
            let v = &groups[g as usize];
            GradientLevel {
                group: g,
                n_runs: v.len(),
                mean: (!v.is_empty()).then(|| mean(v)),
            }
        })
        .collect();
    let tests = GradientGroup::ALL
        .windows(2)
        .map(|w| AdjacentTest {
            lower: w[0],
            upper: w[1],
            test: welch_t(&groups[w[1] as usize], &groups[w[0] as usize]).into(),
        })
        .collect();
    Ok(GradientReport { levels, tests })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::ScopeKind;
    use crate::store::{DomainTokens, FamilyMap, IngestOptions};

    fn naive(min: usize) -> SpecTemplate {
        SpecTemplate {
            scope: ScopeKind::Naive,
            min_successes: min,
            ..Default::default()
        }
    }

    fn corpus(runs: Vec<Run>) -> Corpus {
        let mut fm = FamilyMap::new();
        for r in &runs {
            fm.insert(r.model.clone(), "f");
        }
        Corpus::from_runs(runs, fm, DomainTokens::new(), &IngestOptions::default())
            .unwrap()
            .0
    }

    fn two_task_corpus() -> Corpus {
        corpus(vec![
            Run::from_tools("m", "t", 1, true, ["a", "b", "a", "b"]),
            Run::from_tools("m", "t", 2, false, ["a", "x", "y", "x", "a"]),
            Run::from_tools("m", "t", 3, true, ["a", "b", "c", "b"]),
            Run::from_tools("m", "u", 1, false, ["p", "z", "z", "z"]),
            Run::from_tools("m", "u", 2, true, ["p", "q", "p", "q"]),
            Run::from_tools("m", "u", 3, true, ["p", "q", "q"]),
        ])
    }

    #[test]
    fn pair_count_is_sum_of_lengths_minus_one() {
        let c = two_task_corpus();
        let pairs = transition_pairs(&c, &naive(1)).unwrap();
        let expected: usize = c.runs().map(|r| r.len() - 1).sum();
        assert_eq!(pairs.len(), expected);
        // canonical t = {a, b}: run 2 is on, off, off, off, on
        let run2: Vec<(bool, bool)> = pairs
            .iter()
            .filter(|p| p.task == "t" && p.run_index == 2)
            .map(|p| (p.prev_off, p.next_off))
            .collect();
        assert_eq!(run2, vec![(false, true), (true, true), (true, true), (true, false)]);
    }

    #[test]
    fn drift_curve_excludes_short_runs_and_keeps_panel_fixed() {
        let c = two_task_corpus();
        let r = Resampler::new(200, 1);
        let curve = drift_curve(&c, &naive(1), &DEFAULT_CHECKPOINTS, &r).unwrap();
        assert_eq!(curve.n_units, 2);
        assert_eq!(curve.excluded_short_runs, 1);
        assert!(curve.points.iter().all(|p| p.n_units == 2));
        // at 10% both units compare single-tool prefixes: deltas (0, 0)
        assert!(curve.points[0].gap.is_none());
        let last = curve.points[4].gap.as_ref().unwrap();
        assert!(last.estimate.point > 0.0);
    }

    #[test]
    fn deviation_records_by_hand() {
        let c = two_task_corpus();
        let recs = deviation_records(&c, &naive(1), DidWindow::PrefixVsFull).unwrap();
        let r = recs.iter().find(|r| r.task == "t" && r.run_index == 2).unwrap();
        assert_eq!(r.first_deviation, 2);
        assert_eq!(r.fraction, 0.4);
        // prefix {a} vs {a,b} = 0.5; full {a,x,y} vs {a,b} = 0.25
        assert_eq!(r.pre_adherence, 0.5);
        assert_eq!(r.post_adherence, 0.25);
        let w = deviation_records(&c, &naive(1), DidWindow::Calls(1)).unwrap();
        let r = w.iter().find(|r| r.task == "t" && r.run_index == 2).unwrap();
        assert!((r.post_adherence - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identical_runs_have_zero_std() {
        let c = corpus(vec![
            Run::from_tools("m", "t", 1, true, ["a", "b"]),
            Run::from_tools("m", "t", 2, true, ["b", "a"]),
            Run::from_tools("m", "t", 3, true, ["a", "b"]),
        ]);
        let rep = variance_signature(&c, &naive(1)).unwrap();
        let s = &rep.signatures[0];
        assert_eq!(s.class, OutcomeClass::AlwaysSucceed);
        assert_eq!(s.mean_std, Some(0.0));
        assert_eq!(s.locked_in_fraction, Some(1.0));
    }

    #[test]
    fn gradient_groups_route_runs() {
        let c = two_task_corpus();
        let g = adherence_gradient(&c, &naive(1)).unwrap();
        assert_eq!(g.levels[1].n_runs, 2);
        assert_eq!(g.levels[2].n_runs, 4);
        assert_eq!(g.levels[0].mean, None);
        assert!(!g.strictly_increasing());
        assert!(g.tests[0].test.reason.is_some());
    }
}
