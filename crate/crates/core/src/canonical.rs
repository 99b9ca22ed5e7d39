//! Empirical consensus tool sets ("canonical paths") and their strength.
//!
//! A task's canonical set is the set of tools that appear in strictly more
//! than `threshold` of its successful runs. Three scopes control which
//! successful runs are counted:
//!
//! * [`Scope::Naive`]: every successful run on the task.
//! * [`Scope::LeaveOneOut`]: drops the runs of one model.
//! * [`Scope::CrossFamily`]: drops the runs of every model in one family.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::adherence::jaccard;
use crate::error::{Error, Result};
use crate::store::{Corpus, Run, ToolSet, Unit};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scope {
    Naive,
    /// Excludes the named model's runs.
    LeaveOneOut(String),
    /// Excludes the named family's runs.
    CrossFamily(String),
}

impl Scope {
    pub fn kind(&self) -> ScopeKind {
        match self {
            Scope::Naive => ScopeKind::Naive,
            Scope::LeaveOneOut(_) => ScopeKind::LeaveOneOut,
            Scope::CrossFamily(_) => ScopeKind::CrossFamily,
        }
    }

    fn excludes(&self, run: &Run, corpus: &Corpus) -> bool {
        match self {
            Scope::Naive => false,
            Scope::LeaveOneOut(model) => &run.model == model,
            Scope::CrossFamily(family) => corpus.family_of(&run.model) == Some(family.as_str()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScopeKind {
    Naive,
    LeaveOneOut,
    CrossFamily,
}

impl ScopeKind {
    pub fn label(self) -> &'static str {
        match self {
            ScopeKind::Naive => "naive",
            ScopeKind::LeaveOneOut => "loo",
            ScopeKind::CrossFamily => "cfloo",
        }
    }

    pub fn parse(s: &str) -> Option<ScopeKind> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Some(ScopeKind::Naive),
            "loo" => Some(ScopeKind::LeaveOneOut),
            "cfloo" => Some(ScopeKind::CrossFamily),
            _ => None,
        }
    }
}

/// A fully resolved canonical-set definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalSpec {
    pub scope: Scope,
    /// Tools must appear in strictly more than this fraction of successes.
    pub threshold: f64,
    pub min_successes: usize,
    /// Drop tools whose names contain one of the task's domain tokens.
    pub generic_only: bool,
}

impl Default for CanonicalSpec {
    fn default() -> Self {
        CanonicalSpec {
            scope: Scope::Naive,
            threshold: 0.5,
            min_successes: 3,
            generic_only: false,
        }
    }
}

impl CanonicalSpec {
    pub fn validate(&self) -> Result<()> {
        validate_knobs(self.threshold, self.min_successes)
    }
}

fn validate_knobs(threshold: f64, min_successes: usize) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    if min_successes == 0 {
        return Err(Error::InvalidConfig("min_successes must be at least 1".into()));
    }
    Ok(())
}

/// A canonical-set definition whose exclusion target is filled in per unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecTemplate {
    pub scope: ScopeKind,
    pub threshold: f64,
    pub min_successes: usize,
    pub generic_only: bool,
}

impl Default for SpecTemplate {
    fn default() -> Self {
        SpecTemplate {
            scope: ScopeKind::CrossFamily,
            threshold: 0.5,
            min_successes: 3,
            generic_only: false,
        }
    }
}

impl SpecTemplate {
    pub fn with_scope(scope: ScopeKind) -> Self {
        SpecTemplate {
            scope,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_knobs(self.threshold, self.min_successes)
    }

    /// Resolves the exclusion target for runs of `model`.
    pub fn resolve(&self, model: &str, corpus: &Corpus) -> Result<CanonicalSpec> {
        let scope = match self.scope {
            ScopeKind::Naive => Scope::Naive,
            ScopeKind::LeaveOneOut => Scope::LeaveOneOut(model.to_string()),
            ScopeKind::CrossFamily => Scope::CrossFamily(
                corpus
                    .family_of(model)
                    .ok_or_else(|| Error::UnknownFamily(model.to_string()))?
                    .to_string(),
            ),
        };
        Ok(CanonicalSpec {
            scope,
            threshold: self.threshold,
            min_successes: self.min_successes,
            generic_only: self.generic_only,
        })
    }

    /// Short identifier such as `cfloo@0.5` or `naive@0.5+generic`.
    pub fn id(&self) -> String {
        let mut id = format!("{}@{}", self.scope.label(), self.threshold);
        if self.generic_only {
            id.push_str("+generic");
        }
        id
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalSet {
    pub task: String,
    pub spec: CanonicalSpec,
    pub tools: ToolSet,
    /// Successful runs counted after exclusions.
    pub support_count: usize,
    /// Fraction of counted successful runs containing each tool, before any
    /// generic-tool filtering.
    pub per_tool_frequency: BTreeMap<String, f64>,
}

impl CanonicalSet {
    /// The tools that would be canonical at a different threshold, reusing
    /// the stored frequencies.
    pub fn tools_at(&self, threshold: f64) -> ToolSet {
        self.per_tool_frequency
            .iter()
            .filter(|(_, &f)| f > threshold)
            .map(|(t, _)| t.as_str())
            .collect()
    }
}

/// Computes the canonical set of `task` under `spec`.
pub fn consensus_set(task: &str, corpus: &Corpus, spec: &CanonicalSpec) -> Result<CanonicalSet> {
    spec.validate()?;
    let sets: Vec<ToolSet> = corpus
        .units_for_task(task)
        .flat_map(|u| u.runs.iter())
        .filter(|r| r.success && !spec.scope.excludes(r, corpus))
        .map(Run::tool_set)
        .collect();
    if sets.len() < spec.min_successes {
        return Err(Error::InsufficientSupport {
            task: task.to_string(),
            found: sets.len(),
            required: spec.min_successes,
        });
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for set in &sets {
        for tool in set.iter() {
            *counts.entry(tool).or_default() += 1;
        }
    }
    let n = sets.len() as f64;
    let per_tool_frequency: BTreeMap<String, f64> =
        counts.into_iter().map(|(t, c)| (t.to_string(), c as f64 / n)).collect();
    let tokens = corpus.domain_tokens();
    let tools = per_tool_frequency
        .iter()
        .filter(|(_, &f)| f > spec.threshold)
        .map(|(t, _)| t.as_str())
        .filter(|t| !spec.generic_only || !tokens.is_domain_tool(task, t))
        .collect();
    Ok(CanonicalSet {
        task: task.to_string(),
        spec: spec.clone(),
        tools,
        support_count: sets.len(),
        per_tool_frequency,
    })
}

/// Mean pairwise Jaccard similarity among all successful runs on a task.
pub fn canonical_strength(task: &str, corpus: &Corpus) -> Result<f64> {
    let sets: Vec<ToolSet> = corpus
        .units_for_task(task)
        .flat_map(|u| u.runs.iter())
        .filter(|r| r.success)
        .map(Run::tool_set)
        .collect();
    if sets.len() < 2 {
        return Err(Error::InsufficientSupport {
            task: task.to_string(),
            found: sets.len(),
            required: 2,
        });
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..sets.len() {
        for j in (i + 1)..sets.len() {
            total += jaccard(&sets[i], &sets[j])?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Per-unit canonical sets for one template, computed once per
/// (task, exclusion target).
#[derive(Clone, Debug)]
pub struct CanonicalIndex {
    template: SpecTemplate,
    sets: BTreeMap<(String, Scope), std::result::Result<CanonicalSet, usize>>,
}

impl CanonicalIndex {
    pub fn build(corpus: &Corpus, template: &SpecTemplate) -> Result<Self> {
        template.validate()?;
        let mut sets = BTreeMap::new();
        for unit in corpus.units() {
            let spec = template.resolve(&unit.model, corpus)?;
            let key = (unit.task.clone(), spec.scope.clone());
            if sets.contains_key(&key) {
                continue;
            }
            let entry = match consensus_set(&unit.task, corpus, &spec) {
                Ok(set) => Ok(set),
                Err(Error::InsufficientSupport { found, .. }) => Err(found),
                Err(e) => return Err(e),
            };
            sets.insert(key, entry);
        }
        Ok(CanonicalIndex {
            template: template.clone(),
            sets,
        })
    }

    pub fn template(&self) -> &SpecTemplate {
        &self.template
    }

    /// The canonical set that applies to `unit`, if it has enough support.
    pub fn for_unit(&self, unit: &Unit, corpus: &Corpus) -> Option<&CanonicalSet> {
        self.for_model_task(&unit.model, &unit.task, corpus)
    }

    pub fn for_model_task(&self, model: &str, task: &str, corpus: &Corpus) -> Option<&CanonicalSet> {
        let scope = self.template.resolve(model, corpus).ok()?.scope;
        let set = self.sets.get(&(task.to_string(), scope))?.as_ref().ok()?;
        if self.template.generic_only && set.tools.is_empty() {
            return None;
        }
        Some(set)
    }

    /// Successful-run support for a unit's canonical set, whether or not it
    /// met the minimum.
    pub fn support_for(&self, unit: &Unit, corpus: &Corpus) -> Option<usize> {
        let scope = self.template.resolve(&unit.model, corpus).ok()?.scope;
        self.sets.get(&(unit.task.clone(), scope)).map(|e| match e {
            Ok(set) => set.support_count,
            Err(found) => *found,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalRow {
    pub task: String,
    pub scope: Scope,
    pub threshold: f64,
    pub support_count: usize,
    pub tools: ToolSet,
    /// Task-level strength; absent when fewer than two successes exist.
    pub strength: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedTask {
    pub task: String,
    pub scope: Scope,
    pub support_count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CanonicalSummary {
    pub tasks_total: usize,
    /// Tasks whose naive canonical set meets the support minimum.
    pub tasks_with_support: usize,
    /// Among supported tasks, the fraction with strength above 0.6.
    pub strong_fraction: Option<f64>,
    /// Mean share of canonical tools containing a domain token, over
    /// supported tasks that have tokens configured and a non-empty set.
    pub mean_domain_tool_share: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CanonicalTable {
    pub rows: Vec<CanonicalRow>,
    pub skipped: Vec<SkippedTask>,
    pub summary: CanonicalSummary,
}

pub const STRONG_PATH_STRENGTH: f64 = 0.6;

/// Canonical sets for every task (and every exclusion target the template
/// implies), plus strength and domain-share summaries.
pub fn canonical_table(corpus: &Corpus, template: &SpecTemplate) -> Result<CanonicalTable> {
    template.validate()?;
    let mut table = CanonicalTable::default();
    let mut strong = 0usize;
    let mut shares = Vec::new();
    let tasks: Vec<&str> = corpus.tasks().collect();
    table.summary.tasks_total = tasks.len();

    for task in tasks {
        let strength = canonical_strength(task, corpus).ok();
        let naive = CanonicalSpec {
            scope: Scope::Naive,
            threshold: template.threshold,
            min_successes: template.min_successes,
            generic_only: template.generic_only,
        };
        if let Ok(set) = consensus_set(task, corpus, &naive) {
            table.summary.tasks_with_support += 1;
            if strength.is_some_and(|s| s > STRONG_PATH_STRENGTH) {
                strong += 1;
            }
            if corpus.domain_tokens().tokens_for(task).is_some() && !set.tools.is_empty() {
                let domain = set
                    .tools
                    .iter()
                    .filter(|t| corpus.domain_tokens().is_domain_tool(task, t))
                    .count();
                shares.push(domain as f64 / set.tools.len() as f64);
            }
        }

        let mut scopes: Vec<Scope> = Vec::new();
        match template.scope {
            ScopeKind::Naive => scopes.push(Scope::Naive),
            ScopeKind::LeaveOneOut => {
                for u in corpus.units_for_task(task) {
                    scopes.push(Scope::LeaveOneOut(u.model.clone()));
                }
            }
            ScopeKind::CrossFamily => {
                for u in corpus.units_for_task(task) {
                    if let Some(f) = corpus.family_of(&u.model) {
                        scopes.push(Scope::CrossFamily(f.to_string()));
                    }
                }
            }
        }
        scopes.sort();
        scopes.dedup();
        for scope in scopes {
            let spec = CanonicalSpec {
                scope: scope.clone(),
                threshold: template.threshold,
                min_successes: template.min_successes,
                generic_only: template.generic_only,
            };
            match consensus_set(task, corpus, &spec) {
                Ok(set) => table.rows.push(CanonicalRow {
                    task: task.to_string(),
                    scope,
                    threshold: template.threshold,
                    support_count: set.support_count,
                    tools: set.tools,
                    strength,
                }),
                Err(Error::InsufficientSupport { found, .. }) => table.skipped.push(SkippedTask {
                    task: task.to_string(),
                    scope,
                    support_count: found,
                }),
                Err(e) => return Err(e),
            }
        }
    }
    if table.summary.tasks_with_support > 0 {
        table.summary.strong_fraction = Some(strong as f64 / table.summary.tasks_with_support as f64);
    }
    if !shares.is_empty() {
        table.summary.mean_domain_tool_share = Some(shares.iter().sum::<f64>() / shares.len() as f64);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{DomainTokens, FamilyMap, IngestOptions};

    fn corpus_from(runs: Vec<Run>, families: &[(&str, &str)], tokens: DomainTokens) -> Corpus {
        let mut fm = FamilyMap::new();
        for (m, f) in families {
            fm.insert(*m, *f);
        }
        let opts = IngestOptions {
            runs_per_unit: 1,
            ..Default::default()
        };
        Corpus::from_runs(runs, fm, tokens, &opts).unwrap().0
    }

    fn three_successes() -> Corpus {
        corpus_from(
            vec![
                Run::from_tools("m1", "t", 1, true, ["a", "b"]),
                Run::from_tools("m2", "t", 1, true, ["a", "b", "c"]),
                Run::from_tools("m3", "t", 1, true, ["a", "d"]),
                Run::from_tools("m4", "t", 1, false, ["c", "d", "e"]),
            ],
            &[("m1", "f1"), ("m2", "f1"), ("m3", "f2"), ("m4", "f2")],
            DomainTokens::new(),
        )
    }

    #[test]
    fn majority_consensus_from_hand_count() {
        let corpus = three_successes();
        let set = consensus_set("t", &corpus, &CanonicalSpec::default()).unwrap();
        assert_eq!(set.tools, ToolSet::from_iter(["a", "b"]));
        assert_eq!(set.support_count, 3);
        assert_eq!(set.per_tool_frequency["a"], 1.0);
        assert_eq!(set.per_tool_frequency["b"], 2.0 / 3.0);
        assert_eq!(set.per_tool_frequency["c"], 1.0 / 3.0);
        assert!(!set.per_tool_frequency.contains_key("e"));
    }

    #[test]
    fn single_source_consensus() {
        let corpus = corpus_from(
            vec![Run::from_tools("m1", "t", 1, true, ["x", "y"])],
            &[("m1", "f")],
            DomainTokens::new(),
        );
        let spec = CanonicalSpec {
            min_successes: 1,
            ..Default::default()
        };
        let set = consensus_set("t", &corpus, &spec).unwrap();
        assert_eq!(set.tools, ToolSet::from_iter(["x", "y"]));
    }

    #[test]
    fn exactly_half_is_excluded() {
        let corpus = corpus_from(
            vec![
                Run::from_tools("m1", "t", 1, true, ["a", "b"]),
                Run::from_tools("m2", "t", 1, true, ["a"]),
            ],
            &[("m1", "f"), ("m2", "f")],
            DomainTokens::new(),
        );
        let spec = CanonicalSpec {
            min_successes: 2,
            ..Default::default()
        };
        let set = consensus_set("t", &corpus, &spec).unwrap();
        assert_eq!(set.per_tool_frequency["b"], 0.5);
        assert_eq!(set.tools, ToolSet::from_iter(["a"]));
    }

    #[test]
    fn exclusion_scopes_and_support() {
        let corpus = three_successes();
        let loo = CanonicalSpec {
            scope: Scope::LeaveOneOut("m3".into()),
            min_successes: 2,
            ..Default::default()
        };
        let set = consensus_set("t", &corpus, &loo).unwrap();
        assert_eq!(set.support_count, 2);
        assert_eq!(set.tools, ToolSet::from_iter(["a", "b"]));

        let cf = CanonicalSpec {
            scope: Scope::CrossFamily("f1".into()),
            ..Default::default()
        };
        let err = consensus_set("t", &corpus, &cf).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientSupport {
                found: 1,
                required: 3,
                ..
            }
        ));
    }

    #[test]
    fn generic_filter_drops_domain_tools() {
        let mut tokens = DomainTokens::new();
        tokens.insert("t", ["NOTION"]);
        let corpus = corpus_from(
            vec![
                Run::from_tools("m1", "t", 1, true, ["notion-search", "fs-read"]),
                Run::from_tools("m2", "t", 1, true, ["notion-search", "fs-read"]),
                Run::from_tools("m3", "t", 1, true, ["notion-search"]),
            ],
            &[("m1", "f"), ("m2", "f"), ("m3", "f")],
            tokens,
        );
        let spec = CanonicalSpec {
            generic_only: true,
            ..Default::default()
        };
        let set = consensus_set("t", &corpus, &spec).unwrap();
        assert_eq!(set.tools, ToolSet::from_iter(["fs-read"]));
        assert!(set.per_tool_frequency.contains_key("notion-search"));
    }

    #[test]
    fn invalid_threshold_rejected() {
        let corpus = three_successes();
        for t in [0.0, 1.0, -0.1, f64::NAN] {
            let spec = CanonicalSpec {
                threshold: t,
                ..Default::default()
            };
            assert!(matches!(
                consensus_set("t", &corpus, &spec),
                Err(Error::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn strength_by_pair_enumeration() {
        let corpus = three_successes();
        let s = canonical_strength("t", &corpus).unwrap();
        let expected = (2.0 / 3.0 + 1.0 / 3.0 + 1.0 / 4.0) / 3.0;
        assert!((s - expected).abs() < 1e-12);
        assert!((s - 0.4167).abs() < 5e-4);
    }

    #[test]
    fn strength_of_identical_sets_is_one() {
        let corpus = corpus_from(
            vec![
                Run::from_tools("m1", "t", 1, true, ["a", "b"]),
                Run::from_tools("m2", "t", 1, true, ["b", "a", "a"]),
            ],
            &[("m1", "f"), ("m2", "f")],
            DomainTokens::new(),
        );
        assert_eq!(canonical_strength("t", &corpus).unwrap(), 1.0);
        let lone = corpus_from(
            vec![Run::from_tools("m1", "t", 1, true, ["a"])],
            &[("m1", "f")],
            DomainTokens::new(),
        );
        assert!(canonical_strength("t", &lone).is_err());
    }

    #[test]
    fn table_skips_tasks_without_successes() {
        let corpus = corpus_from(
            vec![
                Run::from_tools("m1", "t", 1, false, ["a"]),
                Run::from_tools("m2", "u", 1, false, ["b"]),
            ],
            &[("m1", "f"), ("m2", "f")],
            DomainTokens::new(),
        );
        let table = canonical_table(&corpus, &SpecTemplate::with_scope(ScopeKind::Naive)).unwrap();
        assert!(table.rows.is_empty());
        assert_eq!(table.skipped.len(), 2);
        assert_eq!(table.summary.tasks_with_support, 0);
        assert_eq!(table.summary.strong_fraction, None);
    }

    #[test]
    fn table_summary_reports_strength_and_domain_share() {
        let mut tokens = DomainTokens::new();
        tokens.insert("t", ["notion"]);
        let corpus = corpus_from(
            vec![
                Run::from_tools("m1", "t", 1, true, ["notion-a", "fs"]),
                Run::from_tools("m2", "t", 1, true, ["notion-a", "fs"]),
                Run::from_tools("m3", "t", 1, true, ["notion-a", "fs"]),
            ],
            &[("m1", "f1"), ("m2", "f2"), ("m3", "f3")],
            tokens,
        );
        let table = canonical_table(&corpus, &SpecTemplate::with_scope(ScopeKind::Naive)).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.summary.strong_fraction, Some(1.0));
        assert_eq!(table.summary.mean_domain_tool_share, Some(0.5));

        // cross-family rows: each family leaves 2 successes, below the minimum of 3
        let table = canonical_table(&corpus, &SpecTemplate::default()).unwrap();
        assert!(table.rows.is_empty());
        assert_eq!(table.skipped.len(), 3);
    }

    #[test]
    fn stored_frequencies_support_threshold_sweep() {
        let corpus = three_successes();
        let set = consensus_set("t", &corpus, &CanonicalSpec::default()).unwrap();
        assert_eq!(set.tools_at(0.3), ToolSet::from_iter(["a", "b", "c", "d"]));
        assert_eq!(set.tools_at(0.7), ToolSet::from_iter(["a"]));
    }
}
