//! Brute-force reference computations over plain data, sharing nothing with
//! the library beyond the corpus constructor. Frequencies and means are
//! exact rationals.

#![allow(dead_code)]

use std::collections::BTreeSet;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pathdrift::adherence::jaccard;
use pathdrift::canonical::{canonical_strength, consensus_set, CanonicalSpec, Scope};
use pathdrift::reliability::per_model_metrics;
use pathdrift::store::{Corpus, DomainTokens, FamilyMap, IngestOptions, Run, ToolSet};
use pathdrift::within_unit::unit_gap;

pub type Q = Ratio<i64>;

pub const TOOLS: [&str; 4] = ["alpha", "beta", "gamma", "delta"];

/// One run as bare data: model index, task index, success, tool indices.
#[derive(Clone, Debug)]
pub struct RawRun {
    pub model: usize,
    pub task: usize,
    pub success: bool,
    pub calls: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct RawCorpus {
    pub runs: Vec<RawRun>,
    pub models: usize,
    pub tasks: usize,
    pub k: usize,
    /// family index per model
    pub family: Vec<usize>,
}

impl RawCorpus {
    pub fn build(&self) -> Corpus {
        let mut idx = vec![0u32; self.models * self.tasks];
        let runs = self
            .runs
            .iter()
            .map(|r| {
                let slot = &mut idx[r.model * self.tasks + r.task];
                *slot += 1;
                Run::from_tools(
                    &format!("m{}", r.model),
                    &format!("t{}", r.task),
                    *slot,
                    r.success,
                    r.calls.iter().map(|&c| TOOLS[c]),
                )
            })
            .collect();
        let mut fm = FamilyMap::new();
        for (m, f) in self.family.iter().enumerate() {
            fm.insert(format!("m{m}"), format!("f{f}"));
        }
        let opts = IngestOptions {
            runs_per_unit: self.k,
            ..Default::default()
        };
        Corpus::from_runs(runs, fm, DomainTokens::new(), &opts)
            .expect("raw corpus is well formed")
            .0
    }
}

fn tool_set(calls: &[usize]) -> Vec<usize> {
    let mut seen = Vec::new();
    for &c in calls {
        if !seen.contains(&c) {
            seen.push(c);
        }
    }
    seen.sort();
    seen
}

fn jaccard_q(a: &[usize], b: &[usize]) -> Option<Q> {
    let inter = a.iter().filter(|x| b.contains(x)).count() as i64;
    let union = a.len() as i64 + b.len() as i64 - inter;
    (union > 0).then(|| Q::new(inter, union))
}

fn names(set: &[usize]) -> ToolSet {
    set.iter().map(|&i| TOOLS[i]).collect()
}

fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

#[derive(Clone, Copy, Debug)]
pub enum Excl {
    None,
    Model(usize),
    Family(usize),
}

/// Canonical tool indices and support, or `Err(support)` when short.
pub fn consensus(raw: &RawCorpus, task: usize, excl: Excl, thr: Q, min: usize) -> Result<(Vec<usize>, usize), usize> {
    let sets: Vec<Vec<usize>> = raw
        .runs
        .iter()
        .filter(|r| r.task == task && r.success)
        .filter(|r| match excl {
            Excl::None => true,
            Excl::Model(m) => r.model != m,
            Excl::Family(f) => raw.family[r.model] != f,
        })
        .map(|r| tool_set(&r.calls))
        .collect();
    let n = sets.len();
    if n < min {
        return Err(n);
    }
    let tools = (0..TOOLS.len())
        .filter(|t| {
            let c = sets.iter().filter(|s| s.contains(t)).count() as i64;
            Q::new(c, n as i64) > thr
        })
        .collect();
    Ok((tools, n))
}

fn spec_for(excl: Excl, thr: Q, min: usize) -> CanonicalSpec {
    CanonicalSpec {
        scope: match excl {
            Excl::None => Scope::Naive,
            Excl::Model(m) => Scope::LeaveOneOut(format!("m{m}")),
            Excl::Family(f) => Scope::CrossFamily(format!("f{f}")),
        },
        threshold: to_f64(thr),
        min_successes: min,
        generic_only: false,
    }
}

pub const THRESHOLDS: [(i64, i64); 3] = [(1, 2), (2, 5), (3, 5)];

/// Compares every oracle quantity on one corpus; returns the number of
/// individual checks made.
pub fn check_corpus(raw: &RawCorpus) -> Result<usize, String> {
    let corpus = raw.build();
    let mut checks = 0usize;

    // jaccard over every pair of run tool sets
    let sets: Vec<Vec<usize>> = raw.runs.iter().map(|r| tool_set(&r.calls)).collect();
    for a in &sets {
        for b in &sets {
            let got = jaccard(&names(a), &names(b)).map_err(|e| e.to_string())?;
            let want = jaccard_q(a, b).expect("runs are non-empty");
            if got != to_f64(want) {
                return Err(format!("jaccard {a:?} {b:?}: {got} vs {want}"));
            }
            checks += 1;
        }
    }
    if jaccard(&ToolSet::new(), &ToolSet::new()).is_ok() {
        return Err("jaccard of two empty sets must fail".into());
    }

    let mut exclusions = vec![Excl::None];
    exclusions.extend((0..raw.models).map(Excl::Model));
    let families: BTreeSet<usize> = raw.family.iter().copied().collect();
    exclusions.extend(families.iter().map(|&f| Excl::Family(f)));

    for task in 0..raw.tasks {
        let tname = format!("t{task}");
        for &(n, d) in &THRESHOLDS {
            let thr = Q::new(n, d);
            for min in 1..=3 {
                for &excl in &exclusions {
                    let spec = spec_for(excl, thr, min);
                    let want = consensus(raw, task, excl, thr, min);
                    let got = consensus_set(&tname, &corpus, &spec);
                    match (&want, &got) {
                        (Ok((tools, support)), Ok(c)) => {
                            if c.tools != names(tools) || c.support_count != *support {
                                return Err(format!(
                                    "consensus {tname} {excl:?} {thr} min {min}: {} vs {tools:?}",
                                    c.tools
                                ));
                            }
                        }
                        (Err(_), Err(pathdrift::Error::InsufficientSupport { .. })) => {}
                        _ => {
                            return Err(format!(
                                "consensus {tname} {excl:?}: {want:?} vs {:?}",
                                got.map(|c| c.tools)
                            ))
                        }
                    }
                    checks += 1;

                    // unit gaps of mixed units on this task
                    for m in 0..raw.models {
                        let runs: Vec<&RawRun> = raw.runs.iter().filter(|r| r.model == m && r.task == task).collect();
                        let s = runs.iter().filter(|r| r.success).count();
                        if s == 0 || s == runs.len() {
                            continue;
                        }
                        let unit = corpus
                            .units()
                            .iter()
                            .find(|u| u.model == format!("m{m}") && u.task == tname)
                            .expect("unit exists");
                        let got = unit_gap(unit, &corpus, &spec);
                        match (&want, got) {
                            (Ok((canon, _)), Ok(g)) => {
                                let adh = |succ: bool| -> Q {
                                    let v: Vec<Q> = runs
                                        .iter()
                                        .filter(|r| r.success == succ)
                                        .map(|r| jaccard_q(&tool_set(&r.calls), canon).expect("non-empty run"))
                                        .collect();
                                    v.iter().copied().sum::<Q>() / Q::from(v.len() as i64)
                                };
                                let delta = adh(true) - adh(false);
                                if (g.delta - to_f64(delta)).abs() > 1e-12 {
                                    return Err(format!("unit gap m{m}/{tname} {excl:?}: {} vs {delta}", g.delta));
                                }
                            }
                            (Err(_), Err(pathdrift::Error::InsufficientSupport { .. })) => {}
                            (w, g) => return Err(format!("unit gap m{m}/{tname}: {w:?} vs {:?}", g.map(|g| g.delta))),
                        }
                        checks += 1;
                    }
                }
            }
        }

        // strength: mean pairwise jaccard over all successes
        let succ: Vec<Vec<usize>> = raw
            .runs
            .iter()
            .filter(|r| r.task == task && r.success)
            .map(|r| tool_set(&r.calls))
            .collect();
        let got = canonical_strength(&tname, &corpus);
        if succ.len() >= 2 {
            let mut total = Q::from(0);
            let mut pairs = 0i64;
            for i in 0..succ.len() {
                for j in i + 1..succ.len() {
                    total += jaccard_q(&succ[i], &succ[j]).expect("non-empty");
                    pairs += 1;
                }
            }
            let want = to_f64(total / Q::from(pairs));
            let got = got.map_err(|e| e.to_string())?;
            if (got - want).abs() > 1e-12 {
                return Err(format!("strength {tname}: {got} vs {want}"));
            }
        } else if got.is_ok() {
            return Err(format!("strength {tname} should need two successes"));
        }
        checks += 1;
    }

    // per-model metrics
    let rows = per_model_metrics(&corpus);
    for m in 0..raw.models {
        let name = format!("m{m}");
        let row = rows
            .iter()
            .find(|r| r.model == name)
            .ok_or("model missing from metrics")?;
        let mine: Vec<&RawRun> = raw.runs.iter().filter(|r| r.model == m).collect();
        let succ = mine.iter().filter(|r| r.success).count() as i64;
        let p1 = Q::new(succ, mine.len() as i64);
        let (mut any, mut all, mut mixed) = (0i64, 0i64, 0i64);
        for t in 0..raw.tasks {
            let s = mine.iter().filter(|r| r.task == t && r.success).count();
            if s > 0 {
                any += 1;
            }
            if s == raw.k {
                all += 1;
            }
            if s > 0 && s < raw.k {
                mixed += 1;
            }
        }
        let tasks = raw.tasks as i64;
        let mo = (any > 0).then(|| to_f64(Q::new(mixed, any)));
        if row.p_at_1 != to_f64(p1)
            || row.p_at_k != to_f64(Q::new(any, tasks))
            || row.p_hat_k != to_f64(Q::new(all, tasks))
            || row.mo_over_patk != mo
        {
            return Err(format!("metrics {name}: {row:?}"));
        }
        checks += 1;
    }
    // sorted by P@1 descending, then name
    for w in rows.windows(2) {
        if w[0].p_at_1 < w[1].p_at_1 || (w[0].p_at_1 == w[1].p_at_1 && w[0].model > w[1].model) {
            return Err("metrics not sorted".into());
        }
    }
    Ok(checks)
}

/// Distinct non-empty subsets of the first `n` tools, as call lists.
pub fn subsets(n: usize) -> Vec<Vec<usize>> {
    (1u32..(1 << n))
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect()
}

/// Every single-unit corpus of three runs over four tools, with every
/// outcome pattern.
pub fn exhaustive_single_unit() -> impl Iterator<Item = RawCorpus> {
    let subs = subsets(4);
    let mut out = Vec::new();
    for a in &subs {
        for b in &subs {
            for c in &subs {
                for outcome in 0u32..8 {
                    let runs = [a, b, c]
                        .iter()
                        .enumerate()
                        .map(|(i, calls)| RawRun {
                            model: 0,
                            task: 0,
                            success: outcome & (1 << i) != 0,
                            calls: (*calls).clone(),
                        })
                        .collect();
                    out.push(RawCorpus {
                        runs,
                        models: 1,
                        tasks: 1,
                        k: 3,
                        family: vec![0],
                    });
                }
            }
        }
    }
    out.into_iter()
}

/// Every two-model, two-run-per-unit corpus over three tools, with both
/// models in one family and in separate families.
pub fn exhaustive_two_models() -> impl Iterator<Item = RawCorpus> {
    let subs = subsets(3);
    let mut out = Vec::new();
    for a in &subs {
        for b in &subs {
            for c in &subs {
                for d in &subs {
                    for outcome in 0u32..16 {
                        for family in [vec![0, 0], vec![0, 1]] {
                            let runs = [a, b, c, d]
                                .iter()
                                .enumerate()
                                .map(|(i, calls)| RawRun {
                                    model: i / 2,
                                    task: 0,
                                    success: outcome & (1 << i) != 0,
                                    calls: (*calls).clone(),
                                })
                                .collect();
                            out.push(RawCorpus {
                                runs,
                                models: 2,
                                tasks: 1,
                                k: 2,
                                family,
                            });
                        }
                    }
                }
            }
        }
    }
    out.into_iter()
}

/// A random corpus within the oracle bounds: at most four tools, three
/// tasks, and five runs per task.
pub fn random_corpus(seed: u64) -> RawCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (models, k) = if rng.random_bool(0.5) {
        (1, rng.random_range(1..=5))
    } else {
        (2, rng.random_range(1..=2))
    };
    let tasks = rng.random_range(1..=3);
    let n_tools = rng.random_range(1..=4);
    let family = (0..models).map(|_| rng.random_range(0..2)).collect();
    let mut runs = Vec::new();
    for model in 0..models {
        for task in 0..tasks {
            for _ in 0..k {
                let len = rng.random_range(1..=6);
                runs.push(RawRun {
                    model,
                    task,
                    success: rng.random_bool(0.5),
                    calls: (0..len).map(|_| rng.random_range(0..n_tools)).collect(),
                });
            }
        }
    }
    RawCorpus {
        runs,
        models,
        tasks,
        k,
        family,
    }
}
