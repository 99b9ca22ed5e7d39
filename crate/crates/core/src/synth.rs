//! Synthetic corpora with known ground truth.
//!
//! Each run is a two-state chain over "canonical" and "off-canonical"
//! calls: after a canonical call the next one leaves the canonical set with
//! probability `base_off_rate`, after an off-canonical call with
//! `base_off_rate + persistence_boost`. Success is then drawn from a
//! coupling function of the run's final adherence.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adherence::jaccard;
use crate::error::{Error, Result};
use crate::stats::RngPolicy;
use crate::store::{Corpus, DomainTokens, FamilyMap, IngestOptions, IngestReport, Run, ToolSet};

/// How a run's success probability depends on its behaviour.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Coupling {
    /// Success probability ignores behaviour (the null).
    Constant { p: f64 },
    /// `sigmoid(intercept + slope * final adherence)`.
    Logistic { intercept: f64, slope: f64 },
    /// Succeeds iff the first off-canonical call comes after this fraction
    /// of the run (or never).
    DeviationAfter { fraction: f64 },
    /// Succeeds iff the first call is canonical.
    FirstToolCanonical,
}

impl Coupling {
    fn validate(&self) -> Result<()> {
        match *self {
            Coupling::Constant { p } if !(0.0..=1.0).contains(&p) => Err(Error::InvalidConfig(format!(
                "constant coupling p = {p} outside [0, 1]"
            ))),
            Coupling::Logistic { slope, .. } if slope < 0.0 => Err(Error::InvalidConfig(
                "logistic coupling must be non-decreasing in adherence".into(),
            )),
            Coupling::DeviationAfter { fraction } if !(0.0..=1.0).contains(&fraction) => Err(Error::InvalidConfig(
                format!("deviation fraction {fraction} outside [0, 1]"),
            )),
            _ => Ok(()),
        }
    }

    fn is_null(&self) -> bool {
        matches!(self, Coupling::Constant { .. } | Coupling::Logistic { slope: 0.0, .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub models: usize,
    pub families: usize,
    pub tasks: usize,
    pub runs_per_unit: usize,
    pub canonical_size: usize,
    /// Tools available per task, canonical ones included.
    pub tool_universe: usize,
    pub base_off_rate: f64,
    pub persistence_boost: f64,
    pub coupling: Coupling,
    /// Calls before this fraction of the run are always canonical.
    pub drift_onset: f64,
    pub min_calls: usize,
    pub max_calls: usize,
    /// Each unit's base rate is scaled by a factor drawn from
    /// `[1 - rate_spread, 1 + rate_spread]`.
    pub rate_spread: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            models: 8,
            families: 4,
            tasks: 30,
            runs_per_unit: 3,
            canonical_size: 5,
            tool_universe: 60,
            base_off_rate: 0.15,
            persistence_boost: 0.25,
            coupling: Coupling::Logistic {
                intercept: -3.0,
                slope: 6.0,
            },
            drift_onset: 0.0,
            min_calls: 20,
            max_calls: 60,
            rate_spread: 0.0,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.models == 0 || self.tasks == 0 || self.runs_per_unit == 0 || self.families == 0 {
            return bad("models, families, tasks and runs_per_unit must be positive".into());
        }
        if self.canonical_size == 0 || self.canonical_size > self.tool_universe {
            return bad(format!(
                "canonical size {} must lie in [1, tool universe {}]",
                self.canonical_size, self.tool_universe
            ));
        }
        if self.min_calls == 0 || self.min_calls > self.max_calls {
            return bad(format!("call range [{}, {}] is empty", self.min_calls, self.max_calls));
        }
        if !(0.0..=1.0).contains(&self.base_off_rate) || !(0.0..=1.0).contains(&self.persistence_boost) {
            return bad("rates must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.rate_spread) {
            return bad(format!("rate spread {} outside [0, 1]", self.rate_spread));
        }
        if self.base_off_rate * (1.0 + self.rate_spread) + self.persistence_boost > 1.0 + 1e-12 {
            return bad("base rate (with spread) plus persistence boost exceeds 1".into());
        }
        if self.canonical_size == self.tool_universe && self.base_off_rate > 0.0 {
            return bad("no off-canonical tools to draw from".into());
        }
        if !(0.0..=1.0).contains(&self.drift_onset) {
            return bad(format!("drift onset {} outside [0, 1]", self.drift_onset));
        }
        self.coupling.validate()
    }

    pub fn model_name(&self, m: usize) -> String {
        format!("model-{m:02}")
    }

    pub fn family_name(&self, m: usize) -> String {
        format!("family-{}", m % self.families)
    }

    pub fn task_name(&self, t: usize) -> String {
        format!("task-{t:03}")
    }

    pub fn tool_name(&self, t: usize, j: usize) -> String {
        format!("t{t:03}-tool{j:02}")
    }

    /// The planted canonical set of task `t`.
    pub fn true_canonical(&self, t: usize) -> ToolSet {
        (0..self.canonical_size).map(|j| self.tool_name(t, j)).collect()
    }

    pub fn family_map(&self) -> FamilyMap {
        let mut fm = FamilyMap::new();
        for m in 0..self.models {
            fm.insert(self.model_name(m), self.family_name(m));
        }
        fm
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub injected_beta: f64,
    /// Stationary off-canonical rate of the two-state chain.
    pub stationary_off_rate: f64,
    /// +1 when success rises with adherence, 0 for the null.
    pub expected_gap_sign: i8,
    pub null: bool,
}

/// Closed-form targets implied by a configuration.
pub fn expected_metrics(config: &GeneratorConfig) -> Result<GroundTruth> {
    config.validate()?;
    let b = config.base_off_rate;
    let beta = config.persistence_boost;
    let stationary = if beta >= 1.0 { 1.0 } else { b / (1.0 - beta) };
    let null = config.coupling.is_null();
    let sign = match config.coupling {
        _ if null => 0,
        Coupling::Logistic { .. } | Coupling::DeviationAfter { .. } | Coupling::FirstToolCanonical => 1,
        Coupling::Constant { .. } => 0,
    };
    Ok(GroundTruth {
        injected_beta: beta,
        stationary_off_rate: stationary,
        expected_gap_sign: sign,
        null,
    })
}

/// Generates runs in canonical order: model, task, run index.
pub fn generate_runs(config: &GeneratorConfig) -> Result<Vec<Run>> {
    config.validate()?;
    let rng = RngPolicy::new(config.seed);
    let k = config.runs_per_unit;
    let per_model = config.tasks * k;
    let total = config.models * per_model;
    Ok((0..total)
        .into_par_iter()
        .map(|i| {
            let (m, rest) = (i / per_model, i % per_model);
            let (t, r) = (rest / k, rest % k);
            // unit-level draws come from a stream shared by the unit's runs
            let unit_stream = (m * config.tasks + t) as u64;
            let spread = unit_factor(config, &rng, unit_stream);
            one_run(config, &mut rng.derive("run").stream(i as u64), m, t, r, spread)
        })
        .collect())
}

fn unit_factor(config: &GeneratorConfig, rng: &RngPolicy, unit: u64) -> f64 {
    if config.rate_spread == 0.0 {
        return 1.0;
    }
    let u: f64 = rng.derive("unit").stream(unit).random();
    1.0 - config.rate_spread + 2.0 * config.rate_spread * u
}

fn one_run<R: Rng>(config: &GeneratorConfig, rng: &mut R, m: usize, t: usize, r: usize, factor: f64) -> Run {
    let len = rng.random_range(config.min_calls..=config.max_calls);
    let base = (config.base_off_rate * factor).min(1.0);
    let n_off = config.tool_universe - config.canonical_size;
    let mut prev_off = false;
    let mut first_off: Option<usize> = None;
    let mut tools = Vec::with_capacity(len);
    for i in 0..len {
        let before_onset = (i as f64) < config.drift_onset * len as f64;
        let p = if prev_off {
            base + config.persistence_boost
        } else {
            base
        };
        let off = !before_onset && n_off > 0 && rng.random::<f64>() < p;
        let j = if off {
            config.canonical_size + rng.random_range(0..n_off)
        } else {
            rng.random_range(0..config.canonical_size)
        };
        if off && first_off.is_none() {
            first_off = Some(i);
        }
        tools.push(config.tool_name(t, j));
        prev_off = off;
    }
    let run_tools: ToolSet = tools.iter().map(String::as_str).collect();
    let success = match config.coupling {
        Coupling::Constant { p } => rng.random::<f64>() < p,
        Coupling::Logistic { intercept, slope } => {
            let a = jaccard(&run_tools, &config.true_canonical(t)).unwrap_or(0.0);
            rng.random::<f64>() < 1.0 / (1.0 + (-(intercept + slope * a)).exp())
        }
        Coupling::DeviationAfter { fraction } => first_off.is_none_or(|i| (i + 1) as f64 / len as f64 > fraction),
        Coupling::FirstToolCanonical => first_off != Some(0),
    };
    Run::from_tools(
        &config.model_name(m),
        &config.task_name(t),
        r as u32 + 1,
        success,
        tools,
    )
}

/// A corpus plus the ground truth it was generated under.
pub fn generate(config: &GeneratorConfig) -> Result<(Corpus, GroundTruth)> {
    let (corpus, _) = generate_with_report(config)?;
    Ok((corpus, expected_metrics(config)?))
}

pub fn generate_with_report(config: &GeneratorConfig) -> Result<(Corpus, IngestReport)> {
    let runs = generate_runs(config)?;
    let options = IngestOptions {
        runs_per_unit: config.runs_per_unit,
        ..Default::default()
    };
    Corpus::from_runs(runs, config.family_map(), DomainTokens::new(), &options)
}
