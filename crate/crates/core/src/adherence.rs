//! Jaccard adherence of runs to a canonical set, over whole runs or prefixes.

use serde::{Deserialize, Serialize};

use crate::canonical::CanonicalSet;
use crate::error::{Error, Result};
use crate::store::{Run, ToolSet};

/// Minimum run length for drift-curve analyses.
pub const MIN_PREFIX_CALLS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdherenceValue {
    pub value: f64,
    /// Distinct tools in the (prefix of the) run.
    pub trajectory_tool_count: usize,
    pub canonical_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub fraction: f64,
    pub prefix_length: usize,
}

impl Checkpoint {
    /// `ceil(fraction * total_calls)`, never less than 1.
    pub fn new(fraction: f64, total_calls: usize) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "checkpoint fraction must lie in (0, 1], got {fraction}"
            )));
        }
        if total_calls == 0 {
            return Err(Error::RunTooShort { calls: 0, required: 1 });
        }
        Ok(Checkpoint {
            fraction,
            prefix_length: prefix_length(fraction, total_calls),
        })
    }
}

/// Number of calls in the prefix at a completion fraction.
pub fn prefix_length(fraction: f64, total_calls: usize) -> usize {
    // Round before ceil so 0.1 * 30 lands on 3, not 4.
    let raw = fraction * total_calls as f64;
    let snapped = (raw * 1e9).round() / 1e9;
    (snapped.ceil() as usize).clamp(1, total_calls.max(1))
}

/// |a ∩ b| / |a ∪ b|. Two empty sets cannot be compared.
pub fn jaccard(a: &ToolSet, b: &ToolSet) -> Result<f64> {
    let union = a.union_len(b);
    if union == 0 {
        return Err(Error::EmptyComparison);
    }
    Ok(a.intersection_len(b) as f64 / union as f64)
}

pub fn adherence(run: &Run, canonical: &CanonicalSet) -> Result<AdherenceValue> {
    adherence_to(&run.tool_set(), &canonical.tools)
}

pub(crate) fn adherence_to(tools: &ToolSet, canonical: &ToolSet) -> Result<AdherenceValue> {
    Ok(AdherenceValue {
        value: jaccard(tools, canonical)?,
        trajectory_tool_count: tools.len(),
        canonical_size: canonical.len(),
    })
}

/// Adherence of the run's first `ceil(fraction * len)` calls against the
/// full canonical set.
pub fn partial_adherence(run: &Run, canonical: &CanonicalSet, fraction: f64) -> Result<AdherenceValue> {
    partial_adherence_min(run, canonical, fraction, 1)
}

/// As [`partial_adherence`], rejecting runs shorter than `min_calls`.
pub fn partial_adherence_min(
    run: &Run,
    canonical: &CanonicalSet,
    fraction: f64,
    min_calls: usize,
) -> Result<AdherenceValue> {
    let required = min_calls.max(1);
    if run.len() < required {
        return Err(Error::RunTooShort {
            calls: run.len(),
            required,
        });
    }
    let cp = Checkpoint::new(fraction, run.len())?;
    adherence_to(&run.prefix_tool_set(cp.prefix_length), &canonical.tools)
}

/// Within-unit OLS residuals of adherence on run length.
///
/// When every run has the same length the regressor is constant and the
/// residuals reduce to the demeaned values.
pub fn length_residualize(values: &[(f64, usize)]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mean_y = values.iter().map(|v| v.0).sum::<f64>() / n;
    let mean_x = values.iter().map(|v| v.1 as f64).sum::<f64>() / n;
    let sxx: f64 = values.iter().map(|v| (v.1 as f64 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return values.iter().map(|v| v.0 - mean_y).collect();
    }
    let sxy: f64 = values.iter().map(|v| (v.1 as f64 - mean_x) * (v.0 - mean_y)).sum();
    let slope = sxy / sxx;
    values
        .iter()
        .map(|v| (v.0 - mean_y) - slope * (v.1 as f64 - mean_x))
        .collect()
}
