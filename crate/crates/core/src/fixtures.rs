//! Small hand-built corpora bundled with the crate.
//!
//! `git-milestone` is a single-task corpus of four models. The `glm-4.6`
//! unit holds a 6-call successful run that uses exactly the canonical
//! tools and a 38-call failure that opens on the same `fetch_json` prefix,
//! switches to `fetch_html` at call 6 and never writes the file. The other
//! three units only exist to give that unit a cross-family canonical set
//! of `{fetch-fetch_json, filesystem-write_file, local-claim_done}`.

use crate::error::Result;
use crate::store::{ingest, Corpus, DomainTokens, FamilyMap, IngestOptions};

pub const GIT_MILESTONE_TASK: &str = "git-milestone";
pub const GIT_MILESTONE_MODEL: &str = "glm-4.6";

/// Run indices within the `glm-4.6` unit.
pub const GIT_MILESTONE_FAILURE_RUN: u32 = 1;
pub const GIT_MILESTONE_SUCCESS_RUN: u32 = 2;

pub const GIT_MILESTONE_JSONL: &str = include_str!("../fixtures/git_milestone.jsonl");
pub const GIT_MILESTONE_FAMILIES: &str = include_str!("../fixtures/git_milestone_families.csv");
pub const GIT_MILESTONE_TOKENS: &str = include_str!("../fixtures/git_milestone_tokens.json");

pub fn git_milestone_families() -> Result<FamilyMap> {
    FamilyMap::from_reader(GIT_MILESTONE_FAMILIES.as_bytes())
}

pub fn git_milestone() -> Result<Corpus> {
    let families = git_milestone_families()?;
    let tokens = DomainTokens::from_reader(GIT_MILESTONE_TOKENS.as_bytes())?;
    let (corpus, _) = ingest(
        GIT_MILESTONE_JSONL.as_bytes(),
        families,
        tokens,
        &IngestOptions::default(),
    )?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adherence::adherence;
    use crate::canonical::{CanonicalIndex, SpecTemplate};
    use crate::store::{OutcomeClass, ToolSet};
    use crate::within_unit::unit_gaps;

    #[test]
    fn loads_four_units() {
        let c = git_milestone().unwrap();
        assert_eq!(c.units().len(), 4);
        let counts = c.class_counts();
        assert_eq!(counts[&OutcomeClass::Mixed], 3);
        assert_eq!(counts[&OutcomeClass::AlwaysSucceed], 1);
    }

    #[test]
    fn glm_unit_values() {
        let c = git_milestone().unwrap();
        let index = CanonicalIndex::build(&c, &SpecTemplate::default()).unwrap();
        let unit = c.units().iter().find(|u| u.model == GIT_MILESTONE_MODEL).unwrap();
        let canon = index.for_unit(unit, &c).unwrap();
        assert_eq!(
            canon.tools,
            ToolSet::from_iter(["fetch-fetch_json", "filesystem-write_file", "local-claim_done"])
        );
        let adh: Vec<f64> = unit.runs.iter().map(|r| adherence(r, canon).unwrap().value).collect();
        assert_eq!(adh, vec![1.0 / 9.0, 1.0, 0.5]);
        assert_eq!(unit.runs[0].len(), 38);
        assert_eq!(unit.runs[1].len(), 6);

        let gaps = unit_gaps(&c, &SpecTemplate::default()).unwrap();
        let g = gaps.iter().find(|g| g.model == GIT_MILESTONE_MODEL).unwrap();
        assert!((g.delta - 25.0 / 36.0).abs() < 1e-12);
    }
}
