//! Consensus tool sets under the three exclusion scopes.

use std::error::Error;

use pathdrift::canonical::{
    canonical_strength, canonical_table, consensus_set, CanonicalSpec, Scope, ScopeKind, SpecTemplate,
};
use pathdrift::fixtures::{self, GIT_MILESTONE_TASK};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let corpus = fixtures::git_milestone()?;
    let task = GIT_MILESTONE_TASK;

    for scope in [
        Scope::Naive,
        Scope::LeaveOneOut("glm-4.6".into()),
        Scope::CrossFamily("glm".into()),
    ] {
        let spec = CanonicalSpec {
            scope: scope.clone(),
            ..Default::default()
        };
        let set = consensus_set(task, &corpus, &spec)?;
        println!("{:?}: {} from {} successes", scope, set.tools, set.support_count);
        for (tool, f) in &set.per_tool_frequency {
            println!("    {tool:<32} {f:.3}");
        }
    }

    println!("strength: {:.3}", canonical_strength(task, &corpus)?);

    let table = canonical_table(&corpus, &SpecTemplate::with_scope(ScopeKind::CrossFamily))?;
    for row in &table.rows {
        println!("{:?} -> {}", row.scope, row.tools.to_pipe_list());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
