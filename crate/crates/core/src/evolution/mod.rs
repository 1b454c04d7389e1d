//! Constraint-driven evolutionary search over an evolving sampling
//! distribution.

mod constraints;
mod search;
mod space_evolution;

pub use constraints::{
    check_constraints, Constraint, ConstraintError, ConstraintSet, LatencyEstimator, Metric,
    Metrics, Verdict,
};
pub use search::{
    acceptance_rate, attempts_per_accept, log_csv, rank, search, search_from, EvolutionEvent,
    GenerationLog, InitStats, Member, SearchConfig, SearchError, SearchOutcome,
    SEARCH_FORMAT_VERSION,
};
pub use space_evolution::{empirical_distribution, evolve_distribution, space_quality};

use serde::{Deserialize, Serialize};

/// Search settings and bounds as one JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchDocument {
    pub format_version: u32,
    #[serde(default)]
    pub config: SearchConfig,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
}
