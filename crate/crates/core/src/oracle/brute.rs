//! Exhaustive constrained search over small spaces.

use crate::evolution::ConstraintSet;
use crate::latency::LatencyError;
use crate::space::{enumerate_subnets, SearchSpace, SpaceError};
use crate::subnet::SubnetArch;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum BruteForceError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Latency(#[from] LatencyError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BruteForce {
    /// Feasible subnet with the highest objective; ties go to the lower
    /// estimated latency, then the earlier enumeration index.
    pub best: Option<SubnetArch>,
    pub best_value: Option<f64>,
    pub best_index: Option<u64>,
    pub feasible: u64,
    pub scanned: u64,
    /// Lowest estimated latency over the whole space, feasible or not.
    pub min_latency_ms: Option<f64>,
}

#[derive(Clone, Copy)]
struct Partial {
    best: Option<(f64, f64, u64)>,
    feasible: u64,
    scanned: u64,
    min_latency: Option<f64>,
}

impl Partial {
    const EMPTY: Partial = Partial {
        best: None,
        feasible: 0,
        scanned: 0,
        min_latency: None,
    };

    fn better(a: (f64, f64, u64), b: (f64, f64, u64)) -> bool {
        b.0.total_cmp(&a.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .is_lt()
    }

    fn merge(self, other: Partial) -> Partial {
        let best = match (self.best, other.best) {
            (Some(a), Some(b)) => Some(if Self::better(a, b) { a } else { b }),
            (a, b) => a.or(b),
        };
        let min_latency = match (self.min_latency, other.min_latency) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        Partial {
            best,
            feasible: self.feasible + other.feasible,
            scanned: self.scanned + other.scanned,
            min_latency,
        }
    }
}

const SHARD: u64 = 4096;

/// Scans every subnet of `space`, sharded across the rayon pool. The result
/// does not depend on the number of threads.
pub fn brute_force_best<F>(
    space: &SearchSpace,
    objective: F,
    constraints: &ConstraintSet,
    cap: u64,
) -> Result<BruteForce, BruteForceError>
where
    F: Fn(&SubnetArch) -> f64 + Sync,
{
    let stream = enumerate_subnets(space, cap)?;
    let total = stream.total();
    let shards = total.div_ceil(SHARD);
    let partials = (0..shards)
        .into_par_iter()
        .map(|s| -> Result<Partial, LatencyError> {
            let mut acc = Partial::EMPTY;
            for i in s * SHARD..((s + 1) * SHARD).min(total) {
                let arch = stream.subnet_at(i);
                let m = constraints.metrics(&arch)?;
                acc.scanned += 1;
                if let Some(l) = m.latency_ms {
                    acc.min_latency = Some(acc.min_latency.map_or(l, |x: f64| x.min(l)));
                }
                if !constraints.check(&m).passed() {
                    continue;
                }
                acc.feasible += 1;
                let cand = (objective(&arch), m.latency_ms.unwrap_or(0.0), i);
                if acc.best.is_none_or(|b| Partial::better(cand, b)) {
                    acc.best = Some(cand);
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let total_partial = partials.into_iter().fold(Partial::EMPTY, Partial::merge);
    Ok(BruteForce {
        best: total_partial.best.map(|(_, _, i)| stream.subnet_at(i)),
        best_value: total_partial.best.map(|b| b.0),
        best_index: total_partial.best.map(|b| b.2),
        feasible: total_partial.feasible,
        scanned: total_partial.scanned,
        min_latency_ms: total_partial.min_latency,
    })
}
