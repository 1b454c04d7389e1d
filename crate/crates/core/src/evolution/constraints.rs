//! Hardware constraints and their estimators.

use crate::latency::{estimate, CalibrationParams, LatencyError, LatencyLut};
use crate::subnet::{count_flops, count_params, SubnetArch};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    LatencyMs,
    Params,
    Flops,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::LatencyMs => "latency_ms",
            Metric::Params => "params",
            Metric::Flops => "flops",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = ConstraintError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "latency_ms" | "latency" => Ok(Metric::LatencyMs),
            "params" => Ok(Metric::Params),
            "flops" => Ok(Metric::Flops),
            _ => Err(ConstraintError::UnknownMetric(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub metric: Metric,
    pub bound: f64,
}

impl FromStr for Constraint {
    type Err = ConstraintError;

    /// Parses `metric=bound`, e.g. `latency_ms=20` or `params=5e6`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (m, b) = s
            .split_once('=')
            .ok_or_else(|| ConstraintError::Parse(s.to_string()))?;
        let bound = b
            .trim()
            .parse::<f64>()
            .map_err(|_| ConstraintError::Parse(s.to_string()))?;
        Ok(Constraint {
            metric: m.trim().parse()?,
            bound,
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConstraintError {
    #[error("unknown metric `{0}` (expected latency_ms, params or flops)")]
    UnknownMetric(String),
    #[error("cannot parse constraint `{0}` (expected metric=bound)")]
    Parse(String),
    #[error("bound of {metric} must be positive and finite, got {bound}")]
    BadBound { metric: Metric, bound: f64 },
    #[error("metric {0} constrained more than once")]
    Duplicate(Metric),
    #[error("a latency constraint needs a latency table")]
    NoLatencyTable,
}

/// Calibrated latency estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct LatencyEstimator {
    pub lut: LatencyLut,
    pub calib: CalibrationParams,
}

impl LatencyEstimator {
    pub fn estimate(&self, arch: &SubnetArch) -> Result<f64, LatencyError> {
        estimate(&self.lut, &self.calib, arch)
    }
}

/// Estimated cost of one subnet.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
    pub params: u64,
    pub flops: u64,
}

impl Metrics {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::LatencyMs => self.latency_ms,
            Metric::Params => Some(self.params as f64),
            Metric::Flops => Some(self.flops as f64),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Verdict {
    Pass,
    /// The first violated constraint in declaration order.
    Fail {
        metric: Metric,
        estimate: f64,
        bound: f64,
    },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// Bounds on estimated metrics plus the estimators that produce them.
#[derive(Clone, Debug)]
pub struct ConstraintSet {
    constraints: Vec<Constraint>,
    latency: Option<Arc<LatencyEstimator>>,
}

impl ConstraintSet {
    pub fn new(
        constraints: Vec<Constraint>,
        latency: Option<LatencyEstimator>,
    ) -> Result<Self, ConstraintError> {
        for (i, c) in constraints.iter().enumerate() {
            if !(c.bound > 0.0 && c.bound.is_finite()) {
                return Err(ConstraintError::BadBound {
                    metric: c.metric,
                    bound: c.bound,
                });
            }
            if constraints[..i].iter().any(|d| d.metric == c.metric) {
                return Err(ConstraintError::Duplicate(c.metric));
            }
            if c.metric == Metric::LatencyMs && latency.is_none() {
                return Err(ConstraintError::NoLatencyTable);
            }
        }
        Ok(ConstraintSet {
            constraints,
            latency: latency.map(Arc::new),
        })
    }

    /// No bounds; metrics still include latency when an estimator is given.
    pub fn unconstrained(latency: Option<LatencyEstimator>) -> Self {
        ConstraintSet {
            constraints: Vec::new(),
            latency: latency.map(Arc::new),
        }
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn latency(&self) -> Option<&LatencyEstimator> {
        self.latency.as_deref()
    }

    pub fn bound(&self, metric: Metric) -> Option<f64> {
        self.constraints
            .iter()
            .find(|c| c.metric == metric)
            .map(|c| c.bound)
    }

    pub fn metrics(&self, arch: &SubnetArch) -> Result<Metrics, LatencyError> {
        let latency_ms = match &self.latency {
            Some(est) => Some(est.estimate(arch)?),
            None => None,
        };
        Ok(Metrics {
            latency_ms,
            params: count_params(arch),
            flops: count_flops(arch),
        })
    }

    /// Strict comparison of every bound against precomputed metrics.
    pub fn check(&self, m: &Metrics) -> Verdict {
        for c in &self.constraints {
            let estimate = m.get(c.metric).expect("latency estimator present");
            if !(estimate < c.bound) {
                return Verdict::Fail {
                    metric: c.metric,
                    estimate,
                    bound: c.bound,
                };
            }
        }
        Verdict::Pass
    }
}

/// Passes iff every estimate is strictly below its bound.
pub fn check_constraints(
    arch: &SubnetArch,
    constraints: &ConstraintSet,
) -> Result<Verdict, LatencyError> {
    Ok(constraints.check(&constraints.metrics(arch)?))
}
