//! Runs a regime list over a manifest on a bounded worker pool.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PredictionRecord;
use crate::pipeline::{Pipeline, QueryInstance, QueryOutcome, Regime};

/// A (instance, regime) pair that produced no answer at all: a transport
/// error, a missing clip, or a bank that could not be built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalFailure {
    pub instance_id: String,
    pub regime: Regime,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct EvalRun {
    /// Regime-major, then manifest order.
    pub outcomes: Vec<QueryOutcome>,
    pub records: Vec<PredictionRecord>,
    pub failures: Vec<EvalFailure>,
}

/// Answers every instance under every regime. Output order does not depend
/// on `jobs` or on scheduling.
pub fn evaluate(
    pipeline: &Pipeline<'_>,
    instances: &[QueryInstance],
    regimes: &[Regime],
    jobs: usize,
) -> Result<EvalRun, rayon::ThreadPoolBuildError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let work: Vec<(Regime, &QueryInstance)> = regimes
        .iter()
        .flat_map(|r| instances.iter().map(move |q| (*r, q)))
        .collect();
    let results: Vec<_> = pool.install(|| {
        work.par_iter()
            .map(|(regime, q)| (q, *regime, pipeline.run(q, *regime)))
            .collect()
    });

    let mut run = EvalRun::default();
    for (q, regime, result) in results {
        match result {
            Ok(o) => {
                run.records.push(PredictionRecord::from_outcome(&o, q));
                run.outcomes.push(o);
            }
            Err(e) => {
                tracing::warn!(instance = %q.instance_id, %regime, error = %e, "query failed");
                run.failures.push(EvalFailure {
                    instance_id: q.instance_id.clone(),
                    regime,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(run)
}
