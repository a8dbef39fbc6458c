//! Parallel experiment driver.
//!
//! Replicate seeds are a pure function of (master seed, sample size,
//! replicate index), so running them on any number of threads and
//! collecting in index order reproduces the sequential result exactly.

use micvar_core::experiments::{
    ExperimentConfig, ExperimentPlan, ExperimentResult, ReplicateOutcome,
};
use rayon::prelude::*;

use crate::error::AppError;

/// Runs an experiment on `threads` workers (`None` = one per available
/// core). Output is identical to `micvar_core::experiments::run_experiment`
/// for the same configuration.
pub fn run_experiment_parallel(
    config: ExperimentConfig,
    threads: Option<usize>,
) -> Result<ExperimentResult, AppError> {
    let plan = ExperimentPlan::new(config)?;
    let ns = plan.config().sample_sizes.clone();
    let b = plan.config().replicates;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| AppError::BadArgs(format!("thread pool: {e}")))?;

    let flat: Vec<ReplicateOutcome> = pool.install(|| {
        (0..ns.len() * b)
            .into_par_iter()
            .map(|idx| plan.replicate(ns[idx / b], idx % b))
            .collect()
    });

    let grouped: Vec<Vec<ReplicateOutcome>> =
        flat.chunks(b).map(|chunk| chunk.to_vec()).collect();
    Ok(plan.assemble(&grouped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use micvar_core::experiments::{
        run_experiment, CriterionSpec, ErrorStructure, ProcessSpec, Setting,
    };

    fn config() -> ExperimentConfig {
        ExperimentConfig {
            process: ProcessSpec::Named {
                setting: Setting::Var2_2,
                errors: ErrorStructure::NonDiagonal,
            },
            sample_sizes: vec![300, 400],
            replicates: 6,
            p_max: 3,
            criteria: vec![CriterionSpec::Mic, CriterionSpec::Bic, CriterionSpec::MicSp],
            master_seed: 2024,
        }
    }

    #[test]
    fn parallel_equals_sequential_for_any_thread_count() {
        let sequential = run_experiment(config()).unwrap();
        for threads in [1, 2, 5] {
            let parallel = run_experiment_parallel(config(), Some(threads)).unwrap();
            assert_eq!(parallel, sequential, "threads = {threads}");
        }
    }
}
