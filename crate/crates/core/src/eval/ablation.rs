//! Matched-seed comparison of refinement weights under answer noise.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{mean_rank, run_benchmark, BenchmarkConfig, EvalError, Trajectory};
use crate::agents::AgentBackend;
use crate::index::VideoIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedCurve {
    pub seed: u64,
    pub mean_ranks: Vec<f64>,
    pub best_round: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationArm {
    pub alpha: f64,
    pub mean_ranks: Vec<f64>,
    pub best_round: usize,
    pub completed: usize,
    pub failed: usize,
    pub per_seed: Vec<SeedCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub noise: f64,
    pub arms: Vec<AblationArm>,
}

/// Earliest round with the lowest value.
fn best_round(curve: &[f64]) -> usize {
    curve
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
        .0
}

fn curve(trajectories: &[Trajectory], rounds: usize) -> Result<Vec<f64>, EvalError> {
    (0..=rounds).map(|r| mean_rank(trajectories, r)).collect()
}

/// Runs `config` once per weight in `alphas` with the same seeds, queries and
/// corruption schedule, so arms differ only in the weight.
pub fn alpha_ablation(
    config: &BenchmarkConfig,
    alphas: &[f64],
    noise: f64,
    backend: &AgentBackend,
    index: &VideoIndex,
) -> Result<AblationReport, EvalError> {
    let mut arms = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let arm_config = BenchmarkConfig {
            alpha,
            noise,
            ..config.clone()
        };
        let report = run_benchmark(&arm_config, backend, index)?;
        let mut by_seed: BTreeMap<u64, Vec<Trajectory>> = BTreeMap::new();
        for t in &report.trajectories {
            by_seed.entry(t.seed).or_default().push(t.clone());
        }
        let per_seed = by_seed
            .into_iter()
            .map(|(seed, ts)| {
                let mean_ranks = curve(&ts, config.rounds)?;
                Ok(SeedCurve {
                    seed,
                    best_round: best_round(&mean_ranks),
                    mean_ranks,
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        let mean_ranks = report.mean_ranks();
        arms.push(AblationArm {
            alpha,
            best_round: best_round(&mean_ranks),
            mean_ranks,
            completed: report.completed,
            failed: report.failed,
            per_seed,
        });
    }
    Ok(AblationReport { noise, arms })
}
