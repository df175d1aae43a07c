//! Retrieval metrics over per-round target ranks, and the experiment
//! runners built on them.

mod ablation;
mod bench;
mod dataset;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentError;
use crate::index::IndexError;
use crate::navigation::NavError;

pub use ablation::{alpha_ablation, AblationArm, AblationReport, SeedCurve};
pub use bench::{
    check_report, render_table, run_benchmark, synthetic_setup, BenchmarkConfig, BenchmarkReport,
    CorpusSource, PropertyCheck, RoundMetrics, SessionFailure,
};
pub use dataset::{load_dataset, DatasetLine, QueryPair};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trajectory {trajectory} has no rank for round {round}")]
    MissingRound { trajectory: usize, round: usize },
    #[error("no trajectories to aggregate")]
    NoTrajectories,
    #[error("invalid benchmark configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Navigation(#[from] NavError),
}

/// Target rank after each round of one session; `ranks[0]` is plain
/// retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub session_id: String,
    pub query_text: String,
    pub target_id: String,
    pub seed: u64,
    pub ranks: Vec<usize>,
}

fn ranks_at(trajectories: &[Trajectory], round: usize) -> Result<Vec<usize>, EvalError> {
    if trajectories.is_empty() {
        return Err(EvalError::NoTrajectories);
    }
    trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| {
            t.ranks.get(round).copied().ok_or(EvalError::MissingRound {
                trajectory: i,
                round,
            })
        })
        .collect()
}

/// Fraction of sessions whose target is within the top `k` at `round`.
pub fn recall_at_k(trajectories: &[Trajectory], k: usize, round: usize) -> Result<f64, EvalError> {
    let ranks = ranks_at(trajectories, round)?;
    let hits = ranks.iter().filter(|&&r| r <= k).count();
    Ok(hits as f64 / ranks.len() as f64)
}

pub fn mean_rank(trajectories: &[Trajectory], round: usize) -> Result<f64, EvalError> {
    let ranks = ranks_at(trajectories, round)?;
    Ok(ranks.iter().map(|&r| r as f64).sum::<f64>() / ranks.len() as f64)
}

pub fn median_rank(trajectories: &[Trajectory], round: usize) -> Result<f64, EvalError> {
    let mut ranks = ranks_at(trajectories, round)?;
    ranks.sort_unstable();
    let n = ranks.len();
    Ok(if n % 2 == 1 {
        ranks[n / 2] as f64
    } else {
        (ranks[n / 2 - 1] + ranks[n / 2]) as f64 / 2.0
    })
}
