//! Batch runs of automatic sessions and their per-round report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{load_dataset, mean_rank, median_rank, recall_at_k, EvalError, Trajectory};
use crate::agents::synthetic::{partial_query, synthetic_world, WorldSpec};
use crate::agents::AgentBackend;
use crate::embedding::RefinementParams;
use crate::index::{VideoIndex, VideoRecord};
use crate::navigation::{run_auto_with, SessionConfig};

/// Where benchmark queries come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CorpusSource {
    /// Random targets from a synthetic world, queried by a few of their
    /// attributes.
    Synthetic { world: WorldSpec },
    /// One caption per video from a dataset file. `index` and `backend` are
    /// paths for the command line; the runner only reads `dataset`.
    Dataset {
        dataset: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        index: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        backend: Option<PathBuf>,
    },
}

impl Default for CorpusSource {
    fn default() -> Self {
        CorpusSource::Synthetic {
            world: WorldSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub rounds: usize,
    pub ks: Vec<usize>,
    pub alpha: f64,
    pub seeds: Vec<u64>,
    pub corpus: CorpusSource,
    pub trials: usize,
    /// Sessions per seed and trial. Dataset runs use every pair when unset.
    pub sessions: Option<usize>,
    /// Target attributes named in a synthetic query.
    pub query_attributes: usize,
    /// Candidate list size per round.
    pub k: usize,
    /// Fraction of rounds answered about a random distractor video.
    pub noise: f64,
    pub parallelism: Option<usize>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            ks: vec![1, 5, 10],
            alpha: RefinementParams::default().alpha,
            seeds: vec![0],
            corpus: CorpusSource::default(),
            trials: 1,
            sessions: None,
            query_attributes: 2,
            k: 10,
            noise: 0.0,
            parallelism: None,
        }
    }
}

const DEFAULT_SYNTHETIC_SESSIONS: usize = 200;

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let invalid = |m: &str| Err(EvalError::InvalidConfig(m.to_string()));
        if self.ks.is_empty() || self.ks.contains(&0) {
            return invalid("ks must be non-empty and positive");
        }
        if self.ks.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("ks must be strictly ascending");
        }
        if self.trials == 0 {
            return invalid("trials must be at least 1");
        }
        if self.seeds.is_empty() {
            return invalid("at least one seed is required");
        }
        if self.k == 0 {
            return invalid("k must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return invalid("noise must lie in [0, 1]");
        }
        if self.parallelism == Some(0) {
            return invalid("parallelism must be positive");
        }
        RefinementParams::new(self.alpha).map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    fn session_config(&self) -> SessionConfig {
        SessionConfig {
            k: self.k,
            max_rounds: self.rounds,
            params: RefinementParams {
                alpha: self.alpha,
                ..RefinementParams::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub recall_at: BTreeMap<usize, f64>,
    pub mean_rank: f64,
    pub median_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFailure {
    pub session_id: String,
    pub seed: u64,
    pub completed_rounds: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub per_round: Vec<RoundMetrics>,
    pub completed: usize,
    pub failed: usize,
    pub failures: Vec<SessionFailure>,
    pub trajectories: Vec<Trajectory>,
}

impl BenchmarkReport {
    /// Aggregates finished sessions. Failed sessions are counted, not scored.
    pub fn from_trajectories(
        config: BenchmarkConfig,
        trajectories: Vec<Trajectory>,
        failures: Vec<SessionFailure>,
    ) -> Result<Self, EvalError> {
        let mut per_round = Vec::new();
        if !trajectories.is_empty() {
            for round in 0..=config.rounds {
                let recall_at = config
                    .ks
                    .iter()
                    .map(|&k| Ok((k, recall_at_k(&trajectories, k, round)?)))
                    .collect::<Result<_, EvalError>>()?;
                per_round.push(RoundMetrics {
                    round,
                    recall_at,
                    mean_rank: mean_rank(&trajectories, round)?,
                    median_rank: median_rank(&trajectories, round)?,
                });
            }
        }
        Ok(Self {
            config,
            completed: trajectories.len(),
            failed: failures.len(),
            failures,
            per_round,
            trajectories,
        })
    }

    pub fn mean_ranks(&self) -> Vec<f64> {
        self.per_round.iter().map(|r| r.mean_rank).collect()
    }
}

/// Builds the agents and index for a synthetic world.
pub fn synthetic_setup(spec: &WorldSpec) -> Result<(AgentBackend, VideoIndex), EvalError> {
    let world = synthetic_world(spec)?;
    let index = VideoIndex::from_records(world.corpus)?;
    Ok((world.backend, index))
}

struct Job<'a> {
    session_id: String,
    seed: u64,
    query_text: String,
    target: &'a VideoRecord,
    in_mind: Vec<&'a VideoRecord>,
}

fn session_rng(seed: u64, trial: usize, session: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trial as u64) << 32) | session as u64);
    rng
}

/// Per-round video in mind: the target, or with probability `noise` a
/// uniformly drawn other video.
fn answer_schedule<'a>(
    rng: &mut ChaCha8Rng,
    records: &'a [VideoRecord],
    target: &'a VideoRecord,
    rounds: usize,
    noise: f64,
) -> Vec<&'a VideoRecord> {
    (0..rounds)
        .map(|_| {
            let corrupt = rng.random::<f64>() < noise;
            let pick = rng.random_range(0..records.len());
            if corrupt && records.len() > 1 {
                let pick = if records[pick].id == target.id {
                    (pick + 1) % records.len()
                } else {
                    pick
                };
                &records[pick]
            } else {
                target
            }
        })
        .collect()
}

fn build_jobs<'a>(config: &BenchmarkConfig, index: &'a VideoIndex) -> Result<Vec<Job<'a>>, EvalError> {
    let records = index.records();
    if records.is_empty() {
        return Err(EvalError::NoTrajectories);
    }
    let mut jobs = Vec::new();
    for &seed in &config.seeds {
        let pairs: Vec<(String, &VideoRecord)> = match &config.corpus {
            CorpusSource::Synthetic { .. } => {
                let n = config.sessions.unwrap_or(DEFAULT_SYNTHETIC_SESSIONS);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n)
                    .map(|_| {
                        let target = &records[rng.random_range(0..records.len())];
                        (partial_query(&target.metadata, config.query_attributes, &mut rng), target)
                    })
                    .collect()
            }
            CorpusSource::Dataset { dataset, .. } => {
                let mut pairs: Vec<(String, &VideoRecord)> = load_dataset(dataset, seed, index)?
                    .into_iter()
                    .map(|p| {
                        let target = index.get(&p.target.id).expect("pair resolved against index");
                        (p.query_text, target)
                    })
                    .collect();
                if let Some(n) = config.sessions {
                    pairs.truncate(n);
                }
                pairs
            }
        };
        for trial in 0..config.trials {
            for (session, (query_text, target)) in pairs.iter().enumerate() {
                let mut rng = session_rng(seed, trial, session);
                jobs.push(Job {
                    session_id: format!("s{seed}-t{trial}-{session:05}"),
                    seed,
                    query_text: query_text.clone(),
                    target,
                    in_mind: answer_schedule(&mut rng, records, target, config.rounds, config.noise),
                });
            }
        }
    }
    Ok(jobs)
}

/// Runs one automatic session per query, concurrently, and aggregates
/// per-round metrics.
pub fn run_benchmark(
    config: &BenchmarkConfig,
    backend: &AgentBackend,
    index: &VideoIndex,
) -> Result<BenchmarkReport, EvalError> {
    config.validate()?;
    let jobs = build_jobs(config, index)?;
    let session_config = config.session_config();
    let run = || {
        jobs.par_iter()
            .map(|job| {
                run_auto_with(
                    job.session_id.clone(),
                    &job.query_text,
                    &job.target.id,
                    backend,
                    index,
                    &session_config,
                    |round| job.in_mind[round - 1],
                )
                .map(|s| Trajectory {
                    session_id: job.session_id.clone(),
                    query_text: job.query_text.clone(),
                    target_id: job.target.id.clone(),
                    seed: job.seed,
                    ranks: s.target_ranks().expect("target set for automatic runs"),
                })
                .map_err(|partial| SessionFailure {
                    session_id: job.session_id.clone(),
                    seed: job.seed,
                    completed_rounds: partial.session.as_ref().map_or(0, |s| s.rounds.len()),
                    error: partial.error.to_string(),
                })
            })
            .collect::<Vec<_>>()
    };
    let results = match config.parallelism {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| EvalError::InvalidConfig(e.to_string()))?
            .install(run),
        None => run(),
    };
    let (mut trajectories, mut failures) = (Vec::new(), Vec::new());
    for r in results {
        match r {
            Ok(t) => trajectories.push(t),
            Err(f) => failures.push(f),
        }
    }
    BenchmarkReport::from_trajectories(config.clone(), trajectories, failures)
}

/// Plain-text table with one row per round; recall in percent.
pub fn render_table(report: &BenchmarkReport) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<7}", "Round");
    for k in &report.config.ks {
        let _ = write!(out, "{:>9}", format!("R@{k}"));
    }
    let _ = writeln!(out, "{:>11}{:>13}", "Mean rank", "Median rank");
    for r in &report.per_round {
        let _ = write!(out, "{:<7}", r.round);
        for v in r.recall_at.values() {
            let _ = write!(out, "{:>9.2}", v * 100.0);
        }
        let _ = writeln!(out, "{:>11.2}{:>13.1}", r.mean_rank, r.median_rank);
    }
    let _ = writeln!(
        out,
        "sessions: {} completed, {} failed",
        report.completed, report.failed
    );
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Property assertions used by `bench --check`.
pub fn check_report(report: &BenchmarkReport) -> Vec<PropertyCheck> {
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(PropertyCheck {
            name: name.into(),
            passed,
            detail,
        })
    };
    push(
        "sessions completed",
        report.completed > 0,
        format!("{} completed, {} failed", report.completed, report.failed),
    );
    let in_range = report
        .per_round
        .iter()
        .flat_map(|r| r.recall_at.values())
        .all(|v| (0.0..=1.0).contains(v));
    push("recall within [0, 1]", in_range, String::new());
    let monotone = report.per_round.iter().all(|r| {
        r.recall_at
            .values()
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[0] <= w[1])
    });
    push("recall monotone in k", monotone, String::new());
    let means = report.mean_ranks();
    if let (Some(first), Some(last)) = (means.first(), means.last()) {
        push(
            "final mean rank at most round 0",
            last <= first,
            format!("round 0 {first:.2}, final {last:.2}"),
        );
    }
    if means.len() > 1 {
        let transitions = means.len() - 1;
        let non_increasing = means.windows(2).filter(|w| w[1] <= w[0]).count();
        push(
            "mean rank non-increasing across rounds",
            non_increasing + 1 >= transitions,
            format!("{non_increasing} of {transitions} transitions"),
        );
    }
    checks
}
