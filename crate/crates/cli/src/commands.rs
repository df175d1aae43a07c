//! The `vidnav` subcommands.

use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vidnav_core::agents::config::BackendConfig;
use vidnav_core::agents::synthetic::{partial_query, synthetic_world, WorldSpec};
use vidnav_core::embedding::RefinementParams;
use vidnav_core::eval::{
    alpha_ablation, check_report, render_table, run_benchmark, synthetic_setup, BenchmarkConfig,
    CorpusSource, DatasetLine,
};
use vidnav_core::index::{read_corpus, CorpusLine};
use vidnav_core::navigation::{new_session_id, replay, run_auto_with, Answer};
use vidnav_core::{AgentBackend, Session, SessionConfig, VideoIndex};

use crate::api::{candidates, ApiError, Candidate, ErrorCode, RoundView};
use crate::server::{self, AppState, CorsOrigins};

#[derive(Debug, Parser)]
#[command(name = "vidnav", version, about = "Interactive text-to-video retrieval")]
pub struct Cli {
    /// Machine-readable output: JSON on stdout, errors as JSON on stderr.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or inspect index files.
    #[command(subcommand)]
    Index(IndexCommand),
    /// One-shot retrieval for a query.
    Search(SearchArgs),
    /// Run one session, answering in the terminal or with the agents.
    Navigate(NavigateArgs),
    /// Agent-driven sessions for every pair in a dataset.
    Auto(AutoArgs),
    /// Run a benchmark configuration and report per-round metrics.
    Bench(BenchArgs),
    /// Serve the HTTP session API.
    Serve(ServeArgs),
    /// Recompute an exported session and check it matches.
    Replay(ReplayArgs),
    /// Write a synthetic world: corpus, index, backend, dataset and bench config.
    Synth(SynthArgs),
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    Build {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Encode records that carry `embed_text` instead of an embedding.
        #[arg(long)]
        encode: bool,
        /// Backend configuration, required with --encode.
        #[arg(long)]
        backend: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    #[arg(long, default_value_t = 5)]
    pub rounds: usize,
}

impl SessionArgs {
    fn config(&self) -> SessionConfig {
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

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub backend: PathBuf,
    #[arg(long)]
    pub query: String,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct NavigateArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub backend: PathBuf,
    #[arg(long)]
    pub query: String,
    /// Answer each question from stdin.
    #[arg(long, conflicts_with = "target")]
    pub interactive: bool,
    /// Let the agents answer about this video instead.
    #[arg(long, required_unless_present = "interactive")]
    pub target: Option<String>,
    #[command(flatten)]
    pub session: SessionArgs,
    #[arg(long)]
    pub session_id: Option<String>,
    /// Write the session export here instead of stdout.
    #[arg(long)]
    pub export: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AutoArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub backend: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Trajectories as JSON lines; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Exit non-zero when a report property fails.
    #[arg(long)]
    pub check: bool,
    /// Write the full report JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Compare these weights on matched seeds instead of a single run.
    #[arg(long, value_delimiter = ',')]
    pub ablation: Option<Vec<f64>>,
    /// Answer corruption rate for --ablation.
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub backend: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Write every session to <dir>/<id>.json and reload them at startup.
    #[arg(long)]
    pub persist_dir: Option<PathBuf>,
    /// Browser origin allowed by CORS; repeat for several. Any origin when omitted.
    #[arg(long = "cors-origin")]
    pub cors_origins: Vec<String>,
    #[command(flatten)]
    pub session: SessionArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub backend: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub videos: usize,
    #[arg(long, default_value_t = 8)]
    pub attributes: usize,
    #[arg(long, default_value_t = 4)]
    pub values: usize,
    #[arg(long, default_value_t = 64)]
    pub dimension: usize,
    #[arg(long, default_value_t = 4)]
    pub frames: usize,
    /// Candidate queries written per video in dataset.jsonl.
    #[arg(long, default_value_t = 3)]
    pub captions_per_video: usize,
    /// Attributes named in each candidate query.
    #[arg(long, default_value_t = 2)]
    pub query_attributes: usize,
}

fn at_path(path: &Path, e: impl Into<ApiError>) -> ApiError {
    let mut e = e.into();
    e.message = format!("{}: {}", path.display(), e.message);
    e
}

pub fn load_backend(path: &Path) -> Result<AgentBackend, ApiError> {
    let config = BackendConfig::load(path).map_err(|e| at_path(path, e))?;
    Ok(config.build()?)
}

pub fn load_index(path: &Path) -> Result<VideoIndex, ApiError> {
    VideoIndex::load(path).map_err(|e| at_path(path, e))
}

fn write_json<T: serde::Serialize>(out: &mut impl Write, value: &T) -> Result<(), ApiError> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| ApiError::internal(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn create_file(path: &Path) -> Result<BufWriter<File>, ApiError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn print_candidates(out: &mut impl Write, list: &[Candidate]) -> std::io::Result<()> {
    for c in list {
        writeln!(out, "{:>4}  {:<12} {:>8.5}  {}", c.rank, c.id, c.score, c.caption)?;
    }
    Ok(())
}

/// Runs a parsed command line, writing normal output to `out`.
pub fn run(cli: Cli, out: &mut impl Write) -> Result<(), ApiError> {
    let json = cli.json;
    match cli.command {
        Command::Index(IndexCommand::Build {
            input,
            out: path,
            encode,
            backend,
        }) => {
            let backend = match (encode, backend) {
                (true, Some(b)) => Some(load_backend(&b)?),
                (true, None) => return Err(ApiError::bad_request("--encode needs --backend")),
                (false, _) => None,
            };
            let records = read_corpus(&input, backend.as_ref().map(|b| b.encoder.as_ref()))?;
            let index = VideoIndex::from_records(records)?;
            index.save(&path)?;
            writeln!(
                out,
                "indexed {} videos (dimension {}) into {}",
                index.len(),
                index.dimension().unwrap_or(0),
                path.display()
            )?;
        }
        Command::Search(args) => {
            let index = load_index(&args.index)?;
            let backend = load_backend(&args.backend)?;
            let query = backend.encode(&args.query)?;
            let list = candidates(&index.top_k(&query, args.k)?, &index);
            if json {
                write_json(out, &list)?;
            } else {
                print_candidates(out, &list)?;
            }
        }
        Command::Navigate(args) => navigate(args, json, out)?,
        Command::Auto(args) => auto(args, json, out)?,
        Command::Bench(args) => bench(args, json, out)?,
        Command::Serve(args) => serve(args)?,
        Command::Replay(args) => {
            let index = load_index(&args.index)?;
            let backend = load_backend(&args.backend)?;
            let text = std::fs::read_to_string(&args.session)?;
            let export = Session::from_json(&text)
                .map_err(|e| ApiError::bad_request(format!("{}: {e}", args.session.display())))?;
            let rebuilt = replay(&export, &backend, &index)?;
            if json {
                write_json(
                    out,
                    &serde_json::json!({
                        "session_id": rebuilt.session_id,
                        "rounds": rebuilt.rounds.len(),
                        "divergence": null,
                    }),
                )?;
            } else {
                writeln!(
                    out,
                    "replay ok: session {} reproduced over {} rounds",
                    rebuilt.session_id,
                    rebuilt.rounds.len()
                )?;
            }
        }
        Command::Synth(args) => synth(args, out)?,
    }
    Ok(())
}

fn navigate(args: NavigateArgs, json: bool, out: &mut impl Write) -> Result<(), ApiError> {
    let index = load_index(&args.index)?;
    let backend = load_backend(&args.backend)?;
    let config = args.session.config();
    let session_id = args.session_id.clone().unwrap_or_else(new_session_id);

    let session = if args.interactive {
        let stdin = std::io::stdin();
        interactive(session_id, &args.query, &backend, &index, &config, &mut stdin.lock(), out)?
    } else {
        let target_id = args.target.as_deref().expect("clap requires --target");
        let target = index
            .get(target_id)
            .ok_or_else(|| ApiError::not_found(format!("video {target_id:?} is not in the index")))?;
        match run_auto_with(session_id, &args.query, target_id, &backend, &index, &config, |_| target) {
            Ok(s) => s,
            Err(partial) => {
                if let (Some(s), Some(path)) = (&partial.session, &args.export) {
                    std::fs::write(path, s.to_json())?;
                }
                let round = partial.session.as_ref().map(|s| s.rounds.len() + 1);
                return Err(ApiError::from(partial.error).with_round(round));
            }
        }
    };

    match &args.export {
        Some(path) => {
            std::fs::write(path, session.to_json())?;
            if !json {
                if let Some(ranks) = session.target_ranks() {
                    let ranks: Vec<String> = ranks.iter().map(usize::to_string).collect();
                    writeln!(out, "target rank by round: {}", ranks.join(" -> "))?;
                }
                writeln!(out, "session written to {}", path.display())?;
            }
        }
        None => writeln!(out, "{}", session.to_json())?,
    }
    Ok(())
}

/// Terminal question/answer loop. An empty line or end of input stops early.
pub fn interactive(
    session_id: String,
    query: &str,
    backend: &AgentBackend,
    index: &VideoIndex,
    config: &SessionConfig,
    input: &mut impl BufRead,
    out: &mut impl Write,
) -> Result<Session, ApiError> {
    let mut session = Session::start_with_id(session_id, query, None, backend, index, config)?;
    writeln!(out, "Round 0 results:")?;
    print_candidates(out, &candidates(&session.round0, index))?;
    while session.rounds.len() < session.max_rounds {
        let pending = session.next_question(backend, index)?.clone();
        writeln!(out, "\nRound {} question: {}", pending.round, pending.question)?;
        write!(out, "answer> ")?;
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 || line.trim().is_empty() {
            writeln!(out)?;
            break;
        }
        let record = session
            .submit_answer(Answer::Text(line.trim()), backend, index)
            .map_err(|e| ApiError::from(e).with_round(Some(pending.round)))?;
        let view = RoundView::new(record, index);
        writeln!(out, "Round {} results:", view.round_index)?;
        print_candidates(out, &view.ranking)?;
    }
    Ok(session)
}

fn auto(args: AutoArgs, json: bool, out: &mut impl Write) -> Result<(), ApiError> {
    let index = load_index(&args.index)?;
    let backend = load_backend(&args.backend)?;
    let config = BenchmarkConfig {
        rounds: args.rounds,
        alpha: args.alpha,
        k: args.k,
        seeds: vec![args.seed],
        corpus: CorpusSource::Dataset {
            dataset: args.dataset.clone(),
            index: Some(args.index.clone()),
            backend: Some(args.backend.clone()),
        },
        parallelism: args.parallelism,
        ..BenchmarkConfig::default()
    };
    let report = run_benchmark(&config, &backend, &index)?;
    let mut lines = String::new();
    for t in &report.trajectories {
        lines.push_str(&serde_json::to_string(t).map_err(|e| ApiError::internal(e.to_string()))?);
        lines.push('\n');
    }
    match &args.out {
        Some(path) => {
            std::fs::write(path, lines)?;
            if json {
                write_json(out, &report.per_round)?;
            } else {
                write!(out, "{}", render_table(&report))?;
            }
        }
        None => write!(out, "{lines}")?,
    }
    for f in &report.failures {
        eprintln!("session {} failed after {} rounds: {}", f.session_id, f.completed_rounds, f.error);
    }
    Ok(())
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn bench(args: BenchArgs, json: bool, out: &mut impl Write) -> Result<(), ApiError> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut config: BenchmarkConfig = serde_json::from_str(&text)
        .map_err(|e| ApiError::bad_request(format!("{}: {e}", args.config.display())))?;
    let base = args.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let (backend, index) = match &mut config.corpus {
        CorpusSource::Synthetic { world } => synthetic_setup(world)?,
        CorpusSource::Dataset {
            dataset,
            index,
            backend,
        } => {
            *dataset = resolve(&base, dataset);
            let index_path = index
                .as_ref()
                .ok_or_else(|| ApiError::bad_request("dataset benchmarks need `index`"))?;
            let backend_path = backend
                .as_ref()
                .ok_or_else(|| ApiError::bad_request("dataset benchmarks need `backend`"))?;
            (
                load_backend(&resolve(&base, backend_path))?,
                load_index(&resolve(&base, index_path))?,
            )
        }
    };

    if let Some(alphas) = &args.ablation {
        let report = alpha_ablation(&config, alphas, args.noise, &backend, &index)?;
        if let Some(path) = &args.out {
            write_json(&mut create_file(path)?, &report)?;
        }
        if json {
            write_json(out, &report)?;
        } else {
            writeln!(out, "noise {}", report.noise)?;
            for arm in &report.arms {
                let curve: Vec<String> = arm.mean_ranks.iter().map(|m| format!("{m:.2}")).collect();
                writeln!(
                    out,
                    "alpha {:<5} mean rank by round: {}  (best round {})",
                    arm.alpha,
                    curve.join(" "),
                    arm.best_round
                )?;
            }
        }
        return Ok(());
    }

    let report = run_benchmark(&config, &backend, &index)?;
    if let Some(path) = &args.out {
        write_json(&mut create_file(path)?, &report)?;
    }
    if json {
        write_json(out, &report.per_round)?;
    } else {
        write!(out, "{}", render_table(&report))?;
    }
    if args.check {
        let checks = check_report(&report);
        for c in &checks {
            let mark = if c.passed { "PASS" } else { "FAIL" };
            writeln!(out, "{mark} {} {}", c.name, c.detail)?;
        }
        let failed = checks.iter().filter(|c| !c.passed).count();
        if failed > 0 {
            return Err(ApiError::new(
                ErrorCode::Internal,
                format!("{failed} of {} property checks failed", checks.len()),
            ));
        }
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), ApiError> {
    let index = Arc::new(load_index(&args.index)?);
    // Built before the async runtime exists: blocking HTTP clients refuse to
    // be created inside one.
    let backend = Arc::new(load_backend(&args.backend)?);
    let mut state = AppState::new(index.clone(), backend, args.session.config());
    if let Some(dir) = &args.persist_dir {
        state = state.with_persistence(dir)?;
    }
    let router = server::router(state, &CorsOrigins(args.cors_origins))?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.addr).await?;
        tracing::info!(addr = %listener.local_addr()?, videos = index.len(), "serving");
        server::serve(listener, router, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })?;
    Ok(())
}

fn synth(args: SynthArgs, out: &mut impl Write) -> Result<(), ApiError> {
    let spec = WorldSpec {
        seed: args.seed,
        n_videos: args.videos,
        n_attributes: args.attributes,
        values_per_attribute: args.values,
        dimension: args.dimension,
        frames_per_video: args.frames,
        ..WorldSpec::default()
    };
    let world = synthetic_world(&spec)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let dir = &args.out_dir;

    let mut corpus = create_file(&dir.join("corpus.jsonl"))?;
    let mut dataset = create_file(&dir.join("dataset.jsonl"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let line_err = |e: serde_json::Error| ApiError::internal(e.to_string());
    for record in &world.corpus {
        let meta = &record.metadata;
        let line = CorpusLine {
            id: record.id.clone(),
            embedding: None,
            embed_text: Some(meta.caption.clone()),
            caption: meta.caption.clone(),
            frame_captions: meta.frame_captions.clone(),
            attributes: meta.attributes.clone(),
            source_uri: None,
        };
        writeln!(corpus, "{}", serde_json::to_string(&line).map_err(line_err)?)?;
        let captions = (0..args.captions_per_video)
            .map(|_| partial_query(meta, args.query_attributes, &mut rng))
            .collect();
        let pair = DatasetLine {
            id: record.id.clone(),
            captions,
        };
        writeln!(dataset, "{}", serde_json::to_string(&pair).map_err(line_err)?)?;
    }
    corpus.flush()?;
    dataset.flush()?;

    VideoIndex::from_records(world.corpus.clone())?.save(dir.join("index.mrln"))?;
    write_json(&mut create_file(&dir.join("backend.json"))?, &BackendConfig::synthetic(spec.clone()))?;
    let bench = BenchmarkConfig {
        corpus: CorpusSource::Synthetic { world: spec },
        query_attributes: args.query_attributes,
        ..BenchmarkConfig::default()
    };
    write_json(&mut create_file(&dir.join("bench.json"))?, &bench)?;
    writeln!(
        out,
        "wrote {} videos to {} (corpus.jsonl, index.mrln, dataset.jsonl, backend.json, bench.json)",
        world.corpus.len(),
        dir.display()
    )?;
    Ok(())
}
