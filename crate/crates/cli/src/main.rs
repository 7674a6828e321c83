use std::io::Write as _;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use sysrank::corpus::{self, Corpus, Task};
use sysrank::metrics::MetricId;
use sysrank::results::{self, evaluate, export_table, EvalOptions, EvalSystem, ExportFormat};
use sysrank::runner::{self, discover_systems, RunManifest, Runner, RunnerConfig, RunnerError, StagedInput, MANIFEST_FILE, PREDICTIONS_NAME};
use sysrank::significance::ArtConfig;
use sysrank_server::{ServerConfig, ServerError, DEFAULT_PORT};

/// Run dockerized MT/OCR systems, score them and compare them.
#[derive(Parser)]
#[command(name = "sysrank", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and run every system under a directory against a test set.
    Run(RunArgs),
    /// Score hypotheses, cluster systems and write a results file.
    Eval(EvalArgs),
    /// Serve a results file to the dashboard.
    Serve(ServeArgs),
    /// Print a results table as CSV, LaTeX, JSON or HTML.
    Export(ExportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Directory with one subdirectory (holding a Dockerfile) per system.
    #[arg(long)]
    systems: PathBuf,
    #[arg(long, value_parser = parse_task)]
    task: Task,
    /// Source side of the test set: a text/XML file (MT) or an image directory (OCR).
    #[arg(long)]
    source: PathBuf,
    /// Output directory for predictions, logs and the timing manifest.
    #[arg(long)]
    out: PathBuf,
    /// Per-system timeout in seconds.
    #[arg(long, default_value_t = 3600.0)]
    timeout: f64,
    /// Allow network access inside the containers.
    #[arg(long)]
    network: bool,
    /// Systems to mark as baselines.
    #[arg(long, value_delimiter = ',')]
    baselines: Vec<String>,
    /// Keep the built images instead of removing them afterwards.
    #[arg(long)]
    keep_images: bool,
    /// Docker client binary.
    #[arg(long, env = runner::DOCKER_ENV, default_value = "docker")]
    docker: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_parser = parse_task)]
    task: Task,
    /// Reference files (MT, aggregated in order) or transcript directories (OCR).
    #[arg(long, required = true, num_args = 1..)]
    refs: Vec<PathBuf>,
    /// Output of `run`, or a directory of bare hypothesis files
    /// (MT: one file per system; OCR: one directory per system).
    #[arg(long, conflicts_with = "hyp")]
    predictions: Option<PathBuf>,
    /// Hypotheses of one system, as NAME=PATH or PATH (named after the file stem).
    #[arg(long)]
    hyp: Vec<String>,
    /// Comma-separated metrics [default: bleu,ter,chrf for MT; wer,bwer for OCR].
    #[arg(long, value_delimiter = ',', value_parser = parse_metric)]
    metrics: Vec<MetricId>,
    /// Metric used for sorting [default: first of --metrics].
    #[arg(long, value_parser = parse_metric)]
    main: Option<MetricId>,
    #[arg(long, default_value_t = ArtConfig::default().trials)]
    trials: u32,
    #[arg(long, default_value_t = ArtConfig::default().alpha)]
    alpha: f64,
    #[arg(long, default_value_t = ArtConfig::default().seed)]
    seed: u64,
    /// Systems to mark as baselines.
    #[arg(long, value_delimiter = ',')]
    baselines: Vec<String>,
    /// Leave per-segment scores out of the results file.
    #[arg(long)]
    no_segment_scores: bool,
    /// Results file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    results: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PORT)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
}

#[derive(Args)]
struct ExportArgs {
    results: PathBuf,
    #[arg(long, value_parser = parse_format)]
    format: ExportFormat,
    /// Columns to include, in order [default: all metrics of the file].
    #[arg(long, value_delimiter = ',', value_parser = parse_metric)]
    metrics: Vec<MetricId>,
    /// Write to a file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
}

fn parse_metric(s: &str) -> Result<MetricId, String> {
    s.trim().parse().map_err(|e: sysrank::MetricError| e.to_string())
}

fn parse_format(s: &str) -> Result<ExportFormat, String> {
    s.parse().map_err(|e: results::ResultsError| e.to_string())
}

/// Errors caused by the machine rather than the invocation (exit code 2).
#[derive(Debug)]
struct EnvironmentError(anyhow::Error);

impl std::fmt::Display for EnvironmentError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for EnvironmentError {}

fn is_environment_error(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<EnvironmentError>()
            || matches!(
                e.downcast_ref::<RunnerError>(),
                Some(RunnerError::DockerUnavailable(_))
            )
            || matches!(
                e.downcast_ref::<ServerError>(),
                Some(ServerError::Bind { .. } | ServerError::Io(_))
            )
    })
}

/// The error chain, leaving out causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn default_metrics(task: Task) -> Vec<MetricId> {
    match task {
        Task::Mt => vec![MetricId::Bleu, MetricId::Ter, MetricId::Chrf],
        Task::Ocr => vec![MetricId::Wer, MetricId::Bwer],
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    if !(args.timeout.is_finite() && args.timeout > 0.0) {
        bail!("--timeout must be a positive number of seconds");
    }
    let entries = discover_systems(&args.systems, &args.baselines)?;
    let mut config = RunnerConfig::new(&args.out);
    config.docker = args.docker;
    config.timeout = Duration::from_secs_f64(args.timeout);
    config.network = args.network;
    let runner = Runner::new(config);
    let input = StagedInput {
        task: args.task,
        path: args.source,
    };
    match args.task {
        Task::Mt if !input.path.is_file() => bail!("source {} is not a file", input.path.display()),
        Task::Ocr if !input.path.is_dir() => bail!("source {} is not a directory", input.path.display()),
        _ => {}
    }

    let (records, tags) = runner.run_all(&entries, &input)?;
    if !args.keep_images {
        runner.cleanup(&tags);
    }
    let mut failed = 0;
    for r in &records {
        match &r.error {
            None => println!("{}\tok\t{:.2} s", r.system_name, r.wall_time_seconds),
            Some(e) => {
                failed += 1;
                println!("{}\tfailed\t{}", r.system_name, e.lines().next().unwrap_or_default());
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} systems failed (see {})", records.len(), args.out.join("logs").display());
    }
    Ok(())
}

fn load_references(task: Task, paths: &[PathBuf]) -> Result<Corpus> {
    let mut parts = Vec::with_capacity(paths.len());
    for p in paths {
        let part = match task {
            Task::Mt => corpus::load_mt_file(p),
            Task::Ocr => corpus::load_ocr_references(p),
        }
        .with_context(|| format!("loading references from {}", p.display()))?;
        parts.push(part);
    }
    Ok(corpus::aggregate_corpora(&parts)?)
}

struct HypSource {
    name: String,
    path: PathBuf,
    wall_time: Option<f64>,
    is_baseline: bool,
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn hypothesis_sources(args: &EvalArgs) -> Result<Vec<HypSource>> {
    let mut sources = Vec::new();
    if let Some(dir) = &args.predictions {
        let manifest_path = dir.join(MANIFEST_FILE);
        if manifest_path.is_file() {
            let manifest = RunManifest::read(&manifest_path)?;
            for (name, entry) in manifest.systems {
                if let Some(e) = entry.error {
                    warn!("skipping {name}: {e}");
                    continue;
                }
                sources.push(HypSource {
                    path: dir.join(PREDICTIONS_NAME).join(&name).join(PREDICTIONS_NAME),
                    name,
                    wall_time: entry.wall_time_seconds,
                    is_baseline: entry.is_baseline,
                });
            }
        } else {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
                .with_context(|| format!("reading {}", dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')))
                .filter(|p| match args.task {
                    Task::Mt => p.is_file(),
                    Task::Ocr => p.is_dir(),
                })
                .collect();
            entries.sort();
            for path in entries {
                let name = match args.task {
                    Task::Mt => file_stem(&path),
                    Task::Ocr => path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                };
                sources.push(HypSource {
                    name,
                    path,
                    wall_time: None,
                    is_baseline: false,
                });
            }
        }
    }
    for spec in &args.hyp {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) if !n.is_empty() => (n.to_string(), PathBuf::from(p)),
            _ => (file_stem(Path::new(spec)), PathBuf::from(spec)),
        };
        sources.push(HypSource {
            name,
            path,
            wall_time: None,
            is_baseline: false,
        });
    }
    if sources.is_empty() {
        bail!("no hypotheses given (use --predictions or --hyp)");
    }
    for b in &args.baselines {
        let s = sources
            .iter_mut()
            .find(|s| &s.name == b)
            .ok_or_else(|| anyhow!("baseline {b:?} is not among the evaluated systems"))?;
        s.is_baseline = true;
    }
    Ok(sources)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let references = load_references(args.task, &args.refs)?;
    let mut systems = Vec::new();
    for src in hypothesis_sources(&args)? {
        let mut hyps = corpus::load_hypotheses(&src.path, args.task, &references, &src.name)?;
        hyps.wall_time_seconds = src.wall_time;
        systems.push(EvalSystem {
            hypotheses: hyps,
            is_baseline: src.is_baseline,
        });
    }
    let metrics = if args.metrics.is_empty() {
        default_metrics(args.task)
    } else {
        args.metrics.clone()
    };
    let options = EvalOptions {
        metrics,
        main_metric: args.main,
        art: ArtConfig {
            trials: args.trials,
            alpha: args.alpha,
            seed: args.seed,
        },
        segment_scores: !args.no_segment_scores,
    };
    info!("scoring {} systems on {} segments", systems.len(), references.len());
    let r = evaluate(args.task, &references, &systems, &options)?;
    results::write_results(&r, &args.out)?;
    eprintln!("wrote {} ({} systems)", args.out.display(), r.systems.len());
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| EnvironmentError(e.into()))?;
    runtime.block_on(async {
        let config = ServerConfig {
            results_path: args.results,
            port: args.port,
            bind_address: args.bind,
        };
        let (listener, app) = sysrank_server::bind(&config).await?;
        let addr = listener.local_addr().map_err(ServerError::Io)?;
        println!("listening on http://{addr}");
        std::io::stdout().flush().ok();
        sysrank_server::serve_until(listener, app, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    let r = results::read_results(&args.results)?;
    let bytes = export_table(&r, args.format, &args.metrics)?;
    match args.output {
        Some(path) => std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Export(a) => cmd_export(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(if is_environment_error(&e) { 2 } else { 1 })
        }
    }
}
