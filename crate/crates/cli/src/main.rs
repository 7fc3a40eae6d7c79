//! `logan`: analyze log dumps, serve the job API, run benchmarks.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

mod bench;

use clap::{Args, Parser, Subcommand};
use logan_core::config::{Loaded, SECTIONS};
use logan_core::pipeline::PipelineError;
use logan_core::{analyze, ConfigError, RunConfig};
use logan_jobsvc::{JobService, ServiceConfig};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "logan", version, about = "Template-aware log analytics", disable_version_flag = true)]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Analyze files or directories into a report bundle.
    Analyze(AnalyzeArgs),
    /// Run the job service.
    Serve(ServeArgs),
    /// Call-count and agreement experiments on synthetic corpora.
    #[command(subcommand)]
    Bench(bench::BenchCmd),
    /// Check a config file and print the effective values.
    ValidateConfig(ValidateArgs),
    Version,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML or JSON config. Defaults to ./logan.toml or ./logan.json if present.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one setting; repeatable. `--section.key value` is equivalent.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Bundle path [default: output.bundle, else bundle.json]
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write per-record labels as JSON lines.
    #[arg(long)]
    enriched: Option<PathBuf>,
    /// Diagnosis window width, e.g. 30s.
    #[arg(long)]
    granularity: Option<String>,
    /// Causal series interval, e.g. 60s.
    #[arg(long)]
    interval: Option<String>,
    #[arg(long)]
    max_lag: Option<String>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(short, long, default_value_t = 8080)]
    port: u16,
    /// [env: LOGAN_DATA_DIR]
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// [env: LOGAN_POOL_SIZE]
    #[arg(long)]
    pool_size: Option<usize>,
    /// [env: LOGAN_WEBHOOK_URL]
    #[arg(long)]
    webhook_url: Option<String>,
    /// Analysis config applied to every job.
    #[arg(short, long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    path: Option<PathBuf>,
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

/// Rewrites `--section.key value` and `--section.key=value` into `--set section.key=value`.
fn expand_dotted_flags(args: Vec<OsString>) -> Vec<OsString> {
    let mut out = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(s) = arg.to_str().and_then(|s| s.strip_prefix("--")).map(str::to_owned) else {
            out.push(arg);
            continue;
        };
        if s.is_empty() {
            out.push(arg);
            out.extend(it);
            break;
        }
        let (name, value) = match s.split_once('=') {
            Some((n, v)) => (n.to_owned(), Some(v.to_owned())),
            None => (s.clone(), None),
        };
        let dotted = name.split_once('.').is_some_and(|(sec, key)| SECTIONS.contains(&sec) && !key.is_empty());
        if !dotted {
            out.push(arg);
            continue;
        }
        let value = match value.or_else(|| it.next().map(|v| v.to_string_lossy().into_owned())) {
            Some(v) => v,
            None => {
                out.push(arg);
                continue;
            }
        };
        out.push("--set".into());
        out.push(format!("{name}={value}").into());
    }
    out
}

fn main() -> ExitCode {
    let args = expand_dotted_flags(std::env::args_os().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("LOGAN_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level)),
        )
        .with_writer(std::io::stderr)
        .init();

    let result = match cli.cmd {
        Cmd::Analyze(a) => run_analyze(a),
        Cmd::Serve(a) => run_serve(a),
        Cmd::Bench(b) => bench::run(b),
        Cmd::ValidateConfig(a) => run_validate(a),
        Cmd::Version => {
            println!("{} (bundle schema {})", logan_core::pipeline::GENERATOR, logan_core::reports::SCHEMA_VERSION);
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn default_config_file() -> Option<PathBuf> {
    ["logan.toml", "logan.json"].into_iter().map(PathBuf::from).find(|p| p.is_file())
}

fn load_config(file: Option<&Path>, overrides: &[String]) -> Result<Loaded, Failure> {
    let fallback = default_config_file();
    let loaded = RunConfig::load(file.or(fallback.as_deref()), std::env::vars(), overrides)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    Ok(loaded)
}

fn run_analyze(a: AnalyzeArgs) -> Result<(), Failure> {
    let mut overrides = a.cfg.set.clone();
    for (key, v) in [("reports.granularity", &a.granularity), ("causal.interval", &a.interval), ("causal.max_lag", &a.max_lag)] {
        if let Some(v) = v {
            overrides.push(format!("{key}={v}"));
        }
    }
    let mut config = load_config(a.cfg.config.as_deref(), &overrides)?.config;
    if a.enriched.is_some() {
        config.output.enriched = a.enriched;
    }
    let out = a.output.or_else(|| config.output.bundle.clone()).unwrap_or_else(|| "bundle.json".into());

    let analysis = analyze(&a.paths, &config).map_err(|e| match e {
        PipelineError::Config(c) => Failure::Usage(c.to_string()),
        e => Failure::Runtime(e.to_string()),
    })?;
    let b = &analysis.bundle;
    const SHOWN: usize = 20;
    for w in b.warnings.iter().take(SHOWN) {
        eprintln!("warning: {w}");
    }
    if b.warnings.len() > SHOWN {
        eprintln!("warning: ... {} more in the bundle", b.warnings.len() - SHOWN);
    }
    let json = b.to_canonical_json().map_err(|e| Failure::Runtime(e.to_string()))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(&out, json + "\n").map_err(|e| Failure::Runtime(format!("writing {}: {e}", out.display())))?;

    let c = &b.meta.counters;
    println!(
        "{} lines, {} templates, reduction {:.2}%, {} problematic, {} windows, {} causal edges -> {}",
        c.total_lines,
        c.templates,
        c.reduction * 100.0,
        c.problematic_records,
        c.diagnosis_windows,
        c.causal_edges,
        out.display()
    );
    Ok(())
}

fn run_validate(a: ValidateArgs) -> Result<(), Failure> {
    let loaded = load_config(a.path.as_deref(), &a.set)?;
    let text = serde_json::to_string_pretty(&loaded.config).expect("config serializes");
    println!("{text}");
    eprintln!("config valid, digest {}", loaded.config.digest());
    Ok(())
}

fn run_serve(a: ServeArgs) -> Result<(), Failure> {
    let mut cfg = ServiceConfig::from_env(std::env::vars()).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(d) = a.data_dir {
        cfg.data_dir = d;
    }
    if let Some(n) = a.pool_size {
        if n == 0 {
            return Err(Failure::Usage("--pool-size must be positive".into()));
        }
        cfg.pool_size = n;
    }
    if let Some(u) = a.webhook_url {
        cfg.webhook_url = Some(u);
    }
    if let Some(c) = a.config {
        RunConfig::load(Some(&c), std::iter::empty(), &[])?;
        cfg.config_file = Some(c);
    }
    let (svc, warnings) = JobService::open(cfg).map_err(|e| Failure::Runtime(e.to_string()))?;
    for w in warnings {
        eprintln!("warning: {w}");
    }

    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let addr = format!("{}:{}", a.host, a.port);
    let listener = rt
        .block_on(tokio::net::TcpListener::bind(&addr))
        .map_err(|e| Failure::Runtime(format!("cannot listen on {addr}: {e}")))?;
    let local = listener.local_addr().map_err(|e| Failure::Runtime(e.to_string()))?;
    let workers = svc.start();
    println!("listening on http://{local} (data {}, {} workers)", svc.config().data_dir.display(), svc.config().pool_size);
    use std::io::Write as _;
    let _ = std::io::stdout().flush();

    let served = rt.block_on(logan_jobsvc::http::serve(listener, svc, shutdown_signal()));
    eprintln!("shutting down; waiting for running jobs");
    workers.shutdown();
    served.map_err(|e| Failure::Runtime(e.to_string()))
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
