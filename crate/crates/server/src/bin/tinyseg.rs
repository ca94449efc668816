use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use tinyseg::batch::{expand_inputs, run_batch, BatchJob, MaskSettings};
use tinyseg::DetectorSpec;
use tinyseg_server::config::{default_workers, ServiceConfig, DEFAULT_MAX_UPLOAD_BYTES, DEFAULT_PORT};
use tracing_subscriber::EnvFilter;

/// Cosmic-ray segmentation toolkit.
#[derive(Parser)]
#[command(name = "tinyseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect, threshold and dilate each input, then write `<stem>_masked.fits`.
    Detect(DetectArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct DetectArgs {
    /// FITS or NPY files; glob patterns are expanded.
    #[arg(required = true)]
    inputs: Vec<String>,
    #[arg(short = 'o', long = "output-dir", value_name = "DIR")]
    output_dir: PathBuf,
    #[arg(long, default_value_t = 0.5, value_parser = parse_threshold)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    dilation: usize,
    /// `baseline[:window=N,scale=S]`, `precomputed[:path=FILE][,ext=NAME]` or `remote:URL[#timeout=SECS]`.
    #[arg(long, default_value = "baseline", value_parser = parse_detector)]
    detector: DetectorSpec,
    #[arg(long)]
    overwrite: bool,
    /// Files processed in parallel.
    #[arg(short = 'j', long, env = "WORKER_POOL_SIZE")]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "PORT", default_value_t = DEFAULT_PORT)]
    port: u16,
    #[arg(long, env = "HOST", default_value = "0.0.0.0")]
    host: String,
    #[arg(long, env = "MAX_UPLOAD_BYTES", default_value_t = DEFAULT_MAX_UPLOAD_BYTES)]
    max_upload_bytes: u64,
    #[arg(long, env = "SESSION_TTL_SECONDS", default_value_t = 86_400, value_parser = clap::value_parser!(u64).range(1..))]
    session_ttl_seconds: u64,
    #[arg(long, env = "DETECTOR", default_value = "baseline", value_parser = parse_detector)]
    detector: DetectorSpec,
    #[arg(long, env = "WORKER_POOL_SIZE")]
    workers: Option<usize>,
    /// Seconds an upload waits for a free detector worker.
    #[arg(long, env = "QUEUE_TIMEOUT_SECONDS", default_value_t = 60)]
    queue_timeout_seconds: u64,
    /// Parent directory for session files.
    #[arg(long, env = "DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Web UI assets served at `/`.
    #[arg(long, env = "STATIC_DIR")]
    static_dir: Option<PathBuf>,
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&t) {
        Ok(t)
    } else {
        Err(format!("{t} is outside [0, 1]"))
    }
}

fn parse_detector(s: &str) -> Result<DetectorSpec, String> {
    s.parse().map_err(|e: tinyseg::DetectError| e.to_string())
}

fn init_logging(default: &str) {
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn detect(args: DetectArgs) -> ExitCode {
    let inputs = match expand_inputs(&args.inputs) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&args.output_dir) {
        eprintln!("error: cannot create {}: {e}", args.output_dir.display());
        return ExitCode::from(2);
    }
    let job = BatchJob {
        inputs,
        output_dir: args.output_dir,
        settings: MaskSettings {
            threshold: args.threshold,
            dilation: args.dilation,
        },
        detector: args.detector,
        overwrite: args.overwrite,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or_else(default_workers).max(1))
        .build()
        .expect("thread pool");
    let reports = pool.install(|| run_batch(&job));
    let mut failed = 0;
    for r in &reports {
        if r.result.is_ok() {
            println!("{}", r.line());
        } else {
            failed += 1;
            eprintln!("{}", r.line());
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("{failed} of {} files failed", reports.len());
        ExitCode::from(1)
    }
}

fn serve(args: ServeArgs) -> ExitCode {
    let config = ServiceConfig {
        port: args.port,
        max_upload_bytes: args.max_upload_bytes,
        session_ttl: Duration::from_secs(args.session_ttl_seconds),
        detector: args.detector,
        worker_pool_size: args.workers.unwrap_or_else(default_workers).max(1),
        queue_timeout: Duration::from_secs(args.queue_timeout_seconds),
        data_dir: args.data_dir,
        static_dir: args.static_dir,
        gc_interval: None,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("tokio runtime");
    runtime.block_on(async move {
        let listener = match tokio::net::TcpListener::bind((args.host.as_str(), config.port)).await {
            Ok(l) => l,
            Err(e) => {
                tracing::error!("cannot bind {}:{}: {e}", args.host, config.port);
                return ExitCode::from(1);
            }
        };
        match listener.local_addr() {
            Ok(addr) => tracing::info!("listening on http://{addr}"),
            Err(e) => tracing::warn!("bound, but local address unknown: {e}"),
        }
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        };
        match tinyseg_server::serve(listener, config, shutdown).await {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                tracing::error!("server error: {e}");
                ExitCode::from(1)
            }
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Detect(args) => {
            init_logging("warn");
            detect(args)
        }
        Command::Serve(args) => {
            init_logging("info");
            serve(args)
        }
    }
}
