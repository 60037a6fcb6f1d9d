//! Example client for both call modes.
//!
//! Spins up the node in-process from the same launch configuration, then
//! issues one service call or action goal and prints the line-oriented
//! report. Exit codes: 0 success, 1 task error, 2 canceled, 3 timeout,
//! 4 node unreachable, 64 invocation error.

use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context as _;
use clap::{Parser, ValueEnum};

use florence2_node::adapter;
use florence2_node::client::{run_client, ClientInvocation, ClientMode};
use florence2_node::config::LaunchConfig;
use rograph::Context;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Service,
    Action,
}

#[derive(Parser, Debug)]
#[command(name = "florence2_client", about = "Service/action client for the Florence-2 node")]
struct Args {
    /// Call mode.
    #[arg(long, value_enum)]
    mode: Mode,
    /// Task token, e.g. "<OD>" or "<CAPTION>".
    #[arg(long)]
    task: String,
    /// Task-specific text input (grounding phrases etc.).
    #[arg(long, default_value = "")]
    text: String,
    /// PNG/JPEG image embedded into the request.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Ask the node to use its most recent subscribed image instead.
    #[arg(long, default_value_t = false)]
    use_latest: bool,
    /// Overall timeout in seconds.
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
    /// Action mode only: send a cancel request this many seconds after the
    /// goal is accepted.
    #[arg(long)]
    cancel_after: Option<f64>,
    /// Launch configuration for the embedded node.
    #[arg(long)]
    launch: Option<PathBuf>,
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "warn".into()),
        )
        .init();
    let args = Args::parse();

    let launch = match &args.launch {
        Some(path) => LaunchConfig::from_path(path)
            .with_context(|| format!("loading launch file {}", path.display()))?,
        None => LaunchConfig::default(),
    };
    let (config, registry) = launch.resolve()?;
    let node_name = config.node_name.clone();
    let ctx = Context::new();
    let node = adapter::bind_with_registry(&ctx, config, registry)
        .context("node startup failed")?;

    let invocation = ClientInvocation {
        mode: match args.mode {
            Mode::Service => ClientMode::Service,
            Mode::Action => ClientMode::Action,
        },
        task_token: args.task,
        text_input: args.text,
        image_path: args.image,
        use_latest_image: args.use_latest,
        timeout: Duration::from_secs_f64(args.timeout),
        cancel_after: args.cancel_after.map(Duration::from_secs_f64),
        node_name,
    };
    let code = run_client(&ctx, &invocation, &mut std::io::stdout());
    node.shutdown();
    std::process::exit(code);
}
