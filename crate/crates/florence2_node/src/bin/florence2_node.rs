//! Node launcher: binds the inference node onto a graph and keeps it
//! spinning. Because the graph is in-process, an optional built-in replay
//! publisher (`--play`) feeds the image topic so continuous mode runs
//! self-contained; service/action use happens through `florence2_client`
//! launched with the same configuration.

use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context as _};
use clap::Parser;

use florence2_interfaces::{Image, Stamp};
use florence2_node::adapter;
use florence2_node::config::LaunchConfig;
use rograph::{Context, QosProfile};

#[derive(Parser, Debug)]
#[command(name = "florence2_node", about = "Florence-2 inference node")]
struct Args {
    /// Launch configuration file (TOML). Defaults apply when omitted.
    #[arg(long)]
    launch: Option<PathBuf>,
    /// Override the model id (e.g. `microsoft/Florence-2-base`, `mock:100`).
    #[arg(long)]
    model: Option<String>,
    /// Override the image topic.
    #[arg(long)]
    image_topic: Option<String>,
    /// Override the continuous task token (empty string disables).
    #[arg(long)]
    continuous_task: Option<String>,
    /// Override device policy: auto | cpu | gpu:<index>.
    #[arg(long)]
    device: Option<String>,
    /// Override precision policy: auto | full | reduced.
    #[arg(long)]
    precision: Option<String>,
    /// Override annotated-image publication.
    #[arg(long)]
    publish_annotated: Option<bool>,
    /// Replay a directory of PNG/JPEG frames onto the image topic.
    #[arg(long)]
    play: Option<PathBuf>,
    /// Replay rate in Hz.
    #[arg(long, default_value_t = 10.0)]
    rate: f64,
    /// Run for this many seconds, then shut down (default: forever).
    #[arg(long)]
    duration: Option<f64>,
    /// Print a stats snapshot every this many seconds.
    #[arg(long, default_value_t = 10.0)]
    stats_interval: f64,
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .init();
    let args = Args::parse();

    let mut launch = match &args.launch {
        Some(path) => LaunchConfig::from_path(path)
            .with_context(|| format!("loading launch file {}", path.display()))?,
        None => LaunchConfig::default(),
    };
    if args.model.is_some() {
        launch.model = args.model.clone();
    }
    if args.image_topic.is_some() {
        launch.image_topic = args.image_topic.clone();
    }
    if args.continuous_task.is_some() {
        launch.continuous_task = args.continuous_task.clone();
    }
    if args.device.is_some() {
        launch.device = args.device.clone();
    }
    if args.precision.is_some() {
        launch.precision = args.precision.clone();
    }
    if args.publish_annotated.is_some() {
        launch.publish_annotated = args.publish_annotated;
    }

    let (config, registry) = launch.resolve()?;
    let image_topic = config.image_topic.clone();
    let ctx = Context::new();
    let node = adapter::bind_with_registry(&ctx, config, registry)
        .context("node startup failed")?;

    let _player = match &args.play {
        Some(dir) => Some(spawn_player(&ctx, dir, &image_topic, args.rate)?),
        None => None,
    };

    let deadline = args
        .duration
        .map(|secs| std::time::Instant::now() + Duration::from_secs_f64(secs));
    let stats_every = Duration::from_secs_f64(args.stats_interval.max(1.0));
    let mut last_stats = std::time::Instant::now();
    loop {
        std::thread::sleep(Duration::from_millis(100));
        if last_stats.elapsed() >= stats_every {
            let stats = node.stats();
            tracing::info!(?stats, "node stats");
            last_stats = std::time::Instant::now();
        }
        if deadline.is_some_and(|d| std::time::Instant::now() >= d) {
            break;
        }
    }
    let stats = node.stats();
    println!("{}", serde_json::to_string_pretty(&stats)?);
    node.shutdown();
    Ok(())
}

fn spawn_player(
    ctx: &Context,
    dir: &std::path::Path,
    topic: &str,
    rate: f64,
) -> anyhow::Result<std::thread::JoinHandle<()>> {
    if !(rate.is_finite() && rate > 0.0) {
        bail!("--rate must be positive");
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading replay dir {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("png") | Some("jpg") | Some("jpeg")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("replay dir {} holds no PNG/JPEG frames", dir.display());
    }
    let mut frames = Vec::with_capacity(paths.len());
    for p in &paths {
        let rgb = image::open(p)
            .with_context(|| format!("loading {}", p.display()))?
            .to_rgb8();
        let (width, height) = rgb.dimensions();
        frames.push(Image {
            stamp: Stamp::zero(),
            frame_id: "replay".to_string(),
            width,
            height,
            encoding: "rgb8".to_string(),
            step: width * 3,
            data: rgb.into_raw(),
        });
    }
    tracing::info!(count = frames.len(), rate, "replaying frames");
    let player = ctx.create_node("replay_camera")?;
    let publisher = player.create_publisher::<Image>(topic, QosProfile::sensor_data())?;
    let interval = Duration::from_secs_f64(1.0 / rate);
    Ok(std::thread::spawn(move || loop {
        for frame in &frames {
            let mut msg = frame.clone();
            msg.stamp = Stamp::now();
            publisher.publish(msg);
            std::thread::sleep(interval);
        }
    }))
}
