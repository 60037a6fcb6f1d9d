//! Freezes real-backend golden files: one inference per output kind on the
//! fixture image, validated against the result schema, then written out for
//! the conformance suite to replay. Run this once on a machine that has the
//! model weights cached (or pass --allow-fetch).

use std::path::PathBuf;

use anyhow::{bail, Context as _};
use clap::Parser;

use florence2_interfaces::{serialize_result, OutputKind};
use florence2_node::backend::{
    load_backend, BackendConfig, DevicePolicy, NvidiaSmiProbe, PrecisionPolicy,
};
use florence2_node::client::load_request_image;
use florence2_node::mapping::{to_detections, to_result_document};
use florence2_node::registry::{build_prompt, TaskRegistry};

#[derive(Parser, Debug)]
#[command(name = "florence2_golden", about = "Freeze real-backend golden outputs")]
struct Args {
    #[arg(long, default_value = "microsoft/Florence-2-base")]
    model: String,
    #[arg(long, default_value = "main")]
    revision: String,
    /// auto | cpu | gpu:<index>
    #[arg(long, default_value = "auto")]
    device: String,
    #[arg(long, default_value = "fixtures/scene.png")]
    fixture: PathBuf,
    /// Output directory for the golden JSON files.
    #[arg(long, default_value = "crates/florence2_node/tests/golden_real")]
    out: PathBuf,
    /// Allow downloading weights (otherwise local cache only).
    #[arg(long, default_value_t = false)]
    allow_fetch: bool,
    /// Text used for tasks that require a text input.
    #[arg(long, default_value = "the object in the middle")]
    text: String,
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .init();
    let args = Args::parse();

    let mut config = BackendConfig::new(args.model.clone());
    config.revision = args.revision.clone();
    config.device_policy = DevicePolicy::parse(&args.device)?;
    config.precision_policy = PrecisionPolicy::Auto;
    config.allow_network_fetch = args.allow_fetch;
    let backend = load_backend(&config, &NvidiaSmiProbe)?;

    let image = load_request_image(&args.fixture).map_err(anyhow::Error::msg)?;
    let registry = TaskRegistry::builtin();
    // One representative task per reachable output kind.
    let cases = [
        "<CAPTION>",
        "<OD>",
        "<OCR_WITH_REGION>",
        "<REFERRING_EXPRESSION_SEGMENTATION>",
    ];

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    for token in cases {
        let spec = registry.lookup(token).context("task missing from registry")?;
        let prompt = build_prompt(spec, if spec.requires_text_input { &args.text } else { "" })?;
        eprintln!("running {token} ...");
        let result = backend.infer(&prompt, &image, spec)?;
        let doc = to_result_document(spec, &result, image.stamp(), backend.model_label())?;
        doc.validate()?;
        if spec.output_kind == OutputKind::BoxesLabels {
            let dets = to_detections(&doc)?;
            if dets.is_empty() {
                bail!("{token}: expected a non-empty detection set on the fixture image");
            }
            for d in &dets.detections {
                let (w, h) = (image.width() as f64, image.height() as f64);
                let inside = d.center_x >= 0.0 && d.center_x <= w && d.center_y >= 0.0 && d.center_y <= h;
                if !inside {
                    bail!("{token}: detection center out of bounds");
                }
            }
        }
        let name = token.trim_matches(['<', '>']).to_lowercase();
        let path = args.out.join(format!("{name}.json"));
        std::fs::write(&path, serialize_result(&doc) + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        eprintln!("froze {}", path.display());
    }
    eprintln!("golden files written to {}", args.out.display());
    Ok(())
}
