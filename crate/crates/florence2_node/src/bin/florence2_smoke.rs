//! Deployment smoke test: launches the node with the mock backend and
//! checks the endpoint surface, one service call, one action with feedback,
//! and 50 continuous frames. The same binary runs inside the container
//! images so every profile exercises the identical check suite.

use clap::Parser;

use florence2_node::deploy::{smoke_test, DeployProfile, ProfileVariant};

#[derive(Parser, Debug)]
#[command(name = "florence2_smoke", about = "Cross-profile deployment smoke test")]
struct Args {
    /// native | container-cpu | container-gpu
    #[arg(long, default_value = "native")]
    profile: String,
}

fn main() {
    let args = Args::parse();
    let Some(variant) = ProfileVariant::parse(&args.profile) else {
        eprintln!("unknown profile `{}`", args.profile);
        std::process::exit(64);
    };
    let report = smoke_test(&DeployProfile::new(variant));
    print!("{}", report.render());
    std::process::exit(if report.passed() { 0 } else { 1 });
}
