use std::path::PathBuf;

use clap::Parser;
use credledger_gateway::{ConfigOverrides, GatewayConfig};

/// Credential ledger HTTP gateway.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    block_interval_ms: Option<u64>,
    #[arg(long)]
    challenge_ttl_ms: Option<u64>,
    #[arg(long)]
    session_ttl_ms: Option<u64>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    cors_origin: Option<String>,
    #[arg(long)]
    domain: Option<String>,
}

#[tokio::main]
async fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let flags = ConfigOverrides {
        listen: args.listen,
        block_interval_ms: args.block_interval_ms,
        challenge_ttl_ms: args.challenge_ttl_ms,
        session_ttl_ms: args.session_ttl_ms,
        data_dir: args.data_dir,
        cors_origin: args.cors_origin,
        domain: args.domain,
    };
    let config = ConfigOverrides::from_env(|k| std::env::var(k).ok())
        .and_then(|env| GatewayConfig::resolve(args.config.as_deref(), env, flags));
    let config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = credledger_gateway::serve(config, shutdown).await {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
