use clap::Parser;
use knowlens_service::{router, AppState, ServiceConfig};
use tracing_subscriber::EnvFilter;

/// Serves the knowledge-guided embedding API over HTTP.
#[derive(Debug, Parser)]
#[command(name = "knowlens-server", version)]
struct Cli {
    /// Address to listen on.
    #[arg(long, env = "KNOWLENS_LISTEN", default_value = "127.0.0.1:8080")]
    listen: String,
    #[command(flatten)]
    config: ServiceConfig,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let cli = Cli::parse();
    let listener = tokio::net::TcpListener::bind(&cli.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(AppState::new(cli.config))).await
}
