use std::net::SocketAddr;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use healthy_choice::App;
use healthy_choice_cli::{init_tracing, router, Cli};

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = cli.to_config();
    init_tracing(config.log_verbosity);

    let app = match tokio::task::spawn_blocking(move || App::boot(config)).await {
        Ok(Ok(app)) => Arc::new(app),
        Ok(Err(err)) => {
            tracing::error!(error = %err, "boot failed");
            eprintln!("healthy-choice: {err}");
            return ExitCode::FAILURE;
        }
        Err(err) => {
            eprintln!("healthy-choice: boot panicked: {err}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(reason) = &app.healthcheck().reason {
        tracing::warn!(%reason, "starting degraded");
    }

    let addr: SocketAddr = match format!("{}:{}", cli.host, cli.port).parse() {
        Ok(addr) => addr,
        Err(err) => {
            eprintln!("healthy-choice: invalid listen address: {err}");
            return ExitCode::FAILURE;
        }
    };
    let listener = match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => l,
        Err(err) => {
            eprintln!("healthy-choice: cannot bind {addr}: {err}");
            return ExitCode::FAILURE;
        }
    };
    tracing::info!(%addr, "listening");
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
        tracing::info!("shutting down");
    };
    if let Err(err) = axum::serve(listener, router(app))
        .with_graceful_shutdown(shutdown)
        .await
    {
        eprintln!("healthy-choice: server error: {err}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
