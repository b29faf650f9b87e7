//! HTTP front end: command-line flags and an axum adapter over the
//! transport-neutral [`App::handle`].

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::http::{header, HeaderValue, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use clap::{Parser, ValueEnum};
use healthy_choice::assistant::ProviderConfig;
use healthy_choice::service::LogVerbosity;
use healthy_choice::{ApiRequest, ApiResponse, App, ServiceConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderArg {
    Stub,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LevelArg {
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl From<LevelArg> for LogVerbosity {
    fn from(level: LevelArg) -> Self {
        match level {
            LevelArg::Error => LogVerbosity::Error,
            LevelArg::Warn => LogVerbosity::Warn,
            LevelArg::Info => LogVerbosity::Info,
            LevelArg::Debug => LogVerbosity::Debug,
            LevelArg::Trace => LogVerbosity::Trace,
        }
    }
}

/// Serve the Healthy Choice simulation API.
///
/// The remote provider's credential is read from the environment variable
/// named by --provider-key-env (HC_PROVIDER_KEY by default).
#[derive(Debug, Clone, Parser)]
#[command(name = "healthy-choice", version)]
pub struct Cli {
    #[arg(long, default_value_t = 8080, value_parser = clap::value_parser!(u16).range(1..))]
    pub port: u16,
    /// Directory holding the event log; created if missing.
    #[arg(long, default_value = "data")]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub scenarios: PathBuf,
    #[arg(long, value_enum, default_value_t = ProviderArg::Stub)]
    pub provider: ProviderArg,
    /// Chat-completions URL of the remote provider.
    #[arg(long)]
    pub provider_endpoint: Option<String>,
    /// Model name sent to the remote provider.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value = healthy_choice::assistant::DEFAULT_KEY_ENV)]
    pub provider_key_env: String,
    #[arg(long, default_value_t = 30_000)]
    pub provider_timeout_ms: u64,
    #[arg(long, value_enum, default_value_t = LevelArg::Info)]
    pub log_level: LevelArg,
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

impl Cli {
    pub fn to_config(&self) -> ServiceConfig {
        let mut provider = ProviderConfig::stub();
        if self.provider == ProviderArg::Remote {
            provider = ProviderConfig {
                kind: healthy_choice::ProviderKind::RemoteChatCompletion,
                endpoint: self.provider_endpoint.clone(),
                model_name: self.model.clone(),
                ..provider
            };
        }
        provider.api_key_env = self.provider_key_env.clone();
        provider.timeout_ms = self.provider_timeout_ms;
        ServiceConfig {
            listen_port: self.port,
            data_dir: self.data_dir.clone(),
            catalog_path: self.catalog.clone(),
            scenarios_path: self.scenarios.clone(),
            provider,
            log_verbosity: self.log_level.into(),
        }
    }
}

fn into_response(api: ApiResponse) -> Response {
    let status = StatusCode::from_u16(api.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let mut response = (status, api.body).into_response();
    response
        .headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static(api.content_type));
    response
}

async fn dispatch(app: Arc<App>, method: Method, uri: Uri, body: Bytes) -> Response {
    let target = uri.path_and_query().map(|pq| pq.as_str()).unwrap_or("/").to_string();
    let request = ApiRequest::new(method.as_str(), &target, body.to_vec());
    // Handling may block on the log fsync or a provider call.
    match tokio::task::spawn_blocking(move || app.handle(&request)).await {
        Ok(api) => into_response(api),
        Err(err) => {
            tracing::error!(error = %err, "request handler panicked");
            (StatusCode::INTERNAL_SERVER_ERROR, "internal error").into_response()
        }
    }
}

/// Every route is served by [`App::handle`]; axum only moves bytes.
pub fn router(app: Arc<App>) -> Router {
    Router::new().fallback(move |method: Method, uri: Uri, body: Bytes| dispatch(app.clone(), method, uri, body))
}

pub fn init_tracing(level: LogVerbosity) {
    let level = match level {
        LogVerbosity::Error => tracing::Level::ERROR,
        LogVerbosity::Warn => tracing::Level::WARN,
        LogVerbosity::Info => tracing::Level::INFO,
        LogVerbosity::Debug => tracing::Level::DEBUG,
        LogVerbosity::Trace => tracing::Level::TRACE,
    };
    let _ = tracing_subscriber::fmt()
        .with_max_level(level)
        .with_target(false)
        .try_init();
}
