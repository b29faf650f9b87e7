//! AI assistant gateway.
//!
//! Builds the scenario/product context for a question, sends it to a
//! pluggable [`ChatProvider`] and returns a [`ChatExchange`] for the
//! session transcript. The [`StubProvider`] is deterministic and is what
//! the test suites run against.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{Product, ProductCatalog};
use crate::scenario::Scenario;

/// Instruction text sent ahead of every question unless configuration
/// overrides it.
pub const DEFAULT_SYSTEM_PREAMBLE: &str = "You are a nutrition information assistant inside a learning \
simulation. The learner is acting as a health advisor for the client described in the scenario. \
Answer only questions about nutrition, the scenario, and the product in focus. Explain label \
terms, nutrients and ingredients in plain language and help the learner reason about the \
client's needs. Do not tell the learner which product is the correct final recommendation; \
the decision and its justification are theirs to make.";

pub const DEFAULT_KEY_ENV: &str = "HC_PROVIDER_KEY";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AssistantError {
    #[error("question must contain non-whitespace text")]
    EmptyQuestion,
    #[error("assistant provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("assistant provider rejected the request: {0}")]
    ProviderRejected(String),
    #[error("a question for this session is already being answered")]
    BusyAsking,
    #[error("unknown product `{0}`")]
    UnknownProduct(String),
    #[error("product `{0}` is not part of this scenario")]
    IneligibleProduct(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChatContext {
    pub scenario_excerpt: String,
    /// Present iff a product focus was given.
    pub product_excerpt: Option<String>,
    pub system_preamble: String,
}

impl ChatContext {
    /// SHA-256 over the length-prefixed fields, hex encoded.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for part in [
            Some(self.system_preamble.as_str()),
            Some(self.scenario_excerpt.as_str()),
            self.product_excerpt.as_deref(),
        ] {
            match part {
                Some(text) => {
                    hasher.update([1u8]);
                    hasher.update((text.len() as u64).to_be_bytes());
                    hasher.update(text.as_bytes());
                }
                None => hasher.update([0u8]),
            }
        }
        hex::encode(hasher.finalize())
    }

    /// The context block sent to the provider after the preamble.
    pub fn render(&self) -> String {
        let mut out = format!("Client scenario:\n{}\n", self.scenario_excerpt);
        if let Some(product) = &self.product_excerpt {
            out.push_str("\nProduct in focus:\n");
            out.push_str(product);
        }
        out
    }
}

/// Plain-text rendering of a product's label.
pub fn render_product(product: &Product) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Name: {}", product.name);
    let _ = writeln!(out, "Category: {}", product.category);
    let serving = &product.serving;
    let _ = write!(out, "Serving: {} {}", serving.amount, serving.unit.as_str());
    if let Some(desc) = &serving.description {
        let _ = write!(out, " ({desc})");
    }
    out.push('\n');
    out.push_str("Nutrition facts (per serving):\n");
    for e in &product.nutrition.entries {
        let _ = write!(out, "- {}: {} {}", e.key, e.amount, e.unit);
        if let Some(dv) = e.percent_dv {
            let _ = write!(out, " ({dv}% DV)");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "Ingredients: {}", product.ingredients.join(", "));
    if !product.claims.is_empty() {
        out.push_str("About this item:\n");
        for claim in &product.claims {
            let _ = writeln!(out, "- {claim}");
        }
    }
    out
}

pub fn assemble_context(
    scenario: &Scenario,
    catalog: &ProductCatalog,
    focus: Option<&str>,
    system_preamble: &str,
) -> Result<ChatContext, AssistantError> {
    let product_excerpt = match focus {
        None => None,
        Some(id) => {
            let product = catalog
                .get_product(id)
                .map_err(|_| AssistantError::UnknownProduct(id.to_string()))?;
            if !scenario.is_eligible(id) {
                return Err(AssistantError::IneligibleProduct(id.to_string()));
            }
            Some(render_product(product))
        }
    };
    Ok(ChatContext {
        scenario_excerpt: scenario.narrative.clone(),
        product_excerpt,
        system_preamble: system_preamble.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub question: String,
    pub answer: String,
    pub provider_id: String,
    pub at: DateTime<Utc>,
    pub context_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus_product_id: Option<String>,
}

/// The visible chat history for one session.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Transcript {
    pub session_id: String,
    pub exchanges: Vec<ChatExchange>,
}

impl Transcript {
    pub fn new(session_id: impl Into<String>) -> Self {
        Transcript {
            session_id: session_id.into(),
            exchanges: Vec::new(),
        }
    }

    /// Appends in completion order. A timestamp earlier than the last one is
    /// raised to it so the history stays non-decreasing.
    pub fn push(&mut self, mut exchange: ChatExchange) {
        if let Some(last) = self.exchanges.last() {
            if exchange.at < last.at {
                exchange.at = last.at;
            }
        }
        self.exchanges.push(exchange);
    }

    pub fn clear(&mut self) {
        self.exchanges.clear();
    }

    pub fn len(&self) -> usize {
        self.exchanges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exchanges.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Stub,
    RemoteChatCompletion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    /// Name of the environment variable holding the remote credential.
    pub api_key_env: String,
    pub system_preamble: String,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Stub,
            endpoint: None,
            model_name: None,
            timeout_ms: 30_000,
            max_retries: 2,
            initial_backoff_ms: 250,
            api_key_env: DEFAULT_KEY_ENV.to_string(),
            system_preamble: DEFAULT_SYSTEM_PREAMBLE.to_string(),
        }
    }
}

impl ProviderConfig {
    pub fn stub() -> Self {
        Self::default()
    }

    pub fn remote(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        ProviderConfig {
            kind: ProviderKind::RemoteChatCompletion,
            endpoint: Some(endpoint.into()),
            model_name: Some(model_name.into()),
            ..Self::default()
        }
    }

    /// Checks the kind-specific requirements.
    pub fn validate(&self) -> Result<(), String> {
        match self.kind {
            ProviderKind::Stub => Ok(()),
            ProviderKind::RemoteChatCompletion => {
                let endpoint = self
                    .endpoint
                    .as_deref()
                    .filter(|e| !e.trim().is_empty())
                    .ok_or("remote provider requires an endpoint")?;
                endpoint
                    .parse::<hyper::Uri>()
                    .ok()
                    .filter(|u| matches!(u.scheme_str(), Some("http" | "https")) && u.host().is_some())
                    .ok_or_else(|| format!("invalid provider endpoint `{endpoint}`"))?;
                self.model_name
                    .as_deref()
                    .filter(|m| !m.trim().is_empty())
                    .ok_or("remote provider requires a model name")?;
                if self.timeout_ms == 0 {
                    return Err("provider timeout must be positive".into());
                }
                Ok(())
            }
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            initial_backoff: Duration::from_millis(self.initial_backoff_ms),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 2,
            initial_backoff: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based): doubles each time.
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff.saturating_mul(1u32 << attempt.min(16))
    }
}

/// What a provider is asked.
#[derive(Debug, Clone, Copy)]
pub struct ProviderRequest<'a> {
    pub context: &'a ChatContext,
    pub question: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderFailure {
    /// Timeout or connection failure; worth retrying.
    Transient(String),
    /// The provider answered with an error; retrying will not help.
    Rejected(String),
}

pub trait ChatProvider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: ProviderRequest<'_>) -> Result<String, ProviderFailure>;
}

/// Deterministic test double: `STUB[<digest>]: <first 80 chars of question>`.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubProvider;

impl StubProvider {
    pub fn answer_for(context: &ChatContext, question: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(context.digest().as_bytes());
        hasher.update([0u8]);
        hasher.update(question.as_bytes());
        let digest = hex::encode(hasher.finalize());
        let head: String = question.chars().take(80).collect();
        format!("STUB[{}]: {head}", &digest[..16])
    }
}

impl ChatProvider for StubProvider {
    fn id(&self) -> &str {
        "stub"
    }

    fn complete(&self, request: ProviderRequest<'_>) -> Result<String, ProviderFailure> {
        Ok(Self::answer_for(request.context, request.question))
    }
}

/// Stands in for a provider whose configuration is invalid; every call fails
/// as unavailable with the configuration problem as the reason.
#[derive(Debug, Clone)]
pub struct MisconfiguredProvider {
    pub reason: String,
}

impl ChatProvider for MisconfiguredProvider {
    fn id(&self) -> &str {
        "misconfigured"
    }

    fn complete(&self, _request: ProviderRequest<'_>) -> Result<String, ProviderFailure> {
        Err(ProviderFailure::Transient(self.reason.clone()))
    }
}

pub use remote::RemoteChatProvider;

mod remote {
    use super::*;
    use http_body_util::{BodyExt, Full};
    use hyper::body::Bytes;
    use hyper::{header, Method, Request, Uri};
    use hyper_rustls::HttpsConnector;
    use hyper_util::client::legacy::connect::HttpConnector;
    use hyper_util::client::legacy::Client;
    use hyper_util::rt::TokioExecutor;
    use serde_json::{json, Value};

    /// Client for an OpenAI-style `chat/completions` endpoint.
    ///
    /// Calls block the current thread on a private single-threaded runtime;
    /// async callers should go through `spawn_blocking`.
    pub struct RemoteChatProvider {
        endpoint: Uri,
        model: String,
        api_key: Option<String>,
        timeout: Duration,
        id: String,
        runtime: tokio::runtime::Runtime,
        client: Client<HttpsConnector<HttpConnector>, Full<Bytes>>,
    }

    impl std::fmt::Debug for RemoteChatProvider {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            f.debug_struct("RemoteChatProvider")
                .field("endpoint", &self.endpoint)
                .field("model", &self.model)
                .field("api_key", &self.api_key.as_ref().map(|_| "[redacted]"))
                .field("timeout", &self.timeout)
                .finish()
        }
    }

    impl RemoteChatProvider {
        /// Reads the credential from the environment variable named in the
        /// config. A missing variable means requests go out unauthenticated.
        pub fn from_config(config: &ProviderConfig) -> Result<Self, String> {
            config.validate()?;
            let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
            Self::new(
                config.endpoint.as_deref().unwrap_or_default(),
                config.model_name.as_deref().unwrap_or_default(),
                api_key,
                Duration::from_millis(config.timeout_ms),
            )
        }

        pub fn new(endpoint: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, String> {
            let endpoint: Uri = endpoint
                .parse()
                .map_err(|e| format!("invalid provider endpoint `{endpoint}`: {e}"))?;
            let runtime = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .map_err(|e| format!("cannot start provider runtime: {e}"))?;
            let connector = hyper_rustls::HttpsConnectorBuilder::new()
                .with_webpki_roots()
                .https_or_http()
                .enable_http1()
                .build();
            let client = Client::builder(TokioExecutor::new()).build(connector);
            Ok(RemoteChatProvider {
                id: format!("remote:{model}"),
                endpoint,
                model: model.to_string(),
                api_key,
                timeout,
                runtime,
                client,
            })
        }

        fn request_body(&self, request: ProviderRequest<'_>) -> Value {
            json!({
                "model": self.model,
                "messages": [
                    {"role": "system", "content": request.context.system_preamble},
                    {"role": "system", "content": request.context.render()},
                    {"role": "user", "content": request.question},
                ],
            })
        }
    }

    fn extract_answer(body: &[u8]) -> Result<String, ProviderFailure> {
        let value: Value = serde_json::from_slice(body)
            .map_err(|e| ProviderFailure::Rejected(format!("malformed provider response: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderFailure::Rejected("provider response has no answer text".into()))
    }

    impl ChatProvider for RemoteChatProvider {
        fn id(&self) -> &str {
            &self.id
        }

        fn complete(&self, request: ProviderRequest<'_>) -> Result<String, ProviderFailure> {
            let body = serde_json::to_vec(&self.request_body(request)).expect("json encoding");
            tracing::debug!(
                endpoint = %self.endpoint,
                authorization = if self.api_key.is_some() { "Bearer [redacted]" } else { "none" },
                body = %String::from_utf8_lossy(&body),
                "provider request"
            );
            let mut builder = Request::builder()
                .method(Method::POST)
                .uri(self.endpoint.clone())
                .header(header::CONTENT_TYPE, "application/json");
            if let Some(key) = &self.api_key {
                builder = builder.header(header::AUTHORIZATION, format!("Bearer {key}"));
            }
            let http_request = builder
                .body(Full::new(Bytes::from(body)))
                .map_err(|e| ProviderFailure::Rejected(e.to_string()))?;

            let (status, bytes) = self.runtime.block_on(async {
                let call = async {
                    let response = self
                        .client
                        .request(http_request)
                        .await
                        .map_err(|e| ProviderFailure::Transient(format!("connection failed: {e}")))?;
                    let status = response.status();
                    let bytes = response
                        .into_body()
                        .collect()
                        .await
                        .map_err(|e| ProviderFailure::Transient(format!("response interrupted: {e}")))?
                        .to_bytes();
                    Ok::<_, ProviderFailure>((status, bytes))
                };
                tokio::time::timeout(self.timeout, call)
                    .await
                    .map_err(|_| ProviderFailure::Transient(format!("timed out after {:?}", self.timeout)))?
            })?;
            tracing::debug!(status = %status, body = %String::from_utf8_lossy(&bytes), "provider response");
            if !status.is_success() {
                let excerpt: String = String::from_utf8_lossy(&bytes).chars().take(200).collect();
                return Err(ProviderFailure::Rejected(format!("status {status}: {excerpt}")));
            }
            extract_answer(&bytes)
        }
    }

}

type Sleeper = dyn Fn(Duration) + Send + Sync;

/// Runs questions against a provider with retries, one question in flight
/// per session.
pub struct Assistant {
    provider: Arc<dyn ChatProvider>,
    retry: RetryPolicy,
    in_flight: Mutex<HashSet<String>>,
    sleep: Box<Sleeper>,
}

impl std::fmt::Debug for Assistant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Assistant")
            .field("provider", &self.provider.id())
            .field("retry", &self.retry)
            .finish()
    }
}

struct InFlight<'a> {
    set: &'a Mutex<HashSet<String>>,
    session_id: String,
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.set
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .remove(&self.session_id);
    }
}

impl Assistant {
    pub fn new(provider: Arc<dyn ChatProvider>, retry: RetryPolicy) -> Self {
        Assistant {
            provider,
            retry,
            in_flight: Mutex::new(HashSet::new()),
            sleep: Box::new(std::thread::sleep),
        }
    }

    /// Replaces the backoff sleep, e.g. to record delays in tests.
    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    fn claim(&self, session_id: &str) -> Result<InFlight<'_>, AssistantError> {
        let mut set = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        if !set.insert(session_id.to_string()) {
            return Err(AssistantError::BusyAsking);
        }
        Ok(InFlight {
            set: &self.in_flight,
            session_id: session_id.to_string(),
        })
    }

    /// Asks one question. The exchange is returned for the caller to append
    /// to the transcript; on failure nothing is returned to append.
    pub fn ask(
        &self,
        session_id: &str,
        context: &ChatContext,
        question: &str,
        focus_product_id: Option<&str>,
        now: impl Fn() -> DateTime<Utc>,
    ) -> Result<ChatExchange, AssistantError> {
        if question.trim().is_empty() {
            return Err(AssistantError::EmptyQuestion);
        }
        let _guard = self.claim(session_id)?;
        let request = ProviderRequest { context, question };
        let mut attempt = 0;
        let answer = loop {
            match self.provider.complete(request) {
                Ok(answer) => break answer,
                Err(ProviderFailure::Rejected(reason)) => return Err(AssistantError::ProviderRejected(reason)),
                Err(ProviderFailure::Transient(reason)) => {
                    if attempt >= self.retry.max_retries {
                        return Err(AssistantError::ProviderUnavailable(format!(
                            "{reason} (after {} attempts)",
                            attempt + 1
                        )));
                    }
                    tracing::warn!(session_id, attempt, %reason, "provider call failed, retrying");
                    (self.sleep)(self.retry.backoff(attempt));
                    attempt += 1;
                }
            }
        };
        Ok(ChatExchange {
            question: question.to_string(),
            answer,
            provider_id: self.provider.id().to_string(),
            at: now(),
            context_digest: context.digest(),
            focus_product_id: focus_product_id.map(str::to_string),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn fixtures() -> (ProductCatalog, Scenario) {
        let catalog = crate::catalog::load_catalog(
            &serde_json::to_vec(&json!({"products": [
                {"id": "bodyarmor-lyte", "name": "BODYARMOR LYTE Sports Drink Dragonfruit Berry",
                 "category": "sports drink", "serving": {"amount": 473, "unit": "ml", "description": "1 bottle"},
                 "nutrition": [{"key": "calories", "amount": 20, "unit": "kcal"},
                               {"key": "sugar", "amount": 2, "unit": "g"},
                               {"key": "potassium", "amount": 700, "unit": "mg", "percent_dv": 15}],
                 "ingredients": ["filtered water", "coconut water concentrate"],
                 "claims": ["Electrolytes from coconut water"], "image_refs": []},
                {"id": "other", "name": "Other", "category": "energy drink",
                 "serving": {"amount": 250, "unit": "ml"}, "nutrition": [],
                 "ingredients": [], "claims": [], "image_refs": []}
            ]}))
            .unwrap(),
        )
        .unwrap();
        let scenario: Scenario = serde_json::from_value(json!({
            "id": "s1", "title": "t", "narrative": "A runner needs electrolytes.",
            "client_profile": [], "eligible_product_ids": ["bodyarmor-lyte"], "difficulty": 1
        }))
        .unwrap();
        (catalog, scenario)
    }

    fn now() -> DateTime<Utc> {
        "2025-02-10T09:00:00Z".parse().unwrap()
    }

    #[test]
    fn context_with_and_without_focus() {
        let (catalog, scenario) = fixtures();
        let ctx = assemble_context(&scenario, &catalog, Some("bodyarmor-lyte"), DEFAULT_SYSTEM_PREAMBLE).unwrap();
        let excerpt = ctx.product_excerpt.as_deref().unwrap();
        assert!(excerpt.contains("BODYARMOR LYTE Sports Drink Dragonfruit Berry"));
        for key in ["calories", "sugar", "potassium"] {
            assert!(excerpt.contains(key), "missing {key}");
        }
        assert!(excerpt.contains("coconut water concentrate"));
        assert_eq!(ctx.scenario_excerpt, scenario.narrative);

        let bare = assemble_context(&scenario, &catalog, None, DEFAULT_SYSTEM_PREAMBLE).unwrap();
        assert!(bare.product_excerpt.is_none());
        assert_ne!(bare.digest(), ctx.digest());
        assert_eq!(bare.digest(), bare.clone().digest());

        assert_eq!(
            assemble_context(&scenario, &catalog, Some("other"), DEFAULT_SYSTEM_PREAMBLE).unwrap_err(),
            AssistantError::IneligibleProduct("other".into())
        );
        assert_eq!(
            assemble_context(&scenario, &catalog, Some("nope"), DEFAULT_SYSTEM_PREAMBLE).unwrap_err(),
            AssistantError::UnknownProduct("nope".into())
        );
    }

    #[test]
    fn stub_is_deterministic() {
        let (catalog, scenario) = fixtures();
        let ctx = assemble_context(&scenario, &catalog, None, DEFAULT_SYSTEM_PREAMBLE).unwrap();
        let assistant = Assistant::new(Arc::new(StubProvider), RetryPolicy::default());
        let a = assistant.ask("s", &ctx, "Is 2 g of sugar a lot?", None, now).unwrap();
        let b = assistant.ask("s", &ctx, "Is 2 g of sugar a lot?", None, now).unwrap();
        assert_eq!(a.answer, b.answer);
        assert!(a.answer.starts_with("STUB["));
        assert!(a.answer.ends_with("]: Is 2 g of sugar a lot?"));
        let other = assistant.ask("s", &ctx, "Something else", None, now).unwrap();
        assert_ne!(other.answer, a.answer);
        let long = "x".repeat(200);
        let answer = StubProvider::answer_for(&ctx, &long);
        assert_eq!(answer.len(), "STUB[0123456789abcdef]: ".len() + 80);
    }

    #[test]
    fn empty_question_rejected() {
        let (catalog, scenario) = fixtures();
        let ctx = assemble_context(&scenario, &catalog, None, DEFAULT_SYSTEM_PREAMBLE).unwrap();
        let assistant = Assistant::new(Arc::new(StubProvider), RetryPolicy::default());
        assert_eq!(
            assistant.ask("s", &ctx, "", None, now).unwrap_err(),
            AssistantError::EmptyQuestion
        );
        assert_eq!(
            assistant.ask("s", &ctx, " \n", None, now).unwrap_err(),
            AssistantError::EmptyQuestion
        );
    }

    struct Flaky {
        failures: usize,
        calls: AtomicUsize,
        failure: ProviderFailure,
    }

    impl ChatProvider for Flaky {
        fn id(&self) -> &str {
            "flaky"
        }
        fn complete(&self, _r: ProviderRequest<'_>) -> Result<String, ProviderFailure> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(self.failure.clone())
            } else {
                Ok("ok".into())
            }
        }
    }

    #[test]
    fn retries_with_exponential_backoff() {
        let (catalog, scenario) = fixtures();
        let ctx = assemble_context(&scenario, &catalog, None, DEFAULT_SYSTEM_PREAMBLE).unwrap();
        let delays = Arc::new(Mutex::new(Vec::new()));
        let recorded = delays.clone();
        let flaky = Arc::new(Flaky {
            failures: 2,
            calls: AtomicUsize::new(0),
            failure: ProviderFailure::Transient("refused".into()),
        });
        let assistant = Assistant::new(flaky.clone(), RetryPolicy::default())
            .with_sleeper(move |d| recorded.lock().unwrap().push(d));
        assert_eq!(assistant.ask("s", &ctx, "q", None, now).unwrap().answer, "ok");
        assert_eq!(
            *delays.lock().unwrap(),
            vec![Duration::from_millis(250), Duration::from_millis(500)]
        );

        let down = Arc::new(Flaky {
            failures: usize::MAX,
            calls: AtomicUsize::new(0),
            failure: ProviderFailure::Transient("refused".into()),
        });
        let assistant = Assistant::new(down.clone(), RetryPolicy::default()).with_sleeper(|_| {});
        assert!(matches!(
            assistant.ask("s", &ctx, "q", None, now),
            Err(AssistantError::ProviderUnavailable(_))
        ));
        assert_eq!(down.calls.load(Ordering::SeqCst), 3);

        let rejecting = Arc::new(Flaky {
            failures: usize::MAX,
            calls: AtomicUsize::new(0),
            failure: ProviderFailure::Rejected("400".into()),
        });
        let assistant = Assistant::new(rejecting.clone(), RetryPolicy::default()).with_sleeper(|_| {});
        assert!(matches!(
            assistant.ask("s", &ctx, "q", None, now),
            Err(AssistantError::ProviderRejected(_))
        ));
        assert_eq!(rejecting.calls.load(Ordering::SeqCst), 1);
    }

    struct Gate {
        entered: std::sync::Barrier,
        release: std::sync::Barrier,
    }

    impl ChatProvider for Gate {
        fn id(&self) -> &str {
            "gate"
        }
        fn complete(&self, _r: ProviderRequest<'_>) -> Result<String, ProviderFailure> {
            self.entered.wait();
            self.release.wait();
            Ok("done".into())
        }
    }

    #[test]
    fn second_concurrent_ask_is_busy() {
        let (catalog, scenario) = fixtures();
        let ctx = assemble_context(&scenario, &catalog, None, DEFAULT_SYSTEM_PREAMBLE).unwrap();
        let gate = Arc::new(Gate {
            entered: std::sync::Barrier::new(2),
            release: std::sync::Barrier::new(2),
        });
        let assistant = Arc::new(Assistant::new(gate.clone(), RetryPolicy::default()));
        let worker = {
            let assistant = assistant.clone();
            let ctx = ctx.clone();
            std::thread::spawn(move || assistant.ask("s", &ctx, "first", None, now))
        };
        gate.entered.wait();
        assert_eq!(
            assistant.ask("s", &ctx, "second", None, now).unwrap_err(),
            AssistantError::BusyAsking
        );
        // a different session is not blocked by "s"; it would wait on the
        // gate, so only check the claim
        assert!(assistant.claim("other").is_ok());
        gate.release.wait();
        assert_eq!(worker.join().unwrap().unwrap().answer, "done");
        assert!(assistant.claim("s").is_ok());
    }

    #[test]
    fn transcript_order_and_clear() {
        let mut t = Transcript::new("s");
        let ex = |at: &str| ChatExchange {
            question: "q".into(),
            answer: "a".into(),
            provider_id: "stub".into(),
            at: at.parse().unwrap(),
            context_digest: "d".into(),
            focus_product_id: None,
        };
        t.push(ex("2025-02-10T09:00:05Z"));
        t.push(ex("2025-02-10T09:00:01Z"));
        assert!(t.exchanges[1].at >= t.exchanges[0].at);
        t.clear();
        assert!(t.is_empty());
        t.clear();
        assert!(t.is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(ProviderConfig::stub().validate().is_ok());
        assert!(
            ProviderConfig::remote("https://api.example.test/v1/chat/completions", "gpt")
                .validate()
                .is_ok()
        );
        let mut c = ProviderConfig::remote("https://api.example.test/v1", "gpt");
        c.model_name = None;
        assert!(c.validate().is_err());
        let mut c = ProviderConfig::remote("not a url", "gpt");
        assert!(c.validate().is_err());
        c.endpoint = None;
        assert!(c.validate().is_err());
        assert_eq!(ProviderConfig::default().max_retries, 2);
        assert_eq!(RetryPolicy::default().backoff(0), Duration::from_millis(250));
        assert_eq!(RetryPolicy::default().backoff(2), Duration::from_millis(1000));
    }
}
