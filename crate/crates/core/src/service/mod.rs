//! Process boundary: configuration, boot, persistence and request handling.
//!
//! State lives in one append-only event log under the data directory. At
//! boot the log is replayed to restore sessions, chat transcripts and survey
//! responses; every state change afterwards is appended (and synced) before
//! it becomes visible.

mod errors;
mod router;

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::{DateTime, Duration as ChronoDuration, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytics::{
    band_share, descriptive_stats, distribution_percentages, AnalyticsError, EventKind, EventLog, EventRecord,
    NewEvent, RatingDistribution, SurveyResponse, SurveyStore,
};
use crate::assistant::{
    assemble_context, Assistant, ChatExchange, ChatProvider, MisconfiguredProvider, ProviderConfig, ProviderKind,
    RemoteChatProvider, StubProvider, Transcript,
};
use crate::catalog::{load_catalog, Basis, CatalogError, Product, ProductCatalog};
use crate::compare::{build_comparison, ComparisonTable};
use crate::scenario::{load_scenarios, Scenario, ScenarioError, ScenarioSet};
use crate::session::{replay_sessions, start_session, Session, SessionError, SessionEvent, Summary};

pub use errors::{ApiError, CodeEntry, CodedError, ERROR_CODES};
pub use router::{ApiRequest, ApiResponse};

/// Name of the event log inside the data directory.
pub const EVENT_LOG_FILE: &str = "events.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Storage(#[from] AnalyticsError),
    #[error(transparent)]
    History(#[from] SessionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogVerbosity {
    Error,
    Warn,
    #[default]
    Info,
    Debug,
    Trace,
}

impl LogVerbosity {
    pub fn as_str(self) -> &'static str {
        match self {
            LogVerbosity::Error => "error",
            LogVerbosity::Warn => "warn",
            LogVerbosity::Info => "info",
            LogVerbosity::Debug => "debug",
            LogVerbosity::Trace => "trace",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub listen_port: u16,
    pub data_dir: PathBuf,
    pub catalog_path: PathBuf,
    pub scenarios_path: PathBuf,
    pub provider: ProviderConfig,
    pub log_verbosity: LogVerbosity,
}

impl ServiceConfig {
    /// Port 8080, stub provider, info logging.
    pub fn new(
        data_dir: impl Into<PathBuf>,
        catalog_path: impl Into<PathBuf>,
        scenarios_path: impl Into<PathBuf>,
    ) -> Self {
        ServiceConfig {
            listen_port: 8080,
            data_dir: data_dir.into(),
            catalog_path: catalog_path.into(),
            scenarios_path: scenarios_path.into(),
            provider: ProviderConfig::stub(),
            log_verbosity: LogVerbosity::Info,
        }
    }

    pub fn event_log_path(&self) -> PathBuf {
        self.data_dir.join(EVENT_LOG_FILE)
    }

    /// Port in range, input files readable, data directory usable. The
    /// provider is checked separately: a bad provider degrades the service
    /// instead of stopping it.
    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.listen_port == 0 {
            return Err(ServiceError::Config("listen port must be in 1..=65535".into()));
        }
        readable_file("catalog", &self.catalog_path)?;
        readable_file("scenarios", &self.scenarios_path)?;
        if self.data_dir.exists() && !self.data_dir.is_dir() {
            return Err(ServiceError::Config(format!(
                "data dir `{}` is not a directory",
                self.data_dir.display()
            )));
        }
        Ok(())
    }
}

fn readable_file(what: &str, path: &Path) -> Result<(), ServiceError> {
    if !path.is_file() {
        return Err(ServiceError::Config(format!(
            "{what} file `{}` does not exist",
            path.display()
        )));
    }
    File::open(path)
        .map(drop)
        .map_err(|e| ServiceError::Config(format!("{what} file `{}` is not readable: {e}", path.display())))
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock: each call returns the previous value plus `step`.
#[derive(Debug)]
pub struct SteppingClock {
    start: DateTime<Utc>,
    step: ChronoDuration,
    ticks: AtomicU64,
}

impl SteppingClock {
    pub fn new(start: DateTime<Utc>, step: ChronoDuration) -> Self {
        SteppingClock {
            start,
            step,
            ticks: AtomicU64::new(0),
        }
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        let tick = self.ticks.fetch_add(1, Ordering::SeqCst);
        self.start + self.step * tick as i32
    }
}

pub trait IdSource: Send + Sync {
    fn next_id(&self) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RandomIds;

impl IdSource for RandomIds {
    fn next_id(&self) -> String {
        uuid::Uuid::new_v4().to_string()
    }
}

/// `<prefix>-1`, `<prefix>-2`, ...
#[derive(Debug)]
pub struct SequentialIds {
    prefix: String,
    next: AtomicU64,
}

impl SequentialIds {
    pub fn new(prefix: impl Into<String>) -> Self {
        SequentialIds {
            prefix: prefix.into(),
            next: AtomicU64::new(1),
        }
    }
}

impl IdSource for SequentialIds {
    fn next_id(&self) -> String {
        format!("{}-{}", self.prefix, self.next.fetch_add(1, Ordering::SeqCst))
    }
}

/// Injection points for boot.
pub struct BootOptions {
    pub clock: Arc<dyn Clock>,
    pub ids: Arc<dyn IdSource>,
    /// Replaces the provider built from the config.
    pub provider: Option<Arc<dyn ChatProvider>>,
}

impl Default for BootOptions {
    fn default() -> Self {
        BootOptions {
            clock: Arc::new(SystemClock),
            ids: Arc::new(RandomIds),
            provider: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Health {
    /// `ok` or `degraded`.
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub products: usize,
    pub scenarios: usize,
    pub provider: ProviderKind,
    pub provider_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SelectedItems {
    pub session_id: String,
    pub product_ids: Vec<String>,
    pub products: Vec<Product>,
}

#[derive(Debug)]
struct SessionSlot {
    session: Session,
    transcript: Transcript,
}

/// A booted service. Cheap to share behind an `Arc`; every method takes
/// `&self` and is safe to call from many threads.
pub struct App {
    config: ServiceConfig,
    catalog: ProductCatalog,
    scenarios: ScenarioSet,
    assistant: Assistant,
    degraded: Option<String>,
    clock: Arc<dyn Clock>,
    ids: Arc<dyn IdSource>,
    log: Mutex<EventLog>,
    sessions: RwLock<IndexMap<String, Arc<Mutex<SessionSlot>>>>,
    surveys: Mutex<SurveyStore>,
}

impl std::fmt::Debug for App {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("App")
            .field("config", &self.config)
            .field("assistant", &self.assistant)
            .field("degraded", &self.degraded)
            .finish_non_exhaustive()
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn build_provider(config: &ProviderConfig) -> (Arc<dyn ChatProvider>, Option<String>) {
    match config.kind {
        ProviderKind::Stub => (Arc::new(StubProvider), None),
        ProviderKind::RemoteChatCompletion => match RemoteChatProvider::from_config(config) {
            Ok(provider) => {
                if std::env::var_os(&config.api_key_env).is_none() {
                    tracing::warn!(var = %config.api_key_env, "provider credential variable is not set");
                }
                (Arc::new(provider), None)
            }
            Err(reason) => {
                tracing::warn!(%reason, "provider misconfigured; asks will fail");
                (Arc::new(MisconfiguredProvider { reason: reason.clone() }), Some(reason))
            }
        },
    }
}

fn read_input(what: &str, path: &Path) -> Result<Vec<u8>, ServiceError> {
    fs::read(path).map_err(|e| ServiceError::Config(format!("cannot read {what} `{}`: {e}", path.display())))
}

struct Restored {
    sessions: IndexMap<String, Session>,
    transcripts: IndexMap<String, Transcript>,
    surveys: SurveyStore,
}

fn exchange_from_record(record: &EventRecord) -> Option<ChatExchange> {
    let p = &record.payload;
    if p.get("outcome").and_then(Value::as_str) != Some("answered") {
        return None;
    }
    let text = |k: &str| p.get(k).and_then(Value::as_str).map(str::to_string);
    Some(ChatExchange {
        question: text("question")?,
        answer: text("answer")?,
        provider_id: text("provider_id")?,
        at: record.at,
        context_digest: text("context_digest")?,
        focus_product_id: text("focus_product_id"),
    })
}

fn restore(records: &[EventRecord]) -> Result<Restored, ServiceError> {
    let sessions = replay_sessions(records)?;
    let mut transcripts: IndexMap<String, Transcript> = IndexMap::new();
    let mut surveys = SurveyStore::new();
    for record in records {
        match record.kind {
            EventKind::AiQuestion | EventKind::AiCleared if !sessions.contains_key(&record.session_id) => {
                return Err(SessionError::CorruptHistory(format!(
                    "record {} refers to unknown session `{}`",
                    record.seq, record.session_id
                ))
                .into());
            }
            EventKind::AiQuestion => {
                if let Some(exchange) = exchange_from_record(record) {
                    transcripts
                        .entry(record.session_id.clone())
                        .or_insert_with(|| Transcript::new(record.session_id.clone()))
                        .push(exchange);
                }
            }
            EventKind::AiCleared => {
                if let Some(t) = transcripts.get_mut(&record.session_id) {
                    t.clear();
                }
            }
            EventKind::SurveySubmitted => {
                let response = SurveyResponse::from_record(record)
                    .ok_or_else(|| SessionError::CorruptHistory(format!("record {}: malformed survey", record.seq)))?;
                surveys
                    .ingest(response)
                    .map_err(|e| SessionError::CorruptHistory(format!("record {}: {e}", record.seq)))?;
            }
            _ => {}
        }
    }
    Ok(Restored {
        sessions,
        transcripts,
        surveys,
    })
}

impl App {
    pub fn boot(config: ServiceConfig) -> Result<App, ServiceError> {
        Self::boot_with(config, BootOptions::default())
    }

    /// Loads the catalog and scenarios, opens the event log and restores
    /// state from it. Nothing is started if any step fails.
    pub fn boot_with(config: ServiceConfig, options: BootOptions) -> Result<App, ServiceError> {
        config.validate()?;
        let catalog = load_catalog(&read_input("catalog", &config.catalog_path)?)?;
        let scenarios = load_scenarios(&read_input("scenarios", &config.scenarios_path)?, &catalog)?;
        fs::create_dir_all(&config.data_dir).map_err(|e| {
            ServiceError::Config(format!("cannot create data dir `{}`: {e}", config.data_dir.display()))
        })?;
        let log = EventLog::open(config.event_log_path())?;
        let restored = restore(log.records())?;
        for session in restored.sessions.values() {
            if scenarios.get(&session.scenario_id).is_none() {
                tracing::warn!(session = %session.id, scenario = %session.scenario_id, "restored session refers to a scenario no longer loaded");
            }
        }

        let (provider, degraded) = match options.provider {
            Some(p) => (p, None),
            None => build_provider(&config.provider),
        };
        let assistant = Assistant::new(provider, config.provider.retry_policy());

        let mut transcripts = restored.transcripts;
        let sessions = restored
            .sessions
            .into_iter()
            .map(|(id, session)| {
                let transcript = transcripts
                    .swap_remove(&id)
                    .unwrap_or_else(|| Transcript::new(id.clone()));
                (id, Arc::new(Mutex::new(SessionSlot { session, transcript })))
            })
            .collect::<IndexMap<_, _>>();

        tracing::info!(
            products = catalog.len(),
            scenarios = scenarios.len(),
            sessions = sessions.len(),
            events = log.len(),
            provider = assistant.provider_id(),
            "service booted"
        );
        Ok(App {
            config,
            catalog,
            scenarios,
            assistant,
            degraded,
            clock: options.clock,
            ids: options.ids,
            log: Mutex::new(log),
            sessions: RwLock::new(sessions),
            surveys: Mutex::new(restored.surveys),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn catalog(&self) -> &ProductCatalog {
        &self.catalog
    }

    pub fn scenarios(&self) -> &ScenarioSet {
        &self.scenarios
    }

    pub fn healthcheck(&self) -> Health {
        Health {
            status: if self.degraded.is_some() { "degraded" } else { "ok" },
            reason: self.degraded.clone(),
            products: self.catalog.len(),
            scenarios: self.scenarios.len(),
            provider: self.config.provider.kind,
            provider_id: self.assistant.provider_id().to_string(),
        }
    }

    /// A copy of every record appended so far, including those replayed at
    /// boot.
    pub fn event_records(&self) -> Vec<EventRecord> {
        lock(&self.log).records().to_vec()
    }

    /// Current state of every session, in creation order.
    pub fn sessions_snapshot(&self) -> IndexMap<String, Session> {
        let slots: Vec<_> = self
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .cloned()
            .collect();
        slots
            .into_iter()
            .map(|slot| {
                let slot = lock(&slot);
                (slot.session.id.clone(), slot.session.clone())
            })
            .collect()
    }

    fn append(&self, events: impl IntoIterator<Item = NewEvent>) -> Result<Vec<EventRecord>, ApiError> {
        lock(&self.log).append_all(events).map_err(|e| {
            tracing::error!(error = %e, "event log append failed");
            ApiError::from(e)
        })
    }

    fn slot(&self, session_id: &str) -> Result<Arc<Mutex<SessionSlot>>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(session_id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(session_id))
    }

    fn scenario_for(&self, session: &Session) -> Result<&Scenario, ApiError> {
        self.scenarios
            .get(&session.scenario_id)
            .ok_or_else(|| SessionError::UnknownScenario(session.scenario_id.clone()).into())
    }

    pub fn create_session(&self, user_ref: &str, scenario_id: &str) -> Result<Session, ApiError> {
        if user_ref.trim().is_empty() {
            return Err(ApiError::bad_request("user_ref must not be blank"));
        }
        let now = self.clock.now();
        let mut sessions = self.sessions.write().unwrap_or_else(|e| e.into_inner());
        let id = loop {
            let candidate = self.ids.next_id();
            if !sessions.contains_key(&candidate) {
                break candidate;
            }
        };
        let (session, event) = start_session(&self.scenarios, id.clone(), user_ref, scenario_id, now)?;
        self.append([event.to_new_event()])?;
        let transcript = Transcript::new(id.clone());
        sessions.insert(
            id,
            Arc::new(Mutex::new(SessionSlot {
                session: session.clone(),
                transcript,
            })),
        );
        Ok(session)
    }

    pub fn session(&self, session_id: &str) -> Result<Session, ApiError> {
        let slot = self.slot(session_id)?;
        let session = lock(&slot).session.clone();
        Ok(session)
    }

    /// Runs one session operation on a copy, appends its events, then
    /// publishes the copy. A failed operation or append leaves the session
    /// untouched.
    pub fn mutate<F>(&self, session_id: &str, op: F) -> Result<Session, ApiError>
    where
        F: FnOnce(&mut Session, &Scenario, DateTime<Utc>) -> Result<Vec<SessionEvent>, SessionError>,
    {
        let slot = self.slot(session_id)?;
        let mut slot = lock(&slot);
        let scenario = self.scenario_for(&slot.session)?;
        let mut next = slot.session.clone();
        let events = op(&mut next, scenario, self.clock.now())?;
        self.append(events.iter().map(SessionEvent::to_new_event))?;
        slot.session = next;
        Ok(slot.session.clone())
    }

    pub fn selected(&self, session_id: &str) -> Result<SelectedItems, ApiError> {
        let session = self.session(session_id)?;
        let products = session
            .selected_items()
            .iter()
            .map(|id| self.catalog.get_product(id).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SelectedItems {
            session_id: session.id.clone(),
            product_ids: session.selected_items.clone(),
            products,
        })
    }

    pub fn summary(&self, session_id: &str) -> Result<Summary, ApiError> {
        Ok(self.session(session_id)?.summary_view(&self.catalog)?)
    }

    /// Builds a comparison for the session and logs it.
    pub fn compare(&self, session_id: &str, product_ids: &[String], basis: Basis) -> Result<ComparisonTable, ApiError> {
        self.slot(session_id)?;
        let products = product_ids
            .iter()
            .map(|id| self.catalog.get_product(id))
            .collect::<Result<Vec<_>, _>>()?;
        let table = build_comparison(&products, basis)?;
        self.append([NewEvent::new(
            session_id,
            self.clock.now(),
            EventKind::ComparisonBuilt,
            json!({ "product_ids": product_ids, "basis": basis }),
        )])?;
        Ok(table)
    }

    /// Logs that a participant opened a scenario or product page.
    pub fn record_view(&self, session_id: &str, kind: EventKind, payload: Value) -> Result<(), ApiError> {
        self.slot(session_id)?;
        self.append([NewEvent::new(session_id, self.clock.now(), kind, payload)])?;
        Ok(())
    }

    /// Asks the assistant. The provider is called without holding the
    /// session, so other requests for it proceed meanwhile; a second ask for
    /// the same session is refused while this one runs.
    pub fn ask(&self, session_id: &str, question: &str, focus: Option<&str>) -> Result<ChatExchange, ApiError> {
        let slot = self.slot(session_id)?;
        let scenario_id = lock(&slot).session.scenario_id.clone();
        let scenario = self
            .scenarios
            .get(&scenario_id)
            .ok_or_else(|| ApiError::from(SessionError::UnknownScenario(scenario_id.clone())))?;
        let context = assemble_context(scenario, &self.catalog, focus, &self.config.provider.system_preamble)?;
        let outcome = self
            .assistant
            .ask(session_id, &context, question, focus, || self.clock.now());
        match outcome {
            Ok(exchange) => {
                let mut slot = lock(&slot);
                self.append([NewEvent::new(
                    session_id,
                    exchange.at,
                    EventKind::AiQuestion,
                    json!({
                        "outcome": "answered",
                        "question": exchange.question,
                        "answer": exchange.answer,
                        "provider_id": exchange.provider_id,
                        "context_digest": exchange.context_digest,
                        "focus_product_id": exchange.focus_product_id,
                    }),
                )])?;
                slot.transcript.push(exchange.clone());
                Ok(exchange)
            }
            Err(err) => {
                let api = ApiError::from(err);
                if matches!(api.code, "provider_unavailable" | "provider_rejected") {
                    let failure = NewEvent::new(
                        session_id,
                        self.clock.now(),
                        EventKind::AiQuestion,
                        json!({
                            "outcome": "failed",
                            "question": question,
                            "error": api.code,
                            "focus_product_id": focus,
                        }),
                    );
                    if let Err(log_err) = self.append([failure]) {
                        tracing::warn!(code = log_err.code, "could not log failed ask");
                    }
                }
                Err(api)
            }
        }
    }

    pub fn transcript(&self, session_id: &str) -> Result<Transcript, ApiError> {
        let slot = self.slot(session_id)?;
        let transcript = lock(&slot).transcript.clone();
        Ok(transcript)
    }

    /// Empties the visible transcript. Earlier exchanges stay in the log.
    pub fn clear_chat(&self, session_id: &str) -> Result<Transcript, ApiError> {
        let slot = self.slot(session_id)?;
        let mut slot = lock(&slot);
        self.append([NewEvent::new(
            session_id,
            self.clock.now(),
            EventKind::AiCleared,
            json!({ "cleared": slot.transcript.len() }),
        )])?;
        slot.transcript.clear();
        Ok(slot.transcript.clone())
    }

    pub fn submit_survey(&self, response: SurveyResponse) -> Result<SurveyResponse, ApiError> {
        response.validate()?;
        let mut store = lock(&self.surveys);
        self.append([response.to_event(self.clock.now())])?;
        store.ingest(response.clone())?;
        Ok(response)
    }

    pub fn survey_export_csv(&self) -> Vec<u8> {
        lock(&self.surveys).export_csv()
    }

    /// Distributions, percentages, bands and descriptive statistics for both
    /// survey questions. Statistics are `null` until a response arrives.
    pub fn analytics(&self) -> Value {
        let store = lock(&self.surveys);
        json!({
            "responses": store.responses().len(),
            "usefulness": rating_report(store.usefulness()),
            "ease": rating_report(store.ease()),
        })
    }
}

fn rating_report(d: &RatingDistribution) -> Value {
    let high = [8, 9, 10].into_iter().collect();
    let low = (1..=5).collect();
    json!({
        "distribution": d,
        "percentages": distribution_percentages(d).ok(),
        "stats": descriptive_stats(d).ok(),
        "share_8_to_10": band_share(d, &high).ok(),
        "share_below_6": band_share(d, &low).ok(),
    })
}
