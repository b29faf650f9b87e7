//! Healthy Choice: a scenario-based nutrition-literacy simulation.
//!
//! A learner plays a health advisor: reads a client scenario, highlights the
//! client's requirements, assesses real products, asks an AI assistant,
//! compares candidates side by side and submits a justified recommendation.
//! The crate also carries the survey analytics used to evaluate the
//! platform.
//!
//! Modules map one-to-one onto the moving parts:
//!
//! - [`catalog`]: product database and nutrient normalisation
//! - [`scenario`]: client scenarios and highlight spans
//! - [`session`]: the event-sourced learning-session state machine
//! - [`compare`]: side-by-side comparison tables
//! - [`assistant`]: AI assistant gateway and transcripts
//! - [`analytics`]: event log, survey capture and descriptive statistics
//! - [`service`]: configuration, persistence and the JSON request router

pub mod analytics;
pub mod assistant;
pub mod catalog;
pub mod compare;
pub mod decimal;
pub mod scenario;
pub mod service;
pub mod session;

pub use analytics::{
    band_share, descriptive_stats, distribution_percentages, AnalyticsError, DescriptiveStats, EventKind, EventLog,
    EventRecord, RatingDistribution, SurveyResponse, SurveyStore,
};
pub use assistant::{
    Assistant, AssistantError, ChatContext, ChatExchange, ChatProvider, ProviderConfig, ProviderKind, StubProvider,
    Transcript,
};
pub use catalog::{load_catalog, normalize_amount, Basis, CatalogError, Product, ProductCatalog};
pub use compare::{build_comparison, mark_extremes, CompareError, ComparisonRow, ComparisonTable};
pub use decimal::Decimal;
pub use scenario::{load_scenarios, HighlightSpan, Scenario, ScenarioError, ScenarioSet, SpanError};
pub use service::{ApiError, ApiRequest, ApiResponse, App, BootOptions, ServiceConfig, ServiceError};
pub use session::{start_session, InitialDecision, Phase, Session, SessionError, SuitabilityRating, Summary};
