//! One learner's pass through one scenario.
//!
//! Sessions are event-sourced. Every mutating operation validates its
//! inputs, emits one or more [`SessionEvent`]s and folds them through
//! [`Session::apply`], which is the only place state changes. Replaying the
//! same events into an empty session therefore reproduces it exactly.

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytics::{EventKind, EventRecord, NewEvent};
use crate::catalog::{Product, ProductCatalog};
use crate::scenario::{HighlightSpan, Scenario, ScenarioSet, SpanError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("session is completed and can no longer change")]
    SessionCompleted,
    #[error(transparent)]
    InvalidSpan(#[from] SpanError),
    #[error("highlight [{start}, {end}) is already in the panel")]
    DuplicateHighlight { start: usize, end: usize },
    #[error("highlight index {index} out of range (panel holds {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("product `{0}` is not part of this scenario")]
    IneligibleProduct(String),
    #[error("product `{0}` is not currently selected")]
    NotInSelectedSet(String),
    #[error("justification must contain non-whitespace text")]
    BlankJustification,
    #[error("no recommendation has been set")]
    MissingRecommendation,
    #[error("no justification has been submitted")]
    MissingJustification,
    #[error("session history is inconsistent: {0}")]
    CorruptHistory(String),
}

/// Self-regulated learning phase. Ordered; a session only moves forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Forethought,
    Performance,
    SelfReflection,
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuitabilityRating {
    NotAppropriate,
    Appropriate,
    HighlyAppropriate,
    NotSure,
}

impl SuitabilityRating {
    pub const ALL: [SuitabilityRating; 4] = [
        SuitabilityRating::NotAppropriate,
        SuitabilityRating::Appropriate,
        SuitabilityRating::HighlyAppropriate,
        SuitabilityRating::NotSure,
    ];

    /// Label shown on the assessment form.
    pub fn label(self) -> &'static str {
        match self {
            SuitabilityRating::NotAppropriate => "Not Appropriate",
            SuitabilityRating::Appropriate => "Appropriate",
            SuitabilityRating::HighlyAppropriate => "Highly Appropriate",
            SuitabilityRating::NotSure => "Not Sure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDecision {
    Select,
    NotSelect,
}

impl InitialDecision {
    pub fn label(self) -> &'static str {
        match self {
            InitialDecision::Select => "Select",
            InitialDecision::NotSelect => "Not Select",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    pub product_id: String,
    pub rating: SuitabilityRating,
    pub decision: InitialDecision,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Session {
    pub id: String,
    pub user_ref: String,
    pub scenario_id: String,
    /// Furthest phase reached.
    pub phase: Phase,
    /// The tracking panel.
    pub highlights: Vec<HighlightSpan>,
    pub assessments: IndexMap<String, Assessment>,
    /// Currently selected products in the order they became selected.
    pub selected_items: Vec<String>,
    pub recommendation: Option<String>,
    pub justification: Option<String>,
    pub created_at: DateTime<Utc>,
    pub finalized_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub highlights: Vec<HighlightSpan>,
    pub recommendation_product: Product,
    pub justification: Option<String>,
}

/// A state change, as recorded in the event log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionChange {
    Started {
        user_ref: String,
        scenario_id: String,
    },
    HighlightAdded(HighlightSpan),
    HighlightRemoved {
        index: usize,
    },
    AssessmentRecorded {
        product_id: String,
        rating: SuitabilityRating,
        decision: InitialDecision,
    },
    /// `None` clears the recommendation after its product was deselected.
    RecommendationSet {
        product_id: Option<String>,
    },
    JustificationSubmitted {
        text: String,
    },
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionEvent {
    pub session_id: String,
    pub at: DateTime<Utc>,
    pub change: SessionChange,
}

pub fn start_session(
    scenarios: &ScenarioSet,
    session_id: impl Into<String>,
    user_ref: impl Into<String>,
    scenario_id: &str,
    at: DateTime<Utc>,
) -> Result<(Session, SessionEvent), SessionError> {
    let scenario = scenarios
        .get(scenario_id)
        .ok_or_else(|| SessionError::UnknownScenario(scenario_id.to_string()))?;
    let event = SessionEvent {
        session_id: session_id.into(),
        at,
        change: SessionChange::Started {
            user_ref: user_ref.into(),
            scenario_id: scenario.id.clone(),
        },
    };
    let session = Session::from_start(&event)?;
    Ok((session, event))
}

impl Session {
    /// Builds the initial state from a `Started` event.
    pub fn from_start(event: &SessionEvent) -> Result<Session, SessionError> {
        match &event.change {
            SessionChange::Started { user_ref, scenario_id } => Ok(Session {
                id: event.session_id.clone(),
                user_ref: user_ref.clone(),
                scenario_id: scenario_id.clone(),
                phase: Phase::Forethought,
                highlights: Vec::new(),
                assessments: IndexMap::new(),
                selected_items: Vec::new(),
                recommendation: None,
                justification: None,
                created_at: event.at,
                finalized_at: None,
            }),
            other => Err(SessionError::CorruptHistory(format!(
                "session `{}` begins with {other:?} instead of a start",
                event.session_id
            ))),
        }
    }

    pub fn is_completed(&self) -> bool {
        self.phase == Phase::Completed
    }

    fn ensure_open(&self) -> Result<(), SessionError> {
        if self.is_completed() {
            Err(SessionError::SessionCompleted)
        } else {
            Ok(())
        }
    }

    fn event(&self, at: DateTime<Utc>, change: SessionChange) -> SessionEvent {
        SessionEvent {
            session_id: self.id.clone(),
            at,
            change,
        }
    }

    fn commit(&mut self, events: Vec<SessionEvent>) -> Result<Vec<SessionEvent>, SessionError> {
        for e in &events {
            self.apply(e)?;
        }
        Ok(events)
    }

    /// Folds one event into the state. Validation belongs to the operations;
    /// this only rejects events that cannot apply to the current state.
    pub fn apply(&mut self, event: &SessionEvent) -> Result<(), SessionError> {
        let corrupt = |what: String| SessionError::CorruptHistory(format!("session `{}`: {what}", self.id));
        if event.session_id != self.id {
            return Err(corrupt(format!("event for `{}`", event.session_id)));
        }
        if self.is_completed() {
            return Err(corrupt("event after finalize".into()));
        }
        match &event.change {
            SessionChange::Started { .. } => return Err(corrupt("second start".into())),
            SessionChange::HighlightAdded(span) => self.highlights.push(span.clone()),
            SessionChange::HighlightRemoved { index } => {
                if *index >= self.highlights.len() {
                    return Err(corrupt(format!("remove of missing highlight {index}")));
                }
                self.highlights.remove(*index);
            }
            SessionChange::AssessmentRecorded {
                product_id,
                rating,
                decision,
            } => {
                let was_selected = self.selected_items.iter().any(|p| p == product_id);
                match (was_selected, decision) {
                    (false, InitialDecision::Select) => self.selected_items.push(product_id.clone()),
                    (true, InitialDecision::NotSelect) => self.selected_items.retain(|p| p != product_id),
                    _ => {}
                }
                self.assessments.insert(
                    product_id.clone(),
                    Assessment {
                        product_id: product_id.clone(),
                        rating: *rating,
                        decision: *decision,
                        at: event.at,
                    },
                );
                self.phase = self.phase.max(Phase::Performance);
            }
            SessionChange::RecommendationSet { product_id } => {
                self.recommendation = product_id.clone();
                if product_id.is_some() {
                    self.phase = self.phase.max(Phase::SelfReflection);
                }
            }
            SessionChange::JustificationSubmitted { text } => {
                self.justification = Some(text.clone());
            }
            SessionChange::Finalized => {
                self.phase = Phase::Completed;
                self.finalized_at = Some(event.at);
            }
        }
        Ok(())
    }

    pub fn add_highlight(
        &mut self,
        scenario: &Scenario,
        start: i64,
        end: i64,
        at: DateTime<Utc>,
    ) -> Result<Vec<SessionEvent>, SessionError> {
        self.ensure_open()?;
        let span = scenario.validate_span(start, end)?;
        if self
            .highlights
            .iter()
            .any(|h| h.start == span.start && h.end == span.end)
        {
            return Err(SessionError::DuplicateHighlight {
                start: span.start,
                end: span.end,
            });
        }
        let event = self.event(at, SessionChange::HighlightAdded(span));
        self.commit(vec![event])
    }

    pub fn remove_highlight(&mut self, index: usize, at: DateTime<Utc>) -> Result<Vec<SessionEvent>, SessionError> {
        self.ensure_open()?;
        if index >= self.highlights.len() {
            return Err(SessionError::IndexOutOfRange {
                index,
                len: self.highlights.len(),
            });
        }
        let event = self.event(at, SessionChange::HighlightRemoved { index });
        self.commit(vec![event])
    }

    /// Replaces the current assessment for a product. Deselecting the
    /// recommended product also clears the recommendation.
    pub fn record_assessment(
        &mut self,
        scenario: &Scenario,
        product_id: &str,
        rating: SuitabilityRating,
        decision: InitialDecision,
        at: DateTime<Utc>,
    ) -> Result<Vec<SessionEvent>, SessionError> {
        self.ensure_open()?;
        if !scenario.is_eligible(product_id) {
            return Err(SessionError::IneligibleProduct(product_id.to_string()));
        }
        let mut events = vec![self.event(
            at,
            SessionChange::AssessmentRecorded {
                product_id: product_id.to_string(),
                rating,
                decision,
            },
        )];
        if decision == InitialDecision::NotSelect && self.recommendation.as_deref() == Some(product_id) {
            events.push(self.event(at, SessionChange::RecommendationSet { product_id: None }));
        }
        self.commit(events)
    }

    pub fn selected_items(&self) -> &[String] {
        &self.selected_items
    }

    pub fn set_recommendation(
        &mut self,
        product_id: &str,
        at: DateTime<Utc>,
    ) -> Result<Vec<SessionEvent>, SessionError> {
        self.ensure_open()?;
        if !self.selected_items.iter().any(|p| p == product_id) {
            return Err(SessionError::NotInSelectedSet(product_id.to_string()));
        }
        let event = self.event(
            at,
            SessionChange::RecommendationSet {
                product_id: Some(product_id.to_string()),
            },
        );
        self.commit(vec![event])
    }

    /// Stores the text verbatim; it must contain a non-whitespace character.
    pub fn submit_justification(&mut self, text: &str, at: DateTime<Utc>) -> Result<Vec<SessionEvent>, SessionError> {
        self.ensure_open()?;
        if text.trim().is_empty() {
            return Err(SessionError::BlankJustification);
        }
        let event = self.event(at, SessionChange::JustificationSubmitted { text: text.to_string() });
        self.commit(vec![event])
    }

    pub fn finalize(&mut self, at: DateTime<Utc>) -> Result<Vec<SessionEvent>, SessionError> {
        self.ensure_open()?;
        if self.recommendation.is_none() {
            return Err(SessionError::MissingRecommendation);
        }
        if self.justification.is_none() {
            return Err(SessionError::MissingJustification);
        }
        let event = self.event(at, SessionChange::Finalized);
        self.commit(vec![event])
    }

    pub fn summary_view(&self, catalog: &ProductCatalog) -> Result<Summary, SessionError> {
        let product_id = self
            .recommendation
            .as_deref()
            .ok_or(SessionError::MissingRecommendation)?;
        let product = catalog
            .get_product(product_id)
            .map_err(|_| SessionError::IneligibleProduct(product_id.to_string()))?;
        Ok(Summary {
            highlights: self.highlights.clone(),
            recommendation_product: product.clone(),
            justification: self.justification.clone(),
        })
    }

    /// Every broken invariant, as text. Empty for a well-formed session.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(rec) = &self.recommendation {
            if !self.selected_items.contains(rec) {
                out.push(format!("recommendation `{rec}` is not selected"));
            }
            match self.assessments.get(rec) {
                Some(a) if a.decision == InitialDecision::Select => {}
                _ => out.push(format!("recommendation `{rec}` lacks a Select assessment")),
            }
        }
        let expected: Vec<&String> = self
            .assessments
            .values()
            .filter(|a| a.decision == InitialDecision::Select)
            .map(|a| &a.product_id)
            .collect();
        if expected.len() != self.selected_items.len() || !self.selected_items.iter().all(|p| expected.contains(&p)) {
            out.push("selected items disagree with current assessments".into());
        }
        if self.is_completed() {
            if !self.justification.as_deref().is_some_and(|t| !t.trim().is_empty()) {
                out.push("completed without a non-blank justification".into());
            }
            if self.recommendation.is_none() {
                out.push("completed without a recommendation".into());
            }
        }
        if self.finalized_at.is_some() != self.is_completed() {
            out.push("finalized_at set iff completed violated".into());
        }
        for (i, a) in self.highlights.iter().enumerate() {
            if a.start >= a.end {
                out.push(format!("highlight {i} is empty or inverted"));
            }
            if self.highlights[..i]
                .iter()
                .any(|b| b.start == a.start && b.end == a.end)
            {
                out.push(format!("highlight {i} duplicates an earlier one"));
            }
        }
        out
    }
}

fn rating_from(value: &Value) -> Option<SuitabilityRating> {
    serde_json::from_value(value.clone()).ok()
}

fn decision_from(value: &Value) -> Option<InitialDecision> {
    serde_json::from_value(value.clone()).ok()
}

impl SessionEvent {
    pub fn kind(&self) -> EventKind {
        match self.change {
            SessionChange::Started { .. } => EventKind::ScenarioViewed,
            SessionChange::HighlightAdded(_) => EventKind::HighlightAdded,
            SessionChange::HighlightRemoved { .. } => EventKind::HighlightRemoved,
            SessionChange::AssessmentRecorded { .. } => EventKind::AssessmentRecorded,
            SessionChange::RecommendationSet { .. } => EventKind::RecommendationSet,
            SessionChange::JustificationSubmitted { .. } => EventKind::JustificationSubmitted,
            SessionChange::Finalized => EventKind::SessionFinalized,
        }
    }

    /// Log form. Session creation is a `scenario_viewed` record carrying
    /// `"start": true`.
    pub fn to_new_event(&self) -> NewEvent {
        let payload = match &self.change {
            SessionChange::Started { user_ref, scenario_id } => json!({
                "start": true,
                "user_ref": user_ref,
                "scenario_id": scenario_id,
            }),
            SessionChange::HighlightAdded(span) => json!({
                "start": span.start,
                "end": span.end,
                "extracted": span.extracted,
            }),
            SessionChange::HighlightRemoved { index } => json!({ "index": index }),
            SessionChange::AssessmentRecorded {
                product_id,
                rating,
                decision,
            } => json!({
                "product_id": product_id,
                "rating": rating,
                "decision": decision,
            }),
            SessionChange::RecommendationSet { product_id } => match product_id {
                Some(id) => json!({ "product_id": id }),
                None => json!({ "product_id": null, "reason": "deselected" }),
            },
            SessionChange::JustificationSubmitted { text } => json!({ "text": text }),
            SessionChange::Finalized => json!({}),
        };
        NewEvent::new(self.session_id.clone(), self.at, self.kind(), payload)
    }

    /// Reads a session state change back from a log record. Records that
    /// carry telemetry only (views, comparisons, chat) yield `None`.
    pub fn from_record(record: &EventRecord) -> Result<Option<SessionEvent>, SessionError> {
        let p = &record.payload;
        let bad =
            |what: &str| SessionError::CorruptHistory(format!("record {} ({:?}): {what}", record.seq, record.kind));
        let text = |key: &str| p.get(key).and_then(Value::as_str).map(str::to_string);
        let index = |key: &str| p.get(key).and_then(Value::as_u64).map(|v| v as usize);
        let change = match record.kind {
            EventKind::ScenarioViewed => {
                if p.get("start").and_then(Value::as_bool) != Some(true) {
                    return Ok(None);
                }
                SessionChange::Started {
                    user_ref: text("user_ref").ok_or_else(|| bad("user_ref"))?,
                    scenario_id: text("scenario_id").ok_or_else(|| bad("scenario_id"))?,
                }
            }
            EventKind::HighlightAdded => SessionChange::HighlightAdded(HighlightSpan {
                start: index("start").ok_or_else(|| bad("start"))?,
                end: index("end").ok_or_else(|| bad("end"))?,
                extracted: text("extracted").ok_or_else(|| bad("extracted"))?,
            }),
            EventKind::HighlightRemoved => SessionChange::HighlightRemoved {
                index: index("index").ok_or_else(|| bad("index"))?,
            },
            EventKind::AssessmentRecorded => SessionChange::AssessmentRecorded {
                product_id: text("product_id").ok_or_else(|| bad("product_id"))?,
                rating: p.get("rating").and_then(rating_from).ok_or_else(|| bad("rating"))?,
                decision: p
                    .get("decision")
                    .and_then(decision_from)
                    .ok_or_else(|| bad("decision"))?,
            },
            EventKind::RecommendationSet => SessionChange::RecommendationSet {
                product_id: text("product_id"),
            },
            EventKind::JustificationSubmitted => SessionChange::JustificationSubmitted {
                text: text("text").ok_or_else(|| bad("text"))?,
            },
            EventKind::SessionFinalized => SessionChange::Finalized,
            EventKind::ProductViewed
            | EventKind::ComparisonBuilt
            | EventKind::AiQuestion
            | EventKind::AiCleared
            | EventKind::SurveySubmitted => return Ok(None),
        };
        Ok(Some(SessionEvent {
            session_id: record.session_id.clone(),
            at: record.at,
            change,
        }))
    }
}

/// Rebuilds every session found in a log, in creation order.
pub fn replay_sessions<'a>(
    records: impl IntoIterator<Item = &'a EventRecord>,
) -> Result<IndexMap<String, Session>, SessionError> {
    let mut sessions: IndexMap<String, Session> = IndexMap::new();
    for record in records {
        let Some(event) = SessionEvent::from_record(record)? else {
            continue;
        };
        match &event.change {
            SessionChange::Started { .. } => {
                if sessions.contains_key(&event.session_id) {
                    return Err(SessionError::CorruptHistory(format!(
                        "session `{}` started twice",
                        event.session_id
                    )));
                }
                sessions.insert(event.session_id.clone(), Session::from_start(&event)?);
            }
            _ => {
                let session = sessions.get_mut(&event.session_id).ok_or_else(|| {
                    SessionError::CorruptHistory(format!(
                        "record {} for unknown session `{}`",
                        record.seq, event.session_id
                    ))
                })?;
                session.apply(&event)?;
            }
        }
    }
    Ok(sessions)
}
