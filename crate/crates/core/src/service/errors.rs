//! Stable machine codes for every error the service can surface.

use serde::Serialize;

use crate::analytics::AnalyticsError;
use crate::assistant::AssistantError;
use crate::catalog::CatalogError;
use crate::compare::CompareError;
use crate::scenario::{ScenarioError, SpanError};
use crate::session::SessionError;

use super::ServiceError;

/// Error body returned to clients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    pub code: &'static str,
    pub message: String,
    pub status: u16,
}

impl ApiError {
    pub fn new(code: &'static str, status: u16, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            status,
        }
    }

    pub fn not_found(path: &str) -> Self {
        ApiError::new("not_found", 404, format!("no route for `{path}`"))
    }

    pub fn method_not_allowed(method: &str, path: &str) -> Self {
        ApiError::new(
            "method_not_allowed",
            405,
            format!("{method} is not supported on `{path}`"),
        )
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new("bad_request", 400, message)
    }

    pub fn unknown_session(id: &str) -> Self {
        ApiError::new("unknown_session", 404, format!("unknown session `{id}`"))
    }
}

/// One row of the code table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeEntry {
    pub module: &'static str,
    pub variant: &'static str,
    pub code: &'static str,
    pub status: u16,
}

const fn entry(module: &'static str, variant: &'static str, code: &'static str, status: u16) -> CodeEntry {
    CodeEntry {
        module,
        variant,
        code,
        status,
    }
}

/// Every module error and the code it maps to. Codes are part of the public
/// interface and must not change between releases.
pub const ERROR_CODES: &[CodeEntry] = &[
    entry("catalog", "Parse", "catalog_parse_error", 500),
    entry("catalog", "DuplicateProductId", "duplicate_product_id", 500),
    entry("catalog", "EmptyCatalog", "empty_catalog", 500),
    entry("catalog", "InvalidNutrient", "invalid_nutrient", 500),
    entry("catalog", "InvalidProduct", "invalid_product", 500),
    entry("catalog", "UnknownProduct", "unknown_product", 404),
    entry("scenario", "Parse", "scenario_parse_error", 500),
    entry("scenario", "UnknownProductReference", "unknown_product_reference", 500),
    entry("scenario", "DuplicateScenarioId", "duplicate_scenario_id", 500),
    entry("scenario", "InvalidScenario", "invalid_scenario", 500),
    entry("span", "EmptySpan", "empty_span", 422),
    entry("span", "OutOfBounds", "span_out_of_bounds", 422),
    entry("span", "InvertedSpan", "inverted_span", 422),
    entry("session", "UnknownScenario", "unknown_scenario", 404),
    entry("session", "SessionCompleted", "session_completed", 409),
    entry("session", "InvalidSpan", "invalid_span", 422),
    entry("session", "DuplicateHighlight", "duplicate_highlight", 409),
    entry("session", "IndexOutOfRange", "index_out_of_range", 404),
    entry("session", "IneligibleProduct", "ineligible_product", 422),
    entry("session", "NotInSelectedSet", "not_in_selected_set", 409),
    entry("session", "BlankJustification", "blank_justification", 422),
    entry("session", "MissingRecommendation", "missing_recommendation", 409),
    entry("session", "MissingJustification", "missing_justification", 409),
    entry("session", "CorruptHistory", "corrupt_history", 500),
    entry("compare", "EmptyProductList", "empty_product_list", 422),
    entry("compare", "MixedServingUnits", "mixed_serving_units", 422),
    entry("compare", "DuplicateProduct", "duplicate_product", 422),
    entry("compare", "IncompatibleUnits", "incompatible_units", 422),
    entry("assistant", "EmptyQuestion", "empty_question", 422),
    entry("assistant", "ProviderUnavailable", "provider_unavailable", 503),
    entry("assistant", "ProviderRejected", "provider_rejected", 502),
    entry("assistant", "BusyAsking", "busy_asking", 429),
    entry("assistant", "UnknownProduct", "unknown_product", 404),
    entry("assistant", "IneligibleProduct", "ineligible_product", 422),
    entry("analytics", "StorageFailure", "storage_failure", 500),
    entry("analytics", "EmptyDistribution", "empty_distribution", 409),
    entry("analytics", "RatingOutOfRange", "rating_out_of_range", 422),
    entry("service", "Config", "config_error", 500),
    entry("service", "Catalog", "catalog_error", 500),
    entry("service", "Scenario", "scenario_error", 500),
    entry("service", "Storage", "storage_failure", 500),
    entry("service", "History", "corrupt_history", 500),
    entry("router", "NotFound", "not_found", 404),
    entry("router", "MethodNotAllowed", "method_not_allowed", 405),
    entry("router", "BadRequest", "bad_request", 400),
    entry("router", "UnknownSession", "unknown_session", 404),
];

fn lookup(module: &str, variant: &str) -> CodeEntry {
    *ERROR_CODES
        .iter()
        .find(|e| e.module == module && e.variant == variant)
        .unwrap_or_else(|| panic!("no error code for {module}::{variant}"))
}

/// Maps a module error onto its table row.
pub trait CodedError: std::fmt::Display {
    fn module(&self) -> &'static str;
    fn variant(&self) -> &'static str;

    fn code_entry(&self) -> CodeEntry {
        lookup(self.module(), self.variant())
    }

    fn to_api_error(&self) -> ApiError {
        let entry = self.code_entry();
        ApiError::new(entry.code, entry.status, self.to_string())
    }
}

impl CodedError for CatalogError {
    fn module(&self) -> &'static str {
        "catalog"
    }
    fn variant(&self) -> &'static str {
        match self {
            CatalogError::Parse(_) => "Parse",
            CatalogError::DuplicateProductId(_) => "DuplicateProductId",
            CatalogError::EmptyCatalog => "EmptyCatalog",
            CatalogError::InvalidNutrient { .. } => "InvalidNutrient",
            CatalogError::InvalidProduct { .. } => "InvalidProduct",
            CatalogError::UnknownProduct(_) => "UnknownProduct",
        }
    }
}

impl CodedError for ScenarioError {
    fn module(&self) -> &'static str {
        "scenario"
    }
    fn variant(&self) -> &'static str {
        match self {
            ScenarioError::Parse(_) => "Parse",
            ScenarioError::UnknownProductReference { .. } => "UnknownProductReference",
            ScenarioError::DuplicateScenarioId(_) => "DuplicateScenarioId",
            ScenarioError::InvalidScenario { .. } => "InvalidScenario",
        }
    }
}

impl CodedError for SpanError {
    fn module(&self) -> &'static str {
        "span"
    }
    fn variant(&self) -> &'static str {
        match self {
            SpanError::EmptySpan => "EmptySpan",
            SpanError::OutOfBounds { .. } => "OutOfBounds",
            SpanError::InvertedSpan { .. } => "InvertedSpan",
        }
    }
}

impl CodedError for SessionError {
    fn module(&self) -> &'static str {
        "session"
    }
    fn variant(&self) -> &'static str {
        match self {
            SessionError::UnknownScenario(_) => "UnknownScenario",
            SessionError::SessionCompleted => "SessionCompleted",
            SessionError::InvalidSpan(_) => "InvalidSpan",
            SessionError::DuplicateHighlight { .. } => "DuplicateHighlight",
            SessionError::IndexOutOfRange { .. } => "IndexOutOfRange",
            SessionError::IneligibleProduct(_) => "IneligibleProduct",
            SessionError::NotInSelectedSet(_) => "NotInSelectedSet",
            SessionError::BlankJustification => "BlankJustification",
            SessionError::MissingRecommendation => "MissingRecommendation",
            SessionError::MissingJustification => "MissingJustification",
            SessionError::CorruptHistory(_) => "CorruptHistory",
        }
    }

    // Span problems surface with the span's own, more specific code.
    fn to_api_error(&self) -> ApiError {
        match self {
            SessionError::InvalidSpan(span) => span.to_api_error(),
            other => {
                let entry = other.code_entry();
                ApiError::new(entry.code, entry.status, other.to_string())
            }
        }
    }
}

impl CodedError for CompareError {
    fn module(&self) -> &'static str {
        "compare"
    }
    fn variant(&self) -> &'static str {
        match self {
            CompareError::EmptyProductList => "EmptyProductList",
            CompareError::MixedServingUnits => "MixedServingUnits",
            CompareError::DuplicateProduct(_) => "DuplicateProduct",
            CompareError::IncompatibleUnits { .. } => "IncompatibleUnits",
        }
    }
}

impl CodedError for AssistantError {
    fn module(&self) -> &'static str {
        "assistant"
    }
    fn variant(&self) -> &'static str {
        match self {
            AssistantError::EmptyQuestion => "EmptyQuestion",
            AssistantError::ProviderUnavailable(_) => "ProviderUnavailable",
            AssistantError::ProviderRejected(_) => "ProviderRejected",
            AssistantError::BusyAsking => "BusyAsking",
            AssistantError::UnknownProduct(_) => "UnknownProduct",
            AssistantError::IneligibleProduct(_) => "IneligibleProduct",
        }
    }
}

impl CodedError for AnalyticsError {
    fn module(&self) -> &'static str {
        "analytics"
    }
    fn variant(&self) -> &'static str {
        match self {
            AnalyticsError::StorageFailure(_) => "StorageFailure",
            AnalyticsError::EmptyDistribution => "EmptyDistribution",
            AnalyticsError::RatingOutOfRange { .. } => "RatingOutOfRange",
        }
    }
}

impl CodedError for ServiceError {
    fn module(&self) -> &'static str {
        "service"
    }
    fn variant(&self) -> &'static str {
        match self {
            ServiceError::Config(_) => "Config",
            ServiceError::Catalog(_) => "Catalog",
            ServiceError::Scenario(_) => "Scenario",
            ServiceError::Storage(_) => "Storage",
            ServiceError::History(_) => "History",
        }
    }
}

macro_rules! into_api_error {
    ($($ty:ty),*) => {
        $(impl From<$ty> for ApiError {
            fn from(err: $ty) -> Self {
                err.to_api_error()
            }
        })*
    };
}

into_api_error!(
    CatalogError,
    ScenarioError,
    SpanError,
    SessionError,
    CompareError,
    AssistantError,
    AnalyticsError,
    ServiceError
);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::NutrientUnit;
    use std::collections::{HashMap, HashSet};

    /// One value of every variant of every module error.
    fn every_error() -> Vec<Box<dyn CodedError>> {
        vec![
            Box::new(CatalogError::Parse("x".into())),
            Box::new(CatalogError::DuplicateProductId("x".into())),
            Box::new(CatalogError::EmptyCatalog),
            Box::new(CatalogError::InvalidNutrient {
                product: "p".into(),
                key: "k".into(),
                reason: "r".into(),
            }),
            Box::new(CatalogError::InvalidProduct {
                product: "p".into(),
                reason: "r".into(),
            }),
            Box::new(CatalogError::UnknownProduct("x".into())),
            Box::new(ScenarioError::Parse("x".into())),
            Box::new(ScenarioError::UnknownProductReference {
                scenario: "s".into(),
                product: "p".into(),
            }),
            Box::new(ScenarioError::DuplicateScenarioId("x".into())),
            Box::new(ScenarioError::InvalidScenario {
                scenario: "s".into(),
                reason: "r".into(),
            }),
            Box::new(SpanError::EmptySpan),
            Box::new(SpanError::OutOfBounds {
                start: 0,
                end: 9,
                len: 3,
            }),
            Box::new(SpanError::InvertedSpan { start: 3, end: 1 }),
            Box::new(SessionError::UnknownScenario("x".into())),
            Box::new(SessionError::SessionCompleted),
            Box::new(SessionError::InvalidSpan(SpanError::EmptySpan)),
            Box::new(SessionError::DuplicateHighlight { start: 0, end: 1 }),
            Box::new(SessionError::IndexOutOfRange { index: 5, len: 2 }),
            Box::new(SessionError::IneligibleProduct("x".into())),
            Box::new(SessionError::NotInSelectedSet("x".into())),
            Box::new(SessionError::BlankJustification),
            Box::new(SessionError::MissingRecommendation),
            Box::new(SessionError::MissingJustification),
            Box::new(SessionError::CorruptHistory("x".into())),
            Box::new(CompareError::EmptyProductList),
            Box::new(CompareError::MixedServingUnits),
            Box::new(CompareError::DuplicateProduct("x".into())),
            Box::new(CompareError::IncompatibleUnits {
                key: "k".into(),
                first: NutrientUnit::G,
                second: NutrientUnit::Kcal,
            }),
            Box::new(AssistantError::EmptyQuestion),
            Box::new(AssistantError::ProviderUnavailable("x".into())),
            Box::new(AssistantError::ProviderRejected("x".into())),
            Box::new(AssistantError::BusyAsking),
            Box::new(AssistantError::UnknownProduct("x".into())),
            Box::new(AssistantError::IneligibleProduct("x".into())),
            Box::new(AnalyticsError::StorageFailure("x".into())),
            Box::new(AnalyticsError::EmptyDistribution),
            Box::new(AnalyticsError::RatingOutOfRange {
                field: "ease",
                value: 0,
            }),
            Box::new(ServiceError::Config("x".into())),
            Box::new(ServiceError::Catalog(CatalogError::EmptyCatalog)),
            Box::new(ServiceError::Scenario(ScenarioError::Parse("x".into()))),
            Box::new(ServiceError::Storage(AnalyticsError::StorageFailure("x".into()))),
            Box::new(ServiceError::History(SessionError::CorruptHistory("x".into()))),
        ]
    }

    #[test]
    fn every_error_has_exactly_one_row() {
        let mut seen = HashSet::new();
        for err in every_error() {
            let key = (err.module(), err.variant());
            let rows = ERROR_CODES.iter().filter(|e| (e.module, e.variant) == key).count();
            assert_eq!(rows, 1, "{key:?} must appear exactly once");
            seen.insert(key);
            let api = err.to_api_error();
            assert!(!api.code.is_empty());
            assert!((400..600).contains(&api.status));
        }
        let module_rows = ERROR_CODES.iter().filter(|e| e.module != "router").count();
        assert_eq!(seen.len(), module_rows, "table rows without a variant");
    }

    #[test]
    fn table_has_no_duplicate_rows_and_codes_are_consistent() {
        let mut rows = HashSet::new();
        let mut status_by_code: HashMap<&str, u16> = HashMap::new();
        for e in ERROR_CODES {
            assert!(rows.insert((e.module, e.variant)), "duplicate row {e:?}");
            if let Some(prev) = status_by_code.insert(e.code, e.status) {
                assert_eq!(prev, e.status, "code {} mapped to two statuses", e.code);
            }
            assert!(e.code.chars().all(|c| c.is_ascii_lowercase() || c == '_'));
        }
    }

    #[test]
    fn named_mappings() {
        assert_eq!(SessionError::MissingJustification.to_api_error().status, 409);
        assert_eq!(
            SessionError::MissingJustification.to_api_error().code,
            "missing_justification"
        );
        assert_eq!(
            SessionError::NotInSelectedSet("a".into()).to_api_error().code,
            "not_in_selected_set"
        );
        assert_eq!(
            SessionError::InvalidSpan(SpanError::EmptySpan).to_api_error().code,
            "empty_span"
        );
    }
}
