//! Client scenarios and learner highlight spans.
//!
//! Offsets are Unicode scalar-value indices into the narrative, never byte
//! offsets.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::catalog::ProductCatalog;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario document could not be parsed: {0}")]
    Parse(String),
    #[error("scenario `{scenario}` references unknown product `{product}`")]
    UnknownProductReference { scenario: String, product: String },
    #[error("scenario id `{0}` appears more than once")]
    DuplicateScenarioId(String),
    #[error("scenario `{scenario}`: {reason}")]
    InvalidScenario { scenario: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SpanError {
    #[error("highlight span is empty")]
    EmptySpan,
    #[error("highlight span [{start}, {end}) lies outside the narrative (length {len})")]
    OutOfBounds { start: i64, end: i64, len: usize },
    #[error("highlight span start {start} is after end {end}")]
    InvertedSpan { start: i64, end: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientAttribute {
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub title: String,
    pub narrative: String,
    pub client_profile: Vec<ClientAttribute>,
    pub eligible_product_ids: Vec<String>,
    pub difficulty: u8,
}

/// A learner-selected slice of the narrative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighlightSpan {
    pub start: usize,
    pub end: usize,
    pub extracted: String,
}

impl Scenario {
    pub fn narrative_len(&self) -> usize {
        self.narrative.chars().count()
    }

    pub fn is_eligible(&self, product_id: &str) -> bool {
        self.eligible_product_ids.iter().any(|p| p == product_id)
    }

    /// Checks `[start, end)` against the narrative and extracts the slice.
    pub fn validate_span(&self, start: i64, end: i64) -> Result<HighlightSpan, SpanError> {
        let len = self.narrative_len();
        if start < 0 || end < 0 || end as u64 > len as u64 || start as u64 > len as u64 {
            return Err(SpanError::OutOfBounds { start, end, len });
        }
        if start > end {
            return Err(SpanError::InvertedSpan { start, end });
        }
        if start == end {
            return Err(SpanError::EmptySpan);
        }
        let (start, end) = (start as usize, end as usize);
        let extracted = self.narrative.chars().skip(start).take(end - start).collect();
        Ok(HighlightSpan { start, end, extracted })
    }

    fn check(&self, catalog: &ProductCatalog) -> Result<(), ScenarioError> {
        let invalid = |reason: &str| ScenarioError::InvalidScenario {
            scenario: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.id.trim().is_empty() {
            return Err(invalid("id must not be empty"));
        }
        if self.narrative.trim().is_empty() {
            return Err(invalid("narrative must not be empty"));
        }
        if !(1..=5).contains(&self.difficulty) {
            return Err(invalid("difficulty must be within 1..=5"));
        }
        if self.eligible_product_ids.is_empty() {
            return Err(invalid("at least one eligible product is required"));
        }
        for product in &self.eligible_product_ids {
            if !catalog.contains(product) {
                return Err(ScenarioError::UnknownProductReference {
                    scenario: self.id.clone(),
                    product: product.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Scenarios in presentation order; the first one is the practice scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioSet {
    scenarios: HashMap<String, Scenario>,
    ordering: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    scenarios: Vec<Scenario>,
}

#[derive(Serialize)]
struct ScenarioDocOut<'a> {
    scenarios: Vec<&'a Scenario>,
}

pub fn load_scenarios(source: &[u8], catalog: &ProductCatalog) -> Result<ScenarioSet, ScenarioError> {
    let doc: ScenarioDoc = serde_json::from_slice(source).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    if doc.scenarios.is_empty() {
        return Err(ScenarioError::Parse("empty scenario list".into()));
    }
    let mut scenarios = HashMap::with_capacity(doc.scenarios.len());
    let mut ordering = Vec::with_capacity(doc.scenarios.len());
    for scenario in doc.scenarios {
        scenario.check(catalog)?;
        if scenarios.contains_key(&scenario.id) {
            return Err(ScenarioError::DuplicateScenarioId(scenario.id));
        }
        ordering.push(scenario.id.clone());
        scenarios.insert(scenario.id.clone(), scenario);
    }
    Ok(ScenarioSet { scenarios, ordering })
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.ordering.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordering.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Scenario> {
        self.scenarios.get(id)
    }

    pub fn ordering(&self) -> &[String] {
        &self.ordering
    }

    pub fn practice(&self) -> &Scenario {
        &self.scenarios[&self.ordering[0]]
    }

    /// Scenarios in presentation order.
    pub fn iter(&self) -> impl Iterator<Item = &Scenario> {
        self.ordering.iter().map(|id| &self.scenarios[id])
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(&ScenarioDocOut {
            scenarios: self.iter().collect(),
        })
        .expect("scenario serialization is infallible")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn catalog() -> ProductCatalog {
        let product = |id: &str| {
            json!({
                "id": id, "name": id, "category": "sports drink",
                "serving": {"amount": 500, "unit": "ml"},
                "nutrition": [{"key": "sugar", "amount": 21, "unit": "g"}],
                "ingredients": [], "claims": [], "image_refs": []
            })
        };
        let bytes = serde_json::to_vec(&json!({"products": [product("p1"), product("p2")]})).unwrap();
        crate::catalog::load_catalog(&bytes).unwrap()
    }

    fn scenario(id: &str, products: &[&str]) -> serde_json::Value {
        json!({
            "id": id,
            "title": format!("Scenario {id}"),
            "narrative": "needs low sugar and high electrolytes",
            "client_profile": [{"key": "age", "value": "34"}],
            "eligible_product_ids": products,
            "difficulty": 2
        })
    }

    fn load(scenarios: Vec<serde_json::Value>) -> Result<ScenarioSet, ScenarioError> {
        let bytes = serde_json::to_vec(&json!({ "scenarios": scenarios })).unwrap();
        load_scenarios(&bytes, &catalog())
    }

    #[test]
    fn loads_in_document_order() {
        let set = load(vec![
            scenario("practice", &["p1"]),
            scenario("main-1", &["p1", "p2"]),
            scenario("main-2", &["p2"]),
        ])
        .unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.ordering(), ["practice", "main-1", "main-2"]);
        assert_eq!(set.practice().id, "practice");
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(
            load(vec![scenario("s", &["nope"])]),
            Err(ScenarioError::UnknownProductReference { .. })
        ));
        assert!(matches!(load(vec![]), Err(ScenarioError::Parse(_))));
        assert_eq!(
            load(vec![scenario("s", &["p1"]), scenario("s", &["p2"])]),
            Err(ScenarioError::DuplicateScenarioId("s".into()))
        );
        let mut bad = scenario("s", &["p1"]);
        bad["difficulty"] = json!(6);
        assert!(matches!(load(vec![bad]), Err(ScenarioError::InvalidScenario { .. })));
        let mut bad = scenario("s", &["p1"]);
        bad["narrative"] = json!("   ");
        assert!(matches!(load(vec![bad]), Err(ScenarioError::InvalidScenario { .. })));
        assert!(matches!(
            load(vec![scenario("s", &[])]),
            Err(ScenarioError::InvalidScenario { .. })
        ));
    }

    fn sample() -> Scenario {
        serde_json::from_value(scenario("s", &["p1"])).unwrap()
    }

    #[test]
    fn span_extracts_substring() {
        let span = sample().validate_span(6, 15).unwrap();
        assert_eq!(span.extracted, "low sugar");
    }

    #[test]
    fn span_errors() {
        let s = sample();
        let len = s.narrative_len() as i64;
        assert_eq!(s.validate_span(4, 4), Err(SpanError::EmptySpan));
        assert!(matches!(
            s.validate_span(0, len + 1),
            Err(SpanError::OutOfBounds { .. })
        ));
        assert!(matches!(s.validate_span(-1, 3), Err(SpanError::OutOfBounds { .. })));
        assert!(matches!(s.validate_span(9, 3), Err(SpanError::InvertedSpan { .. })));
        assert!(s.validate_span(0, len).is_ok());
    }

    #[test]
    fn span_counts_scalar_values() {
        let mut s = sample();
        s.narrative = "café naïve 🍊 drink".into();
        let span = s.validate_span(5, 12).unwrap();
        assert_eq!(span.extracted, "naïve 🍊");
        assert!(s.validate_span(0, 18).is_ok());
        assert!(s.validate_span(0, 19).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn valid_spans_match_slice(text in "\\PC{1,40}", a in 0usize..48, b in 0usize..48) {
                let mut s = sample();
                s.narrative = text.clone();
                let chars: Vec<char> = text.chars().collect();
                match s.validate_span(a as i64, b as i64) {
                    Ok(span) => {
                        prop_assert!(a < b && b <= chars.len());
                        let expect: String = chars[a..b].iter().collect();
                        prop_assert_eq!(&span.extracted, &expect);
                        let again = s.validate_span(span.start as i64, span.end as i64).unwrap();
                        prop_assert_eq!(again, span);
                    }
                    Err(_) => prop_assert!(!(a < b && b <= chars.len())),
                }
            }
        }
    }
}
