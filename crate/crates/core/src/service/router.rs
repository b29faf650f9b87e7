//! Transport-independent request routing.

use percent_encoding::percent_decode_str;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytics::{EventKind, SurveyResponse};
use crate::catalog::Basis;
use crate::session::{InitialDecision, SuitabilityRating};

use super::{ApiError, App};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiRequest {
    pub method: String,
    pub path: String,
    /// Raw query string, without the `?`.
    pub query: Option<String>,
    pub body: Vec<u8>,
}

impl ApiRequest {
    /// `target` may carry a query string.
    pub fn new(method: &str, target: &str, body: Vec<u8>) -> Self {
        let (path, query) = match target.split_once('?') {
            Some((p, q)) => (p.to_string(), Some(q.to_string())),
            None => (target.to_string(), None),
        };
        ApiRequest {
            method: method.to_ascii_uppercase(),
            path,
            query,
            body,
        }
    }

    pub fn get(target: &str) -> Self {
        Self::new("GET", target, Vec::new())
    }

    pub fn delete(target: &str) -> Self {
        Self::new("DELETE", target, Vec::new())
    }

    pub fn post(target: &str, body: &Value) -> Self {
        Self::new("POST", target, serde_json::to_vec(body).expect("json value serializes"))
    }

    fn query_param(&self, key: &str) -> Option<String> {
        let query = self.query.as_deref()?;
        form_urlencoded::parse(query.as_bytes())
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.into_owned())
            .filter(|v| !v.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiResponse {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl ApiResponse {
    pub fn json<T: Serialize + ?Sized>(status: u16, value: &T) -> Self {
        ApiResponse {
            status,
            content_type: "application/json",
            body: serde_json::to_vec(value).expect("response serializes"),
        }
    }

    pub fn error(err: &ApiError) -> Self {
        Self::json(err.status, err)
    }

    pub fn csv(body: Vec<u8>) -> Self {
        ApiResponse {
            status: 200,
            content_type: "text/csv; charset=utf-8",
            body,
        }
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    /// Parses the body as JSON; `Value::Null` when it is not JSON.
    pub fn json_body(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or(Value::Null)
    }
}

type Handled = Result<ApiResponse, ApiError>;

fn ok<T: Serialize>(value: &T) -> Handled {
    Ok(ApiResponse::json(200, value))
}

fn created<T: Serialize>(value: &T) -> Handled {
    Ok(ApiResponse::json(201, value))
}

fn body<T: DeserializeOwned>(req: &ApiRequest) -> Result<T, ApiError> {
    let bytes: &[u8] = if req.body.iter().all(u8::is_ascii_whitespace) {
        b"{}"
    } else {
        &req.body
    };
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn wire_name<T: Serialize>(value: T) -> String {
    serde_json::to_value(value)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Accepts the wire name (`highly_appropriate`) or the on-screen label
/// (`Highly Appropriate`).
fn parse_rating(raw: &str) -> Result<SuitabilityRating, ApiError> {
    SuitabilityRating::ALL
        .into_iter()
        .find(|r| r.label() == raw || wire_name(*r) == raw)
        .ok_or_else(|| ApiError::bad_request(format!("unknown rating `{raw}`")))
}

fn parse_decision(raw: &str) -> Result<InitialDecision, ApiError> {
    [InitialDecision::Select, InitialDecision::NotSelect]
        .into_iter()
        .find(|d| d.label() == raw || wire_name(*d) == raw)
        .ok_or_else(|| ApiError::bad_request(format!("unknown decision `{raw}`")))
}

#[derive(Deserialize)]
struct CreateSession {
    user_ref: String,
    scenario_id: String,
}

#[derive(Deserialize)]
struct HighlightBody {
    start: i64,
    end: i64,
}

#[derive(Deserialize)]
struct AssessmentBody {
    product_id: String,
    rating: String,
    decision: String,
}

#[derive(Deserialize)]
struct CompareBody {
    product_ids: Vec<String>,
    #[serde(default = "default_basis")]
    basis: Basis,
}

fn default_basis() -> Basis {
    Basis::PerServing
}

#[derive(Deserialize)]
struct AskBody {
    question: String,
    #[serde(default)]
    focus_product_id: Option<String>,
}

#[derive(Deserialize)]
struct ProductRef {
    product_id: String,
}

#[derive(Deserialize)]
struct JustificationBody {
    text: String,
}

impl App {
    /// Routes one request. Never panics on bad input; every failure becomes
    /// an error body with a stable code.
    pub fn handle(&self, req: &ApiRequest) -> ApiResponse {
        let response = self.route(req).unwrap_or_else(|err| ApiResponse::error(&err));
        tracing::debug!(method = %req.method, path = %req.path, status = response.status, "handled");
        response
    }

    fn route(&self, req: &ApiRequest) -> Handled {
        let segments: Vec<String> = req
            .path
            .split('/')
            .filter(|s| !s.is_empty())
            .map(|s| percent_decode_str(s).decode_utf8_lossy().into_owned())
            .collect();
        let parts: Vec<&str> = segments.iter().map(String::as_str).collect();
        let method = req.method.as_str();
        let wrong_method = || Err(ApiError::method_not_allowed(method, &req.path));

        match parts.as_slice() {
            ["healthz"] => match method {
                "GET" => ok(&self.healthcheck()),
                _ => wrong_method(),
            },
            ["api", "scenarios"] => match method {
                "GET" => ok(&self.scenarios().iter().collect::<Vec<_>>()),
                _ => wrong_method(),
            },
            ["api", "scenarios", id] => match method {
                "GET" => {
                    let scenario = self
                        .scenarios()
                        .get(id)
                        .ok_or_else(|| crate::session::SessionError::UnknownScenario(id.to_string()))?;
                    if let Some(session_id) = req.query_param("session_id") {
                        self.record_view(&session_id, EventKind::ScenarioViewed, json!({ "scenario_id": id }))?;
                    }
                    ok(scenario)
                }
                _ => wrong_method(),
            },
            ["api", "products"] => match method {
                "GET" => {
                    let category = req.query_param("category");
                    let keyword = req.query_param("q");
                    ok(&self.catalog().find_products(category.as_deref(), keyword.as_deref()))
                }
                _ => wrong_method(),
            },
            ["api", "products", id] => match method {
                "GET" => {
                    let product = self.catalog().get_product(id)?;
                    if let Some(session_id) = req.query_param("session_id") {
                        self.record_view(&session_id, EventKind::ProductViewed, json!({ "product_id": id }))?;
                    }
                    ok(product)
                }
                _ => wrong_method(),
            },
            ["api", "sessions"] => match method {
                "POST" => {
                    let b: CreateSession = body(req)?;
                    created(&self.create_session(&b.user_ref, &b.scenario_id)?)
                }
                _ => wrong_method(),
            },
            ["api", "sessions", id] => match method {
                "GET" => ok(&self.session(id)?),
                _ => wrong_method(),
            },
            ["api", "sessions", id, "highlights"] => match method {
                "POST" => {
                    let b: HighlightBody = body(req)?;
                    ok(&self.mutate(id, |s, sc, at| s.add_highlight(sc, b.start, b.end, at))?)
                }
                _ => wrong_method(),
            },
            ["api", "sessions", id, "highlights", index] => match method {
                "DELETE" => {
                    let index: usize = index
                        .parse()
                        .map_err(|_| ApiError::bad_request(format!("highlight index `{index}` is not a number")))?;
                    ok(&self.mutate(id, |s, _, at| s.remove_highlight(index, at))?)
                }
                _ => wrong_method(),
            },
            ["api", "sessions", id, "assessments"] => match method {
                "POST" => {
                    let b: AssessmentBody = body(req)?;
                    let rating = parse_rating(&b.rating)?;
                    let decision = parse_decision(&b.decision)?;
                    ok(&self.mutate(id, |s, sc, at| {
                        s.record_assessment(sc, &b.product_id, rating, decision, at)
                    })?)
                }
                _ => wrong_method(),
            },
            ["api", "sessions", id, "selected"] => match method {
                "GET" => ok(&self.selected(id)?),
                _ => wrong_method(),
            },
            ["api", "sessions", id, "compare"] => match method {
                "POST" => {
                    let b: CompareBody = body(req)?;
                    ok(&self.compare(id, &b.product_ids, b.basis)?)
                }
                _ => wrong_method(),
            },
            ["api", "sessions", id, "ask"] => match method {
                "POST" => {
                    let b: AskBody = body(req)?;
                    ok(&self.ask(id, &b.question, b.focus_product_id.as_deref())?)
                }
                _ => wrong_method(),
            },
            ["api", "sessions", id, "chat"] => match method {
                "GET" => ok(&self.transcript(id)?),
                "DELETE" => ok(&self.clear_chat(id)?),
                _ => wrong_method(),
            },
            ["api", "sessions", id, "recommendation"] => match method {
                "POST" => {
                    let b: ProductRef = body(req)?;
                    ok(&self.mutate(id, |s, _, at| s.set_recommendation(&b.product_id, at))?)
                }
                _ => wrong_method(),
            },
            ["api", "sessions", id, "justification"] => match method {
                "POST" => {
                    let b: JustificationBody = body(req)?;
                    ok(&self.mutate(id, |s, _, at| s.submit_justification(&b.text, at))?)
                }
                _ => wrong_method(),
            },
            ["api", "sessions", id, "finalize"] => match method {
                "POST" => ok(&self.mutate(id, |s, _, at| s.finalize(at))?),
                _ => wrong_method(),
            },
            ["api", "sessions", id, "summary"] => match method {
                "GET" => ok(&self.summary(id)?),
                _ => wrong_method(),
            },
            ["api", "surveys"] => match method {
                "POST" => {
                    let b: SurveyResponse = body(req)?;
                    created(&self.submit_survey(b)?)
                }
                _ => wrong_method(),
            },
            ["api", "admin", "analytics"] => match method {
                "GET" => ok(&self.analytics()),
                _ => wrong_method(),
            },
            ["api", "admin", "export.csv"] => match method {
                "GET" => Ok(ApiResponse::csv(self.survey_export_csv())),
                _ => wrong_method(),
            },
            _ => Err(ApiError::not_found(&req.path)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_target_splits_query() {
        let r = ApiRequest::get("/api/products?category=sports%20drink&q=");
        assert_eq!(r.path, "/api/products");
        assert_eq!(r.query_param("category").as_deref(), Some("sports drink"));
        assert_eq!(r.query_param("q"), None);
        assert_eq!(r.query_param("missing"), None);
    }

    #[test]
    fn ratings_accept_labels_and_wire_names() {
        assert_eq!(
            parse_rating("Highly Appropriate").unwrap(),
            SuitabilityRating::HighlyAppropriate
        );
        assert_eq!(parse_rating("not_sure").unwrap(), SuitabilityRating::NotSure);
        assert_eq!(parse_rating("meh").unwrap_err().code, "bad_request");
        assert_eq!(parse_decision("Not Select").unwrap(), InitialDecision::NotSelect);
        assert_eq!(parse_decision("select").unwrap(), InitialDecision::Select);
    }
}
