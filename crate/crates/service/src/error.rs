use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use refcurve::{Error, ErrorClass};
use serde_json::{json, Value};

/// An HTTP error with a JSON body `{error, message, ...}`.
#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: json!({ "error": code, "message": message.into() }) }
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(kind: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no {kind} with id {id:?}"))
    }

    pub fn stale(current: u64, given: u64) -> Self {
        ApiError {
            status: StatusCode::CONFLICT,
            body: json!({
                "error": "stale_revision",
                "message": format!("dataset is at revision {current}, request used {given}"),
                "current_revision": current,
            }),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

fn diagnostics(e: &Error) -> Value {
    match e {
        Error::Numerical { condition, .. } => json!({ "condition": condition }),
        Error::Divergence { cycle, parameter } => json!({ "cycle": cycle, "parameter": parameter }),
        Error::SelectionFailed { failures } | Error::CrossValidationFailed { failures } => json!({ "failures": failures }),
        _ => Value::Null,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e.class() {
            ErrorClass::Input => {
                let mut err = ApiError::bad_request(e.code(), e.to_string());
                if let Error::UnattainableDf { min, max, .. } = e {
                    err.body["attainable"] = json!([min, max]);
                }
                err
            }
            ErrorClass::Numerical => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: json!({ "error": e.code(), "message": e.to_string(), "diagnostics": diagnostics(&e) }),
            },
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request("invalid_json", r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::bad_request("invalid_query", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
