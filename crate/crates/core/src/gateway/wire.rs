//! `/v3/request` bodies.
//!
//! Field order follows the published shapes: `Text` before `OuterContext`
//! in requests, `Text` before `Results` in responses. Unknown fields are
//! rejected at every level.

use serde::{Deserialize, Serialize};

use crate::routing::ReferralTriple;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuterContext {
    /// Passed through opaquely; the encoding is not defined.
    #[serde(rename = "Sex")]
    pub sex: bool,
    #[serde(rename = "Age")]
    pub age: u32,
    #[serde(rename = "UserId")]
    pub user_id: String,
    #[serde(rename = "SessionId")]
    pub session_id: String,
    #[serde(rename = "ClientId")]
    pub client_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserRequest {
    #[serde(rename = "Text")]
    pub text: String,
    #[serde(rename = "OuterContext")]
    pub outer_context: OuterContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultItem {
    #[serde(rename = "Diagnosis")]
    pub diagnosis: String,
    #[serde(rename = "Doctor")]
    pub doctor: String,
    #[serde(rename = "Description")]
    pub description: String,
}

impl From<ReferralTriple> for ResultItem {
    fn from(t: ReferralTriple) -> Self {
        Self { diagnosis: t.diagnosis, doctor: t.doctor, description: t.description }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemResponse {
    #[serde(rename = "Text")]
    pub text: String,
    #[serde(rename = "Results")]
    pub results: Vec<ResultItem>,
}

impl SystemResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), results: Vec::new() }
    }
}

pub fn deserialize_request(bytes: &[u8]) -> Result<UserRequest, serde_json::Error> {
    serde_json::from_slice(bytes)
}

pub fn serialize_request(req: &UserRequest) -> Vec<u8> {
    serde_json::to_vec(req).expect("request serializes")
}

pub fn deserialize_response(bytes: &[u8]) -> Result<SystemResponse, serde_json::Error> {
    serde_json::from_slice(bytes)
}

/// Compact JSON; identical input gives identical bytes.
pub fn serialize_response(resp: &SystemResponse) -> Vec<u8> {
    serde_json::to_vec(resp).expect("response serializes")
}
