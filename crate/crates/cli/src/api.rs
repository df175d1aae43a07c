//! Wire types shared by the HTTP service and the command line.

use serde::{Deserialize, Serialize};
use vidnav_core::agents::AgentError;
use vidnav_core::embedding::GeometryError;
use vidnav_core::eval::EvalError;
use vidnav_core::index::{IndexError, RankedList, VideoIndex};
use vidnav_core::navigation::{NavError, RoundRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    Conflict,
    BackendUnavailable,
    Internal,
}

impl ErrorCode {
    pub fn http_status(self) -> u16 {
        match self {
            ErrorCode::BadRequest => 400,
            ErrorCode::NotFound => 404,
            ErrorCode::Conflict => 409,
            ErrorCode::BackendUnavailable => 503,
            ErrorCode::Internal => 500,
        }
    }
}

/// The body of every unsuccessful response, and of `--json` error output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<usize>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            round: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Conflict, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, message)
    }

    pub fn with_round(mut self, round: Option<usize>) -> Self {
        self.round = round;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

fn agent_code(e: &AgentError) -> ErrorCode {
    match e {
        AgentError::EmptyText => ErrorCode::BadRequest,
        AgentError::InvalidConfig(_) => ErrorCode::BadRequest,
        AgentError::NoFrames => ErrorCode::BadRequest,
        _ => ErrorCode::BackendUnavailable,
    }
}

fn geometry_code(e: &GeometryError) -> ErrorCode {
    match e {
        GeometryError::NonFinite(_) | GeometryError::NotUnit(_) => ErrorCode::Internal,
        _ => ErrorCode::BadRequest,
    }
}

fn index_code(e: &IndexError) -> ErrorCode {
    match e {
        IndexError::UnknownId(_) => ErrorCode::NotFound,
        IndexError::InvalidK => ErrorCode::BadRequest,
        IndexError::Io(_)
        | IndexError::CorruptIndex(_)
        | IndexError::MalformedRecord { .. }
        | IndexError::DuplicateId(_) => ErrorCode::BadRequest,
        IndexError::Encode { source, .. } => agent_code(source),
        IndexError::Geometry(g) => geometry_code(g),
        _ => ErrorCode::Internal,
    }
}

impl From<NavError> for ApiError {
    fn from(e: NavError) -> Self {
        let code = match &e {
            NavError::EmptyQuery | NavError::EmptyAnswer | NavError::InvalidK => ErrorCode::BadRequest,
            NavError::InvalidState { .. } | NavError::MaxRoundsReached(_) => ErrorCode::Conflict,
            NavError::UnknownVideo(_) => ErrorCode::NotFound,
            NavError::ReplayDivergence { .. } => ErrorCode::Conflict,
            NavError::Agent(a) => agent_code(a),
            NavError::Index(i) => index_code(i),
            NavError::Geometry(g) => geometry_code(g),
        };
        let round = match &e {
            NavError::ReplayDivergence { round, .. } => Some(*round),
            _ => None,
        };
        ApiError::new(code, e.to_string()).with_round(round)
    }
}

impl From<IndexError> for ApiError {
    fn from(e: IndexError) -> Self {
        ApiError::new(index_code(&e), e.to_string())
    }
}

impl From<AgentError> for ApiError {
    fn from(e: AgentError) -> Self {
        ApiError::new(agent_code(&e), e.to_string())
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Navigation(n) => n.into(),
            EvalError::Index(i) => i.into(),
            EvalError::Agent(a) => a.into(),
            other => ApiError::bad_request(other.to_string()),
        }
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::bad_request(e.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rounds: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub text: String,
}

/// One ranked video with the metadata a client needs to show it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub rank: usize,
    pub id: String,
    pub score: f64,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_uri: Option<String>,
}

pub fn candidates(ranking: &RankedList, index: &VideoIndex) -> Vec<Candidate> {
    ranking
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let meta = index.get(&e.id).map(|r| &r.metadata);
            Candidate {
                rank: i + 1,
                id: e.id.clone(),
                score: e.score,
                caption: meta.map(|m| m.caption.clone()).unwrap_or_default(),
                source_uri: meta.and_then(|m| m.source_uri.clone()),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
    pub status: vidnav_core::SessionStatus,
    pub k: usize,
    pub max_rounds: usize,
    pub round0: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: String,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResponse {
    pub round: usize,
    pub question: String,
    pub anchor: Anchor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundView {
    pub round_index: usize,
    pub anchor_id: String,
    pub question: String,
    pub answer: String,
    pub ranking: Vec<Candidate>,
}

impl RoundView {
    pub fn new(record: &RoundRecord, index: &VideoIndex) -> Self {
        Self {
            round_index: record.round_index,
            anchor_id: record.anchor_id.clone(),
            question: record.question.clone(),
            answer: record.aggregated_answer.clone(),
            ranking: candidates(&record.ranking, index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub status: vidnav_core::SessionStatus,
    pub round: RoundView,
}
