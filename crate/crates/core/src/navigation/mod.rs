//! Retrieval sessions driven by question/answer rounds.
//!
//! A [`Session`] starts with plain retrieval for the query (round 0). Each
//! round then runs:
//!
//! 1. [`Session::next_question`]: the questioner looks at the current top-1
//!    ("anchor") video and asks one question;
//! 2. [`Session::submit_answer`]: the answer, typed by a person or produced
//!    by the agents for a video in mind, is encoded and the query embedding
//!    is pulled toward it with [`slerp`]; the whole corpus is then re-ranked.
//!
//! Rounds are atomic: if any step of a call fails the session is left as it
//! was before the call.

mod replay;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentBackend, AgentError, ChatTranscript, FrameAnswerSet};
use crate::embedding::{refine_chain, slerp, Embedding, GeometryError, RefinementParams};
use crate::index::{IndexError, RankedList, VideoIndex, VideoRecord};

pub use replay::replay;

#[derive(Debug, Error)]
pub enum NavError {
    #[error("query text is empty")]
    EmptyQuery,
    #[error("answer text is empty")]
    EmptyAnswer,
    #[error("session is {actual:?}, expected {expected:?}")]
    InvalidState {
        expected: SessionStatus,
        actual: SessionStatus,
    },
    #[error("all {0} rounds have been used")]
    MaxRoundsReached(usize),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("video {0:?} is not in the index")]
    UnknownVideo(String),
    #[error("replay diverged at round {round}: {reason}")]
    ReplayDivergence { round: usize, reason: String },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl NavError {
    /// True when the failure came from a model or encoder backend.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            NavError::Agent(AgentError::BackendUnavailable(_))
                | NavError::Agent(AgentError::EmptyResponse)
                | NavError::Agent(AgentError::Protocol(_))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Candidates returned per round.
    pub k: usize,
    pub max_rounds: usize,
    pub params: RefinementParams,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            k: 10,
            max_rounds: 5,
            params: RefinementParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    AwaitingQuestion,
    AwaitingAnswer,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQuestion {
    pub round: usize,
    pub anchor_id: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: usize,
    pub anchor_id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_answers: Option<FrameAnswerSet>,
    pub aggregated_answer: String,
    pub answer_embedding: Embedding,
    pub ranking: RankedList,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_rank: Option<usize>,
}

/// Where a round's answer comes from.
#[derive(Debug, Clone, Copy)]
pub enum Answer<'a> {
    /// A person's reply, used verbatim as the round's answer.
    Text(&'a str),
    /// Let the agents answer per frame about this video, then aggregate.
    VideoInMind(&'a VideoRecord),
}

/// One navigation episode. Serializes to the session export document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub query_text: String,
    pub params: RefinementParams,
    pub k: usize,
    pub max_rounds: usize,
    pub status: SessionStatus,
    pub query_embedding: Embedding,
    pub current_embedding: Embedding,
    pub round0: RankedList,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round0_target_rank: Option<usize>,
    pub rounds: Vec<RoundRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending: Option<PendingQuestion>,
    pub transcript: ChatTranscript,
    /// Evaluation only; never used for retrieval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_id: Option<String>,
}

pub fn new_session_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

impl Session {
    pub fn start(
        query_text: &str,
        backend: &AgentBackend,
        index: &VideoIndex,
        config: &SessionConfig,
    ) -> Result<Self, NavError> {
        Self::start_with_id(new_session_id(), query_text, None, backend, index, config)
    }

    /// Encodes the query and performs round-0 retrieval. `target_id` marks
    /// the video in mind for rank bookkeeping.
    pub fn start_with_id(
        session_id: String,
        query_text: &str,
        target_id: Option<&str>,
        backend: &AgentBackend,
        index: &VideoIndex,
        config: &SessionConfig,
    ) -> Result<Self, NavError> {
        if query_text.trim().is_empty() {
            return Err(NavError::EmptyQuery);
        }
        if config.k == 0 {
            return Err(NavError::InvalidK);
        }
        config.params.validate()?;
        if let Some(id) = target_id {
            if index.get(id).is_none() {
                return Err(NavError::UnknownVideo(id.to_string()));
            }
        }
        let query_embedding = backend.encode(query_text)?;
        let round0 = index.top_k(&query_embedding, config.k)?;
        let round0_target_rank = target_id
            .map(|id| index.rank_of(&query_embedding, id))
            .transpose()?;
        Ok(Self {
            session_id,
            query_text: query_text.to_string(),
            params: config.params,
            k: config.k,
            max_rounds: config.max_rounds,
            status: if config.max_rounds == 0 {
                SessionStatus::Complete
            } else {
                SessionStatus::AwaitingQuestion
            },
            current_embedding: query_embedding.clone(),
            query_embedding,
            round0,
            round0_target_rank,
            rounds: Vec::new(),
            pending: None,
            transcript: ChatTranscript::with_system(&backend.templates.questioner_system),
            target_id: target_id.map(str::to_string),
        })
    }

    /// The ranking the next question will be anchored on.
    pub fn latest_ranking(&self) -> &RankedList {
        self.rounds.last().map_or(&self.round0, |r| &r.ranking)
    }

    /// Target rank per round, starting with round 0, when a target is set.
    pub fn target_ranks(&self) -> Option<Vec<usize>> {
        std::iter::once(self.round0_target_rank)
            .chain(self.rounds.iter().map(|r| r.target_rank))
            .collect()
    }

    pub fn answer_embeddings(&self) -> Vec<Embedding> {
        self.rounds.iter().map(|r| r.answer_embedding.clone()).collect()
    }

    fn expect_status(&self, expected: SessionStatus) -> Result<(), NavError> {
        if self.status == SessionStatus::Complete && expected != SessionStatus::Complete {
            return Err(NavError::MaxRoundsReached(self.max_rounds));
        }
        if self.status != expected {
            return Err(NavError::InvalidState {
                expected,
                actual: self.status,
            });
        }
        Ok(())
    }

    pub fn next_question(
        &mut self,
        backend: &AgentBackend,
        index: &VideoIndex,
    ) -> Result<&PendingQuestion, NavError> {
        self.expect_status(SessionStatus::AwaitingQuestion)?;
        if self.rounds.len() >= self.max_rounds {
            return Err(NavError::MaxRoundsReached(self.max_rounds));
        }
        let anchor_id = self
            .latest_ranking()
            .top()
            .map(|e| e.id.clone())
            .ok_or(IndexError::EmptyIndex)?;
        let anchor = index
            .get(&anchor_id)
            .ok_or_else(|| NavError::UnknownVideo(anchor_id.clone()))?;
        let round = self.rounds.len() + 1;
        let previous = self.rounds.last().map(|r| r.aggregated_answer.as_str());
        let (question, transcript) =
            backend.generate_question_for_round(&self.transcript, &anchor.metadata, round, previous)?;
        self.transcript = transcript;
        self.status = SessionStatus::AwaitingAnswer;
        Ok(self.pending.insert(PendingQuestion {
            round,
            anchor_id,
            question,
        }))
    }

    pub fn submit_answer(
        &mut self,
        answer: Answer<'_>,
        backend: &AgentBackend,
        index: &VideoIndex,
    ) -> Result<&RoundRecord, NavError> {
        self.expect_status(SessionStatus::AwaitingAnswer)?;
        let pending = self.pending.clone().ok_or(NavError::InvalidState {
            expected: SessionStatus::AwaitingAnswer,
            actual: SessionStatus::AwaitingQuestion,
        })?;

        let (frame_answers, aggregated_answer) = match answer {
            Answer::Text(text) => {
                let text = text.trim();
                if text.is_empty() {
                    return Err(NavError::EmptyAnswer);
                }
                (None, text.to_string())
            }
            Answer::VideoInMind(video) => {
                let frames = backend.answer_frames(&pending.question, video)?;
                let aggregated = backend.aggregate(&pending.question, &frames)?;
                (Some(frames), aggregated)
            }
        };
        let answer_embedding = backend.encode(&aggregated_answer)?;
        let refined = slerp(&self.current_embedding, &answer_embedding, &self.params)?;
        let ranking = index.top_k(&refined, self.k)?;
        let target_rank = self
            .target_id
            .as_deref()
            .map(|id| index.rank_of(&refined, id))
            .transpose()?;

        self.current_embedding = refined;
        self.rounds.push(RoundRecord {
            round_index: pending.round,
            anchor_id: pending.anchor_id,
            question: pending.question,
            frame_answers,
            aggregated_answer,
            answer_embedding,
            ranking,
            target_rank,
        });
        self.pending = None;
        self.status = if self.rounds.len() >= self.max_rounds {
            SessionStatus::Complete
        } else {
            SessionStatus::AwaitingQuestion
        };
        debug_assert_eq!(
            refine_chain(&self.query_embedding, &self.answer_embeddings(), &self.params).ok(),
            Some(self.current_embedding.clone())
        );
        Ok(self.rounds.last().expect("round just pushed"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// A run that stopped early, with whatever rounds completed.
#[derive(Debug, Error)]
#[error("automatic run stopped after {} rounds: {error}", .session.as_ref().map_or(0, |s| s.rounds.len()))]
pub struct PartialRun {
    pub session: Option<Box<Session>>,
    #[source]
    pub error: NavError,
}

/// Runs every round with the agents answering about `target`.
pub fn run_auto(
    query_text: &str,
    target: &VideoRecord,
    backend: &AgentBackend,
    index: &VideoIndex,
    config: &SessionConfig,
) -> Result<Session, PartialRun> {
    run_auto_with(
        new_session_id(),
        query_text,
        &target.id,
        backend,
        index,
        config,
        |_| target,
    )
}

/// Like [`run_auto`], but `video_in_mind(round)` picks the video the agents
/// answer about in each round, while ranks are still tracked for
/// `target_id`. Evaluation uses this to inject distractor answers.
pub fn run_auto_with<'v>(
    session_id: String,
    query_text: &str,
    target_id: &str,
    backend: &AgentBackend,
    index: &VideoIndex,
    config: &SessionConfig,
    mut video_in_mind: impl FnMut(usize) -> &'v VideoRecord,
) -> Result<Session, PartialRun> {
    let mut session =
        Session::start_with_id(session_id, query_text, Some(target_id), backend, index, config)
            .map_err(|error| PartialRun {
                session: None,
                error,
            })?;
    while session.rounds.len() < session.max_rounds {
        let round = session.rounds.len() + 1;
        let step = session
            .next_question(backend, index)
            .map(|_| ())
            .and_then(|_| {
                session
                    .submit_answer(Answer::VideoInMind(video_in_mind(round)), backend, index)
                    .map(|_| ())
            });
        if let Err(error) = step {
            return Err(PartialRun {
                session: Some(Box::new(session)),
                error,
            });
        }
    }
    Ok(session)
}
