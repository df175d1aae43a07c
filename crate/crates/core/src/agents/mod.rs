//! The conversational roles around a retrieval session.
//!
//! Three roles and an encoder make up an [`AgentBackend`]:
//!
//! * a **questioner** that reads the top-ranked ("anchor") video's caption and
//!   asks one clarifying question per round,
//! * a **frame answerer** that answers that question independently for every
//!   sampled frame of the video the user has in mind,
//! * an **aggregator** that folds the per-frame answers into one answer,
//!   positive if any frame is positive,
//! * an **encoder** mapping text into the shared embedding space.
//!
//! Each role is a trait. Implementations exist for hosted chat/embedding
//! endpoints ([`remote`]), a deterministic attribute world for offline runs
//! ([`synthetic`]), and canned responses for tests ([`scripted`]).

pub mod chat;
pub mod config;
pub mod remote;
pub mod scripted;
pub mod switch;
pub mod synthetic;
pub mod templates;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{Embedding, GeometryError};
use crate::index::{VideoMetadata, VideoRecord};

pub use templates::PromptTemplates;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("video has no frames to answer from")]
    NoFrames,
    #[error("cannot encode empty text")]
    EmptyText,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unexpected backend response: {0}")]
    Protocol(String),
    #[error("follow-up rounds need the previous aggregated answer")]
    MissingPreviousAnswer,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// Ordered questioner conversation. Only the first message may be a system
/// message.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChatTranscript {
    messages: Vec<ChatMessage>,
}

impl ChatTranscript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_system(prompt: impl Into<String>) -> Self {
        Self {
            messages: vec![ChatMessage::new(Role::System, prompt)],
        }
    }

    /// Appends a user or assistant message.
    ///
    /// # Panics
    ///
    /// On a system message, which would break the system-first ordering.
    pub fn push(&mut self, role: Role, content: impl Into<String>) {
        assert!(role != Role::System, "system message must come first");
        self.messages.push(ChatMessage::new(role, content));
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn assistant_messages(&self) -> impl Iterator<Item = &str> {
        self.messages
            .iter()
            .filter(|m| m.role == Role::Assistant)
            .map(|m| m.content.as_str())
    }

    /// True when no system message appears after position 0.
    pub fn is_well_formed(&self) -> bool {
        self.messages
            .iter()
            .skip(1)
            .all(|m| m.role != Role::System)
    }
}

/// Sampling parameters for one chat role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub max_tokens: u32,
    pub temperature: f64,
}

impl DecodingParams {
    pub const QUESTIONER: Self = Self {
        max_tokens: 1500,
        temperature: 0.75,
    };
    pub const ANSWERER: Self = Self {
        max_tokens: 50,
        temperature: 0.3,
    };
    pub const AGGREGATOR: Self = Self {
        max_tokens: 100,
        temperature: 0.5,
    };
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameAnswer {
    pub frame_index: usize,
    pub answer: String,
}

/// Per-frame answers to one question, in frame order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameAnswerSet {
    pub question: String,
    pub per_frame: Vec<FrameAnswer>,
}

impl FrameAnswerSet {
    pub fn answers(&self) -> Vec<String> {
        self.per_frame.iter().map(|f| f.answer.clone()).collect()
    }
}

pub trait Encoder: Send + Sync {
    fn dimension(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Embedding, AgentError>;
}

pub trait Questioner: Send + Sync {
    /// Produces the next question given the conversation so far. The last
    /// message of `transcript` is the templated user prompt for this round.
    fn ask(&self, transcript: &ChatTranscript, anchor: &VideoMetadata) -> Result<String, AgentError>;
}

pub trait FrameAnswerer: Send + Sync {
    /// Answers `question` about one frame. `frame` is a caption, or an image
    /// as a `data:` / `http(s):` URI.
    fn answer_frame(&self, question: &str, frame: &str) -> Result<String, AgentError>;
}

pub trait Aggregator: Send + Sync {
    fn aggregate(&self, question: &str, answers: &[String]) -> Result<String, AgentError>;
}

/// Which questioner prompt a round uses.
#[derive(Debug, Clone, Copy)]
pub enum QuestionPrompt<'a> {
    /// Round 1: only the anchor caption is known.
    Initial,
    /// Later rounds also report the previous aggregated answer.
    FollowUp { aggregated_answer: &'a str },
}

/// The bound set of role implementations used by a session.
#[derive(Clone)]
pub struct AgentBackend {
    pub encoder: Arc<dyn Encoder>,
    pub questioner: Arc<dyn Questioner>,
    pub answerer: Arc<dyn FrameAnswerer>,
    pub aggregator: Arc<dyn Aggregator>,
    pub templates: PromptTemplates,
}

impl AgentBackend {
    /// Renders this round's questioner prompt, asks for a question, and
    /// returns it with a transcript extended by the prompt and the question.
    /// The input transcript is not modified.
    pub fn generate_question(
        &self,
        transcript: &ChatTranscript,
        anchor: &VideoMetadata,
        prompt: QuestionPrompt<'_>,
    ) -> Result<(String, ChatTranscript), AgentError> {
        let mut next = if transcript.is_empty() {
            ChatTranscript::with_system(&self.templates.questioner_system)
        } else {
            transcript.clone()
        };
        let user = match prompt {
            QuestionPrompt::Initial => self.templates.render_questioner_initial(&anchor.caption),
            QuestionPrompt::FollowUp { aggregated_answer } => self
                .templates
                .render_questioner_round(aggregated_answer, &anchor.caption),
        };
        next.push(Role::User, user);
        let question = self.questioner.ask(&next, anchor)?;
        let question = question.trim();
        if question.is_empty() {
            return Err(AgentError::EmptyResponse);
        }
        next.push(Role::Assistant, question);
        Ok((question.to_string(), next))
    }

    /// [`AgentBackend::generate_question`] keyed by 1-based round number.
    pub fn generate_question_for_round(
        &self,
        transcript: &ChatTranscript,
        anchor: &VideoMetadata,
        round: usize,
        previous_answer: Option<&str>,
    ) -> Result<(String, ChatTranscript), AgentError> {
        let prompt = match (round, previous_answer) {
            (0 | 1, _) => QuestionPrompt::Initial,
            (_, Some(aggregated_answer)) => QuestionPrompt::FollowUp { aggregated_answer },
            (_, None) => return Err(AgentError::MissingPreviousAnswer),
        };
        self.generate_question(transcript, anchor, prompt)
    }

    /// Answers `question` once per frame of `target`. Frames are answered
    /// concurrently and independently; results come back in frame order.
    pub fn answer_frames(
        &self,
        question: &str,
        target: &VideoRecord,
    ) -> Result<FrameAnswerSet, AgentError> {
        let frames = &target.metadata.frame_captions;
        if frames.is_empty() {
            return Err(AgentError::NoFrames);
        }
        let per_frame = frames
            .par_iter()
            .enumerate()
            .map(|(frame_index, frame)| {
                self.answerer
                    .answer_frame(question, frame)
                    .map(|answer| FrameAnswer {
                        frame_index,
                        answer: answer.trim().to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FrameAnswerSet {
            question: question.to_string(),
            per_frame,
        })
    }

    pub fn aggregate(&self, question: &str, frames: &FrameAnswerSet) -> Result<String, AgentError> {
        if frames.per_frame.is_empty() {
            return Err(AgentError::NoFrames);
        }
        let answer = self.aggregator.aggregate(question, &frames.answers())?;
        let answer = answer.trim();
        if answer.is_empty() {
            return Err(AgentError::EmptyResponse);
        }
        Ok(answer.to_string())
    }

    pub fn encode(&self, text: &str) -> Result<Embedding, AgentError> {
        if text.trim().is_empty() {
            return Err(AgentError::EmptyText);
        }
        let embedding = self.encoder.encode(text)?;
        let expected = self.encoder.dimension();
        if embedding.dim() != expected {
            return Err(GeometryError::DimensionMismatch {
                expected,
                actual: embedding.dim(),
            }
            .into());
        }
        Ok(embedding)
    }
}

impl std::fmt::Debug for AgentBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AgentBackend")
            .field("dimension", &self.encoder.dimension())
            .finish_non_exhaustive()
    }
}

/// Classifies a free-text answer as affirmative by its leading word.
pub fn is_affirmative(answer: &str) -> bool {
    let first = answer
        .trim_start()
        .split(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .next()
        .unwrap_or("");
    matches!(
        first.to_ascii_lowercase().as_str(),
        "yes" | "yeah" | "yep" | "true" | "correct"
    )
}
