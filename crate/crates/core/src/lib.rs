//! Iterative query-embedding refinement for text-video retrieval.
//!
//! A session retrieves candidates for a text query, asks a clarifying
//! question about the top candidate, turns the answer into an embedding, and
//! pulls the query embedding toward it along the unit sphere before
//! retrieving again.
//!
//! * [`embedding`]: unit-sphere geometry and the refinement step.
//! * [`index`]: exact cosine top-k over a video collection, with persistence.
//! * [`agents`]: questioner, frame answerer, aggregator and encoder roles.
//! * [`navigation`]: the session state machine and replay.
//! * [`eval`]: metrics, batch runs and the alpha ablation.

pub mod agents;
pub mod embedding;
pub mod eval;
pub mod index;
pub mod navigation;

pub use agents::{AgentBackend, AgentError};
pub use embedding::{
    angle_between, cosine_similarity, refine_chain, slerp, Embedding, GeometryError,
    RefinementParams,
};
pub use index::{IndexError, RankedList, ScoredVideo, VideoIndex, VideoMetadata, VideoRecord};
pub use navigation::{NavError, Session, SessionConfig, SessionStatus};
