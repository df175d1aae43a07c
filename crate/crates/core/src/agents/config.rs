//! Backend selection file.
//!
//! ```json
//! {
//!   "encoder": {"kind": "remote", "endpoint": "https://…/embeddings", "model": "…", "dimension": 1408},
//!   "chat": {"kind": "remote", "endpoint": "https://…/chat/completions", "model": "…",
//!            "questioner": {"max_tokens": 1500, "temperature": 0.75}},
//!   "world": {"seed": 1, "n_attributes": 8, "values_per_attribute": 4, "dimension": 64}
//! }
//! ```
//!
//! `world` configures the synthetic roles. Credentials are read from the
//! environment variable named by `api_key_env` (default `VIDNAV_API_KEY`);
//! unknown fields such as an inline `api_key` are rejected.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::chat::{ChatAggregator, ChatFrameAnswerer, ChatModel, ChatQuestioner};
use super::remote::{HttpEndpoint, RemoteChatModel, RemoteEncoder, RetryPolicy};
use super::scripted::ScriptedChatModel;
use super::synthetic::{
    SyntheticAggregator, SyntheticAnswerer, SyntheticEncoder, SyntheticQuestioner, WorldSpec,
};
use super::{AgentBackend, AgentError, Aggregator, DecodingParams, Encoder, FrameAnswerer, PromptTemplates, Questioner};

pub const DEFAULT_API_KEY_ENV: &str = "VIDNAV_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Synthetic,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

/// Canned replies per role for the scripted chat backend.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Script {
    pub questioner: Vec<String>,
    pub answerer: Vec<String>,
    pub aggregator: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "questioner_params")]
    pub questioner: DecodingParams,
    #[serde(default = "answerer_params")]
    pub answerer: DecodingParams,
    #[serde(default = "aggregator_params")]
    pub aggregator: DecodingParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<Script>,
}

fn questioner_params() -> DecodingParams {
    DecodingParams::QUESTIONER
}
fn answerer_params() -> DecodingParams {
    DecodingParams::ANSWERER
}
fn aggregator_params() -> DecodingParams {
    DecodingParams::AGGREGATOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub encoder: EncoderConfig,
    pub chat: ChatConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<WorldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<PromptTemplates>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    60
}

impl BackendConfig {
    /// All-synthetic configuration for `world`.
    pub fn synthetic(world: WorldSpec) -> Self {
        Self {
            encoder: EncoderConfig {
                kind: BackendKind::Synthetic,
                endpoint: None,
                model: None,
                dimension: world.dimension,
                api_key_env: None,
            },
            chat: ChatConfig {
                kind: BackendKind::Synthetic,
                endpoint: None,
                model: None,
                api_key_env: None,
                questioner: DecodingParams::QUESTIONER,
                answerer: DecodingParams::ANSWERER,
                aggregator: DecodingParams::AGGREGATOR,
                script: None,
            },
            world: Some(world),
            templates: None,
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        serde_json::from_str(text).map_err(|e| AgentError::InvalidConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AgentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| AgentError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn world(&self) -> Result<&WorldSpec, AgentError> {
        self.world
            .as_ref()
            .ok_or_else(|| AgentError::InvalidConfig("synthetic backends need a `world` section".into()))
    }

    fn endpoint(
        &self,
        endpoint: &Option<String>,
        model: &Option<String>,
        api_key_env: &Option<String>,
        what: &str,
    ) -> Result<HttpEndpoint, AgentError> {
        let url = endpoint
            .clone()
            .ok_or_else(|| AgentError::InvalidConfig(format!("remote {what} needs `endpoint`")))?;
        let model = model
            .clone()
            .ok_or_else(|| AgentError::InvalidConfig(format!("remote {what} needs `model`")))?;
        let var = api_key_env.as_deref().unwrap_or(DEFAULT_API_KEY_ENV);
        Ok(HttpEndpoint {
            url,
            model,
            api_key: std::env::var(var).ok(),
            timeout: Duration::from_secs(self.timeout_secs),
        })
    }

    pub fn build(&self) -> Result<AgentBackend, AgentError> {
        let templates = self.templates.clone().unwrap_or_default();
        let encoder: Arc<dyn Encoder> = match self.encoder.kind {
            BackendKind::Synthetic => {
                let world = self.world()?;
                world.validate()?;
                if world.dimension != self.encoder.dimension {
                    return Err(AgentError::InvalidConfig(format!(
                        "encoder dimension {} disagrees with world dimension {}",
                        self.encoder.dimension, world.dimension
                    )));
                }
                Arc::new(SyntheticEncoder::new(world))
            }
            BackendKind::Remote => {
                let e = &self.encoder;
                Arc::new(RemoteEncoder::new(
                    self.endpoint(&e.endpoint, &e.model, &e.api_key_env, "encoder")?,
                    e.dimension,
                    RetryPolicy::default(),
                )?)
            }
            BackendKind::Scripted => {
                return Err(AgentError::InvalidConfig(
                    "the encoder cannot be scripted".into(),
                ))
            }
        };

        let chat = &self.chat;
        let (questioner, answerer, aggregator): (
            Arc<dyn Questioner>,
            Arc<dyn FrameAnswerer>,
            Arc<dyn Aggregator>,
        ) = match chat.kind {
            BackendKind::Synthetic => {
                let world = self.world()?;
                world.validate()?;
                (
                    Arc::new(SyntheticQuestioner::new(world)),
                    Arc::new(SyntheticAnswerer::new(world)),
                    Arc::new(SyntheticAggregator),
                )
            }
            BackendKind::Remote => {
                let model: Arc<dyn ChatModel> = Arc::new(RemoteChatModel::new(
                    self.endpoint(&chat.endpoint, &chat.model, &chat.api_key_env, "chat")?,
                    RetryPolicy::default(),
                )?);
                chat_roles(model.clone(), model.clone(), model, chat, &templates)
            }
            BackendKind::Scripted => {
                let script = chat.script.clone().unwrap_or_default();
                chat_roles(
                    Arc::new(ScriptedChatModel::new(script.questioner)),
                    Arc::new(ScriptedChatModel::new(script.answerer)),
                    Arc::new(ScriptedChatModel::new(script.aggregator)),
                    chat,
                    &templates,
                )
            }
        };

        Ok(AgentBackend {
            encoder,
            questioner,
            answerer,
            aggregator,
            templates,
        })
    }
}

fn chat_roles(
    questioner: Arc<dyn ChatModel>,
    answerer: Arc<dyn ChatModel>,
    aggregator: Arc<dyn ChatModel>,
    chat: &ChatConfig,
    templates: &PromptTemplates,
) -> (Arc<dyn Questioner>, Arc<dyn FrameAnswerer>, Arc<dyn Aggregator>) {
    (
        Arc::new(ChatQuestioner {
            model: questioner,
            params: chat.questioner,
        }),
        Arc::new(ChatFrameAnswerer {
            model: answerer,
            system_prompt: templates.answerer_system.clone(),
            params: chat.answerer,
        }),
        Arc::new(ChatAggregator {
            model: aggregator,
            templates: templates.clone(),
            params: chat.aggregator,
        }),
    )
}
