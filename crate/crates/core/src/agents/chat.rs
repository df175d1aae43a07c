//! Role adapters over a generic chat-completion model.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    AgentError, Aggregator, ChatTranscript, DecodingParams, FrameAnswerer, PromptTemplates,
    Questioner, Role,
};
use crate::index::VideoMetadata;

/// One message in a chat request. `image_url` attaches an image to a user
/// message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestMessage {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_url: Option<String>,
}

impl RequestMessage {
    pub fn text(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            text: text.into(),
            image_url: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<RequestMessage>,
    pub params: DecodingParams,
}

pub trait ChatModel: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, AgentError>;
}

fn is_image_uri(frame: &str) -> bool {
    frame.starts_with("data:image/") || frame.starts_with("http://") || frame.starts_with("https://")
}

pub struct ChatQuestioner {
    pub model: Arc<dyn ChatModel>,
    pub params: DecodingParams,
}

impl Questioner for ChatQuestioner {
    fn ask(&self, transcript: &ChatTranscript, _anchor: &VideoMetadata) -> Result<String, AgentError> {
        let messages = transcript
            .messages()
            .iter()
            .map(|m| RequestMessage::text(m.role, m.content.clone()))
            .collect();
        self.model.complete(&ChatRequest {
            messages,
            params: self.params,
        })
    }
}

pub struct ChatFrameAnswerer {
    pub model: Arc<dyn ChatModel>,
    pub system_prompt: String,
    pub params: DecodingParams,
}

impl ChatFrameAnswerer {
    pub fn request(&self, question: &str, frame: &str) -> ChatRequest {
        let user = if is_image_uri(frame) {
            RequestMessage {
                role: Role::User,
                text: question.to_string(),
                image_url: Some(frame.to_string()),
            }
        } else {
            // Caption-only corpora describe the frame in text.
            RequestMessage::text(Role::User, format!("{question}\n\nFrame: {frame}"))
        };
        ChatRequest {
            messages: vec![RequestMessage::text(Role::System, self.system_prompt.clone()), user],
            params: self.params,
        }
    }
}

impl FrameAnswerer for ChatFrameAnswerer {
    fn answer_frame(&self, question: &str, frame: &str) -> Result<String, AgentError> {
        self.model.complete(&self.request(question, frame))
    }
}

pub struct ChatAggregator {
    pub model: Arc<dyn ChatModel>,
    pub templates: PromptTemplates,
    pub params: DecodingParams,
}

impl ChatAggregator {
    pub fn request(&self, question: &str, answers: &[String]) -> ChatRequest {
        ChatRequest {
            messages: vec![
                RequestMessage::text(Role::System, self.templates.aggregator_system.clone()),
                RequestMessage::text(
                    Role::User,
                    self.templates.render_aggregator_input(question, answers),
                ),
            ],
            params: self.params,
        }
    }
}

impl Aggregator for ChatAggregator {
    fn aggregate(&self, question: &str, answers: &[String]) -> Result<String, AgentError> {
        self.model.complete(&self.request(question, answers))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::templates::ANSWERER_SYSTEM;

    struct Null;
    impl ChatModel for Null {
        fn complete(&self, _: &ChatRequest) -> Result<String, AgentError> {
            Ok(String::new())
        }
    }

    #[test]
    fn frame_requests_attach_images() {
        let answerer = ChatFrameAnswerer {
            model: Arc::new(Null),
            system_prompt: ANSWERER_SYSTEM.into(),
            params: DecodingParams::ANSWERER,
        };
        let img = answerer.request("What color?", "data:image/jpeg;base64,AAAA");
        assert_eq!(img.messages[0].role, Role::System);
        assert_eq!(img.messages[1].text, "What color?");
        assert_eq!(img.messages[1].image_url.as_deref(), Some("data:image/jpeg;base64,AAAA"));
        let cap = answerer.request("What color?", "a red ball");
        assert_eq!(cap.messages[1].text, "What color?\n\nFrame: a red ball");
        assert_eq!(cap.params, DecodingParams::ANSWERER);
    }

    #[test]
    fn aggregator_request_uses_input_template() {
        let agg = ChatAggregator {
            model: Arc::new(Null),
            templates: PromptTemplates::default(),
            params: DecodingParams::AGGREGATOR,
        };
        let answers: Vec<String> = vec!["No".into(), "Yes".into()];
        let req = agg.request("Did a cookie appear in the video?", &answers);
        assert_eq!(
            req.messages[1].text,
            "Question: Did a cookie appear in the video?\nVQA Answer: [\"No\", \"Yes\"]\nAggregated Answer:"
        );
    }
}
