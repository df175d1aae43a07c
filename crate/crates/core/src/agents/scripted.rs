//! A chat model that plays back canned responses and records what it was
//! asked. Used to test role plumbing without a live model.

use std::collections::VecDeque;
use std::sync::Mutex;

use super::chat::{ChatModel, ChatRequest};
use super::AgentError;

#[derive(Debug, Default)]
pub struct ScriptedChatModel {
    responses: Mutex<VecDeque<String>>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl ScriptedChatModel {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            responses: Mutex::new(responses.into_iter().map(Into::into).collect()),
            requests: Mutex::default(),
        }
    }

    pub fn push(&self, response: impl Into<String>) {
        self.responses.lock().unwrap().push_back(response.into());
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        self.responses.lock().unwrap().len()
    }
}

impl ChatModel for ScriptedChatModel {
    fn complete(&self, request: &ChatRequest) -> Result<String, AgentError> {
        self.requests.lock().unwrap().push(request.clone());
        self.responses
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| AgentError::BackendUnavailable("script exhausted".into()))
    }
}
