//! An encoder wrapper that can be taken offline at runtime, for exercising
//! failure paths of the session service.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use super::{AgentError, Encoder};
use crate::embedding::Embedding;

pub struct SwitchableEncoder {
    inner: Arc<dyn Encoder>,
    available: AtomicBool,
}

impl SwitchableEncoder {
    pub fn new(inner: Arc<dyn Encoder>) -> Self {
        Self {
            inner,
            available: AtomicBool::new(true),
        }
    }

    pub fn set_available(&self, available: bool) {
        self.available.store(available, Ordering::SeqCst);
    }

    pub fn is_available(&self) -> bool {
        self.available.load(Ordering::SeqCst)
    }
}

impl Encoder for SwitchableEncoder {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn encode(&self, text: &str) -> Result<Embedding, AgentError> {
        if !self.is_available() {
            return Err(AgentError::BackendUnavailable("encoder switched off".into()));
        }
        self.inner.encode(text)
    }
}
