#![allow(dead_code)]

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};

use vidnav_cli::server::{self, AppState, CorsOrigins, ServerHandle};
use vidnav_core::agents::switch::SwitchableEncoder;
use vidnav_core::agents::synthetic::{synthetic_world, WorldSpec};
use vidnav_core::agents::{AgentError, Encoder};
use vidnav_core::embedding::Embedding;
use vidnav_core::{AgentBackend, SessionConfig, VideoIndex};

/// Blocks inside `encode` while armed, until the test releases it.
pub struct GatedEncoder {
    inner: Arc<dyn Encoder>,
    armed: AtomicBool,
    entered: Mutex<Sender<()>>,
    release: Mutex<Receiver<()>>,
}

pub struct Gate {
    pub encoder: Arc<GatedEncoder>,
    pub entered: Receiver<()>,
    pub release: Sender<()>,
}

impl GatedEncoder {
    pub fn wrap(inner: Arc<dyn Encoder>) -> Gate {
        let (entered_tx, entered_rx) = channel();
        let (release_tx, release_rx) = channel();
        Gate {
            encoder: Arc::new(Self {
                inner,
                armed: AtomicBool::new(false),
                entered: Mutex::new(entered_tx),
                release: Mutex::new(release_rx),
            }),
            entered: entered_rx,
            release: release_tx,
        }
    }

    pub fn arm(&self, armed: bool) {
        self.armed.store(armed, Ordering::SeqCst);
    }
}

impl Encoder for GatedEncoder {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn encode(&self, text: &str) -> Result<Embedding, AgentError> {
        if self.armed.load(Ordering::SeqCst) {
            self.entered.lock().unwrap().send(()).unwrap();
            self.release.lock().unwrap().recv().unwrap();
        }
        self.inner.encode(text)
    }
}

pub struct Fixture {
    pub index: Arc<VideoIndex>,
    pub backend: Arc<AgentBackend>,
    pub switch: Arc<SwitchableEncoder>,
    pub gate: Gate,
}

pub fn spec() -> WorldSpec {
    WorldSpec {
        n_videos: 200,
        ..WorldSpec::default()
    }
}

/// Synthetic world whose encoder can be switched off or held mid-call.
pub fn fixture() -> Fixture {
    let world = synthetic_world(&spec()).unwrap();
    let index = Arc::new(VideoIndex::from_records(world.corpus).unwrap());
    let switch = Arc::new(SwitchableEncoder::new(world.backend.encoder.clone()));
    let gate = GatedEncoder::wrap(switch.clone());
    let backend = Arc::new(AgentBackend {
        encoder: gate.encoder.clone(),
        ..world.backend
    });
    Fixture {
        index,
        backend,
        switch,
        gate,
    }
}

pub fn config() -> SessionConfig {
    SessionConfig {
        max_rounds: 3,
        ..SessionConfig::default()
    }
}

pub fn start(state: AppState, origins: &[&str]) -> ServerHandle {
    let origins = CorsOrigins(origins.iter().map(|s| s.to_string()).collect());
    let router = server::router(state, &origins).unwrap();
    server::spawn("127.0.0.1:0".parse().unwrap(), router).unwrap()
}

pub fn state(fx: &Fixture) -> AppState {
    AppState::new(fx.index.clone(), fx.backend.clone(), config())
}

pub fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::new()
}
