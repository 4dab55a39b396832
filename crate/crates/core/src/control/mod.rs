//! Remote operations surface: health, sleep/wake and snapshots.
//!
//! [`handle_control`] maps a request onto an [`EngineHandle`] and is
//! transport-agnostic; [`server`] exposes it over HTTP.

pub mod server;

use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::runtime::engine::{EngineHandle, HandleError, SlotFace};
use crate::runtime::lifecycle::{Action, EngineState, LifecycleEvent};
use crate::runtime::telemetry::Telemetry;

pub use server::{ControlServer, DEFAULT_PORT, TOKEN_ENV};

/// How long a sleep or wake request waits for the engine.
pub const TRANSITION_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlRequest {
    GetHealth,
    Sleep,
    Wake,
    GetFrameSnapshot,
    GetCameraSnapshot,
    GetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    #[serde(flatten)]
    pub telemetry: Telemetry,
    pub version: String,
    pub config_hash: String,
    /// One entry per figure slot; `null` when free.
    pub slots: Vec<Option<SlotFace>>,
    pub generated_at: DateTime<Utc>,
}

impl HealthReport {
    pub fn collect(handle: &EngineHandle) -> Self {
        Self {
            telemetry: handle.telemetry(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: handle.config_hash().to_string(),
            slots: handle.slot_faces().into_iter().collect(),
            generated_at: Utc::now(),
        }
    }
}

/// Body of a sleep or wake response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionReport {
    pub state: String,
    pub previous: String,
    pub noop: bool,
    /// `"no-op"` for idempotent requests.
    pub note: Option<String>,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub error: String,
    pub reason: Option<String>,
    pub state: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlResponse {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

pub const JSON: &str = "application/json";
pub const PNG: &str = "image/png";

impl ControlResponse {
    fn json<T: Serialize>(status: u16, value: &T) -> Self {
        Self {
            status,
            content_type: JSON,
            body: serde_json::to_vec(value).expect("response serializes"),
        }
    }

    pub fn error(status: u16, error: &str, reason: Option<String>, state: Option<String>) -> Self {
        Self::json(
            status,
            &ErrorReport {
                error: error.into(),
                reason,
                state,
            },
        )
    }
}

pub fn handle_control(request: ControlRequest, engine: &EngineHandle) -> ControlResponse {
    match request {
        ControlRequest::GetHealth => ControlResponse::json(200, &HealthReport::collect(engine)),
        ControlRequest::Sleep => lifecycle(engine, LifecycleEvent::SleepRequested),
        ControlRequest::Wake => lifecycle(engine, LifecycleEvent::WakeRequested),
        ControlRequest::GetFrameSnapshot => snapshot(engine.latest_frame(), "no frame composed yet"),
        ControlRequest::GetCameraSnapshot => {
            snapshot(engine.latest_camera(), "no camera frame captured yet")
        }
        ControlRequest::GetConfig => ControlResponse::json(200, engine.config()),
    }
}

fn lifecycle(engine: &EngineHandle, event: LifecycleEvent) -> ControlResponse {
    if let Some(reason) = engine.telemetry().fault_reason {
        return faulted(reason);
    }
    match engine.request(event, TRANSITION_TIMEOUT) {
        Ok(outcome) => match &outcome.state {
            EngineState::Faulted(reason) => faulted(reason.clone()),
            EngineState::ShuttingDown => ControlResponse::error(
                503,
                "engine is shutting down",
                None,
                Some(outcome.state.name().into()),
            ),
            state => ControlResponse::json(
                200,
                &TransitionReport {
                    state: state.name().into(),
                    previous: outcome.previous.name().into(),
                    noop: outcome.noop,
                    note: outcome.noop.then(|| "no-op".to_string()),
                    actions: outcome.actions,
                },
            ),
        },
        Err(HandleError::Disconnected) => {
            ControlResponse::error(503, "engine has stopped", None, None)
        }
        Err(e @ HandleError::Timeout(_)) => {
            ControlResponse::error(503, "engine busy", Some(e.to_string()), None)
        }
    }
}

fn faulted(reason: String) -> ControlResponse {
    ControlResponse::error(503, "engine faulted", Some(reason), Some("faulted".into()))
}

fn snapshot(frame: Option<std::sync::Arc<crate::frame::Rgba8Frame>>, missing: &str) -> ControlResponse {
    match frame {
        None => ControlResponse::error(404, missing, None, None),
        Some(f) => match f.encode_png() {
            Ok(body) => ControlResponse {
                status: 200,
                content_type: PNG,
                body,
            },
            Err(e) => ControlResponse::error(500, "cannot encode snapshot", Some(e.to_string()), None),
        },
    }
}
