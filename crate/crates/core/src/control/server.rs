//! HTTP/1.1 control server.
//!
//! | route | method | body |
//! |---|---|---|
//! | `/health` | GET | health report JSON |
//! | `/sleep` | POST | transition report JSON |
//! | `/wake` | POST | transition report JSON |
//! | `/frame.png` | GET | last composed frame |
//! | `/camera.png` | GET | last camera frame |
//! | `/config` | GET | active config JSON |
//!
//! POST routes require `Authorization: Bearer <token>` when a token is set.

use std::future::IntoFuture;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use tokio::sync::oneshot;

use super::{handle_control, ControlRequest, ControlResponse};
use crate::runtime::engine::EngineHandle;

pub const DEFAULT_PORT: u16 = 8787;
/// Shared secret for POST routes.
pub const TOKEN_ENV: &str = "SNOWFRAME_CONTROL_TOKEN";

#[derive(Clone)]
struct AppState {
    engine: EngineHandle,
    token: Option<Arc<str>>,
}

impl IntoResponse for ControlResponse {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, [(header::CONTENT_TYPE, self.content_type)], self.body).into_response()
    }
}

async fn dispatch(state: &AppState, request: ControlRequest) -> ControlResponse {
    let engine = state.engine.clone();
    tokio::task::spawn_blocking(move || handle_control(request, &engine))
        .await
        .unwrap_or_else(|e| ControlResponse::error(500, "handler panicked", Some(e.to_string()), None))
}

fn authorized(state: &AppState, headers: &HeaderMap) -> bool {
    let Some(token) = &state.token else {
        return true;
    };
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|given| given.trim() == &**token)
}

fn unauthorized() -> Response {
    let mut r = ControlResponse::error(401, "missing or wrong bearer token", None, None).into_response();
    r.headers_mut()
        .insert(header::WWW_AUTHENTICATE, header::HeaderValue::from_static("Bearer"));
    r
}

async fn health(State(s): State<AppState>) -> ControlResponse {
    dispatch(&s, ControlRequest::GetHealth).await
}

async fn sleep(State(s): State<AppState>, headers: HeaderMap) -> Response {
    if !authorized(&s, &headers) {
        return unauthorized();
    }
    dispatch(&s, ControlRequest::Sleep).await.into_response()
}

async fn wake(State(s): State<AppState>, headers: HeaderMap) -> Response {
    if !authorized(&s, &headers) {
        return unauthorized();
    }
    dispatch(&s, ControlRequest::Wake).await.into_response()
}

async fn frame(State(s): State<AppState>) -> ControlResponse {
    dispatch(&s, ControlRequest::GetFrameSnapshot).await
}

async fn camera(State(s): State<AppState>) -> ControlResponse {
    dispatch(&s, ControlRequest::GetCameraSnapshot).await
}

async fn config(State(s): State<AppState>) -> ControlResponse {
    dispatch(&s, ControlRequest::GetConfig).await
}

pub fn router(engine: EngineHandle, token: Option<String>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sleep", post(sleep))
        .route("/wake", post(wake))
        .route("/frame.png", get(frame))
        .route("/camera.png", get(camera))
        .route("/config", get(config))
        .with_state(AppState {
            engine,
            token: token.map(Arc::from),
        })
}

/// A control server running on its own thread and runtime.
pub struct ControlServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ControlServer {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub fn start(
        engine: EngineHandle,
        addr: SocketAddr,
        token: Option<String>,
    ) -> std::io::Result<ControlServer> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .thread_name("snowframe-control")
            .enable_all()
            .build()?;
        let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(engine, token);
        let thread = std::thread::Builder::new()
            .name("snowframe-control".into())
            .spawn(move || {
                // Dropping the runtime afterwards cancels open keep-alive
                // connections instead of waiting for clients to hang up.
                runtime.block_on(async move {
                    tokio::select! {
                        served = axum::serve(listener, app).into_future() => {
                            if let Err(e) = served {
                                log::error!("control server stopped: {e}");
                            }
                        }
                        _ = rx => {}
                    }
                });
                runtime.shutdown_background();
            })?;
        log::info!("control API listening on http://{addr}");
        Ok(ControlServer {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ControlServer {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}
