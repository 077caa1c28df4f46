use std::io::Write;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::oneshot;

use crate::wire::{self, ErrorBody, MetricsRequest, SampleRequest, SampleResponse};
use crate::{Error, Provider, ProviderApi};

fn status_of(err: &Error) -> StatusCode {
    match err {
        Error::Malformed(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Error::QuotaExceeded(_) => StatusCode::TOO_MANY_REQUESTS,
        Error::Core(sbpm_core::Error::SchemaMismatch(_) | sbpm_core::Error::OutOfSchema { .. }) => {
            StatusCode::BAD_REQUEST
        }
        Error::Core(sbpm_core::Error::InvalidArgument(_) | sbpm_core::Error::TooFewRows { .. }) => {
            StatusCode::BAD_REQUEST
        }
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn failure(err: Error) -> Response {
    (status_of(&err), Json(ErrorBody { error: err.to_string() })).into_response()
}

fn parse<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, Error> {
    serde_json::from_slice(body).map_err(|e| Error::Malformed(e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, Error> + Send + 'static) -> Result<T, Error> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| Error::Transport(e.to_string()))?
}

async fn sample(State(p): State<Arc<Provider>>, body: Bytes) -> Response {
    let req: SampleRequest = match parse(&body) {
        Ok(r) => r,
        Err(e) => return failure(e),
    };
    match blocking(move || p.sample(req.n, req.seed)).await {
        Ok(ds) => Json(SampleResponse::from_dataset(&ds)).into_response(),
        Err(e) => failure(e),
    }
}

async fn metrics(State(p): State<Arc<Provider>>, body: Bytes) -> Response {
    let req: MetricsRequest = match parse(&body) {
        Ok(r) => r,
        Err(e) => return failure(e),
    };
    let run = move || {
        let synth = wire::decode_records(p.schema(), &req.records)?;
        p.metrics(&synth)
    };
    match blocking(run).await {
        Ok(resp) => Json(resp).into_response(),
        Err(e) => failure(e),
    }
}

async fn stats(State(p): State<Arc<Provider>>) -> Response {
    match p.stats() {
        Ok(s) => Json(s).into_response(),
        Err(e) => failure(e),
    }
}

fn router(provider: Arc<Provider>) -> Router {
    Router::new()
        .route(wire::SAMPLE_PATH, post(sample))
        .route(wire::METRICS_PATH, post(metrics))
        .route(wire::STATS_PATH, get(stats))
        .with_state(provider)
}

fn runtime() -> std::io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()
}

/// Serves `provider` until the process exits, printing the bound address
/// first (useful with port 0).
pub fn serve(provider: Arc<Provider>, bind: &str) -> std::io::Result<()> {
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind).await?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        std::io::stdout().flush()?;
        axum::serve(listener, router(provider)).await
    })
}

/// A server running on a background thread. Dropping it shuts the server
/// down.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Starts serving on a background thread and returns once the socket is bound.
pub fn spawn(provider: Arc<Provider>, bind: &str) -> std::io::Result<ServerHandle> {
    let rt = runtime()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind(bind))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            axum::serve(listener, router(provider))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    });
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
