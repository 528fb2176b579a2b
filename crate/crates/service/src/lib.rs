//! HTTP facade over the agent: sessions, turns, transcripts, traces and a
//! health report, plus the web client's static assets.

mod api;
pub mod config;
mod state;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

pub use api::router;
pub use config::{ConfigError, ServiceConfig};
pub use state::{AppState, FaultHook, FaultPoint, StartupError};
pub use store::{Entry, StoreError, TranscriptRecord, TranscriptStore};

/// Binds `listener` and serves until `shutdown` resolves.
pub async fn serve(
    state: Arc<AppState>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    tracing::info!(?addr, "service listening");
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// A server running on its own thread and runtime, for embedding the service
/// in synchronous programs and tests.
pub struct BackgroundServer {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl BackgroundServer {
    /// Binds `listen` (use port 0 for an ephemeral port) and starts serving.
    pub fn start(state: Arc<AppState>, listen: &str) -> std::io::Result<Self> {
        let std_listener = std::net::TcpListener::bind(listen)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::Builder::new().name(format!("service-{addr}")).spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener)?;
                serve(state, listener, async {
                    let _ = rx.await;
                })
                .await
            })
        })?;
        Ok(Self { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown_and_join()
    }

    fn shutdown_and_join(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        let _ = self.shutdown_and_join();
    }
}
