//! HTTP service for the tinyseg toolkit: upload and detect, FrameV1
//! streaming, edit-state posting and masked FITS download, with one
//! isolated session per upload.

pub mod api;
pub mod config;
pub mod frame;
pub mod session;

use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::SystemTime;

use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use api::{router, AppState, MaskRequest, UploadResponse};
pub use config::ServiceConfig;
pub use frame::{decode, encode, Compression, Frame, FrameError};
pub use session::{Registry, SessionRecord, SessionState};

/// Serves on `listener` until `shutdown` resolves. Session files live in
/// a fresh directory that is removed on return.
pub async fn serve(
    listener: TcpListener,
    config: ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    let root = match &config.data_dir {
        Some(parent) => tempfile::Builder::new().prefix("tinyseg-").tempdir_in(parent)?,
        None => tempfile::Builder::new().prefix("tinyseg-").tempdir()?,
    };
    let registry = Arc::new(Registry::new(root.path()));
    serve_registry(listener, config, registry, shutdown).await
}

/// Like [`serve`] with a caller-owned registry.
pub async fn serve_registry(
    listener: TcpListener,
    config: ServiceConfig,
    registry: Arc<Registry>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    let gc = spawn_gc(Arc::clone(&registry), &config);
    let app = router(AppState::new(config, registry));
    let result = axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>())
        .with_graceful_shutdown(shutdown)
        .await;
    gc.abort();
    result
}

/// Periodic expiry sweep.
pub fn spawn_gc(registry: Arc<Registry>, config: &ServiceConfig) -> JoinHandle<()> {
    let (ttl, every) = (config.session_ttl, config.gc_interval());
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tick.tick().await;
            let reg = Arc::clone(&registry);
            match tokio::task::spawn_blocking(move || reg.gc(SystemTime::now(), ttl)).await {
                Ok(0) => {}
                Ok(n) => tracing::info!(expired = n, "session sweep"),
                Err(e) => tracing::error!(error = %e, "session sweep failed"),
            }
        }
    })
}

/// A service running on a background task.
pub struct RunningService {
    pub addr: SocketAddr,
    pub registry: Arc<Registry>,
    shutdown: oneshot::Sender<()>,
    task: JoinHandle<io::Result<()>>,
    _root: tempfile::TempDir,
}

impl RunningService {
    /// Binds `127.0.0.1:port` (0 for any free port) and starts serving.
    pub async fn start(config: ServiceConfig) -> io::Result<Self> {
        let listener = TcpListener::bind(("127.0.0.1", config.port)).await?;
        let addr = listener.local_addr()?;
        let root = match &config.data_dir {
            Some(parent) => tempfile::Builder::new().prefix("tinyseg-").tempdir_in(parent)?,
            None => tempfile::Builder::new().prefix("tinyseg-").tempdir()?,
        };
        let registry = Arc::new(Registry::new(root.path()));
        let (tx, rx) = oneshot::channel();
        let task = tokio::spawn(serve_registry(listener, config, Arc::clone(&registry), async {
            let _ = rx.await;
        }));
        Ok(Self {
            addr,
            registry,
            shutdown: tx,
            task,
            _root: root,
        })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub async fn stop(self) -> io::Result<()> {
        let _ = self.shutdown.send(());
        self.task.await.map_err(io::Error::other)?
    }
}
