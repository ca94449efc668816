use std::path::PathBuf;
use std::time::Duration;

use tinyseg::DetectorSpec;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_MAX_UPLOAD_BYTES: u64 = 512 * 1024 * 1024;
pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(24 * 3600);
pub const DEFAULT_QUEUE_TIMEOUT: Duration = Duration::from_secs(60);

/// Runtime settings of the HTTP service.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub port: u16,
    pub max_upload_bytes: u64,
    pub session_ttl: Duration,
    /// Default detector; uploads may override it with `?detector=`.
    pub detector: DetectorSpec,
    /// Concurrent detections.
    pub worker_pool_size: usize,
    /// How long an upload waits for a free worker before `503`.
    pub queue_timeout: Duration,
    /// Parent of the per-process session directory. System temp dir if unset.
    pub data_dir: Option<PathBuf>,
    /// Web UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
    /// Period of the expiry sweep. Defaults to a tenth of the TTL, at most a minute.
    pub gc_interval: Option<Duration>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: DEFAULT_PORT,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            session_ttl: DEFAULT_SESSION_TTL,
            detector: DetectorSpec::default(),
            worker_pool_size: default_workers(),
            queue_timeout: DEFAULT_QUEUE_TIMEOUT,
            data_dir: None,
            static_dir: None,
            gc_interval: None,
        }
    }
}

impl ServiceConfig {
    pub fn gc_interval(&self) -> Duration {
        self.gc_interval
            .unwrap_or_else(|| (self.session_ttl / 10).clamp(Duration::from_millis(100), Duration::from_secs(60)))
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
