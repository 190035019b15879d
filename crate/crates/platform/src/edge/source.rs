//! Sample sources feeding the gateway cache: trace-file replay with
//! wall-clock pacing, and a line-oriented TCP listener speaking the
//! trace CSV format.

use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use radiosense_core::cqi::CqiSample;

use crate::edge::cache::EdgeCache;
use crate::trace::{read_trace, TraceRow};
use crate::{PlatformError, Result};

/// Shared ingest counters.
#[derive(Debug, Default)]
pub struct IngestCounters {
    pub rows_ingested: AtomicU64,
    pub parse_errors: AtomicU64,
}

/// Replays a trace file into the cache at `speed` times real time
/// (0 = no pacing). The effective sampling interval can be raised at
/// runtime by OTA reconfiguration: rows off the coarser grid are
/// skipped, which is how a longer duty cycle manifests in replay.
pub struct ReplaySource {
    rows: Vec<TraceRow>,
    speed: f64,
    base_time: i64,
    sampling_override_ms: Arc<AtomicU32>,
}

impl ReplaySource {
    pub fn open(path: &std::path::Path, speed: f64) -> Result<(Self, u64)> {
        let (rows, skipped) = read_trace(path)?;
        if rows.is_empty() {
            return Err(PlatformError::Config(format!(
                "trace {} has no parsable rows",
                path.display()
            )));
        }
        let base_time = rows.iter().map(|r| r.time_ms).min().unwrap_or(0);
        Ok((
            ReplaySource {
                rows,
                speed,
                base_time,
                sampling_override_ms: Arc::new(AtomicU32::new(0)),
            },
            skipped,
        ))
    }

    /// Handle OTA reconfiguration uses to change the replay cadence.
    pub fn sampling_handle(&self) -> Arc<AtomicU32> {
        self.sampling_override_ms.clone()
    }

    /// Run to completion (or shutdown), pushing into the cache.
    pub fn run(
        &self,
        cache: &Arc<Mutex<EdgeCache>>,
        counters: &Arc<IngestCounters>,
        shutdown: &Arc<AtomicBool>,
    ) {
        let started = Instant::now();
        for row in &self.rows {
            if shutdown.load(Ordering::Relaxed) {
                break;
            }
            let sampling = self.sampling_override_ms.load(Ordering::Relaxed);
            if sampling > 0 && (row.time_ms - self.base_time) % i64::from(sampling) != 0 {
                continue;
            }
            if self.speed > 0.0 {
                let due = Duration::from_millis(
                    ((row.time_ms - self.base_time) as f64 / self.speed) as u64,
                );
                while !shutdown.load(Ordering::Relaxed) {
                    let elapsed = started.elapsed();
                    if elapsed >= due {
                        break;
                    }
                    std::thread::sleep((due - elapsed).min(Duration::from_millis(100)));
                }
            }
            cache.lock().expect("cache lock").push(row.to_sample());
            counters.rows_ingested.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn trace_span(&self) -> (i64, i64) {
        let last = self.rows.iter().map(|r| r.time_ms).max().unwrap_or(0);
        (self.base_time, last)
    }
}

/// Accepts connections carrying newline-delimited trace rows (same
/// columns as the file format, no header) and feeds them to the cache.
/// Malformed lines bump the error counter, never kill the stream.
pub struct TcpSource {
    listener: TcpListener,
}

impl TcpSource {
    pub fn bind(addr: &str) -> Result<Self> {
        let listener = TcpListener::bind(addr)
            .map_err(|e| PlatformError::Config(format!("bind {addr}: {e}")))?;
        listener
            .set_nonblocking(true)
            .map_err(|e| PlatformError::Config(e.to_string()))?;
        Ok(TcpSource { listener })
    }

    pub fn local_addr(&self) -> std::net::SocketAddr {
        self.listener.local_addr().expect("bound listener")
    }

    pub fn run(
        &self,
        cache: &Arc<Mutex<EdgeCache>>,
        counters: &Arc<IngestCounters>,
        shutdown: &Arc<AtomicBool>,
    ) -> Result<()> {
        let mut workers: Vec<std::thread::JoinHandle<()>> = Vec::new();
        while !shutdown.load(Ordering::Relaxed) {
            match self.listener.accept() {
                Ok((stream, _)) => {
                    let cache = Arc::clone(cache);
                    let counters = Arc::clone(counters);
                    let shutdown = Arc::clone(shutdown);
                    workers.push(std::thread::spawn(move || {
                        let reader = BufReader::new(stream);
                        for line in reader.lines() {
                            if shutdown.load(Ordering::Relaxed) {
                                break;
                            }
                            match line {
                                Ok(text) if text.trim().is_empty() => {}
                                Ok(text) => match TraceRow::parse_line(&text) {
                                    Ok(row) => {
                                        cache.lock().expect("cache lock").push(row.to_sample());
                                        counters.rows_ingested.fetch_add(1, Ordering::Relaxed);
                                    }
                                    Err(_) => {
                                        counters.parse_errors.fetch_add(1, Ordering::Relaxed);
                                    }
                                },
                                Err(_) => break,
                            }
                        }
                    }));
                }
                Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(20));
                }
                Err(e) => return Err(PlatformError::Config(format!("accept: {e}"))),
            }
        }
        for w in workers {
            let _ = w.join();
        }
        Ok(())
    }
}

/// Feed already-parsed samples straight into a cache (test harnesses).
pub fn ingest_samples(cache: &Mutex<EdgeCache>, samples: impl IntoIterator<Item = CqiSample>) {
    let mut guard = cache.lock().expect("cache lock");
    guard.push_all(samples);
}
