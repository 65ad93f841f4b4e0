use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use fairfed_core::federation::ClientExecutor;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "FAIRFED_THREADS";

/// Runs jobs on scoped worker threads that pull from a shared counter.
/// Outputs are slotted back by job index, so the result never depends on
/// which thread ran what.
#[derive(Debug, Clone, Copy)]
pub struct ThreadExecutor {
    threads: usize,
}

impl ThreadExecutor {
    pub fn new(threads: usize) -> Self {
        Self {
            threads: threads.max(1),
        }
    }

    /// Reads `FAIRFED_THREADS`, falling back to the available parallelism.
    pub fn from_env() -> Self {
        let fallback = std::thread::available_parallelism().map_or(1, NonZeroUsize::get);
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
            .unwrap_or(fallback);
        Self::new(threads)
    }

    pub fn threads(&self) -> usize {
        self.threads
    }
}

impl ClientExecutor for ThreadExecutor {
    fn map<T, F>(&self, jobs: &[usize], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let workers = self.threads.min(jobs.len());
        if workers <= 1 {
            return jobs.iter().map(|&j| f(j)).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= jobs.len() {
                        break;
                    }
                    let out = f(jobs[i]);
                    slots.lock().expect("worker panicked")[i] = Some(out);
                });
            }
        });
        slots
            .into_inner()
            .expect("worker panicked")
            .into_iter()
            .map(|o| o.expect("every job produces an output"))
            .collect()
    }
}
