//! Threaded orchestration of chains, folds and replicates.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use hetgibbs_core::design::ModelSpec;
use hetgibbs_core::evaluation::{fit_fold, pool_folds, CvResult, CvScheme};
use hetgibbs_core::gibbs::{run_chain, Clock, GibbsConfig, PosteriorChain};

use crate::error::Result;

/// Environment variable capping concurrent chains, folds and replicates.
pub const THREADS_ENV: &str = "HETGIBBS_THREADS";

/// Wall clock measured from construction.
#[derive(Debug, Clone, Copy)]
pub struct StdClock(Instant);

impl Default for StdClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for StdClock {
    fn now_nanos(&self) -> u64 {
        self.0.elapsed().as_nanos() as u64
    }
}

/// Worker count: `HETGIBBS_THREADS` if set and positive, otherwise the
/// available parallelism.
pub fn thread_cap() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Applies `f` to `0..count` on up to [`thread_cap`] scoped threads,
/// returning results in index order.
pub fn par_map<R, F>(count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync,
{
    let workers = thread_cap().min(count).max(1);
    if workers == 1 {
        return (0..count).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let r = f(i);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every index visited"))
        .collect()
}

/// A finished chain with its wall time.
#[derive(Debug, Clone)]
pub struct TimedChain {
    pub chain: PosteriorChain,
    pub elapsed_seconds: f64,
}

/// Runs `config.chains` chains concurrently.
pub fn run_chains(spec: &ModelSpec, config: &GibbsConfig) -> Result<Vec<TimedChain>> {
    config.validate()?;
    par_map(config.chains, |c| {
        let clock = StdClock::default();
        let chain = run_chain(spec, config, c as u64, &clock)?;
        Ok(TimedChain {
            chain,
            elapsed_seconds: clock.now_nanos() as f64 * 1e-9,
        })
    })
    .into_iter()
    .collect()
}

/// k-fold cross-validation with folds fitted concurrently.
pub fn run_cv(spec: &ModelSpec, config: &GibbsConfig, scheme: &CvScheme) -> Result<CvResult> {
    let folds = par_map(scheme.folds, |f| {
        fit_fold(spec, config, scheme, f, &StdClock::default())
    })
    .into_iter()
    .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(pool_folds(spec, folds)?)
}
