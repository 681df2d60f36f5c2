use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use super::clock::RunClock;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BarrierError {
    #[error("barrier timed out after {timeout:?} with {arrived} of {expected} workers")]
    Timeout {
        timeout: Duration,
        arrived: usize,
        expected: usize,
    },
    #[error("barrier aborted: {0}")]
    Aborted(String),
}

#[derive(Debug, Default)]
struct State {
    arrived: usize,
    released: Option<f64>,
    aborted: Option<String>,
}

/// Start line for a set of workers.
///
/// Nobody passes until all `expected` workers have arrived; every waiter gets
/// the same release timestamp. Workers take their own start time after
/// `wait` returns, so barrier latency never counts as I/O time.
#[derive(Debug)]
pub struct StartBarrier {
    expected: usize,
    timeout: Duration,
    clock: RunClock,
    state: Mutex<State>,
    cv: Condvar,
}

impl StartBarrier {
    pub fn new(expected: usize, timeout: Duration, clock: RunClock) -> Self {
        Self {
            expected,
            timeout,
            clock,
            state: Mutex::new(State::default()),
            cv: Condvar::new(),
        }
    }

    /// Blocks until everyone arrived and returns the release time.
    pub fn wait(&self) -> Result<f64, BarrierError> {
        let deadline = Instant::now() + self.timeout;
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(why) = &state.aborted {
            return Err(BarrierError::Aborted(why.clone()));
        }
        state.arrived += 1;
        if state.arrived >= self.expected {
            let t = self.clock.now();
            state.released = Some(t);
            self.cv.notify_all();
            return Ok(t);
        }
        loop {
            if let Some(t) = state.released {
                return Ok(t);
            }
            if let Some(why) = &state.aborted {
                return Err(BarrierError::Aborted(why.clone()));
            }
            let now = Instant::now();
            if now >= deadline {
                let err = BarrierError::Timeout {
                    timeout: self.timeout,
                    arrived: state.arrived,
                    expected: self.expected,
                };
                state.aborted = Some(err.to_string());
                self.cv.notify_all();
                return Err(err);
            }
            state = self
                .cv
                .wait_timeout(state, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    /// Fails every current and future waiter. Used when a worker dies before
    /// reaching the barrier.
    pub fn abort(&self, why: impl Into<String>) {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        if state.released.is_none() && state.aborted.is_none() {
            state.aborted = Some(why.into());
        }
        self.cv.notify_all();
    }

    pub fn release_time(&self) -> Option<f64> {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).released
    }
}
