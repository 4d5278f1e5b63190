//! Wall-clock instrumentation on a monotonic clock.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

/// Runs `thunk` and returns its result with the elapsed time. The label is
/// informational; [`Stopwatch::probe`] aggregates by it.
pub fn timing_probe<T>(_label: &str, thunk: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = thunk();
    (out, start.elapsed())
}

/// Accumulates probe durations per label.
#[derive(Clone, Debug, Default)]
pub struct Stopwatch {
    totals: BTreeMap<String, Duration>,
}

impl Stopwatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn probe<T>(&mut self, label: &str, thunk: impl FnOnce() -> T) -> T {
        let (out, dt) = timing_probe(label, thunk);
        *self.totals.entry(label.to_owned()).or_default() += dt;
        out
    }

    pub fn total(&self, label: &str) -> Duration {
        self.totals.get(label).copied().unwrap_or_default()
    }

    /// Clears all totals and returns them.
    pub fn take(&mut self) -> BTreeMap<String, Duration> {
        std::mem::take(&mut self.totals)
    }
}

pub(crate) fn micros(d: Duration) -> f64 {
    d.as_secs_f64() * 1e6
}
