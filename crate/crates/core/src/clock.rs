//! Millisecond clocks.

use std::time::{Duration, Instant};

/// Monotonic wall clock counting milliseconds from its creation.
#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    epoch: Instant,
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self { epoch: Instant::now() }
    }

    pub fn now_ms(&self) -> u64 {
        self.epoch.elapsed().as_millis() as u64
    }

    pub fn instant_at(&self, ms: u64) -> Instant {
        self.epoch + Duration::from_millis(ms)
    }

    /// Sleeps until the clock reads at least `ms`.
    pub fn sleep_until(&self, ms: u64) {
        let target = self.instant_at(ms);
        let now = Instant::now();
        if target > now {
            std::thread::sleep(target - now);
        }
    }
}
