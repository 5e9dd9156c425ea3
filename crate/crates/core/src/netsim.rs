//! Deterministic network-condition injection: one-way delay, bounded uniform
//! jitter and periodic outages.
//!
//! Messages in flight during an outage are held back and released `base`
//! milliseconds after it ends (or dropped, when configured). Delivery times
//! never decrease within a direction, so the link never reorders.

use std::sync::mpsc;
use std::sync::Mutex;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::clock::MonotonicClock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Client to server.
    Uplink,
    /// Server to client.
    Downlink,
}

impl Direction {
    fn index(self) -> usize {
        match self {
            Direction::Uplink => 0,
            Direction::Downlink => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid network profile: {0}")]
pub struct ProfileError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NetworkProfile {
    pub uplink_delay_ms: u64,
    pub downlink_delay_ms: u64,
    /// Half-width of the uniform jitter added to each delivery.
    pub jitter_ms: u64,
    /// 0 disables outages.
    pub outage_period_ms: u64,
    pub outage_duration_ms: u64,
    pub seed: u64,
    /// Drop instead of buffering messages caught by an outage.
    pub drop_during_outage: bool,
}

impl NetworkProfile {
    pub fn symmetric(delay_ms: u64) -> Self {
        Self { uplink_delay_ms: delay_ms, downlink_delay_ms: delay_ms, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.outage_period_ms > 0 && self.outage_duration_ms >= self.outage_period_ms {
            return Err(ProfileError(format!(
                "outage duration {} ms must be shorter than the period {} ms",
                self.outage_duration_ms, self.outage_period_ms
            )));
        }
        Ok(())
    }

    pub fn base_delay_ms(&self, direction: Direction) -> u64 {
        match direction {
            Direction::Uplink => self.uplink_delay_ms,
            Direction::Downlink => self.downlink_delay_ms,
        }
    }

    pub fn is_transparent(&self) -> bool {
        self.uplink_delay_ms == 0
            && self.downlink_delay_ms == 0
            && self.jitter_ms == 0
            && (self.outage_period_ms == 0 || self.outage_duration_ms == 0)
    }

    /// `[start, end)` of the outage window containing `t_ms`, if any.
    fn outage_window_at(&self, t_ms: u64) -> Option<(u64, u64)> {
        if !outage_active(self, t_ms) {
            return None;
        }
        let start = t_ms - t_ms % self.outage_period_ms;
        Some((start, start + self.outage_duration_ms))
    }

    /// First outage window starting strictly after `t_ms`.
    fn next_outage_after(&self, t_ms: u64) -> Option<(u64, u64)> {
        if self.outage_period_ms == 0 || self.outage_duration_ms == 0 {
            return None;
        }
        let start = (t_ms / self.outage_period_ms + 1) * self.outage_period_ms;
        Some((start, start + self.outage_duration_ms))
    }
}

/// True iff `t mod period ∈ [0, duration)`; never true when `period = 0`.
pub fn outage_active(profile: &NetworkProfile, t_ms: u64) -> bool {
    profile.outage_period_ms > 0 && t_ms % profile.outage_period_ms < profile.outage_duration_ms
}

/// Per-direction delivery state: jitter RNG stream and last delivery time.
#[derive(Debug, Clone)]
pub struct DeliveryScheduler {
    profile: NetworkProfile,
    rngs: [ChaCha8Rng; 2],
    last_delivery: [u64; 2],
}

impl DeliveryScheduler {
    pub fn new(profile: NetworkProfile) -> Result<Self, ProfileError> {
        profile.validate()?;
        let rng = |stream: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(profile.seed);
            r.set_stream(stream);
            r
        };
        Ok(Self { profile, rngs: [rng(1), rng(2)], last_delivery: [0; 2] })
    }

    pub fn profile(&self) -> &NetworkProfile {
        &self.profile
    }

    /// Delivery time for a message sent at `send_time_ms`, or `None` if it is
    /// dropped by an outage.
    pub fn schedule_delivery(&mut self, send_time_ms: u64, direction: Direction) -> Option<u64> {
        let p = self.profile;
        let d = direction.index();
        let base = p.base_delay_ms(direction);
        let jitter = if p.jitter_ms > 0 {
            let j = p.jitter_ms as i64;
            self.rngs[d].random_range(-j..=j)
        } else {
            0
        };
        let mut delivery = (send_time_ms as i64 + base as i64 + jitter).max(send_time_ms as i64) as u64;

        // [send, delivery) must not overlap an outage; a deferred release can
        // itself run into the next window when base > period − duration.
        let mut from = send_time_ms;
        let mut deferred = false;
        loop {
            let hit =
                p.outage_window_at(from).or_else(|| p.next_outage_after(from).filter(|(start, _)| *start < delivery));
            match hit {
                Some((_, end)) => {
                    deferred = true;
                    from = end;
                    delivery = end + base;
                }
                None => break,
            }
        }
        if deferred && p.drop_during_outage {
            return None;
        }
        let delivery = delivery.max(self.last_delivery[d]);
        self.last_delivery[d] = delivery;
        Some(delivery)
    }
}

/// Real-time delay line: items are released to `deliver` at their scheduled
/// clock time, in submission order.
pub struct DelayLine<T: Send + 'static> {
    scheduler: Mutex<DeliveryScheduler>,
    direction: Direction,
    clock: MonotonicClock,
    tx: Mutex<Option<mpsc::Sender<(u64, T)>>>,
    worker: Mutex<Option<thread::JoinHandle<()>>>,
}

impl<T: Send + 'static> DelayLine<T> {
    pub fn spawn<F>(
        profile: NetworkProfile,
        direction: Direction,
        clock: MonotonicClock,
        mut deliver: F,
    ) -> Result<Self, ProfileError>
    where
        F: FnMut(T) -> bool + Send + 'static,
    {
        let scheduler = DeliveryScheduler::new(profile)?;
        let (tx, rx) = mpsc::channel::<(u64, T)>();
        let worker = thread::Builder::new()
            .name(format!("netsim-{direction:?}").to_lowercase())
            .spawn(move || {
                for (at, item) in rx {
                    clock.sleep_until(at);
                    if !deliver(item) {
                        break;
                    }
                }
            })
            .expect("spawn delay line");
        Ok(Self {
            scheduler: Mutex::new(scheduler),
            direction,
            clock,
            tx: Mutex::new(Some(tx)),
            worker: Mutex::new(Some(worker)),
        })
    }

    /// Schedules `item` as sent now. Returns false if it was dropped or the
    /// line is shut down.
    pub fn submit(&self, item: T) -> bool {
        let now = self.clock.now_ms();
        let at = self.scheduler.lock().unwrap_or_else(|e| e.into_inner()).schedule_delivery(now, self.direction);
        let Some(at) = at else { return false };
        match self.tx.lock().unwrap_or_else(|e| e.into_inner()).as_ref() {
            Some(tx) => tx.send((at, item)).is_ok(),
            None => false,
        }
    }

    /// Stops accepting items and waits for the queued ones to drain.
    pub fn shutdown(&self) {
        self.tx.lock().unwrap_or_else(|e| e.into_inner()).take();
        if let Some(h) = self.worker.lock().unwrap_or_else(|e| e.into_inner()).take() {
            let _ = h.join();
        }
    }
}

impl<T: Send + 'static> Drop for DelayLine<T> {
    fn drop(&mut self) {
        self.tx.get_mut().unwrap_or_else(|e| e.into_inner()).take();
    }
}
