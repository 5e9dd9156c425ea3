//! Single-slot, overwrite-on-write mailbox.
//!
//! A `put` replaces whatever is waiting, so the consumer always sees the
//! freshest value and pending state never grows beyond one item.

use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::Duration;

use crate::protocol::PosePacket;

pub type ViewpointMailbox = Mailbox<PosePacket>;

#[derive(Debug)]
struct Slot<T> {
    value: Option<T>,
    generation: u64,
    overwritten: u64,
    closed: bool,
}

#[derive(Debug)]
pub struct Mailbox<T> {
    slot: Mutex<Slot<T>>,
    ready: Condvar,
}

impl<T> Default for Mailbox<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> Mailbox<T> {
    pub fn new() -> Self {
        Self {
            slot: Mutex::new(Slot { value: None, generation: 0, overwritten: 0, closed: false }),
            ready: Condvar::new(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Slot<T>> {
        self.slot.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Stores `value`, returning the unconsumed value it replaced.
    pub fn put(&self, value: T) -> Option<T> {
        let mut s = self.lock();
        s.generation += 1;
        let old = s.value.replace(value);
        if old.is_some() {
            s.overwritten += 1;
        }
        drop(s);
        self.ready.notify_one();
        old
    }

    pub fn try_take(&self) -> Option<T> {
        self.lock().value.take()
    }

    /// Blocks until a value is available. Returns `None` once the mailbox is
    /// closed and empty.
    pub fn take(&self) -> Option<T> {
        let mut s = self.lock();
        loop {
            if let Some(v) = s.value.take() {
                return Some(v);
            }
            if s.closed {
                return None;
            }
            s = self.ready.wait(s).unwrap_or_else(|e| e.into_inner());
        }
    }

    pub fn take_timeout(&self, timeout: Duration) -> Option<T> {
        let s = self.lock();
        let (mut s, _) = self
            .ready
            .wait_timeout_while(s, timeout, |s| s.value.is_none() && !s.closed)
            .unwrap_or_else(|e| e.into_inner());
        s.value.take()
    }

    pub fn close(&self) {
        self.lock().closed = true;
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }

    /// Number of puts so far.
    pub fn generation(&self) -> u64 {
        self.lock().generation
    }

    /// Number of puts that replaced a value before it was taken.
    pub fn overwritten(&self) -> u64 {
        self.lock().overwritten
    }

    pub fn is_empty(&self) -> bool {
        self.lock().value.is_none()
    }
}
