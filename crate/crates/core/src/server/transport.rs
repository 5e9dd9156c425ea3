//! Outgoing byte sinks for the two transports.

use std::io::{self, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Mutex};

/// One encoded protocol message per call. Implementations serialize
/// concurrent writers.
pub trait MessageSink: Send + Sync {
    fn send(&self, bytes: Vec<u8>) -> io::Result<()>;
    fn close(&self);
}

fn closed_error() -> io::Error {
    io::Error::new(io::ErrorKind::BrokenPipe, "transport closed")
}

/// Length-delimited stream: messages are written back to back.
pub struct TcpSink {
    stream: Mutex<TcpStream>,
    closed: AtomicBool,
}

impl TcpSink {
    pub fn new(stream: TcpStream) -> Self {
        Self { stream: Mutex::new(stream), closed: AtomicBool::new(false) }
    }
}

impl MessageSink for TcpSink {
    fn send(&self, bytes: Vec<u8>) -> io::Result<()> {
        if self.closed.load(Ordering::Acquire) {
            return Err(closed_error());
        }
        let mut s = self.stream.lock().unwrap_or_else(|e| e.into_inner());
        s.write_all(&bytes)
    }

    fn close(&self) {
        self.closed.store(true, Ordering::Release);
        let s = self.stream.lock().unwrap_or_else(|e| e.into_inner());
        let _ = s.shutdown(Shutdown::Both);
    }
}

/// Hands messages to the connection thread that owns the websocket; each
/// becomes one binary websocket message.
pub struct ChannelSink {
    tx: Mutex<mpsc::Sender<Vec<u8>>>,
    closed: AtomicBool,
}

impl ChannelSink {
    pub fn new() -> (Self, mpsc::Receiver<Vec<u8>>) {
        let (tx, rx) = mpsc::channel();
        (Self { tx: Mutex::new(tx), closed: AtomicBool::new(false) }, rx)
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Acquire)
    }
}

impl MessageSink for ChannelSink {
    fn send(&self, bytes: Vec<u8>) -> io::Result<()> {
        if self.is_closed() {
            return Err(closed_error());
        }
        self.tx.lock().unwrap_or_else(|e| e.into_inner()).send(bytes).map_err(|_| closed_error())
    }

    fn close(&self) {
        self.closed.store(true, Ordering::Release);
    }
}
