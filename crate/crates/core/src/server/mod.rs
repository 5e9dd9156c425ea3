//! Session handling and the per-viewpoint render pipeline.
//!
//! Each announced viewpoint label gets its own mailbox, renderer worker
//! thread and sender thread. The connection's receive loop only decodes
//! and dispatches; it never waits on rendering.

mod listener;
mod transport;
mod worker;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use thiserror::Error;

use crate::geometry::CameraIntrinsics;
use crate::mailbox::ViewpointMailbox;
use crate::protocol::{
    encode_message, HelloMessage, ImageEncoding, IntrinsicsMessage, Message, PosePacket, ViewpointLabel,
};
use crate::renderer::Renderer;

pub use listener::{listen_override, Server, ServerHandle, LISTEN_ENV};
pub use transport::{ChannelSink, MessageSink, TcpSink};
pub use worker::{frame_from_image, sender_loop, worker_loop, ChannelStats, FrameSender, SenderQueue};

pub const DEFAULT_MAX_VIEWPOINTS: usize = 4;
pub const DEFAULT_SENDER_QUEUE: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("duplicate viewpoint label {0}")]
    DuplicateLabel(ViewpointLabel),
    #[error("{requested} viewpoints requested, limit is {max}")]
    TooManyViewpoints { requested: usize, max: usize },
    #[error("unknown viewpoint label {0}")]
    UnknownLabel(ViewpointLabel),
    #[error("session is {0}, not streaming")]
    NotStreaming(SessionState),
    #[error("sender for label {sender} given a frame for label {frame}")]
    LabelMismatch { sender: ViewpointLabel, frame: ViewpointLabel },
    #[error("transport closed")]
    TransportClosed,
    #[error("frame encoding failed: {0}")]
    Encode(String),
    #[error("unexpected {0} message")]
    Unexpected(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Handshaking,
    Streaming,
    Closed,
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionState::Handshaking => "handshaking",
            SessionState::Streaming => "streaming",
            SessionState::Closed => "closed",
        })
    }
}

/// Builds the renderer for one viewpoint of a new session.
pub type RendererFactory = Arc<dyn Fn(ViewpointLabel) -> Box<dyn Renderer> + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    /// Advertised to, and rendered at, every viewpoint.
    pub intrinsics: CameraIntrinsics,
    pub max_viewpoints: usize,
    pub sender_queue_capacity: usize,
    /// Processing stall applied when a PING arrives.
    pub ping_stall_ms: u64,
    pub encoding: ImageEncoding,
}

impl ServerConfig {
    pub fn new(intrinsics: CameraIntrinsics) -> Self {
        Self {
            intrinsics,
            max_viewpoints: DEFAULT_MAX_VIEWPOINTS,
            sender_queue_capacity: DEFAULT_SENDER_QUEUE,
            ping_stall_ms: 0,
            encoding: ImageEncoding::RawRgb8,
        }
    }
}

struct Channel {
    mailbox: Arc<ViewpointMailbox>,
    queue: Arc<SenderQueue>,
    stats: Arc<ChannelStats>,
    threads: Vec<JoinHandle<()>>,
}

/// Frame and pose counters for one label at a point in time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChannelCounts {
    pub poses_dispatched: u64,
    pub poses_overwritten: u64,
    pub frames_rendered: u64,
    pub render_errors: u64,
    pub frames_sent: u64,
    pub sender_drops: u64,
}

pub struct Session {
    client_id: Option<String>,
    state: SessionState,
    config: ServerConfig,
    factory: RendererFactory,
    sink: Arc<dyn MessageSink>,
    channels: BTreeMap<ViewpointLabel, Channel>,
    unknown_label_drops: AtomicU64,
    pings: u64,
}

impl Session {
    pub fn new(config: ServerConfig, factory: RendererFactory, sink: Arc<dyn MessageSink>) -> Self {
        Self {
            client_id: None,
            state: SessionState::Handshaking,
            config,
            factory,
            sink,
            channels: BTreeMap::new(),
            unknown_label_drops: AtomicU64::new(0),
            pings: 0,
        }
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn client_id(&self) -> Option<&str> {
        self.client_id.as_deref()
    }

    pub fn labels(&self) -> Vec<ViewpointLabel> {
        self.channels.keys().copied().collect()
    }

    pub fn unknown_label_drops(&self) -> u64 {
        self.unknown_label_drops.load(Ordering::Relaxed)
    }

    pub fn counts(&self, label: ViewpointLabel) -> Option<ChannelCounts> {
        let ch = self.channels.get(&label)?;
        let s = &ch.stats;
        Some(ChannelCounts {
            poses_dispatched: ChannelStats::get(&s.poses_dispatched),
            poses_overwritten: ch.mailbox.overwritten(),
            frames_rendered: ChannelStats::get(&s.frames_rendered),
            render_errors: ChannelStats::get(&s.render_errors),
            frames_sent: ChannelStats::get(&s.frames_sent),
            sender_drops: ChannelStats::get(&s.sender_drops),
        })
    }

    /// Sets up one pipeline per announced label and sends the intrinsics.
    pub fn handle_hello(&mut self, hello: &HelloMessage) -> Result<Vec<IntrinsicsMessage>, SessionError> {
        if self.state != SessionState::Handshaking {
            return Err(SessionError::Unexpected("HELLO"));
        }
        let labels = &hello.viewpoint_labels;
        if labels.len() > self.config.max_viewpoints {
            return Err(SessionError::TooManyViewpoints { requested: labels.len(), max: self.config.max_viewpoints });
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(SessionError::DuplicateLabel(*l));
            }
        }
        let intrinsics: Vec<IntrinsicsMessage> = labels
            .iter()
            .map(|&l| IntrinsicsMessage { viewpoint_label: l, intrinsics: self.config.intrinsics })
            .collect();
        for m in &intrinsics {
            let bytes = encode_message(&Message::Intrinsics(*m)).map_err(|e| SessionError::Encode(e.0))?;
            self.sink.send(bytes).map_err(|_| SessionError::TransportClosed)?;
        }
        self.client_id = Some(hello.client_id.clone());
        log::info!(
            "event=handshake client_id={} labels={}",
            hello.client_id,
            labels.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")
        );
        for &label in labels {
            let ch = self.spawn_channel(label);
            self.channels.insert(label, ch);
            log::info!("event=worker_start client_id={} label={label}", hello.client_id);
        }
        self.state = SessionState::Streaming;
        Ok(intrinsics)
    }

    fn spawn_channel(&self, label: ViewpointLabel) -> Channel {
        let mailbox = Arc::new(ViewpointMailbox::new());
        let queue = Arc::new(SenderQueue::new(self.config.sender_queue_capacity));
        let stats = Arc::new(ChannelStats::default());
        let mut renderer = (self.factory)(label);
        let intrinsics = self.config.intrinsics;
        let worker = {
            let (mailbox, queue, stats) = (Arc::clone(&mailbox), Arc::clone(&queue), Arc::clone(&stats));
            thread::Builder::new()
                .name(format!("render-{label}"))
                .spawn(move || {
                    worker_loop(label, &mailbox, renderer.as_mut(), &intrinsics, &queue, &stats);
                    queue.close();
                })
                .expect("spawn render worker")
        };
        let sender = {
            let (queue, stats) = (Arc::clone(&queue), Arc::clone(&stats));
            let (sink, mailbox) = (Arc::clone(&self.sink), Arc::clone(&mailbox));
            let encoding = self.config.encoding;
            thread::Builder::new()
                .name(format!("sender-{label}"))
                .spawn(move || {
                    sender_loop(&queue, &FrameSender::new(label, sink, encoding), &stats);
                    mailbox.close();
                })
                .expect("spawn sender")
        };
        Channel { mailbox, queue, stats, threads: vec![worker, sender] }
    }

    /// Writes `packet` into its label's mailbox, replacing any pending pose.
    pub fn dispatch_pose(&self, packet: PosePacket) -> Result<(), SessionError> {
        if self.state != SessionState::Streaming {
            return Err(SessionError::NotStreaming(self.state));
        }
        let Some(ch) = self.channels.get(&packet.viewpoint_label) else {
            self.unknown_label_drops.fetch_add(1, Ordering::Relaxed);
            return Err(SessionError::UnknownLabel(packet.viewpoint_label));
        };
        ch.stats.poses_dispatched.fetch_add(1, Ordering::Relaxed);
        ch.mailbox.put(packet);
        Ok(())
    }

    /// Routes one decoded client message. Unknown-label poses are dropped
    /// and counted rather than treated as fatal.
    pub fn handle_message(&mut self, msg: Message) -> Result<(), SessionError> {
        match msg {
            Message::Hello(h) => self.handle_hello(&h).map(|_| ()),
            Message::Pose(p) => match self.dispatch_pose(p) {
                Err(SessionError::UnknownLabel(l)) => {
                    log::debug!("event=unknown_label label={l}");
                    Ok(())
                }
                other => other,
            },
            Message::Ping { nonce } => {
                self.pings += 1;
                if self.config.ping_stall_ms > 0 {
                    thread::sleep(Duration::from_millis(self.config.ping_stall_ms));
                }
                let bytes = encode_message(&Message::Pong { nonce }).map_err(|e| SessionError::Encode(e.0))?;
                self.sink.send(bytes).map_err(|_| SessionError::TransportClosed)
            }
            Message::Pong { .. } => Ok(()),
            Message::Intrinsics(_) => Err(SessionError::Unexpected("INTRINSICS")),
            Message::Frame(_) => Err(SessionError::Unexpected("FRAME")),
        }
    }

    /// Stops every worker and sender and waits for them. Pending frames are
    /// flushed if the transport is still open.
    pub fn close(&mut self) {
        if self.state == SessionState::Closed {
            return;
        }
        self.state = SessionState::Closed;
        for ch in self.channels.values() {
            ch.mailbox.close();
        }
        for (label, ch) in self.channels.iter_mut() {
            for t in ch.threads.drain(..) {
                let _ = t.join();
            }
            ch.queue.close();
            let s = &ch.stats;
            log::info!(
                "event=worker_stop client_id={} label={label} poses={} overwritten={} frames={} sent={} dropped={} errors={}",
                self.client_id.as_deref().unwrap_or("-"),
                ChannelStats::get(&s.poses_dispatched),
                ch.mailbox.overwritten(),
                ChannelStats::get(&s.frames_rendered),
                ChannelStats::get(&s.frames_sent),
                ChannelStats::get(&s.sender_drops),
                ChannelStats::get(&s.render_errors),
            );
        }
        self.sink.close();
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.close();
    }
}
