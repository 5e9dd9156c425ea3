use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use crate::geometry::CameraIntrinsics;
use crate::mailbox::ViewpointMailbox;
use crate::protocol::{encode_message, FramePacket, ImageEncoding, Message, ViewpointLabel};
use crate::renderer::{RenderedImage, Renderer};

use super::transport::MessageSink;
use super::SessionError;

/// Per-viewpoint counters; all updates are atomic.
#[derive(Debug, Default)]
pub struct ChannelStats {
    pub poses_dispatched: AtomicU64,
    pub frames_rendered: AtomicU64,
    pub render_errors: AtomicU64,
    pub frames_sent: AtomicU64,
    pub sender_drops: AtomicU64,
}

impl ChannelStats {
    pub fn get(counter: &AtomicU64) -> u64 {
        counter.load(Ordering::Relaxed)
    }
}

struct QueueState {
    items: VecDeque<FramePacket>,
    closed: bool,
}

/// Bounded FIFO between a worker and its sender. When full, the oldest
/// queued frame is dropped.
pub struct SenderQueue {
    state: Mutex<QueueState>,
    ready: Condvar,
    capacity: usize,
}

impl SenderQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            state: Mutex::new(QueueState { items: VecDeque::with_capacity(capacity), closed: false }),
            ready: Condvar::new(),
            capacity: capacity.max(1),
        }
    }

    fn lock(&self) -> MutexGuard<'_, QueueState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Enqueues `frame`; returns the frame evicted to make room, if any.
    pub fn push(&self, frame: FramePacket) -> Option<FramePacket> {
        let mut s = self.lock();
        let evicted = if s.items.len() >= self.capacity { s.items.pop_front() } else { None };
        s.items.push_back(frame);
        drop(s);
        self.ready.notify_one();
        evicted
    }

    /// Blocks for the next frame; `None` once closed and drained.
    pub fn pop(&self) -> Option<FramePacket> {
        let mut s = self.lock();
        loop {
            if let Some(f) = s.items.pop_front() {
                return Some(f);
            }
            if s.closed {
                return None;
            }
            s = self.ready.wait(s).unwrap_or_else(|e| e.into_inner());
        }
    }

    pub fn close(&self) {
        self.lock().closed = true;
        self.ready.notify_all();
    }

    pub fn len(&self) -> usize {
        self.lock().items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn frame_from_image(label: ViewpointLabel, echoed_timestamp_ms: u64, image: RenderedImage) -> FramePacket {
    FramePacket {
        viewpoint_label: label,
        echoed_timestamp_ms,
        render_time_ms: image.render_time_ms,
        width_px: image.width_px,
        height_px: image.height_px,
        encoding: ImageEncoding::RawRgb8,
        image: image.pixels,
    }
}

/// Renders the freshest pose each time the previous render finishes.
/// Returns when the mailbox is closed.
pub fn worker_loop<R: Renderer + ?Sized>(
    label: ViewpointLabel,
    mailbox: &ViewpointMailbox,
    renderer: &mut R,
    intrinsics: &CameraIntrinsics,
    queue: &SenderQueue,
    stats: &ChannelStats,
) {
    while let Some(packet) = mailbox.take() {
        let pose = match packet.to_pose() {
            Ok(p) => p,
            Err(e) => {
                stats.render_errors.fetch_add(1, Ordering::Relaxed);
                log::warn!("event=bad_pose label={label} error=\"{e}\"");
                continue;
            }
        };
        match renderer.render(&pose, intrinsics) {
            Ok(image) => {
                stats.frames_rendered.fetch_add(1, Ordering::Relaxed);
                if queue.push(frame_from_image(label, packet.timestamp_ms, image)).is_some() {
                    stats.sender_drops.fetch_add(1, Ordering::Relaxed);
                }
            }
            Err(e) => {
                stats.render_errors.fetch_add(1, Ordering::Relaxed);
                log::warn!("event=render_failed label={label} error=\"{e}\"");
            }
        }
    }
}

/// Encodes and writes frames for one viewpoint.
pub struct FrameSender {
    label: ViewpointLabel,
    sink: Arc<dyn MessageSink>,
    encoding: ImageEncoding,
}

impl FrameSender {
    pub fn new(label: ViewpointLabel, sink: Arc<dyn MessageSink>, encoding: ImageEncoding) -> Self {
        Self { label, sink, encoding }
    }

    pub fn send_frame(&self, mut frame: FramePacket) -> Result<(), SessionError> {
        if frame.viewpoint_label != self.label {
            return Err(SessionError::LabelMismatch { sender: self.label, frame: frame.viewpoint_label });
        }
        if self.encoding == ImageEncoding::Png && frame.encoding == ImageEncoding::RawRgb8 {
            let img = RenderedImage {
                width_px: frame.width_px,
                height_px: frame.height_px,
                pixels: std::mem::take(&mut frame.image),
                render_time_ms: frame.render_time_ms,
            };
            frame.image = img.to_png().map_err(|e| SessionError::Encode(e.to_string()))?;
            frame.encoding = ImageEncoding::Png;
        }
        let bytes = encode_message(&Message::Frame(frame)).map_err(|e| SessionError::Encode(e.to_string()))?;
        self.sink.send(bytes).map_err(|_| SessionError::TransportClosed)
    }
}

/// Drains `queue` through `sender` in FIFO order. A closed transport stops
/// the loop and closes the sink so the receive side tears the session down.
pub fn sender_loop(queue: &SenderQueue, sender: &FrameSender, stats: &ChannelStats) {
    while let Some(frame) = queue.pop() {
        match sender.send_frame(frame) {
            Ok(()) => {
                stats.frames_sent.fetch_add(1, Ordering::Relaxed);
            }
            Err(SessionError::TransportClosed) => {
                log::info!("event=transport_closed label={}", sender.label);
                sender.sink.close();
                queue.close();
                return;
            }
            Err(e) => log::warn!("event=send_failed label={} error=\"{e}\"", sender.label),
        }
    }
}
