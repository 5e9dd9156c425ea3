//! Remote real-time rendering: clients stream labeled camera poses, the
//! server renders each viewpoint on its own worker and streams frames back,
//! and the client measures latency from echoed timestamps.

pub mod client;
pub mod clock;
pub mod config;
pub mod geometry;
pub mod mailbox;
pub mod metrics;
pub mod netsim;
pub mod protocol;
pub mod renderer;
pub mod server;
pub mod sim;

pub use geometry::{CameraIntrinsics, Pose, StereoRig, Vec3};
pub use mailbox::{Mailbox, ViewpointMailbox};
pub use metrics::{FrameSample, MetricsLog, MetricsSummary};
pub use netsim::NetworkProfile;
pub use protocol::{FramePacket, Message, PosePacket, ViewpointLabel};
pub use renderer::{RadianceField, Renderer};
