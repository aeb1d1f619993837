//! Idealized shared radio channel.
//!
//! Connectivity is a pure distance threshold. There are no collisions and no
//! propagation delay; a frame occupies its sender for `size * 8 / bandwidth`
//! seconds and frames from one sender are serialized. Every node in range of
//! the sender when the frame goes on air receives one copy.

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::mobility::MobilityTrace;
use crate::NodeId;

/// Additional attempts a unicast frame gets before the sender declares the link broken.
pub const DEFAULT_LINK_RETRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub tx_range: f64,
    pub bandwidth: u64,
    pub link_retries: u32,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig { tx_range: 100.0, bandwidth: 2_000_000, link_retries: DEFAULT_LINK_RETRIES }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dest {
    Unicast(NodeId),
    Broadcast,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryOutcome {
    /// Receivers, in ascending node order.
    pub delivered_to: Vec<NodeId>,
    /// For unicast: the addressed node received the frame. Always true for broadcast.
    pub unicast_ack: bool,
    pub attempts: u32,
    /// When the receivers get the frame (or the sender learns of the failure).
    pub complete_at: SimTime,
    /// When the delivered attempt went on air.
    pub on_air_at: SimTime,
}

pub struct Channel {
    cfg: ChannelConfig,
    busy_until: Vec<SimTime>,
}

impl Channel {
    pub fn new(cfg: ChannelConfig, node_count: usize) -> Self {
        Channel { cfg, busy_until: vec![SimTime::ZERO; node_count] }
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    /// Airtime of a frame, rounded up to the next microsecond.
    pub fn tx_delay(&self, size_bytes: usize) -> SimTime {
        let bits = size_bytes as u64 * 8;
        SimTime::from_micros((bits * 1_000_000).div_ceil(self.cfg.bandwidth))
    }

    pub fn link_up(&self, trace: &MobilityTrace, a: NodeId, b: NodeId, t: SimTime) -> bool {
        let t = t.as_secs_f64().min(trace.duration());
        let pa = trace.position_at_secs(a, t).expect("node in trace");
        let pb = trace.position_at_secs(b, t).expect("node in trace");
        pa.distance(&pb) <= self.cfg.tx_range
    }

    fn in_range_of(&self, trace: &MobilityTrace, sender: NodeId, t: SimTime) -> Vec<NodeId> {
        let t = t.as_secs_f64().min(trace.duration());
        let ps = trace.position_at_secs(sender, t).expect("node in trace");
        (0..trace.node_count() as u32)
            .map(NodeId)
            .filter(|&n| n != sender)
            .filter(|&n| {
                let p = trace.position_at_secs(n, t).expect("node in trace");
                ps.distance(&p) <= self.cfg.tx_range
            })
            .collect()
    }

    /// Earliest time the sender's queue is free.
    pub fn busy_until(&self, node: NodeId) -> SimTime {
        self.busy_until[node.index()]
    }

    /// Puts a frame on air from `sender` at `t` (after any queued frames).
    ///
    /// A unicast frame is retried up to `link_retries` more times if the
    /// destination is out of range; each attempt occupies the sender.
    pub fn transmit(
        &mut self,
        trace: &MobilityTrace,
        sender: NodeId,
        dst: Dest,
        size_bytes: usize,
        t: SimTime,
    ) -> DeliveryOutcome {
        let airtime = self.tx_delay(size_bytes);
        let mut on_air = t.max(self.busy_until[sender.index()]);
        let max_attempts = match dst {
            Dest::Broadcast => 1,
            Dest::Unicast(_) => 1 + self.cfg.link_retries,
        };
        let mut attempts = 0;
        loop {
            attempts += 1;
            let receivers = self.in_range_of(trace, sender, on_air);
            let done = on_air + airtime;
            let ack = match dst {
                Dest::Broadcast => true,
                Dest::Unicast(d) => receivers.binary_search(&d).is_ok(),
            };
            if ack || attempts >= max_attempts {
                self.busy_until[sender.index()] = done;
                return DeliveryOutcome {
                    delivered_to: receivers,
                    unicast_ack: ack,
                    attempts,
                    complete_at: done,
                    on_air_at: on_air,
                };
            }
            on_air = done;
        }
    }
}
