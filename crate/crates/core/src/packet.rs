//! DSR packet formats and their on-air sizes.

use crate::engine::SimTime;
use crate::route::{NodeId, Route};

/// Fixed part of every control packet.
pub const CONTROL_HEADER_BYTES: usize = 16;
/// Cost of each node address carried in a header.
pub const ADDRESS_BYTES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    pub flow_id: u32,
    pub seq: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub source_route: Route,
    /// Index into `source_route` of the node currently holding the packet.
    pub hop_index: usize,
    pub payload_size: usize,
    /// Application hand-off time at the source.
    pub originated_at: SimTime,
    pub salvaged: bool,
}

impl DataPacket {
    pub fn key(&self) -> (u32, u32) {
        (self.flow_id, self.seq)
    }

    pub fn next_hop(&self) -> Option<NodeId> {
        self.source_route.hops().get(self.hop_index + 1).copied()
    }

    pub fn holder(&self) -> Option<NodeId> {
        self.source_route.hops().get(self.hop_index).copied()
    }

    /// Hops the packet still has to travel.
    pub fn remaining_hops(&self) -> usize {
        self.source_route.len().saturating_sub(self.hop_index + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteRequest {
    pub request_id: u32,
    pub src: NodeId,
    pub target: NodeId,
    /// Nodes the request has visited, starting with `src`.
    pub accumulated: Route,
}

/// A discovered route travelling back to `to` along `path`.
///
/// `request_id` is `None` for gratuitous replies sent after overhearing.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteReply {
    pub request_id: Option<u32>,
    pub route: Route,
    pub to: NodeId,
    pub path: Route,
    pub hop_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteError {
    pub broken: (NodeId, NodeId),
    pub to: NodeId,
    pub path: Route,
    pub hop_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Packet {
    Data(DataPacket),
    Request(RouteRequest),
    Reply(RouteReply),
    Error(RouteError),
}

impl Packet {
    /// Frame size in bytes: data carries its payload plus one address per
    /// source-route hop; control packets carry a fixed header plus one
    /// address per listed node.
    pub fn wire_size(&self) -> usize {
        match self {
            Packet::Data(d) => d.payload_size + ADDRESS_BYTES * d.source_route.len(),
            Packet::Request(r) => CONTROL_HEADER_BYTES + ADDRESS_BYTES * r.accumulated.len(),
            Packet::Reply(r) => CONTROL_HEADER_BYTES + ADDRESS_BYTES * r.route.len(),
            Packet::Error(e) => CONTROL_HEADER_BYTES + ADDRESS_BYTES * (2 + e.path.len()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Packet::Data(_) => "data",
            Packet::Request(_) => "rreq",
            Packet::Reply(_) => "rrep",
            Packet::Error(_) => "rerr",
        }
    }
}
