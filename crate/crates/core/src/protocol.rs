//! Per-node DSR behaviour: source-routed forwarding, route discovery, route
//! maintenance, salvaging, overhearing and gratuitous replies.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::cache::{RouteCache, Tier};
use crate::engine::{EventHandle, Scheduler, SimError, SimTime};
use crate::metrics::DropCause;
use crate::packet::{DataPacket, Packet, RouteError, RouteReply, RouteRequest};
use crate::route::{NodeId, Route};
use crate::sim::{DiscoveryRecord, Event, Simulation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Re-floods after the first request before giving up.
    pub max_retries: u32,
    /// Wait before the first re-flood; doubles for each subsequent one.
    pub retry_base: SimTime,
    pub buffer_capacity: usize,
    pub buffer_timeout: SimTime,
    /// Minimum spacing of gratuitous replies per (src, dst) at one node.
    pub gratuitous_interval: SimTime,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            max_retries: 8,
            retry_base: SimTime::from_millis(500),
            buffer_capacity: 64,
            buffer_timeout: SimTime::from_secs(30),
            gratuitous_interval: SimTime::from_secs(1),
        }
    }
}

impl ProtocolConfig {
    /// Wait before re-flood number `attempt` (1-based), measured from the previous flood.
    pub fn retry_backoff(&self, attempt: u32) -> SimTime {
        let shift = attempt.saturating_sub(1).min(32);
        SimTime::from_micros(self.retry_base.as_micros() << shift)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PendingDiscovery {
    pub(crate) attempts: u32,
    pub(crate) started_at: SimTime,
    pub(crate) next_retry_at: SimTime,
    pub(crate) timer: EventHandle,
}

/// Duplicate suppression for floods plus the discoveries this node has outstanding.
#[derive(Debug, Default)]
pub struct RequestTable {
    seen: HashSet<(NodeId, u32)>,
    next_id: u32,
    pending: BTreeMap<NodeId, PendingDiscovery>,
}

impl RequestTable {
    /// Returns false if the pair was already recorded.
    pub fn mark_seen(&mut self, src: NodeId, request_id: u32) -> bool {
        self.seen.insert((src, request_id))
    }

    pub fn fresh_id(&mut self) -> u32 {
        self.next_id += 1;
        self.next_id
    }

    pub fn is_pending(&self, target: NodeId) -> bool {
        self.pending.contains_key(&target)
    }
}

#[derive(Debug, Clone)]
pub struct Buffered {
    pub packet: DataPacket,
    pub enqueued_at: SimTime,
}

/// FIFO of data packets waiting for a route.
#[derive(Debug)]
pub struct SendBuffer {
    capacity: usize,
    queue: VecDeque<Buffered>,
}

impl SendBuffer {
    pub fn new(capacity: usize) -> Self {
        SendBuffer { capacity, queue: VecDeque::new() }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Hands the packet back if the buffer is full.
    pub fn push(&mut self, packet: DataPacket, at: SimTime) -> Result<(), DataPacket> {
        if self.queue.len() >= self.capacity {
            return Err(packet);
        }
        self.queue.push_back(Buffered { packet, enqueued_at: at });
        Ok(())
    }

    pub fn remove(&mut self, key: (u32, u32)) -> Option<Buffered> {
        let i = self.queue.iter().position(|b| b.packet.key() == key)?;
        self.queue.remove(i)
    }

    /// Removes the entry only if it was enqueued at `enqueued_at`.
    pub fn remove_if_enqueued_at(&mut self, key: (u32, u32), enqueued_at: SimTime) -> Option<Buffered> {
        let i = self.queue.iter().position(|b| b.packet.key() == key && b.enqueued_at == enqueued_at)?;
        self.queue.remove(i)
    }

    pub fn has_dst(&self, dst: NodeId) -> bool {
        self.queue.iter().any(|b| b.packet.dst == dst)
    }

    pub fn take_dst(&mut self, dst: NodeId) -> Vec<Buffered> {
        let mut taken = Vec::new();
        self.queue.retain(|b| {
            if b.packet.dst == dst {
                taken.push(b.clone());
                false
            } else {
                true
            }
        });
        taken
    }

    pub fn iter(&self) -> impl Iterator<Item = &Buffered> {
        self.queue.iter()
    }
}

pub struct NodeState {
    pub cache: RouteCache,
    pub(crate) requests: RequestTable,
    pub(crate) buffer: SendBuffer,
    gratuitous_sent: HashMap<(NodeId, NodeId), SimTime>,
}

impl NodeState {
    pub fn new(cache: RouteCache, buffer_capacity: usize) -> Self {
        NodeState {
            cache,
            requests: RequestTable::default(),
            buffer: SendBuffer::new(buffer_capacity),
            gratuitous_sent: HashMap::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.cache.owner()
    }
}

impl Simulation {
    fn node(&mut self, n: NodeId) -> &mut NodeState {
        &mut self.nodes[n.index()]
    }

    pub(crate) fn originate_data(
        &mut self,
        s: &mut Scheduler<Event>,
        src: NodeId,
        dst: NodeId,
        flow_id: u32,
        seq: u32,
        t: SimTime,
    ) {
        self.metrics.record_sent(flow_id, seq, t);
        let packet = DataPacket {
            flow_id,
            seq,
            src,
            dst,
            source_route: Route::new(vec![src]),
            hop_index: 0,
            payload_size: self.flow_cfg.packet_size,
            originated_at: t,
            salvaged: false,
        };
        self.audit(t, src, "originate", || format!("flow={flow_id} seq={seq} dst={dst}"));
        self.dispatch_from_source(s, packet, t);
    }

    /// Sends from the source if the cache has a route, otherwise buffers and discovers.
    fn dispatch_from_source(&mut self, s: &mut Scheduler<Event>, mut packet: DataPacket, t: SimTime) {
        let src = packet.src;
        match self.node(src).cache.lookup(packet.dst) {
            Some(route) => {
                packet.source_route = route;
                packet.hop_index = 0;
                self.send_data(s, src, packet, t);
            }
            None => self.buffer_and_discover(s, src, packet, t),
        }
    }

    fn buffer_and_discover(&mut self, s: &mut Scheduler<Event>, node: NodeId, packet: DataPacket, t: SimTime) {
        let dst = packet.dst;
        let key = packet.key();
        if self.node(node).buffer.push(packet, t).is_err() {
            self.audit(t, node, "drop", || format!("buffer_overflow flow={} seq={}", key.0, key.1));
            self.metrics.record_drop(key.0, key.1, DropCause::BufferOverflow);
            return;
        }
        let expiry = t + self.proto.buffer_timeout;
        self.schedule_timer(s, Event::BufferExpiry { node, key, enqueued_at: t }, expiry);
        if !self.node(node).requests.is_pending(dst) {
            self.start_discovery(s, node, dst, t);
        }
    }

    fn flood_request(&mut self, s: &mut Scheduler<Event>, node: NodeId, target: NodeId, t: SimTime) {
        let requests = &mut self.node(node).requests;
        let request_id = requests.fresh_id();
        requests.mark_seen(node, request_id);
        self.audit(t, node, "rreq_start", || format!("target={target} id={request_id}"));
        let rreq = RouteRequest { request_id, src: node, target, accumulated: Route::new(vec![node]) };
        self.send_broadcast(s, node, Packet::Request(rreq), t);
    }

    fn start_discovery(&mut self, s: &mut Scheduler<Event>, node: NodeId, target: NodeId, t: SimTime) {
        self.flood_request(s, node, target, t);
        let next_retry_at = t + self.proto.retry_backoff(1);
        let timer = self.schedule_timer(s, Event::DiscoveryRetry { node, target }, next_retry_at);
        self.node(node)
            .requests
            .pending
            .insert(target, PendingDiscovery { attempts: 0, started_at: t, next_retry_at, timer });
    }

    fn end_discovery(&mut self, s: &mut Scheduler<Event>, node: NodeId, target: NodeId) -> Option<PendingDiscovery> {
        let p = self.node(node).requests.pending.remove(&target)?;
        s.cancel(p.timer);
        Some(p)
    }

    pub(crate) fn retry_discovery(&mut self, s: &mut Scheduler<Event>, node: NodeId, target: NodeId, t: SimTime) {
        let Some(p) = self.node(node).requests.pending.get(&target).cloned() else { return };
        if p.next_retry_at != t {
            return;
        }
        if !self.node(node).buffer.has_dst(target) {
            self.node(node).requests.pending.remove(&target);
            return;
        }
        if self.node(node).cache.find(target).is_some() {
            self.node(node).requests.pending.remove(&target);
            self.flush_buffer(s, node, t);
            return;
        }
        if p.attempts >= self.proto.max_retries {
            self.node(node).requests.pending.remove(&target);
            for b in self.node(node).buffer.take_dst(target) {
                let (f, q) = b.packet.key();
                self.audit(t, node, "drop", || format!("no_route flow={f} seq={q}"));
                self.metrics.record_drop(f, q, DropCause::NoRoute);
            }
            return;
        }
        let attempts = p.attempts + 1;
        self.flood_request(s, node, target, t);
        let next_retry_at = t + self.proto.retry_backoff(attempts + 1);
        let timer = self.schedule_timer(s, Event::DiscoveryRetry { node, target }, next_retry_at);
        let entry = self.node(node).requests.pending.get_mut(&target).expect("checked above");
        entry.attempts = attempts;
        entry.next_retry_at = next_retry_at;
        entry.timer = timer;
    }

    pub(crate) fn expire_buffered(&mut self, node: NodeId, key: (u32, u32), enqueued_at: SimTime, t: SimTime) {
        if self.node(node).buffer.remove_if_enqueued_at(key, enqueued_at).is_some() {
            self.audit(t, node, "drop", || format!("timeout flow={} seq={}", key.0, key.1));
            self.metrics.record_drop(key.0, key.1, DropCause::NoRoute);
        }
    }

    /// Sends every buffered packet that now has a cached route, in FIFO order.
    fn flush_buffer(&mut self, s: &mut Scheduler<Event>, node: NodeId, t: SimTime) {
        if self.node(node).buffer.is_empty() {
            return;
        }
        let waiting: Vec<Buffered> = std::mem::take(&mut self.node(node).buffer.queue).into();
        let mut sent_to = Vec::new();
        for b in waiting {
            let mut packet = b.packet;
            match self.node(node).cache.lookup(packet.dst) {
                Some(route) => {
                    sent_to.push(packet.dst);
                    packet.source_route = route;
                    packet.hop_index = 0;
                    self.send_data(s, node, packet, t);
                }
                None => self.node(node).buffer.queue.push_back(Buffered { packet, enqueued_at: b.enqueued_at }),
            }
        }
        for dst in sent_to {
            if !self.node(node).buffer.has_dst(dst) {
                self.end_discovery(s, node, dst);
            }
        }
    }

    fn send_data(&mut self, s: &mut Scheduler<Event>, node: NodeId, packet: DataPacket, t: SimTime) {
        let next = packet.next_hop().expect("holder is not the destination");
        self.audit(t, node, "data_fwd", || {
            format!("flow={} seq={} route={} hop={}", packet.flow_id, packet.seq, packet.source_route, packet.hop_index)
        });
        self.send_unicast(s, node, next, Packet::Data(packet), t);
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn receive(
        &mut self,
        s: &mut Scheduler<Event>,
        node: NodeId,
        from: NodeId,
        on_air: SimTime,
        packet: &Packet,
        directed: bool,
        t: SimTime,
    ) -> Result<(), SimError> {
        match (packet, directed) {
            (Packet::Request(rreq), _) => self.handle_route_request(s, node, rreq.clone(), t),
            (Packet::Data(d), true) => {
                self.audit(t, node, "data_rx", || {
                    format!("flow={} seq={} from={from} on_air={on_air}", d.flow_id, d.seq)
                });
                self.forward_data(s, node, d.clone(), t)?;
            }
            (Packet::Reply(r), true) => self.handle_route_reply(s, node, r.clone(), t)?,
            (Packet::Error(e), true) => self.handle_route_error(s, node, e.clone(), t)?,
            (_, false) => self.overhear(s, node, from, packet, t),
        }
        self.flush_buffer(s, node, t);
        Ok(())
    }

    pub(crate) fn handle_route_request(&mut self, s: &mut Scheduler<Event>, node: NodeId, rreq: RouteRequest, t: SimTime) {
        if !self.node(node).requests.mark_seen(rreq.src, rreq.request_id) || rreq.accumulated.contains(node) {
            return;
        }
        let mut through_me = rreq.accumulated.clone().into_hops();
        through_me.push(node);
        let through_me = Route::new(through_me);

        if node == rreq.target {
            self.audit(t, node, "rreq_answer", || format!("route={through_me}"));
            let path = through_me.reversed();
            self.send_reply(s, node, Some(rreq.request_id), through_me, path, t);
            return;
        }

        // cache replay
        if let Some(cached) = self.node(node).cache.find(rreq.target) {
            if let Some(spliced) = through_me.splice(&cached).filter(Route::is_loop_free) {
                self.node(node).cache.lookup(rreq.target);
                self.audit(t, node, "rreq_replay", || format!("route={spliced}"));
                let path = through_me.reversed();
                self.send_reply(s, node, Some(rreq.request_id), spliced, path, t);
                return;
            }
        }

        let fwd = RouteRequest { accumulated: through_me, ..rreq };
        self.send_broadcast(s, node, Packet::Request(fwd), t);
    }

    fn send_reply(
        &mut self,
        s: &mut Scheduler<Event>,
        node: NodeId,
        request_id: Option<u32>,
        route: Route,
        path: Route,
        t: SimTime,
    ) {
        let to = path.last().expect("reply path is non-empty");
        let next = path.hops()[1];
        let rrep = RouteReply { request_id, route, to, path, hop_index: 0 };
        self.send_unicast(s, node, next, Packet::Reply(rrep), t);
    }

    pub(crate) fn handle_route_reply(
        &mut self,
        s: &mut Scheduler<Event>,
        node: NodeId,
        mut rrep: RouteReply,
        t: SimTime,
    ) -> Result<(), SimError> {
        rrep.hop_index += 1;
        if rrep.path.hops().get(rrep.hop_index) != Some(&node) {
            return Err(SimError::Handler { at: t, reason: format!("reply for {} reached {node} off its path", rrep.to) });
        }
        if node == rrep.to {
            let target = rrep.route.last().expect("non-empty route");
            let _ = self.node(node).cache.insert(rrep.route.clone(), Tier::Primary);
            self.audit(t, node, "rrep_done", || format!("route={}", rrep.route));
            if rrep.request_id.is_some() {
                if let Some(p) = self.end_discovery(s, node, target) {
                    self.discoveries.push(DiscoveryRecord {
                        requester: node,
                        target,
                        started_at: p.started_at,
                        answered_at: t,
                        route: rrep.route.clone(),
                    });
                }
            }
            self.flush_buffer(s, node, t);
            return Ok(());
        }
        if let Some(suffix) = rrep.route.suffix_from(node).filter(|r| r.len() >= 2) {
            let _ = self.node(node).cache.insert(suffix, Tier::Secondary);
        }
        let next = rrep.path.hops()[rrep.hop_index + 1];
        self.send_unicast(s, node, next, Packet::Reply(rrep), t);
        Ok(())
    }

    pub(crate) fn forward_data(
        &mut self,
        s: &mut Scheduler<Event>,
        node: NodeId,
        mut packet: DataPacket,
        t: SimTime,
    ) -> Result<(), SimError> {
        packet.hop_index += 1;
        if packet.holder() != Some(node) {
            return Err(SimError::Handler {
                at: t,
                reason: format!("data {:?} reached {node} off its source route", packet.key()),
            });
        }
        if node == packet.dst {
            self.audit(t, node, "deliver", || {
                format!("flow={} seq={} route={}", packet.flow_id, packet.seq, packet.source_route)
            });
            self.metrics.record_delivered(packet.flow_id, packet.seq, packet.originated_at, t);
            return Ok(());
        }
        self.send_data(s, node, packet, t);
        Ok(())
    }

    pub(crate) fn transmit_failed(&mut self, s: &mut Scheduler<Event>, node: NodeId, next: NodeId, packet: Packet, t: SimTime) {
        let data = match packet {
            Packet::Data(d) => d,
            other => {
                self.audit(t, node, "ctrl_lost", || format!("{} to={next}", other.kind()));
                return;
            }
        };
        let truncated = self.node(node).cache.handle_link_break(node, next);
        self.audit(t, node, "link_break", || format!("{node}->{next} truncated={truncated}"));

        if node == data.src {
            // nothing traversed yet: treat it like a fresh departure
            self.dispatch_from_source(s, data, t);
            return;
        }

        let back = data.source_route.prefix_through(node).expect("holder on route").reversed();
        let rerr = RouteError { broken: (node, next), to: data.src, path: back, hop_index: 0 };
        let first = rerr.path.hops()[1];
        self.send_unicast(s, node, first, Packet::Error(rerr), t);

        let key = data.key();
        if !self.salvage(s, node, data, t) {
            self.audit(t, node, "drop", || format!("broken_route flow={} seq={}", key.0, key.1));
            self.metrics.record_drop(key.0, key.1, DropCause::BrokenRoute);
        }
    }

    /// Reroutes a packet that hit a broken link using this node's cache. A
    /// packet is salvaged at most once.
    pub(crate) fn salvage(&mut self, s: &mut Scheduler<Event>, node: NodeId, mut packet: DataPacket, t: SimTime) -> bool {
        if packet.salvaged {
            return false;
        }
        let Some(cached) = self.node(node).cache.find(packet.dst) else { return false };
        let traversed = packet.source_route.prefix_through(node).expect("holder on route");
        let Some(rerouted) = traversed.splice(&cached).filter(Route::is_loop_free) else { return false };
        self.node(node).cache.lookup(packet.dst);
        self.audit(t, node, "salvage", || format!("flow={} seq={} route={rerouted}", packet.flow_id, packet.seq));
        packet.source_route = rerouted;
        packet.salvaged = true;
        self.salvage_count += 1;
        self.send_data(s, node, packet, t);
        true
    }

    pub(crate) fn handle_route_error(
        &mut self,
        s: &mut Scheduler<Event>,
        node: NodeId,
        mut rerr: RouteError,
        t: SimTime,
    ) -> Result<(), SimError> {
        rerr.hop_index += 1;
        if rerr.path.hops().get(rerr.hop_index) != Some(&node) {
            return Err(SimError::Handler { at: t, reason: format!("route error reached {node} off its path") });
        }
        let (a, b) = rerr.broken;
        let n = self.node(node).cache.handle_link_break(a, b);
        self.audit(t, node, "rerr_rx", || format!("{a}->{b} truncated={n}"));
        if node != rerr.to {
            let next = rerr.path.hops()[rerr.hop_index + 1];
            self.send_unicast(s, node, next, Packet::Error(rerr), t);
        }
        Ok(())
    }

    /// Learns from a route observed in a frame sent by `transmitter`: the
    /// node's own suffix if it is on the route, otherwise itself prepended to
    /// the route from the transmitter onward.
    fn learn_route(&mut self, node: NodeId, route: &Route, transmitter: NodeId) {
        let learned = match route.suffix_from(node) {
            Some(suffix) => suffix,
            None => match route.suffix_from(transmitter) {
                Some(rest) => {
                    let mut hops = vec![node];
                    hops.extend_from_slice(rest.hops());
                    Route::new(hops)
                }
                None => return,
            },
        };
        if learned.len() >= 2 {
            let _ = self.node(node).cache.insert(learned, Tier::Secondary);
        }
    }

    pub(crate) fn overhear(&mut self, s: &mut Scheduler<Event>, node: NodeId, from: NodeId, packet: &Packet, t: SimTime) {
        match packet {
            Packet::Data(d) => {
                self.learn_route(node, &d.source_route, from);
                self.maybe_gratuitous_reply(s, node, d, t);
            }
            Packet::Reply(r) => self.learn_route(node, &r.route, from),
            Packet::Request(_) | Packet::Error(_) => {}
        }
    }

    /// Tells the source about a strictly shorter way from the packet's
    /// current holder to its destination through this node.
    fn maybe_gratuitous_reply(&mut self, s: &mut Scheduler<Event>, node: NodeId, d: &DataPacket, t: SimTime) {
        let key = (d.src, d.dst);
        if let Some(&last) = self.node(node).gratuitous_sent.get(&key) {
            if t < last + self.proto.gratuitous_interval {
                return;
            }
        }
        let Some(holder) = d.holder() else { return };
        let Some(traversed) = d.source_route.prefix_through(holder) else { return };
        if traversed.contains(node) {
            return;
        }
        let Some(mine) = self.node(node).cache.find(d.dst) else { return };
        if 1 + mine.hop_count() >= d.remaining_hops() {
            return;
        }
        let mut hops = traversed.hops().to_vec();
        hops.extend_from_slice(mine.hops());
        let better = Route::new(hops);
        if !better.is_loop_free() {
            return;
        }
        let mut path = vec![node];
        path.extend(traversed.hops().iter().rev());
        self.node(node).gratuitous_sent.insert(key, t);
        self.audit(t, node, "gratuitous", || format!("route={better}"));
        self.send_reply(s, node, None, better, Route::new(path), t);
    }
}
