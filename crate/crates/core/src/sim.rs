//! A single simulation run: mobility, channel, per-node DSR state and traffic
//! wired to the event kernel.

use std::rc::Rc;

use rand_chacha::ChaCha12Rng;

use crate::cache::{CacheConfig, RouteCache};
use crate::channel::{Channel, ChannelConfig, Dest};
use crate::engine::{rng_stream, EventHandle, RunSummary, Scheduler, SimError, SimTime, StreamId};
use crate::metrics::{FlowBalance, MetricsAccumulator, RunMetrics};
use crate::mobility::MobilityTrace;
use crate::packet::Packet;
use crate::protocol::{NodeState, ProtocolConfig};
use crate::route::{NodeId, Route};
use crate::workload::{next_departure, Flow, FlowConfig};

#[derive(Debug, Clone)]
pub(crate) enum Event {
    Departure { flow: usize },
    Originate { src: NodeId, dst: NodeId, flow_id: u32, seq: u32 },
    Deliver { to: NodeId, from: NodeId, on_air: SimTime, packet: Rc<Packet>, directed: bool },
    TxFailed { node: NodeId, next: NodeId, packet: Packet },
    DiscoveryRetry { node: NodeId, target: NodeId },
    BufferExpiry { node: NodeId, key: (u32, u32), enqueued_at: SimTime },
}

/// Outcome of one completed route discovery: the first reply that reached the requester.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryRecord {
    pub requester: NodeId,
    pub target: NodeId,
    pub started_at: SimTime,
    pub answered_at: SimTime,
    pub route: Route,
}

/// Everything a run needs, already resolved.
#[derive(Debug, Clone)]
pub struct SimParts {
    pub trace: MobilityTrace,
    pub flows: Vec<Flow>,
    pub flow_cfg: FlowConfig,
    pub channel: ChannelConfig,
    pub cache: CacheConfig,
    pub protocol: ProtocolConfig,
    pub sim_time: SimTime,
    pub seed: u64,
}

pub(crate) struct FlowState {
    pub(crate) flow: Flow,
    pub(crate) next_seq: u32,
    rng: ChaCha12Rng,
}

pub struct Simulation {
    pub(crate) trace: MobilityTrace,
    pub(crate) channel: Channel,
    pub(crate) nodes: Vec<NodeState>,
    pub(crate) flows: Vec<FlowState>,
    pub(crate) flow_cfg: FlowConfig,
    pub(crate) proto: ProtocolConfig,
    pub(crate) metrics: MetricsAccumulator,
    pub(crate) discoveries: Vec<DiscoveryRecord>,
    pub(crate) salvage_count: u64,
    audit: Option<Vec<String>>,
    sched: Scheduler<Event>,
    end: SimTime,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub balances: Vec<FlowBalance>,
    pub accounting_conflicts: u64,
    pub events_fired: u64,
}

impl RunOutcome {
    /// Every flow satisfies `sent == delivered + drops + in_flight` and no packet was resolved twice.
    pub fn conserved(&self) -> bool {
        self.accounting_conflicts == 0 && self.balances.iter().all(FlowBalance::holds)
    }
}

impl Simulation {
    pub fn from_parts(parts: SimParts) -> Self {
        let n = parts.trace.node_count();
        let nodes = (0..n as u32)
            .map(|i| NodeState::new(RouteCache::new(NodeId(i), parts.cache), parts.protocol.buffer_capacity))
            .collect();
        let mut sched = Scheduler::new();
        let flows = parts
            .flows
            .into_iter()
            .enumerate()
            .map(|(i, flow)| {
                if flow.start_at < parts.sim_time {
                    sched.schedule(Event::Departure { flow: i }, flow.start_at).expect("clock at zero");
                }
                FlowState { rng: rng_stream(parts.seed, StreamId::Jitter, flow.flow_id as u64), flow, next_seq: 0 }
            })
            .collect();
        Simulation {
            channel: Channel::new(parts.channel, n),
            trace: parts.trace,
            nodes,
            flows,
            flow_cfg: parts.flow_cfg,
            proto: parts.protocol,
            metrics: MetricsAccumulator::new(),
            discoveries: Vec::new(),
            salvage_count: 0,
            audit: None,
            sched,
            end: parts.sim_time,
        }
    }

    pub fn enable_audit(&mut self) {
        self.audit.get_or_insert_with(Vec::new);
    }

    /// Audit lines `t | node | event_kind | detail`, if enabled.
    pub fn audit_log(&self) -> Option<&[String]> {
        self.audit.as_deref()
    }

    pub fn trace(&self) -> &MobilityTrace {
        &self.trace
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    pub fn cache(&self, node: NodeId) -> &RouteCache {
        &self.nodes[node.index()].cache
    }

    /// Mutable access to a node's cache, for seeding scenarios before a run.
    pub fn cache_mut(&mut self, node: NodeId) -> &mut RouteCache {
        &mut self.nodes[node.index()].cache
    }

    pub fn discoveries(&self) -> &[DiscoveryRecord] {
        &self.discoveries
    }

    pub fn metrics(&self) -> &MetricsAccumulator {
        &self.metrics
    }

    pub fn salvage_count(&self) -> u64 {
        self.salvage_count
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    /// Queues a single application packet outside any CBR flow.
    pub fn inject_data(&mut self, src: NodeId, dst: NodeId, flow_id: u32, seq: u32, at: SimTime) -> Result<(), SimError> {
        self.sched.schedule(Event::Originate { src, dst, flow_id, seq }, at).map(|_| ())
    }

    /// Runs until `t` (capped at the configured end).
    pub fn run_until(&mut self, t: SimTime) -> Result<RunSummary, SimError> {
        let t = t.min(self.end);
        let mut sched = std::mem::take(&mut self.sched);
        let res = sched.run_until(t, |s, at, ev| self.dispatch(s, at, ev));
        self.sched = sched;
        res
    }

    pub fn run(mut self) -> Result<(RunOutcome, Simulation), SimError> {
        let summary = self.run_until(self.end)?;
        let outcome = self.outcome(summary.events_fired);
        Ok((outcome, self))
    }

    pub fn outcome(&self, events_fired: u64) -> RunOutcome {
        RunOutcome {
            metrics: self.metrics.summarize(self.end),
            balances: self.metrics.balances(),
            accounting_conflicts: self.metrics.conflicts(),
            events_fired,
        }
    }

    fn dispatch(&mut self, s: &mut Scheduler<Event>, t: SimTime, ev: Event) -> Result<(), SimError> {
        match ev {
            Event::Departure { flow } => {
                let fs = &mut self.flows[flow];
                let (src, dst, flow_id, seq) = (fs.flow.src, fs.flow.dst, fs.flow.flow_id, fs.next_seq);
                fs.next_seq += 1;
                let next = next_departure(&self.flow_cfg, t, &mut fs.rng);
                if next < self.end {
                    s.schedule(Event::Departure { flow }, next)?;
                }
                self.originate_data(s, src, dst, flow_id, seq, t);
            }
            Event::Originate { src, dst, flow_id, seq } => {
                if src == dst {
                    return Err(SimError::Handler { at: t, reason: format!("node {src} sending to itself") });
                }
                self.originate_data(s, src, dst, flow_id, seq, t);
            }
            Event::Deliver { to, from, on_air, packet, directed } => {
                self.receive(s, to, from, on_air, &packet, directed, t)?;
            }
            Event::TxFailed { node, next, packet } => self.transmit_failed(s, node, next, packet, t),
            Event::DiscoveryRetry { node, target } => self.retry_discovery(s, node, target, t),
            Event::BufferExpiry { node, key, enqueued_at } => self.expire_buffered(node, key, enqueued_at, t),
        }
        Ok(())
    }

    pub(crate) fn audit(&mut self, t: SimTime, node: NodeId, kind: &str, detail: impl FnOnce() -> String) {
        if let Some(log) = self.audit.as_mut() {
            log.push(format!("{t} | {node} | {kind} | {}", detail()));
        }
    }

    pub(crate) fn schedule_timer(&mut self, s: &mut Scheduler<Event>, ev: Event, at: SimTime) -> EventHandle {
        s.schedule(ev, at).expect("timers are scheduled in the future")
    }

    /// Sends `packet` from `from` to `next`. Receivers get their copy when the
    /// frame finishes; a failed unicast is reported back to the sender then.
    pub(crate) fn send_unicast(&mut self, s: &mut Scheduler<Event>, from: NodeId, next: NodeId, packet: Packet, t: SimTime) {
        let size = packet.wire_size();
        let out = self.channel.transmit(&self.trace, from, Dest::Unicast(next), size, t);
        let kind = packet.kind();
        self.audit(t, from, "tx", || {
            format!("{kind} to={next} size={size} on_air={} ok={} attempts={}", out.on_air_at, out.unicast_ack, out.attempts)
        });
        let packet = Rc::new(packet);
        for &r in &out.delivered_to {
            let ev = Event::Deliver { to: r, from, on_air: out.on_air_at, packet: Rc::clone(&packet), directed: r == next };
            let _ = s.schedule(ev, out.complete_at);
        }
        if !out.unicast_ack {
            let packet = Rc::try_unwrap(packet).unwrap_or_else(|rc| (*rc).clone());
            let _ = s.schedule(Event::TxFailed { node: from, next, packet }, out.complete_at);
        }
    }

    pub(crate) fn send_broadcast(&mut self, s: &mut Scheduler<Event>, from: NodeId, packet: Packet, t: SimTime) {
        let size = packet.wire_size();
        let out = self.channel.transmit(&self.trace, from, Dest::Broadcast, size, t);
        let kind = packet.kind();
        self.audit(t, from, "tx", || format!("{kind} to=* size={size} on_air={}", out.on_air_at));
        let packet = Rc::new(packet);
        for &r in &out.delivered_to {
            let ev = Event::Deliver { to: r, from, on_air: out.on_air_at, packet: Rc::clone(&packet), directed: true };
            let _ = s.schedule(ev, out.complete_at);
        }
    }
}
