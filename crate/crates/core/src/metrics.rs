//! Packet accounting and the delivery ratio, delay and throughput metrics.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::engine::SimTime;

/// Exact CSV header for per-run rows.
pub const CSV_HEADER: &str = "speed_mps,p_cache,s_cache,seed,flows,sent,delivered,delivery_ratio,avg_delay_s,first_packet_delay_s,throughput_msg_s,drops_noroute,drops_broken,drops_buffer";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropCause {
    /// Discovery gave up, or the packet waited in the send buffer too long.
    NoRoute,
    /// Forwarding failed and no salvage route existed.
    BrokenRoute,
    /// The send buffer was full.
    BufferOverflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fate {
    Delivered,
    Dropped(DropCause),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlowCounts {
    pub sent: u64,
    pub delivered: u64,
    pub drops_noroute: u64,
    pub drops_broken: u64,
    pub drops_buffer: u64,
}

impl FlowCounts {
    pub fn dropped(&self) -> u64 {
        self.drops_noroute + self.drops_broken + self.drops_buffer
    }
}

/// Per-flow balance: `sent == delivered + dropped + in_flight`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowBalance {
    pub flow_id: u32,
    pub counts: FlowCounts,
    pub in_flight: u64,
}

impl FlowBalance {
    pub fn holds(&self) -> bool {
        let c = &self.counts;
        c.sent == c.delivered + c.dropped() + self.in_flight
    }
}

#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    flows: BTreeMap<u32, FlowCounts>,
    fates: HashMap<(u32, u32), Fate>,
    /// Packets recorded as sent and not yet resolved.
    outstanding: HashMap<(u32, u32), SimTime>,
    delay_sum_us: u128,
    min_delay: Option<SimTime>,
    first_sent_at: Option<SimTime>,
    first_delivered_at: Option<SimTime>,
    /// Attempts to resolve a packet twice, or one never sent.
    conflicts: u64,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_sent(&mut self, flow_id: u32, seq: u32, at: SimTime) {
        if self.outstanding.insert((flow_id, seq), at).is_some() || self.fates.contains_key(&(flow_id, seq)) {
            self.conflicts += 1;
        }
        self.flows.entry(flow_id).or_default().sent += 1;
        self.first_sent_at = Some(self.first_sent_at.map_or(at, |f| f.min(at)));
    }

    fn resolve(&mut self, flow_id: u32, seq: u32, fate: Fate) -> bool {
        if self.outstanding.remove(&(flow_id, seq)).is_none() {
            self.conflicts += 1;
            return false;
        }
        self.fates.insert((flow_id, seq), fate);
        true
    }

    pub fn record_delivered(&mut self, flow_id: u32, seq: u32, originated_at: SimTime, at: SimTime) {
        if !self.resolve(flow_id, seq, Fate::Delivered) {
            return;
        }
        if at < originated_at {
            self.conflicts += 1;
        }
        self.flows.entry(flow_id).or_default().delivered += 1;
        let delay = at.saturating_sub(originated_at);
        self.delay_sum_us += delay.as_micros() as u128;
        self.min_delay = Some(self.min_delay.map_or(delay, |m| m.min(delay)));
        self.first_delivered_at = Some(self.first_delivered_at.map_or(at, |f| f.min(at)));
    }

    pub fn record_drop(&mut self, flow_id: u32, seq: u32, cause: DropCause) {
        if !self.resolve(flow_id, seq, Fate::Dropped(cause)) {
            return;
        }
        let c = self.flows.entry(flow_id).or_default();
        match cause {
            DropCause::NoRoute => c.drops_noroute += 1,
            DropCause::BrokenRoute => c.drops_broken += 1,
            DropCause::BufferOverflow => c.drops_buffer += 1,
        }
    }

    pub fn conflicts(&self) -> u64 {
        self.conflicts
    }

    pub fn flow_counts(&self, flow_id: u32) -> FlowCounts {
        self.flows.get(&flow_id).copied().unwrap_or_default()
    }

    pub fn totals(&self) -> FlowCounts {
        self.flows.values().fold(FlowCounts::default(), |mut a, c| {
            a.sent += c.sent;
            a.delivered += c.delivered;
            a.drops_noroute += c.drops_noroute;
            a.drops_broken += c.drops_broken;
            a.drops_buffer += c.drops_buffer;
            a
        })
    }

    /// Conservation check per flow; packets still outstanding count as in flight.
    pub fn balances(&self) -> Vec<FlowBalance> {
        let mut in_flight: BTreeMap<u32, u64> = BTreeMap::new();
        for &(flow, _) in self.outstanding.keys() {
            *in_flight.entry(flow).or_default() += 1;
        }
        self.flows
            .iter()
            .map(|(&flow_id, &counts)| FlowBalance {
                flow_id,
                counts,
                in_flight: in_flight.get(&flow_id).copied().unwrap_or(0),
            })
            .collect()
    }

    pub fn summarize(&self, sim_duration: SimTime) -> RunMetrics {
        let totals = self.totals();
        RunMetrics {
            counts: totals,
            in_flight: self.outstanding.len() as u64,
            delay_sum_us: self.delay_sum_us,
            min_delay: self.min_delay,
            first_packet_delay: match (self.first_sent_at, self.first_delivered_at) {
                (Some(s), Some(d)) => Some(d.saturating_sub(s)),
                _ => None,
            },
            sim_duration,
        }
    }
}

/// Final counters of one run and the metrics derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub counts: FlowCounts,
    pub in_flight: u64,
    pub delay_sum_us: u128,
    pub min_delay: Option<SimTime>,
    pub first_packet_delay: Option<SimTime>,
    pub sim_duration: SimTime,
}

impl RunMetrics {
    /// Delivered over sent; `None` when nothing was sent.
    pub fn delivery_ratio(&self) -> Option<f64> {
        delivery_ratio(self.counts.delivered, self.counts.sent)
    }

    /// Mean seconds from application hand-off to delivery; `None` when nothing was delivered.
    pub fn average_delay(&self) -> Option<f64> {
        if self.counts.delivered == 0 {
            return None;
        }
        Some(self.delay_sum_us as f64 / self.counts.delivered as f64 / 1e6)
    }

    /// Delivered messages per second of simulated time.
    pub fn throughput(&self) -> f64 {
        throughput(self.counts.delivered, self.sim_duration.as_secs_f64())
    }
}

pub fn delivery_ratio(delivered: u64, sent: u64) -> Option<f64> {
    (sent > 0).then(|| delivered as f64 / sent as f64)
}

pub fn average_delay(delays: &[f64]) -> Option<f64> {
    (!delays.is_empty()).then(|| delays.iter().sum::<f64>() / delays.len() as f64)
}

pub fn throughput(delivered: u64, sim_duration_s: f64) -> f64 {
    delivered as f64 / sim_duration_s
}

/// Identifies a run in CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLabel {
    pub speed_mps: f64,
    pub p_cache: usize,
    pub s_cache: usize,
    pub seed: u64,
    pub flows: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV line (without trailing newline). Undefined metrics are empty fields.
pub fn csv_row(label: &RunLabel, m: &RunMetrics) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        label.speed_mps,
        label.p_cache,
        label.s_cache,
        label.seed,
        label.flows,
        m.counts.sent,
        m.counts.delivered,
        opt(m.delivery_ratio()),
        opt(m.average_delay()),
        opt(m.first_packet_delay.map(SimTime::as_secs_f64)),
        m.throughput(),
        m.counts.drops_noroute,
        m.counts.drops_broken,
        m.counts.drops_buffer,
    );
    s
}
