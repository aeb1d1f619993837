//! Constant-bit-rate flow generation.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub flow_count: usize,
    pub packet_size: usize,
    /// Bits per second.
    pub rate: f64,
    pub start_window: f64,
    /// Relative half-width of the uniform multiplicative jitter on the inter-departure gap.
    pub jitter: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { flow_count: 10, packet_size: 64, rate: 2000.0, start_window: 10.0, jitter: 0.1 }
    }
}

impl FlowConfig {
    /// Nominal inter-departure time, `packet_size * 8 / rate`.
    pub fn interval(&self) -> SimTime {
        SimTime::from_secs_f64(self.packet_size as f64 * 8.0 / self.rate)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("{flows} flows requested but only {pairs} distinct source/destination pairs exist")]
    TooManyFlows { flows: usize, pairs: usize },
    #[error("invalid traffic setting `{0}`")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub flow_id: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub start_at: SimTime,
}

/// Draws `flow_count` distinct ordered (src, dst) pairs and uniform start times.
// negated comparisons also reject NaN
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn generate_flows<R: Rng>(cfg: &FlowConfig, node_count: usize, rng: &mut R) -> Result<Vec<Flow>, WorkloadError> {
    if cfg.packet_size == 0 {
        return Err(WorkloadError::InvalidConfig("packet_size"));
    }
    if !(cfg.rate > 0.0) {
        return Err(WorkloadError::InvalidConfig("rate"));
    }
    if !(cfg.start_window >= 0.0) {
        return Err(WorkloadError::InvalidConfig("start_window"));
    }
    if !(0.0..1.0).contains(&cfg.jitter) {
        return Err(WorkloadError::InvalidConfig("jitter"));
    }
    if node_count < 2 {
        return Err(WorkloadError::InvalidConfig("node_count"));
    }
    let pairs = node_count * (node_count - 1);
    if cfg.flow_count > pairs {
        return Err(WorkloadError::TooManyFlows { flows: cfg.flow_count, pairs });
    }
    let mut used = BTreeSet::new();
    let mut flows = Vec::with_capacity(cfg.flow_count);
    while flows.len() < cfg.flow_count {
        let src = rng.random_range(0..node_count as u32);
        let dst = rng.random_range(0..node_count as u32);
        if src == dst || !used.insert((src, dst)) {
            continue;
        }
        let start_at = SimTime::from_secs_f64(rng.random_range(0.0..=cfg.start_window));
        flows.push(Flow { flow_id: flows.len() as u32, src: NodeId(src), dst: NodeId(dst), start_at });
    }
    Ok(flows)
}

/// Next departure after `t_prev`: the nominal interval scaled by a uniform
/// factor in `[1 - jitter, 1 + jitter]`.
pub fn next_departure<R: Rng>(cfg: &FlowConfig, t_prev: SimTime, rng: &mut R) -> SimTime {
    let u = if cfg.jitter > 0.0 { rng.random_range(1.0 - cfg.jitter..=1.0 + cfg.jitter) } else { 1.0 };
    let gap = (cfg.interval().as_micros() as f64 * u).round().max(1.0) as u64;
    t_prev + SimTime::from_micros(gap)
}

/// One line per flow: `flow_id src dst start_at`.
pub fn export_flows(flows: &[Flow]) -> String {
    let mut out = String::new();
    for f in flows {
        let _ = writeln!(out, "{} {} {} {}", f.flow_id, f.src, f.dst, f.start_at);
    }
    out
}
