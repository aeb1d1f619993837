//! Packet-level discrete-event simulator for Dynamic Source Routing (DSR) in
//! mobile ad-hoc networks, with a two-tier (primary/secondary) path cache.
//!
//! A run combines random-waypoint mobility, an idealized range-based radio
//! channel, CBR traffic and per-node DSR state, and reports delivery ratio,
//! end-to-end delay and throughput. [`scenario`] ties the pieces together.

pub mod cache;
pub mod channel;
pub mod engine;
pub mod metrics;
pub mod mobility;
pub mod packet;
pub mod protocol;
pub mod route;
pub mod scenario;
pub mod sim;
pub mod workload;

pub use cache::{CacheConfig, RouteCache, Tier};
pub use channel::{Channel, ChannelConfig};
pub use engine::{Scheduler, SimError, SimTime};
pub use metrics::{MetricsAccumulator, RunMetrics, CSV_HEADER};
pub use mobility::{MobilityConfig, MobilityTrace, Position};
pub use protocol::ProtocolConfig;
pub use route::{NodeId, Route};
pub use scenario::{execute, run_scenario, to_csv, ConfigError, RunError, ScenarioConfig, SweepPlan, SweepResult};
pub use sim::{DiscoveryRecord, RunOutcome, SimParts, Simulation};
pub use workload::{Flow, FlowConfig};
