//! Run configuration, parameter sweeps and CSV assembly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::CacheConfig;
use crate::channel::ChannelConfig;
use crate::engine::{rng_stream, SimTime, StreamId};
use crate::metrics::{csv_row, RunLabel, CSV_HEADER};
use crate::mobility::{generate_trace, MobilityConfig};
use crate::protocol::ProtocolConfig;
use crate::sim::{RunOutcome, SimParts, Simulation};
use crate::workload::{generate_flows, FlowConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid value for `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError { key: key.into(), reason: reason.into() }
    }
}

/// Every parameter of a single run. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub node_count: usize,
    pub area_x: f64,
    pub area_y: f64,
    pub speed: f64,
    pub speed_margin: f64,
    pub pause: f64,
    pub tx_range: f64,
    pub bandwidth: u64,
    pub link_retries: u32,
    pub p_cache: usize,
    pub s_cache: usize,
    pub flows: usize,
    pub packet_size: usize,
    pub rate: f64,
    pub start_window: f64,
    pub jitter: f64,
    pub sim_time: f64,
    pub seed: u64,
    pub max_retries: u32,
    pub retry_base: f64,
    pub buffer_capacity: usize,
    pub buffer_timeout: f64,
    pub gratuitous_interval: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let m = MobilityConfig::default();
        let c = ChannelConfig::default();
        let k = CacheConfig::default();
        let f = FlowConfig::default();
        let p = ProtocolConfig::default();
        ScenarioConfig {
            node_count: m.node_count,
            area_x: m.area_x,
            area_y: m.area_y,
            speed: m.nominal_speed,
            speed_margin: m.speed_margin,
            pause: m.pause,
            tx_range: c.tx_range,
            bandwidth: c.bandwidth,
            link_retries: c.link_retries,
            p_cache: k.p_capacity,
            s_cache: k.s_capacity,
            flows: f.flow_count,
            packet_size: f.packet_size,
            rate: f.rate,
            start_window: f.start_window,
            jitter: f.jitter,
            sim_time: m.duration,
            seed: 1,
            max_retries: p.max_retries,
            retry_base: p.retry_base.as_secs_f64(),
            buffer_capacity: p.buffer_capacity,
            buffer_timeout: p.buffer_timeout.as_secs_f64(),
            gratuitous_interval: p.gratuitous_interval.as_secs_f64(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::new(key, format!("`{value}`: {e}")))
}

impl ScenarioConfig {
    pub const KEYS: &'static [&'static str] = &[
        "node_count",
        "area_x",
        "area_y",
        "speed",
        "speed_margin",
        "pause",
        "tx_range",
        "bandwidth",
        "link_retries",
        "p_cache",
        "s_cache",
        "flows",
        "packet_size",
        "rate",
        "start_window",
        "jitter",
        "sim_time",
        "seed",
        "max_retries",
        "retry_base",
        "buffer_capacity",
        "buffer_timeout",
        "gratuitous_interval",
    ];

    /// Sets one field from its textual value. Keys may use `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let k = key.replace('-', "_");
        match k.as_str() {
            "node_count" => self.node_count = parse(&k, value)?,
            "area_x" => self.area_x = parse(&k, value)?,
            "area_y" => self.area_y = parse(&k, value)?,
            "speed" => self.speed = parse(&k, value)?,
            "speed_margin" => self.speed_margin = parse(&k, value)?,
            "pause" => self.pause = parse(&k, value)?,
            "tx_range" => self.tx_range = parse(&k, value)?,
            "bandwidth" => self.bandwidth = parse(&k, value)?,
            "link_retries" => self.link_retries = parse(&k, value)?,
            "p_cache" => self.p_cache = parse(&k, value)?,
            "s_cache" => self.s_cache = parse(&k, value)?,
            "flows" => self.flows = parse(&k, value)?,
            "packet_size" => self.packet_size = parse(&k, value)?,
            "rate" => self.rate = parse(&k, value)?,
            "start_window" => self.start_window = parse(&k, value)?,
            "jitter" => self.jitter = parse(&k, value)?,
            "sim_time" => self.sim_time = parse(&k, value)?,
            "seed" => self.seed = parse(&k, value)?,
            "max_retries" => self.max_retries = parse(&k, value)?,
            "retry_base" => self.retry_base = parse(&k, value)?,
            "buffer_capacity" => self.buffer_capacity = parse(&k, value)?,
            "buffer_timeout" => self.buffer_timeout = parse(&k, value)?,
            "gratuitous_interval" => self.gratuitous_interval = parse(&k, value)?,
            _ => return Err(ConfigError::new(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &str, reason: &str| if ok { Ok(()) } else { Err(ConfigError::new(key, reason)) };
        check(self.node_count >= 2, "node_count", "must be at least 2")?;
        check(self.area_x > 0.0 && self.area_x.is_finite(), "area_x", "must be positive")?;
        check(self.area_y > 0.0 && self.area_y.is_finite(), "area_y", "must be positive")?;
        check(self.speed >= 0.0 && self.speed.is_finite(), "speed", "must be non-negative")?;
        check(self.speed_margin >= 0.0 && self.speed_margin.is_finite(), "speed_margin", "must be non-negative")?;
        check(self.pause >= 0.0 && self.pause.is_finite(), "pause", "must be non-negative")?;
        check(self.tx_range > 0.0 && self.tx_range.is_finite(), "tx_range", "must be positive")?;
        check(self.bandwidth > 0, "bandwidth", "must be positive")?;
        check(self.p_cache >= 1, "p_cache", "capacity must be at least 1")?;
        check(self.s_cache >= 1, "s_cache", "capacity must be at least 1")?;
        check(self.packet_size > 0, "packet_size", "must be positive")?;
        check(self.rate > 0.0 && self.rate.is_finite(), "rate", "must be positive")?;
        check(self.start_window >= 0.0 && self.start_window.is_finite(), "start_window", "must be non-negative")?;
        check((0.0..1.0).contains(&self.jitter), "jitter", "must be in [0, 1)")?;
        check(self.sim_time > 0.0 && self.sim_time.is_finite(), "sim_time", "must be positive")?;
        check(self.retry_base > 0.0 && self.retry_base.is_finite(), "retry_base", "must be positive")?;
        check(self.buffer_capacity >= 1, "buffer_capacity", "must be at least 1")?;
        check(self.buffer_timeout > 0.0 && self.buffer_timeout.is_finite(), "buffer_timeout", "must be positive")?;
        check(self.gratuitous_interval >= 0.0 && self.gratuitous_interval.is_finite(), "gratuitous_interval", "must be non-negative")?;
        let pairs = self.node_count * (self.node_count - 1);
        check(self.flows <= pairs, "flows", &format!("at most {pairs} distinct pairs exist"))?;
        Ok(())
    }

    pub fn mobility(&self) -> MobilityConfig {
        MobilityConfig {
            area_x: self.area_x,
            area_y: self.area_y,
            node_count: self.node_count,
            nominal_speed: self.speed,
            speed_margin: self.speed_margin,
            pause: self.pause,
            duration: self.sim_time,
        }
    }

    pub fn channel(&self) -> ChannelConfig {
        ChannelConfig { tx_range: self.tx_range, bandwidth: self.bandwidth, link_retries: self.link_retries }
    }

    pub fn cache(&self) -> CacheConfig {
        CacheConfig { p_capacity: self.p_cache, s_capacity: self.s_cache }
    }

    pub fn flow(&self) -> FlowConfig {
        FlowConfig {
            flow_count: self.flows,
            packet_size: self.packet_size,
            rate: self.rate,
            start_window: self.start_window,
            jitter: self.jitter,
        }
    }

    pub fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig {
            max_retries: self.max_retries,
            retry_base: SimTime::from_secs_f64(self.retry_base),
            buffer_capacity: self.buffer_capacity,
            buffer_timeout: SimTime::from_secs_f64(self.buffer_timeout),
            gratuitous_interval: SimTime::from_secs_f64(self.gratuitous_interval),
        }
    }

    pub fn label(&self) -> RunLabel {
        RunLabel { speed_mps: self.speed, p_cache: self.p_cache, s_cache: self.s_cache, seed: self.seed, flows: self.flows }
    }

    /// Resolves mobility and traffic from the seed. Mobility and traffic
    /// draw from separate streams, so cache settings never change them.
    pub fn build(&self) -> Result<SimParts, ConfigError> {
        self.validate()?;
        let trace = generate_trace(&self.mobility(), &mut rng_stream(self.seed, StreamId::Mobility, 0))
            .map_err(|e| ConfigError::new("mobility", e.to_string()))?;
        let flows = generate_flows(&self.flow(), self.node_count, &mut rng_stream(self.seed, StreamId::Traffic, 0))
            .map_err(|e| ConfigError::new("flows", e.to_string()))?;
        Ok(SimParts {
            trace,
            flows,
            flow_cfg: self.flow(),
            channel: self.channel(),
            cache: self.cache(),
            protocol: self.protocol(),
            sim_time: SimTime::from_secs_f64(self.sim_time),
            seed: self.seed,
        })
    }

    pub fn simulation(&self) -> Result<Simulation, ConfigError> {
        Ok(Simulation::from_parts(self.build()?))
    }
}

/// Errors from a single run inside a sweep.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run aborted: {0}")]
    Aborted(String),
}

/// Builds and runs one scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutcome, RunError> {
    let sim = cfg.simulation()?;
    let (outcome, _) = sim.run().map_err(|e| RunError::Aborted(e.to_string()))?;
    Ok(outcome)
}

/// Cartesian product of speeds, cache pairs and seeds over a base scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub base: ScenarioConfig,
    pub speeds: Vec<f64>,
    pub caches: Vec<(usize, usize)>,
    pub seeds: Vec<u64>,
}

impl SweepPlan {
    /// Single-run plan for `base` as given.
    pub fn single(base: ScenarioConfig) -> Self {
        SweepPlan { speeds: vec![base.speed], caches: vec![(base.p_cache, base.s_cache)], seeds: vec![base.seed], base }
    }

    /// Runs in plan order: speed, then cache pair, then seed.
    pub fn runs(&self) -> Vec<ScenarioConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &speed in &self.speeds {
            for &(p, s) in &self.caches {
                for &seed in &self.seeds {
                    out.push(ScenarioConfig { speed, p_cache: p, s_cache: s, seed, ..self.base.clone() });
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.speeds.len() * self.caches.len() * self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.is_empty() {
            return Err(ConfigError::new("sweep", "plan has no runs"));
        }
        self.runs().iter().try_for_each(ScenarioConfig::validate)
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config: ScenarioConfig,
    pub outcome: Result<RunOutcome, RunError>,
}

/// Executes every run, in parallel, returning results in plan order.
pub fn execute(plan: &SweepPlan) -> Vec<SweepResult> {
    plan.runs()
        .into_par_iter()
        .map(|config| {
            let outcome = run_scenario(&config);
            SweepResult { config, outcome }
        })
        .collect()
}

/// CSV text with header; runs that aborted are left out.
pub fn to_csv(results: &[SweepResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in results {
        if let Ok(o) = &r.outcome {
            out.push_str(&csv_row(&r.config.label(), &o.metrics));
            out.push('\n');
        }
    }
    out
}
