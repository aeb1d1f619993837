//! `dsrsim`: run single DSR simulations or parameter sweeps and export the
//! generated mobility and traffic.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use dsrsim_core::workload::export_flows;
use dsrsim_core::{execute, to_csv, ConfigError, ScenarioConfig, SweepPlan};

#[derive(Parser, Debug)]
#[command(name = "dsrsim", version, about = "DSR route-cache simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write a single CSV row.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Write the per-event audit log here.
        #[arg(long)]
        audit: Option<PathBuf>,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every combination of speeds, cache pairs and seeds.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Comma-separated node speeds in m/s, e.g. `0,1,5,10,15,20`.
        #[arg(long)]
        speeds: Option<String>,
        /// Comma-separated primary:secondary pairs, e.g. `1:1,5:10,30:64`.
        #[arg(long)]
        caches: Option<String>,
        /// Comma-separated seeds or an inclusive range `a..b`.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the random-waypoint trace: `node t_start x0 y0 x1 y1 speed` per leg.
    MobilityGen {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the flow table: `flow_id src dst start_at` per flow.
    TrafficGen {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Scenario parameters. Flags override values from `--config`.
#[derive(Args, Debug, Default)]
struct ScenarioArgs {
    /// JSON object with scenario keys (e.g. `{"speed": 10, "p_cache": 5}`); unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    node_count: Option<String>,
    #[arg(long)]
    area_x: Option<String>,
    #[arg(long)]
    area_y: Option<String>,
    #[arg(long)]
    speed: Option<String>,
    #[arg(long)]
    speed_margin: Option<String>,
    #[arg(long)]
    pause: Option<String>,
    #[arg(long)]
    tx_range: Option<String>,
    #[arg(long)]
    bandwidth: Option<String>,
    #[arg(long)]
    link_retries: Option<String>,
    #[arg(long)]
    p_cache: Option<String>,
    #[arg(long)]
    s_cache: Option<String>,
    #[arg(long)]
    flows: Option<String>,
    #[arg(long)]
    packet_size: Option<String>,
    #[arg(long)]
    rate: Option<String>,
    #[arg(long)]
    start_window: Option<String>,
    #[arg(long)]
    jitter: Option<String>,
    #[arg(long)]
    sim_time: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    max_retries: Option<String>,
    #[arg(long)]
    retry_base: Option<String>,
    #[arg(long)]
    buffer_capacity: Option<String>,
    #[arg(long)]
    buffer_timeout: Option<String>,
    #[arg(long)]
    gratuitous_interval: Option<String>,
}

impl ScenarioArgs {
    fn overrides(&self) -> [(&'static str, &Option<String>); 23] {
        [
            ("node_count", &self.node_count),
            ("area_x", &self.area_x),
            ("area_y", &self.area_y),
            ("speed", &self.speed),
            ("speed_margin", &self.speed_margin),
            ("pause", &self.pause),
            ("tx_range", &self.tx_range),
            ("bandwidth", &self.bandwidth),
            ("link_retries", &self.link_retries),
            ("p_cache", &self.p_cache),
            ("s_cache", &self.s_cache),
            ("flows", &self.flows),
            ("packet_size", &self.packet_size),
            ("rate", &self.rate),
            ("start_window", &self.start_window),
            ("jitter", &self.jitter),
            ("sim_time", &self.sim_time),
            ("seed", &self.seed),
            ("max_retries", &self.max_retries),
            ("retry_base", &self.retry_base),
            ("buffer_capacity", &self.buffer_capacity),
            ("buffer_timeout", &self.buffer_timeout),
            ("gratuitous_interval", &self.gratuitous_interval),
        ]
    }

    /// Defaults, then the config file, then individual flags.
    fn resolve(&self) -> Result<ScenarioConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => read_config(path)?,
            None => ScenarioConfig::default(),
        };
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        eprintln!("{}", serde_json::to_string(&cfg).expect("config serializes"));
        Ok(cfg)
    }
}

/// Full JSON form of [`ScenarioConfig`] with every missing key filled from the defaults.
fn read_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::Config)?;
    let given: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a JSON object", path.display()))
        .map_err(Failure::Config)?;
    let mut merged = match serde_json::to_value(ScenarioConfig::default()).expect("config serializes") {
        serde_json::Value::Object(m) => m,
        _ => unreachable!("config is a struct"),
    };
    for (k, v) in given {
        if !ScenarioConfig::KEYS.contains(&k.as_str()) {
            return Err(ConfigError::new(k, "unknown configuration key").into());
        }
        merged.insert(k, v);
    }
    serde_json::from_value(serde_json::Value::Object(merged))
        .with_context(|| format!("invalid configuration in {}", path.display()))
        .map_err(Failure::Config)
}

#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Aborted(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, text: &str) -> Result<Vec<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|item| item.trim().parse().map_err(|e| ConfigError::new(key, format!("`{item}`: {e}")).into()))
        .collect()
}

fn parse_caches(text: &str) -> Result<Vec<(usize, usize)>, Failure> {
    text.split(',')
        .map(|pair| {
            let bad = || Failure::from(ConfigError::new("caches", format!("`{pair}` is not primary:secondary")));
            let (p, s) = pair.trim().split_once(':').ok_or_else(bad)?;
            Ok((p.parse().map_err(|_| bad())?, s.parse().map_err(|_| bad())?))
        })
        .collect()
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, Failure> {
    match text.split_once("..") {
        Some((a, b)) => {
            let bad = || Failure::from(ConfigError::new("seeds", format!("`{text}` is not a range a..b")));
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            Ok((a..=b).collect())
        }
        None => parse_list("seeds", text),
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(Failure::Aborted),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { scenario, audit, out } => {
            let cfg = scenario.resolve()?;
            let mut sim = cfg.simulation()?;
            if audit.is_some() {
                sim.enable_audit();
            }
            let (outcome, sim) = sim.run().map_err(|e| Failure::Aborted(anyhow!(e)))?;
            if let Some(path) = audit {
                let mut log = sim.audit_log().unwrap_or_default().join("\n");
                log.push('\n');
                write_output(Some(&path), &log)?;
            }
            if !outcome.conserved() {
                return Err(Failure::Aborted(anyhow!("packet accounting does not balance")));
            }
            let results = [dsrsim_core::SweepResult { config: cfg, outcome: Ok(outcome) }];
            write_output(out.as_deref(), &to_csv(&results))
        }
        Command::Sweep { scenario, speeds, caches, seeds, out } => {
            let base = scenario.resolve()?;
            let mut plan = SweepPlan::single(base);
            if let Some(s) = speeds {
                plan.speeds = parse_list("speeds", &s)?;
            }
            if let Some(c) = caches {
                plan.caches = parse_caches(&c)?;
            }
            if let Some(s) = seeds {
                plan.seeds = parse_seeds(&s)?;
            }
            plan.validate()?;
            let results = execute(&plan);
            write_output(out.as_deref(), &to_csv(&results))?;
            let failed: Vec<String> = results
                .iter()
                .filter_map(|r| r.outcome.as_ref().err().map(|e| format!("seed {}: {e}", r.config.seed)))
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Aborted(anyhow!("{} of {} runs aborted: {}", failed.len(), results.len(), failed.join("; "))))
            }
        }
        Command::MobilityGen { scenario, out } => {
            let parts = scenario.resolve()?.build()?;
            write_output(out.as_deref(), &parts.trace.export())
        }
        Command::TrafficGen { scenario, out } => {
            let parts = scenario.resolve()?.build()?;
            write_output(out.as_deref(), &export_flows(&parts.flows))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Aborted(e)) => {
            eprintln!("run aborted: {e:#}");
            ExitCode::from(3)
        }
    }
}
