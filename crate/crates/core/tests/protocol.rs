//! End-to-end protocol scenarios on small hand-built topologies.

use dsrsim_core::mobility::{Leg, Position};
use dsrsim_core::protocol::ProtocolConfig;
use dsrsim_core::{
    CacheConfig, ChannelConfig, FlowConfig, MobilityTrace, NodeId, Route, ScenarioConfig, SimParts, SimTime, Simulation,
    Tier,
};

fn r(ids: &[u32]) -> Route {
    Route::from_ids(ids)
}

fn parts(trace: MobilityTrace, duration: f64) -> SimParts {
    SimParts {
        trace,
        flows: Vec::new(),
        flow_cfg: FlowConfig::default(),
        channel: ChannelConfig::default(),
        cache: CacheConfig::default(),
        protocol: ProtocolConfig::default(),
        sim_time: SimTime::from_secs_f64(duration),
        seed: 1,
    }
}

fn sim(positions: &[(f64, f64)], duration: f64) -> Simulation {
    let pos: Vec<Position> = positions.iter().map(|&(x, y)| Position::new(x, y)).collect();
    let mut sim = Simulation::from_parts(parts(MobilityTrace::fixed(&pos, duration), duration));
    sim.enable_audit();
    sim
}

/// Static nodes, except those listed in `leaving`, which head straight up at
/// 100 m/s from the given time on.
fn sim_with_departures(positions: &[(f64, f64)], leaving: &[(usize, f64)], duration: f64) -> Simulation {
    let legs = positions
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let p = Position::new(x, y);
            let mut legs = vec![Leg { start_time: 0.0, start: p, end: p, speed: 0.0 }];
            if let Some(&(_, at)) = leaving.iter().find(|(n, _)| *n == i) {
                legs.push(Leg { start_time: at, start: p, end: Position::new(x, y + 2000.0), speed: 100.0 });
            }
            legs
        })
        .collect();
    let mut sim = Simulation::from_parts(parts(MobilityTrace::from_legs(legs, duration), duration));
    sim.enable_audit();
    sim
}

fn lines<'a>(sim: &'a Simulation, kind: &str) -> Vec<&'a str> {
    let tag = format!(" | {kind} | ");
    sim.audit_log().unwrap().iter().filter(|l| l.contains(&tag)).map(String::as_str).collect()
}

const LINE4: [(f64, f64); 4] = [(0.0, 0.0), (90.0, 0.0), (180.0, 0.0), (270.0, 0.0)];

#[test]
fn discovery_on_a_line_delivers_and_teaches_forwarders() {
    let mut s = sim(&LINE4, 10.0);
    s.inject_data(NodeId(0), NodeId(3), 0, 0, SimTime::ZERO).unwrap();
    s.run_until(SimTime::from_secs(10)).unwrap();
    assert_eq!(s.discoveries().len(), 1);
    assert_eq!(s.discoveries()[0].route, r(&[0, 1, 2, 3]));
    assert_eq!(s.metrics().totals().delivered, 1);
    assert_eq!(s.cache(NodeId(0)).tier_of(&r(&[0, 1, 2, 3])), Some(Tier::Primary));
    // forwarders of the reply keep their own suffix as a learned route
    assert_eq!(s.cache(NodeId(1)).tier_of(&r(&[1, 2, 3])), Some(Tier::Secondary));
    assert_eq!(s.cache(NodeId(2)).tier_of(&r(&[2, 3])), Some(Tier::Secondary));
}

#[test]
fn packets_waiting_on_a_discovery_share_it() {
    let mut s = sim(&LINE4, 10.0);
    s.inject_data(NodeId(0), NodeId(3), 0, 0, SimTime::ZERO).unwrap();
    s.inject_data(NodeId(0), NodeId(3), 0, 1, SimTime::from_micros(10)).unwrap();
    s.run_until(SimTime::from_secs(10)).unwrap();
    assert_eq!(lines(&s, "rreq_start").len(), 1);
    assert_eq!(s.metrics().totals().delivered, 2);
}

#[test]
fn intermediate_cache_answers_the_request() {
    // node 4 hears only node 1, which already knows a way to 3
    let mut positions = LINE4.to_vec();
    positions.push((90.0, 80.0));
    let mut s = sim(&positions, 10.0);
    s.cache_mut(NodeId(1)).insert(r(&[1, 2, 3]), Tier::Secondary).unwrap();
    s.inject_data(NodeId(4), NodeId(3), 0, 0, SimTime::ZERO).unwrap();
    s.run_until(SimTime::from_secs(10)).unwrap();
    assert_eq!(lines(&s, "rreq_replay").len(), 1);
    assert!(lines(&s, "rreq_answer").is_empty());
    assert_eq!(s.discoveries()[0].route, r(&[4, 1, 2, 3]));
    assert_eq!(s.metrics().totals().delivered, 1);
    // replaying counts as use
    assert_eq!(s.cache(NodeId(1)).tier_of(&r(&[1, 2, 3])), Some(Tier::Primary));
}

#[test]
fn broken_link_reports_error_and_truncates_source_cache() {
    let mut s = sim_with_departures(&LINE4, &[(2, 5.0)], 20.0);
    s.cache_mut(NodeId(0)).insert(r(&[0, 1, 2, 3]), Tier::Primary).unwrap();
    s.inject_data(NodeId(0), NodeId(3), 0, 0, SimTime::from_secs(6)).unwrap();
    s.run_until(SimTime::from_secs(7)).unwrap();
    let t = s.metrics().totals();
    assert_eq!((t.delivered, t.drops_broken), (0, 1));
    assert_eq!(lines(&s, "rerr_rx").len(), 1);
    assert!(lines(&s, "rerr_rx")[0].contains(" | 0 | "));
    assert_eq!(s.cache(NodeId(0)).tier_of(&r(&[0, 1])), Some(Tier::Primary));
    assert!(s.cache(NodeId(0)).find(NodeId(3)).is_none());
}

#[test]
fn salvage_reroutes_around_a_break() {
    let mut positions = LINE4.to_vec();
    positions.push((180.0, 40.0));
    let mut s = sim_with_departures(&positions, &[(2, 5.0)], 20.0);
    s.cache_mut(NodeId(0)).insert(r(&[0, 1, 2, 3]), Tier::Primary).unwrap();
    s.cache_mut(NodeId(1)).insert(r(&[1, 4, 3]), Tier::Secondary).unwrap();
    s.inject_data(NodeId(0), NodeId(3), 0, 0, SimTime::from_secs(6)).unwrap();
    s.run_until(SimTime::from_secs(7)).unwrap();
    assert_eq!(s.salvage_count(), 1);
    assert_eq!(s.metrics().totals().delivered, 1);
    assert!(lines(&s, "deliver")[0].contains("route=0-1-4-3"));
    // the source still hears about the break
    assert_eq!(lines(&s, "rerr_rx").len(), 1);
}

#[test]
fn a_packet_is_salvaged_only_once() {
    let mut positions = LINE4.to_vec();
    positions.push((180.0, 40.0));
    let mut s = sim_with_departures(&positions, &[(2, 5.0), (4, 5.0)], 20.0);
    s.cache_mut(NodeId(0)).insert(r(&[0, 1, 2, 3]), Tier::Primary).unwrap();
    s.cache_mut(NodeId(1)).insert(r(&[1, 4, 3]), Tier::Secondary).unwrap();
    s.inject_data(NodeId(0), NodeId(3), 0, 0, SimTime::from_secs(6)).unwrap();
    s.run_until(SimTime::from_secs(7)).unwrap();
    assert_eq!(s.salvage_count(), 1);
    let t = s.metrics().totals();
    assert_eq!((t.delivered, t.drops_broken), (0, 1));
}

#[test]
fn overhearing_node_offers_a_shorter_route() {
    let positions = [(0.0, 0.0), (90.0, 0.0), (180.0, 0.0), (270.0, 0.0), (360.0, 0.0), (45.0, 50.0)];
    let mut s = sim(&positions, 10.0);
    s.cache_mut(NodeId(0)).insert(r(&[0, 1, 2, 3, 4]), Tier::Primary).unwrap();
    s.cache_mut(NodeId(5)).insert(r(&[5, 4]), Tier::Secondary).unwrap();
    s.inject_data(NodeId(0), NodeId(4), 0, 0, SimTime::ZERO).unwrap();
    s.run_until(SimTime::from_millis(500)).unwrap();
    // node 5 overhears both 0 and 1 forwarding, but replies once per interval
    let g = lines(&s, "gratuitous");
    assert_eq!(g.len(), 1, "{g:?}");
    assert!(g[0].contains(" | 5 | ") && g[0].contains("route=0-5-4"));
    assert_eq!(s.cache(NodeId(0)).tier_of(&r(&[0, 5, 4])), Some(Tier::Primary));
    assert_eq!(s.metrics().totals().delivered, 1);
}

#[test]
fn unanswered_discovery_backs_off_then_gives_up() {
    let mut p = parts(MobilityTrace::fixed(&[Position::new(0.0, 0.0), Position::new(500.0, 0.0)], 400.0), 400.0);
    p.protocol.buffer_timeout = SimTime::from_secs(1000);
    let mut s = Simulation::from_parts(p);
    s.enable_audit();
    s.inject_data(NodeId(0), NodeId(1), 0, 0, SimTime::ZERO).unwrap();
    s.run_until(SimTime::from_secs(400)).unwrap();
    let times: Vec<String> = lines(&s, "rreq_start").iter().map(|l| l.split(" | ").next().unwrap().to_string()).collect();
    let expected = ["0.000000", "0.500000", "1.500000", "3.500000", "7.500000", "15.500000", "31.500000", "63.500000", "127.500000"];
    assert_eq!(times, expected);
    let t = s.metrics().totals();
    assert_eq!((t.sent, t.drops_noroute), (1, 1));
    let drop = lines(&s, "drop");
    assert!(drop[0].starts_with("255.500000 | 0 | drop | no_route"), "{drop:?}");
}

#[test]
fn buffered_packet_times_out_as_no_route() {
    let mut s = sim(&[(0.0, 0.0), (500.0, 0.0)], 60.0);
    s.inject_data(NodeId(0), NodeId(1), 0, 0, SimTime::ZERO).unwrap();
    s.run_until(SimTime::from_secs(60)).unwrap();
    assert_eq!(s.metrics().totals().drops_noroute, 1);
    assert!(lines(&s, "drop")[0].starts_with("30.000000 | 0 | drop | timeout"));
    // the retry after the timeout finds nothing buffered and stops
    assert_eq!(lines(&s, "rreq_start").len(), 6);
}

#[test]
fn buffer_overflow_is_counted() {
    let mut p = parts(MobilityTrace::fixed(&[Position::new(0.0, 0.0), Position::new(500.0, 0.0)], 5.0), 5.0);
    p.protocol.buffer_capacity = 2;
    let mut s = Simulation::from_parts(p);
    for seq in 0..3 {
        s.inject_data(NodeId(0), NodeId(1), 0, seq, SimTime::from_millis(seq as u64)).unwrap();
    }
    s.run_until(SimTime::from_secs(5)).unwrap();
    let t = s.metrics().totals();
    assert_eq!((t.sent, t.drops_buffer), (3, 1));
    assert!(s.metrics().balances().iter().all(|b| b.holds()));
}

/// Every directed data reception happened over a link that was in range when
/// the frame went on air.
#[test]
fn audit_log_only_shows_data_over_live_links() {
    let cfg = ScenarioConfig { speed: 15.0, sim_time: 100.0, seed: 3, ..Default::default() };
    let mut s = cfg.simulation().unwrap();
    s.enable_audit();
    s.run_until(SimTime::from_secs(100)).unwrap();
    let rx = lines(&s, "data_rx");
    assert!(rx.len() > 1000);
    for line in rx {
        let fields: Vec<&str> = line.split(" | ").collect();
        let to = NodeId(fields[1].parse().unwrap());
        let field = |name: &str| {
            fields[3].split(' ').find_map(|kv| kv.strip_prefix(name)).unwrap_or_else(|| panic!("{name} in {line}"))
        };
        let from = NodeId(field("from=").parse().unwrap());
        let on_air: f64 = field("on_air=").parse().unwrap();
        let a = s.trace().position_at_secs(from, on_air).unwrap();
        let b = s.trace().position_at_secs(to, on_air).unwrap();
        assert!(a.distance(&b) <= cfg.tx_range + 1e-6, "{line}: {}", a.distance(&b));
    }
}

#[test]
fn identical_seeds_give_identical_audit_logs() {
    let cfg = ScenarioConfig { speed: 10.0, sim_time: 60.0, seed: 11, ..Default::default() };
    let run = || {
        let mut s = cfg.simulation().unwrap();
        s.enable_audit();
        s.run_until(SimTime::from_secs(60)).unwrap();
        s.audit_log().unwrap().to_vec()
    };
    assert_eq!(run(), run());
}

#[test]
fn every_run_conserves_packets() {
    for (speed, (p, q)) in [(0.0, (1, 1)), (5.0, (5, 10)), (20.0, (30, 64))] {
        let cfg = ScenarioConfig { speed, p_cache: p, s_cache: q, sim_time: 120.0, seed: 2, ..Default::default() };
        let (outcome, _) = cfg.simulation().unwrap().run().unwrap();
        assert!(outcome.conserved(), "{cfg:?}");
        assert!(outcome.metrics.counts.sent > 0);
    }
}
