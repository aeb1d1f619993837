//! Two-tier DSR path cache.
//!
//! The primary tier holds routes the node has actively used or requested and
//! is kept in least-recently-used order. The secondary tier holds overheard or
//! relayed routes and is first-in first-out. A route lives in at most one
//! tier. Entries never expire on their own; they leave only through capacity
//! eviction or link-break truncation.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::route::{NodeId, Route};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub p_capacity: usize,
    pub s_capacity: usize,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig { p_capacity: 30, s_capacity: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    Primary,
    Secondary,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CacheError {
    #[error("route {0} is shorter than two nodes")]
    TooShort(Route),
    #[error("route {route} does not start at cache owner {owner}")]
    WrongHead { route: Route, owner: NodeId },
    #[error("route {0} visits a node twice")]
    Loop(Route),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertStatus {
    /// New entry.
    Stored,
    /// Identical route already in the requested tier; its recency was refreshed.
    Refreshed,
    /// Route moved from the secondary to the primary tier.
    Promoted,
    /// Secondary insert of a route that is already in the primary tier; nothing changed.
    AlreadyPrimary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InsertOutcome {
    pub status: InsertStatus,
    /// Least-recently-used primary route pushed down to the secondary tier.
    pub demoted: Option<Route>,
    /// Oldest secondary route dropped to make room.
    pub evicted: Option<Route>,
}

#[derive(Debug, Clone)]
struct Entry {
    route: Route,
    stamp: u64,
}

#[derive(Debug, Clone)]
pub struct RouteCache {
    owner: NodeId,
    cfg: CacheConfig,
    // front = least recently used
    primary: VecDeque<Entry>,
    // front = oldest
    secondary: VecDeque<Entry>,
    clock: u64,
}

impl RouteCache {
    pub fn new(owner: NodeId, cfg: CacheConfig) -> Self {
        assert!(cfg.p_capacity >= 1 && cfg.s_capacity >= 1, "cache capacities must be >= 1");
        RouteCache {
            owner,
            cfg,
            primary: VecDeque::with_capacity(cfg.p_capacity),
            secondary: VecDeque::with_capacity(cfg.s_capacity),
            clock: 0,
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn config(&self) -> CacheConfig {
        self.cfg
    }

    pub fn primary(&self) -> impl Iterator<Item = &Route> {
        self.primary.iter().map(|e| &e.route)
    }

    pub fn secondary(&self) -> impl Iterator<Item = &Route> {
        self.secondary.iter().map(|e| &e.route)
    }

    pub fn len(&self) -> usize {
        self.primary.len() + self.secondary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tier_of(&self, route: &Route) -> Option<Tier> {
        if self.primary.iter().any(|e| &e.route == route) {
            Some(Tier::Primary)
        } else if self.secondary.iter().any(|e| &e.route == route) {
            Some(Tier::Secondary)
        } else {
            None
        }
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn validate(&self, route: &Route) -> Result<(), CacheError> {
        if route.len() < 2 {
            return Err(CacheError::TooShort(route.clone()));
        }
        if route.first() != Some(self.owner) {
            return Err(CacheError::WrongHead { route: route.clone(), owner: self.owner });
        }
        if !route.is_loop_free() {
            return Err(CacheError::Loop(route.clone()));
        }
        Ok(())
    }

    pub fn insert(&mut self, route: Route, tier: Tier) -> Result<InsertOutcome, CacheError> {
        self.validate(&route)?;
        let in_primary = self.primary.iter().position(|e| e.route == route);
        let in_secondary = self.secondary.iter().position(|e| e.route == route);
        let stamp = self.tick();
        let plain = |status| InsertOutcome { status, demoted: None, evicted: None };

        match tier {
            Tier::Secondary => {
                if in_primary.is_some() {
                    return Ok(plain(InsertStatus::AlreadyPrimary));
                }
                if let Some(i) = in_secondary {
                    let mut e = self.secondary.remove(i).expect("index from position");
                    e.stamp = stamp;
                    self.secondary.push_back(e);
                    return Ok(plain(InsertStatus::Refreshed));
                }
                let evicted = self.push_secondary(Entry { route, stamp });
                Ok(InsertOutcome { status: InsertStatus::Stored, demoted: None, evicted })
            }
            Tier::Primary => {
                if let Some(i) = in_primary {
                    let mut e = self.primary.remove(i).expect("index from position");
                    e.stamp = stamp;
                    self.primary.push_back(e);
                    return Ok(plain(InsertStatus::Refreshed));
                }
                let status = match in_secondary {
                    Some(i) => {
                        self.secondary.remove(i);
                        InsertStatus::Promoted
                    }
                    None => InsertStatus::Stored,
                };
                let (demoted, evicted) = self.push_primary(Entry { route, stamp });
                Ok(InsertOutcome { status, demoted, evicted })
            }
        }
    }

    fn push_secondary(&mut self, entry: Entry) -> Option<Route> {
        let evicted = if self.secondary.len() >= self.cfg.s_capacity {
            self.secondary.pop_front().map(|e| e.route)
        } else {
            None
        };
        self.secondary.push_back(entry);
        evicted
    }

    fn push_primary(&mut self, entry: Entry) -> (Option<Route>, Option<Route>) {
        let mut demoted = None;
        let mut evicted = None;
        if self.primary.len() >= self.cfg.p_capacity {
            let lru = self.primary.pop_front().expect("full primary is non-empty");
            demoted = Some(lru.route.clone());
            evicted = self.push_secondary(lru);
        }
        self.primary.push_back(entry);
        (demoted, evicted)
    }

    /// Best cached candidate for `dst`: `(tier, entry index, prefix length)`.
    ///
    /// Any route that passes through `dst` yields its prefix up to `dst`. The
    /// shortest prefix wins; ties go to the most recently inserted entry.
    fn best(&self, dst: NodeId) -> Option<(Tier, usize, usize)> {
        let mut best: Option<(Tier, usize, usize, u64)> = None;
        let tiers = [(Tier::Primary, &self.primary), (Tier::Secondary, &self.secondary)];
        for (tier, entries) in tiers {
            for (i, e) in entries.iter().enumerate() {
                let Some(pos) = e.route.position(dst) else { continue };
                if pos == 0 {
                    continue;
                }
                let len = pos + 1;
                let better = match best {
                    None => true,
                    Some((_, _, bl, bs)) => len < bl || (len == bl && e.stamp > bs),
                };
                if better {
                    best = Some((tier, i, len, e.stamp));
                }
            }
        }
        best.map(|(t, i, l, _)| (t, i, l))
    }

    /// Side-effect-free lookup.
    pub fn find(&self, dst: NodeId) -> Option<Route> {
        let (tier, i, len) = self.best(dst)?;
        let entries = match tier {
            Tier::Primary => &self.primary,
            Tier::Secondary => &self.secondary,
        };
        Some(Route::new(entries[i].route.hops()[..len].to_vec()))
    }

    /// Lookup for use: a primary hit becomes most recently used, a secondary
    /// hit is promoted into the primary tier.
    pub fn lookup(&mut self, dst: NodeId) -> Option<Route> {
        let (tier, i, len) = self.best(dst)?;
        let entry = match tier {
            Tier::Primary => self.primary.remove(i).expect("index from best"),
            Tier::Secondary => self.secondary.remove(i).expect("index from best"),
        };
        let found = Route::new(entry.route.hops()[..len].to_vec());
        match tier {
            Tier::Primary => self.primary.push_back(entry),
            // a slot was just freed in secondary, so a demotion cannot cascade
            Tier::Secondary => {
                self.push_primary(entry);
            }
        }
        Some(found)
    }

    /// Cuts every route using the directed link `from -> to` so that it ends
    /// at `from`. Routes left with fewer than two nodes are dropped. Returns
    /// how many routes were truncated or dropped.
    pub fn handle_link_break(&mut self, from: NodeId, to: NodeId) -> usize {
        let mut affected = 0;
        for entries in [&mut self.primary, &mut self.secondary] {
            entries.retain_mut(|e| {
                let Some(i) = e.route.link_index(from, to) else { return true };
                affected += 1;
                if i == 0 {
                    return false;
                }
                let mut hops = std::mem::take(&mut e.route).into_hops();
                hops.truncate(i + 1);
                e.route = Route::new(hops);
                true
            });
        }
        if affected > 0 {
            self.dedup();
        }
        affected
    }

    // Truncation can make two entries identical; keep the primary copy, or the first one.
    fn dedup(&mut self) {
        let mut seen: Vec<Route> = Vec::new();
        for entries in [&mut self.primary, &mut self.secondary] {
            entries.retain(|e| {
                if seen.contains(&e.route) {
                    false
                } else {
                    seen.push(e.route.clone());
                    true
                }
            });
        }
    }

    /// Text listing of both tiers, primary in LRU order and secondary in FIFO order.
    pub fn dump(&self) -> String {
        let mut out = format!("node {}\n", self.owner);
        let _ = writeln!(out, "  primary ({}/{}):", self.primary.len(), self.cfg.p_capacity);
        for e in &self.primary {
            let _ = writeln!(out, "    {}", e.route);
        }
        let _ = writeln!(out, "  secondary ({}/{}):", self.secondary.len(), self.cfg.s_capacity);
        for e in &self.secondary {
            let _ = writeln!(out, "    {}", e.route);
        }
        out
    }
}
