use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Ordered hop list, source first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Route(Vec<NodeId>);

impl Route {
    pub fn new(hops: Vec<NodeId>) -> Self {
        Route(hops)
    }

    pub fn from_ids(ids: &[u32]) -> Self {
        Route(ids.iter().map(|&i| NodeId(i)).collect())
    }

    pub fn hops(&self) -> &[NodeId] {
        &self.0
    }

    pub fn into_hops(self) -> Vec<NodeId> {
        self.0
    }

    /// Number of nodes on the route.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of links, `len() - 1`.
    pub fn hop_count(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn first(&self) -> Option<NodeId> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<NodeId> {
        self.0.last().copied()
    }

    pub fn position(&self, n: NodeId) -> Option<usize> {
        self.0.iter().position(|&h| h == n)
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.0.contains(&n)
    }

    pub fn is_loop_free(&self) -> bool {
        let mut seen = self.0.clone();
        seen.sort_unstable();
        seen.windows(2).all(|w| w[0] != w[1])
    }

    /// Index `i` such that `hops[i] == from && hops[i + 1] == to`.
    pub fn link_index(&self, from: NodeId, to: NodeId) -> Option<usize> {
        self.0.windows(2).position(|w| w[0] == from && w[1] == to)
    }

    pub fn contains_link(&self, from: NodeId, to: NodeId) -> bool {
        self.link_index(from, to).is_some()
    }

    /// The part of the route from its start up to and including `n`.
    pub fn prefix_through(&self, n: NodeId) -> Option<Route> {
        self.position(n).map(|i| Route(self.0[..=i].to_vec()))
    }

    /// The part of the route starting at `n`.
    pub fn suffix_from(&self, n: NodeId) -> Option<Route> {
        self.position(n).map(|i| Route(self.0[i..].to_vec()))
    }

    pub fn reversed(&self) -> Route {
        Route(self.0.iter().rev().copied().collect())
    }

    /// `self` followed by `tail` minus its first node, which must equal `self`'s last.
    pub fn splice(&self, tail: &Route) -> Option<Route> {
        if self.last()? != tail.first()? {
            return None;
        }
        let mut hops = self.0.clone();
        hops.extend_from_slice(&tail.0[1..]);
        Some(Route(hops))
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, h) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{h}")?;
        }
        Ok(())
    }
}
