//! Radio-range partitions: connected components of the unit-disk graph over
//! settled nodes, where two nodes are linked iff their planar distance is at
//! most the radio range.

use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use lru::LruCache;
use serde::Serialize;

use crate::model::NodeId;
use crate::state::NetworkState;

pub const DEFAULT_PARTITION_CACHE: usize = 32;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("radio range must be a finite, non-negative number of meters (got {0})")]
pub struct InvalidRange(pub f64);

/// Circular radio range in meters.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
pub struct RadioRange(f64);

impl RadioRange {
    pub fn new(meters: f64) -> Result<Self, InvalidRange> {
        if meters.is_finite() && meters >= 0.0 {
            Ok(Self(meters))
        } else {
            Err(InvalidRange(meters))
        }
    }

    pub fn meters(self) -> f64 {
        self.0
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionSet {
    pub event_index: i64,
    pub radio_range: f64,
    /// Node ids ascending within a component; components ordered by their
    /// smallest member.
    pub components: Vec<Vec<NodeId>>,
    /// Smallest node id of each component, used to pick its color.
    pub color_keys: Vec<NodeId>,
}

impl PartitionSet {
    pub fn component_of(&self, node: NodeId) -> Option<usize> {
        self.components.iter().position(|c| c.binary_search(&node).is_ok())
    }
}

pub fn compute_partitions(state: &NetworkState, range: RadioRange) -> PartitionSet {
    let nodes: Vec<_> = state.nodes().filter(|n| n.settled()).collect();
    let r = range.meters();
    let mut dsu = DisjointSet::new(nodes.len());
    for i in 0..nodes.len() {
        let pi = nodes[i].pos();
        for j in i + 1..nodes.len() {
            if pi.distance_2d(&nodes[j].pos()) <= r {
                dsu.union(i, j);
            }
        }
    }
    // nodes are in ascending id order, so the first member seen of each
    // root is its smallest id and components come out sorted by it
    let mut slot_of_root = vec![usize::MAX; nodes.len()];
    let mut components: Vec<Vec<NodeId>> = Vec::new();
    for (i, n) in nodes.iter().enumerate() {
        let root = dsu.find(i);
        if slot_of_root[root] == usize::MAX {
            slot_of_root[root] = components.len();
            components.push(Vec::new());
        }
        components[slot_of_root[root]].push(n.node_id());
    }
    let color_keys = components.iter().map(|c| c[0]).collect();
    PartitionSet {
        event_index: state.event_index(),
        radio_range: r,
        components,
        color_keys,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Disk {
    pub node_id: NodeId,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// Disks of one partition; drawn in one color, their overlap forms the
/// partition's coverage.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageGroup {
    pub color_key: NodeId,
    pub disks: Vec<Disk>,
}

pub fn coverage_geometry(p: &PartitionSet, state: &NetworkState) -> Vec<CoverageGroup> {
    p.components
        .iter()
        .zip(&p.color_keys)
        .map(|(members, &color_key)| CoverageGroup {
            color_key,
            disks: members
                .iter()
                .filter_map(|&id| state.node(id))
                .map(|n| Disk {
                    node_id: n.node_id(),
                    x: n.pos().x,
                    y: n.pos().y,
                    radius: p.radio_range,
                })
                .collect(),
        })
        .collect()
}

/// LRU cache of partition results keyed by `(event, range)`.
pub struct PartitionCache {
    lru: Mutex<LruCache<(i64, u64), Arc<PartitionSet>>>,
    computes: AtomicU64,
}

impl PartitionCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            lru: Mutex::new(LruCache::new(NonZeroUsize::new(capacity.max(1)).unwrap())),
            computes: AtomicU64::new(0),
        }
    }

    /// Number of partition computations performed (cache misses).
    pub fn computes(&self) -> u64 {
        self.computes.load(Ordering::Relaxed)
    }

    pub fn get_or_compute<E>(
        &self,
        k: i64,
        range: RadioRange,
        state: impl FnOnce() -> Result<Arc<NetworkState>, E>,
    ) -> Result<Arc<PartitionSet>, E> {
        let key = (k, range.meters().to_bits());
        if let Some(hit) = self.lru.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let state = state()?;
        let p = Arc::new(compute_partitions(&state, range));
        self.computes.fetch_add(1, Ordering::Relaxed);
        self.lru.lock().unwrap().put(key, p.clone());
        Ok(p)
    }
}

impl Default for PartitionCache {
    fn default() -> Self {
        Self::new(DEFAULT_PARTITION_CACHE)
    }
}
