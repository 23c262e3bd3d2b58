//! Random access to network state through cached snapshots.
//!
//! A snapshot is a deep copy of the whole [`NetworkState`] at some event.
//! To answer "state at k" the [`Replayer`] takes the closest cached snapshot
//! at or before `k` and applies the remaining events in order. Snapshots
//! live in an LRU cache; the initial state is pinned outside it.
//!
//! Eviction has two tiers. Snapshots taken at multiples of the stride
//! ("checkpoints") are only evicted when no other entry is left, so once a
//! trace has been played through, every jump replays at most `stride`
//! events as long as `total_events / stride <= capacity`.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::ext::ProtocolExtension;
use crate::index::{IndexError, TraceReader};
use crate::model::TraceEvent;
use crate::state::{NetworkState, StateError};

pub const DEFAULT_CAPACITY: usize = 64;
pub const DEFAULT_STRIDE: u64 = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CacheConfig {
    /// Maximum number of cached snapshots, not counting the initial state.
    pub capacity: usize,
    /// Events between automatic snapshots.
    pub stride: u64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            capacity: DEFAULT_CAPACITY,
            stride: DEFAULT_STRIDE,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("event index {index} out of range [-1, {total})")]
    OutOfRange { index: i64, total: u64 },
    #[error(transparent)]
    Source(#[from] IndexError),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug)]
struct Slot {
    state: Arc<NetworkState>,
    last_used: u64,
    checkpoint: bool,
}

/// LRU store of snapshots keyed by event index.
#[derive(Debug)]
pub struct SnapshotCache {
    config: CacheConfig,
    initial: Arc<NetworkState>,
    entries: BTreeMap<u64, Slot>,
    clock: u64,
}

impl SnapshotCache {
    pub fn new(initial: NetworkState, config: CacheConfig) -> Self {
        Self {
            config: CacheConfig {
                stride: config.stride.max(1),
                ..config
            },
            initial: Arc::new(initial),
            entries: BTreeMap::new(),
            clock: 0,
        }
    }

    pub fn config(&self) -> CacheConfig {
        self.config
    }

    pub fn initial(&self) -> &Arc<NetworkState> {
        &self.initial
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Cached event indexes in ascending order (the pinned `-1` excluded).
    pub fn keys(&self) -> Vec<u64> {
        self.entries.keys().copied().collect()
    }

    pub fn contains(&self, k: u64) -> bool {
        self.entries.contains_key(&k)
    }

    /// Stride multiples other than event 0, which sits next to the pinned
    /// initial state anyway.
    pub fn is_checkpoint(&self, k: u64) -> bool {
        k != 0 && k % self.config.stride == 0
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Looks up `k` and marks it recently used.
    pub fn get(&mut self, k: i64) -> Option<Arc<NetworkState>> {
        if k < 0 {
            return (k == -1).then(|| self.initial.clone());
        }
        let now = self.tick();
        let slot = self.entries.get_mut(&(k as u64))?;
        slot.last_used = now;
        Some(slot.state.clone())
    }

    /// Closest snapshot at or before `k`, falling back to the initial state.
    /// Serving as a replay base does not count as a use.
    pub fn floor(&self, k: i64) -> (i64, Arc<NetworkState>) {
        if k < 0 {
            return (-1, self.initial.clone());
        }
        match self.entries.range(..=k as u64).next_back() {
            Some((&b, slot)) => (b as i64, slot.state.clone()),
            None => (-1, self.initial.clone()),
        }
    }

    /// Stores an already deep-copied snapshot, evicting if full.
    pub fn insert(&mut self, k: u64, state: Arc<NetworkState>) {
        if self.config.capacity == 0 {
            return;
        }
        let now = self.tick();
        let checkpoint = self.is_checkpoint(k);
        if let Some(slot) = self.entries.get_mut(&k) {
            slot.last_used = now;
            return;
        }
        while self.entries.len() >= self.config.capacity {
            self.evict_one();
        }
        self.entries.insert(
            k,
            Slot {
                state,
                last_used: now,
                checkpoint,
            },
        );
    }

    fn evict_one(&mut self) {
        let victim = self
            .entries
            .iter()
            .filter(|(_, s)| !s.checkpoint)
            .min_by_key(|(_, s)| s.last_used)
            .or_else(|| self.entries.iter().min_by_key(|(_, s)| s.last_used))
            .map(|(&k, _)| k);
        if let Some(k) = victim {
            self.entries.remove(&k);
        }
    }
}

/// Random access to parsed events.
pub trait EventSource {
    fn total_events(&self) -> u64;
    fn event(&mut self, k: u64) -> Result<TraceEvent, ReplayError>;
}

impl EventSource for TraceReader {
    fn total_events(&self) -> u64 {
        self.index().total_events()
    }

    fn event(&mut self, k: u64) -> Result<TraceEvent, ReplayError> {
        Ok(TraceReader::event(self, k)?)
    }
}

/// Events held in memory, mostly for tests and small traces.
#[derive(Clone, Debug, Default)]
pub struct MemorySource(pub Vec<TraceEvent>);

impl EventSource for MemorySource {
    fn total_events(&self) -> u64 {
        self.0.len() as u64
    }

    fn event(&mut self, k: u64) -> Result<TraceEvent, ReplayError> {
        self.0.get(k as usize).cloned().ok_or(ReplayError::OutOfRange {
            index: k as i64,
            total: self.0.len() as u64,
        })
    }
}

/// Counters for observing how much work the replayer did.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReplayProbe {
    /// Events applied by the most recent `state_at`.
    pub last_replayed: u64,
    /// Snapshot the most recent `state_at` started from.
    pub last_base: i64,
    pub total_replayed: u64,
    pub hits: u64,
    pub misses: u64,
}

/// Owns the event source and the snapshot cache for one trace.
pub struct Replayer<S> {
    source: S,
    ext: Arc<dyn ProtocolExtension>,
    cache: SnapshotCache,
    probe: ReplayProbe,
}

impl<S: EventSource> Replayer<S> {
    pub fn new(source: S, ext: Arc<dyn ProtocolExtension>, initial: NetworkState, config: CacheConfig) -> Self {
        Self {
            source,
            ext,
            cache: SnapshotCache::new(initial, config),
            probe: ReplayProbe::default(),
        }
    }

    pub fn total_events(&self) -> u64 {
        self.source.total_events()
    }

    pub fn extension(&self) -> &Arc<dyn ProtocolExtension> {
        &self.ext
    }

    pub fn cache(&self) -> &SnapshotCache {
        &self.cache
    }

    pub fn probe(&self) -> ReplayProbe {
        self.probe
    }

    pub fn source_mut(&mut self) -> &mut S {
        &mut self.source
    }

    pub fn event(&mut self, k: u64) -> Result<TraceEvent, ReplayError> {
        self.check(k as i64)?;
        self.source.event(k)
    }

    fn check(&self, k: i64) -> Result<(), ReplayError> {
        let total = self.source.total_events();
        if k < -1 || k >= total as i64 {
            return Err(ReplayError::OutOfRange { index: k, total });
        }
        Ok(())
    }

    /// State after applying events `0..=k`; `k = -1` is the initial state.
    pub fn state_at(&mut self, k: i64) -> Result<Arc<NetworkState>, ReplayError> {
        self.check(k)?;
        if let Some(hit) = self.cache.get(k) {
            self.probe.hits += 1;
            self.probe.last_replayed = 0;
            self.probe.last_base = k;
            return Ok(hit);
        }
        self.probe.misses += 1;
        let (base, snapshot) = self.cache.floor(k);
        let mut state = snapshot.deep_copy(self.ext.as_ref());
        for i in (base + 1) as u64..=k as u64 {
            let ev = self.source.event(i)?;
            state.apply(&ev, self.ext.as_ref())?;
            if self.cache.is_checkpoint(i) && i != k as u64 && !self.cache.contains(i) {
                self.record_playback_snapshot(i, &state);
            }
        }
        self.probe.last_replayed = (k - base) as u64;
        self.probe.last_base = base;
        self.probe.total_replayed += self.probe.last_replayed;
        let state = Arc::new(state);
        self.cache.insert(k as u64, state.clone());
        Ok(state)
    }

    /// Stores a deep copy of `state` as the snapshot for event `k`.
    pub fn record_playback_snapshot(&mut self, k: u64, state: &NetworkState) {
        self.cache.insert(k, Arc::new(state.deep_copy(self.ext.as_ref())));
    }

    /// Plays events `0..=last` in order from the initial state, recording a
    /// snapshot every `stride` events the way sequential playback does.
    pub fn play_through(&mut self, last: i64) -> Result<Arc<NetworkState>, ReplayError> {
        self.check(last)?;
        let mut state = self.cache.initial().deep_copy(self.ext.as_ref());
        for i in 0..(last + 1) as u64 {
            let ev = self.source.event(i)?;
            state.apply(&ev, self.ext.as_ref())?;
            if self.cache.is_checkpoint(i) {
                self.record_playback_snapshot(i, &state);
            }
        }
        Ok(Arc::new(state))
    }
}
