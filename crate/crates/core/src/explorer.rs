//! One open trace with everything needed to explore it: indexes, the
//! replayer, the partition cache, the protocol extension and preferences.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::RgbaImage;
use serde::Serialize;

use crate::ext::{ExtensionRegistry, ProtocolExtension, VisualEvent, VisualEventKind, Visualizer};
use crate::index::{load_or_build, write_sidecar, IndexError, PreScan, TraceIndex, TraceReader, DEFAULT_BUFFER_SIZE};
use crate::model::TraceEvent;
use crate::panel::Panel;
use crate::partition::{PartitionCache, PartitionSet, RadioRange, DEFAULT_PARTITION_CACHE};
use crate::prefs::Preferences;
use crate::render::{encode_png, export_png, render_frame, screenshot_file_name, FrameSpec, RenderError, Viewport};
use crate::snapshot::{CacheConfig, ReplayError, ReplayProbe, Replayer};
use crate::state::{
    transmission_properties, AgentBreakdown, CounterSet, NetworkState, NodeSummary, StateError, TransmissionProps,
};

#[derive(Clone, Debug)]
pub struct ExplorerConfig {
    pub cache: CacheConfig,
    pub buffer_size: usize,
    pub partition_cache: usize,
    /// Write `<trace>.exidx` after building indexes from scratch.
    pub write_sidecar: bool,
    pub frame_width: u32,
    pub frame_height: u32,
}

impl Default for ExplorerConfig {
    fn default() -> Self {
        Self {
            cache: CacheConfig::default(),
            buffer_size: DEFAULT_BUFFER_SIZE,
            partition_cache: DEFAULT_PARTITION_CACHE,
            write_sidecar: true,
            frame_width: 800,
            frame_height: 800,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExplorerError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("{0}")]
    InvalidRequest(String),
}

/// Facts about the open trace, computed once at open.
#[derive(Clone, Debug, Serialize)]
pub struct TraceMeta {
    pub path: PathBuf,
    pub total_events: u64,
    pub total_lines: u64,
    pub file_length: u64,
    pub node_count: usize,
    pub protocol: Option<String>,
    pub protocols: Vec<String>,
    pub extension: String,
    pub index_from_sidecar: bool,
    /// Notices about the fallback handler, sidecar writes and node creation.
    pub notices: Vec<String>,
    pub skipped_lines: u64,
    pub old_format_lines: u64,
    pub event_errors: u64,
    pub diagnostics: Vec<(u64, String)>,
    pub time_range: Option<(f64, f64)>,
    pub time_regressions: u64,
}

/// An event together with the line it was parsed from.
#[derive(Clone, Debug, Serialize)]
pub struct EventView {
    pub event: TraceEvent,
    pub raw_line: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct NetworkStats {
    pub event_index: i64,
    pub routing: CounterSet,
    pub agent: CounterSet,
    pub agent_breakdown: AgentBreakdown,
    pub panel: Panel,
}

/// Panels produced for one user interaction.
#[derive(Clone, Debug, Serialize)]
pub struct NotifyResponse {
    pub event: VisualEvent,
    pub network: Panel,
    pub node: Option<NodeSummary>,
    pub transmission: Option<TransmissionProps>,
    pub protocol: Panel,
}

pub struct Explorer {
    path: PathBuf,
    index: Arc<TraceIndex>,
    meta: TraceMeta,
    replayer: Replayer<TraceReader>,
    partitions: PartitionCache,
    prefs: Preferences,
    config: ExplorerConfig,
}

impl Explorer {
    pub fn open(path: &Path, registry: &ExtensionRegistry, config: ExplorerConfig) -> Result<Self, ExplorerError> {
        let (index, from_sidecar) = load_or_build(path, config.buffer_size)?;
        let mut notices = Vec::new();
        if !from_sidecar && config.write_sidecar {
            if let Err(e) = write_sidecar(path, &index) {
                notices.push(format!("index sidecar not written: {e}"));
            }
        }
        let index = Arc::new(index);
        let pre: &PreScan = &index.prescan;
        let resolved = registry.resolve(pre.protocol());
        notices.extend(resolved.notice.clone());
        let (initial, create_notes) = NetworkState::initial(pre, resolved.extension.as_ref());
        notices.extend(create_notes);
        let meta = TraceMeta {
            path: path.to_path_buf(),
            total_events: index.total_events(),
            total_lines: index.total_lines(),
            file_length: index.lines.file_length(),
            node_count: pre.nodes.len(),
            protocol: pre.protocol().map(str::to_string),
            protocols: pre.protocols.clone(),
            extension: resolved.extension.name().to_string(),
            index_from_sidecar: from_sidecar,
            notices,
            skipped_lines: pre.skipped_lines,
            old_format_lines: pre.old_format_lines,
            event_errors: pre.event_errors,
            diagnostics: pre.diagnostics.clone(),
            time_range: pre.time_range,
            time_regressions: pre.time_regressions,
        };
        let reader = TraceReader::open(path, index.clone(), config.buffer_size)?;
        let replayer = Replayer::new(reader, resolved.extension, initial, config.cache);
        Ok(Self {
            path: path.to_path_buf(),
            index,
            meta,
            replayer,
            partitions: PartitionCache::new(config.partition_cache),
            prefs: Preferences::default(),
            config,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    pub fn index(&self) -> &Arc<TraceIndex> {
        &self.index
    }

    pub fn total_events(&self) -> u64 {
        self.index.total_events()
    }

    pub fn extension(&self) -> &Arc<dyn ProtocolExtension> {
        self.replayer.extension()
    }

    pub fn prefs(&self) -> &Preferences {
        &self.prefs
    }

    pub fn set_prefs(&mut self, prefs: Preferences) {
        self.prefs = prefs;
    }

    pub fn replay_probe(&self) -> ReplayProbe {
        self.replayer.probe()
    }

    pub fn cached_snapshots(&self) -> Vec<u64> {
        self.replayer.cache().keys()
    }

    pub fn partition_computes(&self) -> u64 {
        self.partitions.computes()
    }

    pub fn segment_reads(&mut self) -> u64 {
        self.replayer.source_mut().segment_reads()
    }

    pub fn state_at(&mut self, k: i64) -> Result<Arc<NetworkState>, ExplorerError> {
        Ok(self.replayer.state_at(k)?)
    }

    pub fn play_through(&mut self, last: i64) -> Result<Arc<NetworkState>, ExplorerError> {
        Ok(self.replayer.play_through(last)?)
    }

    pub fn event(&mut self, k: u64) -> Result<EventView, ExplorerError> {
        let event = self.replayer.event(k)?;
        let raw_line = self.replayer.source_mut().fetch_event_line(k)?;
        Ok(EventView { event, raw_line })
    }

    pub fn stats(&mut self, k: i64) -> Result<NetworkStats, ExplorerError> {
        let s = self.state_at(k)?;
        Ok(NetworkStats {
            event_index: s.event_index(),
            routing: *s.network_routing(),
            agent: *s.network_agent(),
            agent_breakdown: *s.network_agent_breakdown(),
            panel: s.network_summary(),
        })
    }

    /// Radio range from the argument, else from the preferences.
    pub fn radio_range(&self, range: Option<f64>) -> Result<RadioRange, ExplorerError> {
        RadioRange::new(range.unwrap_or(self.prefs.radio_range))
            .map_err(|e| ExplorerError::InvalidRequest(e.to_string()))
    }

    pub fn partitions_at(&mut self, k: i64, range: Option<f64>) -> Result<Arc<PartitionSet>, ExplorerError> {
        let r = self.radio_range(range)?;
        let replayer = &mut self.replayer;
        self.partitions.get_or_compute(k, r, || replayer.state_at(k).map_err(ExplorerError::from))
    }

    pub fn notify(&mut self, ve: VisualEvent) -> Result<NotifyResponse, ExplorerError> {
        let state = self.state_at(ve.event_index)?;
        let current = match ve.event_index {
            k if k >= 0 => Some(self.replayer.event(k as u64)?),
            _ => None,
        };
        let node = match (ve.kind, ve.node_id) {
            (VisualEventKind::NodeClicked, Some(id)) => Some(state.node_summary(id)?),
            (VisualEventKind::NodeClicked, None) => {
                return Err(ExplorerError::InvalidRequest("node_clicked requires node_id".into()))
            }
            (_, Some(id)) => state.node_summary(id).ok(),
            _ => None,
        };
        let transmission = match ve.kind {
            VisualEventKind::TransmissionClicked | VisualEventKind::EventChanged => {
                current.as_ref().map(transmission_properties)
            }
            VisualEventKind::NodeClicked => None,
        };
        let ext = self.replayer.extension().clone();
        let mut vis = Visualizer::new(ve, &state, current.as_ref(), ext.name());
        ext.notify_event(&mut vis);
        Ok(NotifyResponse {
            event: ve,
            network: state.network_summary(),
            node,
            transmission,
            protocol: vis.into_panel(),
        })
    }

    /// Renders event `k`. Partitions are drawn when `range` is given.
    pub fn render(&mut self, k: i64, range: Option<f64>) -> Result<RgbaImage, ExplorerError> {
        let state = self.state_at(k)?;
        let event = if k >= 0 { Some(self.replayer.event(k as u64)?) } else { None };
        let partitions = match range {
            Some(r) => Some(self.partitions_at(k, Some(r))?),
            None => None,
        };
        Ok(render_frame(&FrameSpec {
            state: &state,
            event: event.as_ref(),
            partitions: partitions.as_deref(),
            prefs: &self.prefs,
            viewport: Viewport::fit(self.prefs.terrain, self.config.frame_width, self.config.frame_height),
        }))
    }

    pub fn screenshot_png(&mut self, k: i64, range: Option<f64>) -> Result<Vec<u8>, ExplorerError> {
        Ok(encode_png(&self.render(k, range)?)?)
    }

    /// Writes `frame_<k>.png` into `dir`, or into the preferences'
    /// screenshot directory when `dir` is `None`.
    pub fn save_screenshot(&mut self, k: i64, range: Option<f64>, dir: Option<&Path>) -> Result<PathBuf, ExplorerError> {
        let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| self.prefs.screenshot_dir.clone());
        std::fs::create_dir_all(&dir).map_err(|source| RenderError::Io { path: dir.clone(), source })?;
        let path = dir.join(screenshot_file_name(k));
        export_png(&self.render(k, range)?, &path)?;
        Ok(path)
    }
}
