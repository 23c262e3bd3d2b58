//! JSON payloads of the HTTP API. The CLI prints the same shapes with
//! `--format json`.

use serde::{Deserialize, Serialize};

use tracescope_core::explorer::{NetworkStats, TraceMeta};
use tracescope_core::model::{Address, NodeId};
use tracescope_core::partition::{CoverageGroup, PartitionSet};
use tracescope_core::prefs::Preferences;
use tracescope_core::state::{AgentBreakdown, CounterSet, MobileNode, NetworkState};
use tracescope_core::style::StyleRow;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OpenSessionRequest {
    /// Trace path, absolute or relative to the server's root directory.
    pub path: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SessionInfo {
    pub id: u64,
    pub meta: TraceMeta,
    pub style: Vec<StyleRow>,
    pub prefs: Preferences,
}

#[derive(Clone, Debug, Serialize)]
pub struct NodeView {
    pub node_id: NodeId,
    pub address: Option<Address>,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub settled: bool,
    pub last_update: Option<u64>,
    pub routing: CounterSet,
    pub agent: CounterSet,
    pub agent_breakdown: AgentBreakdown,
}

impl From<&MobileNode> for NodeView {
    fn from(n: &MobileNode) -> Self {
        let p = n.pos();
        Self {
            node_id: n.node_id(),
            address: n.network_address(),
            x: p.x,
            y: p.y,
            z: p.z,
            settled: n.settled(),
            last_update: n.last_update(),
            routing: *n.routing(),
            agent: *n.agent(),
            agent_breakdown: *n.agent_breakdown(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StatePayload {
    pub event_index: i64,
    /// Trace line of the event, absent for the initial state.
    pub raw_line: Option<String>,
    pub nodes: Vec<NodeView>,
    pub routing: CounterSet,
    pub agent: CounterSet,
    pub agent_breakdown: AgentBreakdown,
}

impl StatePayload {
    pub fn new(state: &NetworkState, raw_line: Option<String>) -> Self {
        Self {
            event_index: state.event_index(),
            raw_line,
            nodes: state.nodes().map(NodeView::from).collect(),
            routing: *state.network_routing(),
            agent: *state.network_agent(),
            agent_breakdown: *state.network_agent_breakdown(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StatsPayload {
    pub raw_line: Option<String>,
    #[serde(flatten)]
    pub stats: NetworkStats,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionsPayload {
    pub raw_line: Option<String>,
    #[serde(flatten)]
    pub partitions: PartitionSet,
    pub coverage: Vec<CoverageGroup>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PrefsPayload {
    pub prefs: Preferences,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}
