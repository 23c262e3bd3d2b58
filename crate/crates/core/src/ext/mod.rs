//! Protocol extensions.
//!
//! An extension interprets the protocol tail of trace lines for one routing
//! protocol. It creates, updates and deep-copies the protocol-owned part of
//! each node and fills the protocol panel when the user interacts with the
//! view. Extensions are looked up by the protocol name found in the trace;
//! unknown names fall back to [`DummyExtension`].
//!
//! Writing an extension:
//!
//! * keep protocol data in a type implementing [`NodePayload`] and attach it
//!   in [`ProtocolExtension::create_node`];
//! * react to `-P<suffix> <value>` pairs in [`ProtocolExtension::update_node`]
//!   (keys keep their `P` prefix, e.g. `Pt`, `Prt`);
//! * make [`ProtocolExtension::copy_node`] return an independent copy;
//! * answer clicks in [`ProtocolExtension::notify_event`] by writing rows to
//!   the [`Visualizer`]'s panel.
//!
//! Core node fields (position, counters, settlement) are read-only to
//! extensions, so replay results never depend on which extension is used.

mod aodv;
mod dummy;

use std::any::Any;
use std::collections::HashMap;
use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use aodv::{
    parse_props as aodv_parse_props, parse_route_table, AodvExtension, AodvNode, AodvPacketView, AodvProps,
    AodvRouteEntry,
};
pub use dummy::DummyExtension;

use crate::model::{Address, NodeId, ProtocolProps, TraceEvent};
use crate::panel::Panel;
use crate::state::{AgentBreakdown, CounterSet, MobileNode, NetworkState};

/// Protocol-owned data attached to a node.
pub trait NodePayload: Any + Debug + Send + Sync {
    fn clone_payload(&self) -> Box<dyn NodePayload>;
    fn eq_payload(&self, other: &dyn NodePayload) -> bool;
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ExtensionError(pub String);

/// The contract every protocol handler implements.
pub trait ProtocolExtension: Send + Sync {
    fn name(&self) -> &str;

    /// Builds the node at its early position. Returned nodes must be
    /// unsettled and carry `node_id`.
    fn create_node(
        &self,
        node_id: NodeId,
        address: Option<Address>,
        x: f64,
        y: f64,
        props: Option<&ProtocolProps>,
    ) -> Result<MobileNode, ExtensionError>;

    /// Called once per applied event with that event's protocol tail.
    /// Must be deterministic in `(node, props, event_index)`.
    fn update_node(&self, node: &mut MobileNode, props: Option<&ProtocolProps>, event_index: u64);

    /// An independent deep copy of `node`.
    fn copy_node(&self, node: &MobileNode) -> MobileNode;

    /// Handles a user interaction by writing to the protocol panel.
    fn notify_event(&self, vis: &mut Visualizer<'_>);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisualEventKind {
    NodeClicked,
    TransmissionClicked,
    EventChanged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VisualEvent {
    pub kind: VisualEventKind,
    pub event_index: i64,
    #[serde(default)]
    pub node_id: Option<NodeId>,
}

/// What an extension may see and touch while handling a user interaction:
/// read-only views of the displayed event and state, and the protocol panel.
pub struct Visualizer<'a> {
    event: VisualEvent,
    state: &'a NetworkState,
    current: Option<&'a TraceEvent>,
    panel: Panel,
}

impl<'a> Visualizer<'a> {
    pub fn new(event: VisualEvent, state: &'a NetworkState, current: Option<&'a TraceEvent>, title: &str) -> Self {
        Self {
            event,
            state,
            current,
            panel: Panel::new(title),
        }
    }

    pub fn visual_event(&self) -> &VisualEvent {
        &self.event
    }

    /// State after the displayed event.
    pub fn state(&self) -> &'a NetworkState {
        self.state
    }

    /// The displayed event, absent at the initial state.
    pub fn current_event(&self) -> Option<&'a TraceEvent> {
        self.current
    }

    pub fn node(&self, id: NodeId) -> Option<&'a MobileNode> {
        self.state.node(id)
    }

    pub fn network_counters(&self) -> (&'a CounterSet, &'a CounterSet, &'a AgentBreakdown) {
        (
            self.state.network_routing(),
            self.state.network_agent(),
            self.state.network_agent_breakdown(),
        )
    }

    /// Node the interaction concerns: the clicked node, else the node that
    /// owns the displayed event.
    pub fn focus_node(&self) -> Option<NodeId> {
        self.event.node_id.or(self.current.map(|e| e.node_id))
    }

    pub fn panel_mut(&mut self) -> &mut Panel {
        &mut self.panel
    }

    pub fn into_panel(self) -> Panel {
        self.panel
    }
}

/// Outcome of a registry lookup.
#[derive(Clone)]
pub struct Resolved {
    pub extension: Arc<dyn ProtocolExtension>,
    /// Set when the generic handler stands in for an unknown protocol.
    pub notice: Option<String>,
}

/// Extensions keyed by lowercase protocol name.
#[derive(Clone)]
pub struct ExtensionRegistry {
    handlers: HashMap<String, Arc<dyn ProtocolExtension>>,
    fallback: Arc<dyn ProtocolExtension>,
}

impl Default for ExtensionRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(AodvExtension));
        r
    }
}

impl ExtensionRegistry {
    /// A registry with only the generic fallback.
    pub fn empty() -> Self {
        Self {
            handlers: HashMap::new(),
            fallback: Arc::new(DummyExtension),
        }
    }

    pub fn register(&mut self, ext: Arc<dyn ProtocolExtension>) {
        self.handlers.insert(ext.name().to_ascii_lowercase(), ext);
    }

    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<_> = self.handlers.keys().cloned().collect();
        v.sort();
        v
    }

    /// Case-insensitive lookup. Always yields a handler.
    pub fn resolve(&self, protocol: Option<&str>) -> Resolved {
        let Some(name) = protocol else {
            return Resolved {
                extension: self.fallback.clone(),
                notice: None,
            };
        };
        match self.handlers.get(&name.to_ascii_lowercase()) {
            Some(ext) => Resolved {
                extension: ext.clone(),
                notice: None,
            },
            None => Resolved {
                extension: self.fallback.clone(),
                notice: Some(format!("protocol `{name}` has no extension; visualized with generic handler")),
            },
        }
    }
}
