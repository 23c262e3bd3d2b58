//! Whole-network state and sequential event application.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::ext::{NodePayload, ProtocolExtension};
use crate::index::PreScan;
use crate::model::{classify_agent_packet, Action, AgentClass, Address, Layer, NodeId, Position, TraceEvent};
use crate::panel::Panel;
use crate::style::{event_glyph_kind, GlyphKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StateError {
    #[error("event {got} applied to state at {current}; events must be applied in order")]
    NonSequential { current: i64, got: u64 },
    #[error("event references node {0}, which the pre-scan never saw")]
    UnknownNode(NodeId),
    #[error("no node {0}")]
    NoSuchNode(NodeId),
}

/// Bytes seen per action, kept disjoint by action letter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CounterSet {
    pub sent: u64,
    pub received: u64,
    pub forwarded: u64,
    pub dropped: u64,
}

impl CounterSet {
    pub fn add(&mut self, action: Action, bytes: u64) {
        *self.slot(action) += bytes;
    }

    pub fn get(&self, action: Action) -> u64 {
        match action {
            Action::Send => self.sent,
            Action::Receive => self.received,
            Action::Forward => self.forwarded,
            Action::Drop => self.dropped,
        }
    }

    fn slot(&mut self, action: Action) -> &mut u64 {
        match action {
            Action::Send => &mut self.sent,
            Action::Receive => &mut self.received,
            Action::Forward => &mut self.forwarded,
            Action::Drop => &mut self.dropped,
        }
    }

    pub fn total(&self) -> u64 {
        self.sent + self.received + self.forwarded + self.dropped
    }
}

impl std::ops::AddAssign for CounterSet {
    fn add_assign(&mut self, o: Self) {
        self.sent += o.sent;
        self.received += o.received;
        self.forwarded += o.forwarded;
        self.dropped += o.dropped;
    }
}

/// Agent-layer bytes split by packet class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AgentBreakdown {
    pub cbr: u64,
    pub tcp_ack: u64,
    pub other: u64,
}

impl AgentBreakdown {
    pub fn add(&mut self, class: AgentClass, bytes: u64) {
        match class {
            AgentClass::Cbr => self.cbr += bytes,
            AgentClass::TcpAck => self.tcp_ack += bytes,
            AgentClass::Other => self.other += bytes,
        }
    }

    pub fn get(&self, class: AgentClass) -> u64 {
        match class {
            AgentClass::Cbr => self.cbr,
            AgentClass::TcpAck => self.tcp_ack,
            AgentClass::Other => self.other,
        }
    }
}

impl std::ops::AddAssign for AgentBreakdown {
    fn add_assign(&mut self, o: Self) {
        self.cbr += o.cbr;
        self.tcp_ack += o.tcp_ack;
        self.other += o.other;
    }
}

/// State of one mobile node.
///
/// Core fields are only written by the replay engine; protocol extensions
/// get mutable access to the payload alone.
pub struct MobileNode {
    node_id: NodeId,
    network_address: Option<Address>,
    pos: Position,
    last_update: Option<u64>,
    routing: CounterSet,
    agent: CounterSet,
    agent_breakdown: AgentBreakdown,
    payload: Option<Box<dyn NodePayload>>,
}

impl MobileNode {
    /// An unsettled node with zero counters at an early position.
    pub fn new(node_id: NodeId, network_address: Option<Address>, x: f64, y: f64) -> Self {
        Self {
            node_id,
            network_address,
            pos: Position::new(x, y, 0.0),
            last_update: None,
            routing: CounterSet::default(),
            agent: CounterSet::default(),
            agent_breakdown: AgentBreakdown::default(),
            payload: None,
        }
    }

    pub fn with_payload(mut self, payload: Box<dyn NodePayload>) -> Self {
        self.payload = Some(payload);
        self
    }

    pub fn node_id(&self) -> NodeId {
        self.node_id
    }

    pub fn network_address(&self) -> Option<Address> {
        self.network_address
    }

    pub fn pos(&self) -> Position {
        self.pos
    }

    /// A node is settled once an event concerning it has been applied.
    pub fn settled(&self) -> bool {
        self.last_update.is_some()
    }

    pub fn last_update(&self) -> Option<u64> {
        self.last_update
    }

    pub fn routing(&self) -> &CounterSet {
        &self.routing
    }

    pub fn agent(&self) -> &CounterSet {
        &self.agent
    }

    pub fn agent_breakdown(&self) -> &AgentBreakdown {
        &self.agent_breakdown
    }

    pub fn payload(&self) -> Option<&dyn NodePayload> {
        self.payload.as_deref()
    }

    pub fn payload_mut(&mut self) -> Option<&mut (dyn NodePayload + 'static)> {
        self.payload.as_deref_mut()
    }

    pub fn set_payload(&mut self, payload: Option<Box<dyn NodePayload>>) {
        self.payload = payload;
    }

    /// Typed access to the extension payload.
    pub fn payload_as<T: NodePayload>(&self) -> Option<&T> {
        self.payload.as_ref()?.as_any().downcast_ref()
    }

    pub fn payload_as_mut<T: NodePayload>(&mut self) -> Option<&mut T> {
        self.payload.as_mut()?.as_any_mut().downcast_mut()
    }

    /// Copies the core fields and lets `copy_payload` duplicate the payload.
    pub fn copy_with(&self, copy_payload: impl FnOnce(&dyn NodePayload) -> Box<dyn NodePayload>) -> Self {
        Self {
            node_id: self.node_id,
            network_address: self.network_address,
            pos: self.pos,
            last_update: self.last_update,
            routing: self.routing,
            agent: self.agent,
            agent_breakdown: self.agent_breakdown,
            payload: self.payload.as_deref().map(copy_payload),
        }
    }

    /// Equality of everything except the extension payload.
    pub fn core_eq(&self, other: &Self) -> bool {
        self.node_id == other.node_id
            && self.network_address == other.network_address
            && self.pos == other.pos
            && self.last_update == other.last_update
            && self.routing == other.routing
            && self.agent == other.agent
            && self.agent_breakdown == other.agent_breakdown
    }
}

impl Clone for MobileNode {
    fn clone(&self) -> Self {
        self.copy_with(|p| p.clone_payload())
    }
}

impl PartialEq for MobileNode {
    fn eq(&self, other: &Self) -> bool {
        self.core_eq(other)
            && match (&self.payload, &other.payload) {
                (None, None) => true,
                (Some(a), Some(b)) => a.eq_payload(b.as_ref()),
                _ => false,
            }
    }
}

impl fmt::Debug for MobileNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MobileNode")
            .field("node_id", &self.node_id)
            .field("network_address", &self.network_address)
            .field("pos", &self.pos)
            .field("last_update", &self.last_update)
            .field("routing", &self.routing)
            .field("agent", &self.agent)
            .field("agent_breakdown", &self.agent_breakdown)
            .field("payload", &self.payload)
            .finish()
    }
}

/// Value snapshot of the whole network after applying events
/// `0..=event_index` (`-1` is the initial state).
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    event_index: i64,
    nodes: BTreeMap<NodeId, MobileNode>,
    network_routing: CounterSet,
    network_agent: CounterSet,
    network_agent_breakdown: AgentBreakdown,
}

impl NetworkState {
    /// Early-positioned state: one unsettled node per pre-scanned node id.
    ///
    /// A node the extension fails to create falls back to a plain node;
    /// the returned strings describe each fallback.
    pub fn initial(prescan: &PreScan, ext: &dyn ProtocolExtension) -> (Self, Vec<String>) {
        let mut diagnostics = Vec::new();
        let nodes = prescan
            .nodes
            .iter()
            .map(|(&id, first)| {
                let node = match ext.create_node(id, None, first.x, first.y, None) {
                    Ok(n) if n.node_id == id && !n.settled() => {
                        // extensions may not choose core fields
                        let mut n = n;
                        n.pos = Position::new(first.x, first.y, 0.0);
                        n
                    }
                    Ok(_) => {
                        diagnostics.push(format!(
                            "extension `{}` returned an inconsistent node {id}; using a plain node",
                            ext.name()
                        ));
                        MobileNode::new(id, None, first.x, first.y)
                    }
                    Err(e) => {
                        diagnostics.push(format!("extension `{}` failed to create node {id}: {e}", ext.name()));
                        MobileNode::new(id, None, first.x, first.y)
                    }
                };
                (id, node)
            })
            .collect();
        (
            Self {
                event_index: -1,
                nodes,
                network_routing: CounterSet::default(),
                network_agent: CounterSet::default(),
                network_agent_breakdown: AgentBreakdown::default(),
            },
            diagnostics,
        )
    }

    pub fn event_index(&self) -> i64 {
        self.event_index
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = &MobileNode> {
        self.nodes.values()
    }

    pub fn node(&self, id: NodeId) -> Option<&MobileNode> {
        self.nodes.get(&id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn network_routing(&self) -> &CounterSet {
        &self.network_routing
    }

    pub fn network_agent(&self) -> &CounterSet {
        &self.network_agent
    }

    pub fn network_agent_breakdown(&self) -> &AgentBreakdown {
        &self.network_agent_breakdown
    }

    /// Deep copy in which every payload is duplicated by the extension.
    pub fn deep_copy(&self, ext: &dyn ProtocolExtension) -> Self {
        Self {
            event_index: self.event_index,
            nodes: self.nodes.iter().map(|(&id, n)| (id, ext.copy_node(n))).collect(),
            network_routing: self.network_routing,
            network_agent: self.network_agent,
            network_agent_breakdown: self.network_agent_breakdown,
        }
    }

    /// Applies the next event. Only the event's node changes, plus the
    /// network totals.
    pub fn apply(&mut self, ev: &TraceEvent, ext: &dyn ProtocolExtension) -> Result<(), StateError> {
        if ev.event_index as i64 != self.event_index + 1 {
            return Err(StateError::NonSequential {
                current: self.event_index,
                got: ev.event_index,
            });
        }
        let node = self
            .nodes
            .get_mut(&ev.node_id)
            .ok_or(StateError::UnknownNode(ev.node_id))?;

        if let Some(p) = ev.pos {
            node.pos = p;
        }
        node.last_update = Some(ev.event_index);
        if node.network_address.is_none() {
            if let Some(src) = ev.ip_src.filter(|a| a.node >= 0 && a.node as i64 == ev.node_id as i64) {
                node.network_address = Some(src);
            }
        }

        let bytes = ev.pkt_size.unwrap_or(0);
        match ev.layer {
            Some(Layer::Rtr) => {
                node.routing.add(ev.action, bytes);
                self.network_routing.add(ev.action, bytes);
            }
            Some(Layer::Agt) => {
                let class = classify_agent_packet(ev.pkt_type.as_deref().unwrap_or(""));
                node.agent.add(ev.action, bytes);
                node.agent_breakdown.add(class, bytes);
                self.network_agent.add(ev.action, bytes);
                self.network_agent_breakdown.add(class, bytes);
            }
            _ => {}
        }

        ext.update_node(node, ev.proto.as_ref(), ev.event_index);
        self.event_index += 1;
        Ok(())
    }

    /// Sum of the per-node counters, for checking network totals.
    pub fn summed_counters(&self) -> (CounterSet, CounterSet, AgentBreakdown) {
        let mut acc = (CounterSet::default(), CounterSet::default(), AgentBreakdown::default());
        for n in self.nodes.values() {
            acc.0 += n.routing;
            acc.1 += n.agent;
            acc.2 += n.agent_breakdown;
        }
        acc
    }

    /// The node-properties panel.
    pub fn node_summary(&self, id: NodeId) -> Result<NodeSummary, StateError> {
        let n = self.nodes.get(&id).ok_or(StateError::NoSuchNode(id))?;
        let mut panel = Panel::new(format!("Node {id}"));
        panel.push(
            "Address",
            n.network_address.map(|a| a.to_string()).unwrap_or_else(|| "unknown".into()),
        );
        panel.push("Location", format!("({:.2}, {:.2}, {:.2})", n.pos.x, n.pos.y, n.pos.z));
        for (layer, c) in [("Routing", &n.routing), ("Agent", &n.agent)] {
            for a in Action::ALL {
                panel.push(format!("{layer} {}", a.name()), c.get(a));
            }
        }
        panel.push("Agent CBR", n.agent_breakdown.cbr);
        panel.push("Agent TCP/ACK", n.agent_breakdown.tcp_ack);
        panel.push(
            "Last update",
            n.last_update.map(|k| k.to_string()).unwrap_or_else(|| "never".into()),
        );
        Ok(NodeSummary {
            node_id: id,
            grayed: !n.settled(),
            panel,
        })
    }

    /// The network-statistics panel.
    pub fn network_summary(&self) -> Panel {
        let mut panel = Panel::new("Network");
        for (layer, c) in [("Routing", &self.network_routing), ("Agent", &self.network_agent)] {
            for a in Action::ALL {
                panel.push(format!("{layer} {}", a.name()), c.get(a));
            }
        }
        panel.push("Agent CBR", self.network_agent_breakdown.cbr);
        panel.push("Agent TCP/ACK", self.network_agent_breakdown.tcp_ack);
        panel.push("Agent other", self.network_agent_breakdown.other);
        panel
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NodeSummary {
    pub node_id: NodeId,
    pub grayed: bool,
    pub panel: Panel,
}

/// Properties of the transmission described by one event.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransmissionProps {
    pub event_index: u64,
    pub direction: Action,
    pub layer: Option<String>,
    pub flow_id: Option<i64>,
    pub ip_src: Option<Address>,
    pub ip_dst: Option<Address>,
    pub current_hop: Option<i64>,
    pub next_hop: Option<i64>,
    pub broadcast: bool,
    pub pkt_size: Option<u64>,
    pub pkt_type: Option<String>,
    pub glyph: GlyphKind,
}

pub fn transmission_properties(ev: &TraceEvent) -> TransmissionProps {
    TransmissionProps {
        event_index: ev.event_index,
        direction: ev.action,
        layer: ev.layer.as_ref().map(|l| l.to_string()),
        flow_id: ev.flow_id,
        ip_src: ev.ip_src,
        ip_dst: ev.ip_dst,
        current_hop: ev.hop_src,
        next_hop: ev.hop_dst,
        broadcast: ev.is_broadcast(),
        pkt_size: ev.pkt_size,
        pkt_type: ev.pkt_type.clone(),
        glyph: event_glyph_kind(ev),
    }
}

impl TransmissionProps {
    pub fn panel(&self) -> Panel {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        let mut p = Panel::new("Transmission");
        p.push("Direction", self.direction.name());
        p.push("Layer", opt(self.layer.clone()));
        p.push("Flow id", opt(self.flow_id.map(|v| v.to_string())));
        p.push("IP source", opt(self.ip_src.map(|a| a.to_string())));
        p.push("IP destination", opt(self.ip_dst.map(|a| a.to_string())));
        p.push("Current hop", opt(self.current_hop.map(|v| v.to_string())));
        let next = if self.broadcast {
            "broadcast".to_string()
        } else {
            opt(self.next_hop.map(|v| v.to_string()))
        };
        p.push("Next hop", next);
        p.push("Packet size", opt(self.pkt_size.map(|v| v.to_string())));
        p.push("Packet type", opt(self.pkt_type.clone()));
        p
    }
}
