//! AODV: packet fields from the standard tail plus the per-node routing
//! table carried by the `-Prt (dst,seq,hops,next)...` tag.

use std::any::Any;
use std::fmt;

use serde::Serialize;

use crate::model::{Address, NodeId, ProtocolProps};
use crate::state::MobileNode;

use super::{ExtensionError, NodePayload, ProtocolExtension, VisualEventKind, Visualizer};

/// One routing table record, in trace tuple order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct AodvRouteEntry {
    pub destination: NodeId,
    pub sequence_number: u64,
    /// Printed verbatim; 255 is what the simulator writes for "unknown".
    pub hop_count: u32,
    pub next_hop: NodeId,
}

impl fmt::Display for AodvRouteEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "dest {}, seq {}, {} hops, next hop {}",
            self.destination, self.sequence_number, self.hop_count, self.next_hop
        )
    }
}

/// Fields of an AODV control packet, kept as raw text.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AodvPacketView {
    pub type_label: Option<String>,
    pub type_code: Option<String>,
    pub hop_count: Option<String>,
    pub broadcast_id: Option<String>,
    pub destination: Option<String>,
    pub destination_seq: Option<String>,
    pub source: Option<String>,
    pub source_seq: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AodvProps {
    pub packet: AodvPacketView,
    /// Present only when the line carries `-Prt`.
    pub table: Option<Vec<AodvRouteEntry>>,
    pub diagnostics: Vec<String>,
}

pub fn parse_props(props: &ProtocolProps) -> AodvProps {
    let get = |k: &str| props.get(k).map(str::to_string);
    let packet = AodvPacketView {
        type_label: get("Pc"),
        type_code: get("Pt"),
        hop_count: get("Ph"),
        broadcast_id: get("Pb"),
        destination: get("Pd"),
        destination_seq: get("Pds"),
        source: get("Ps"),
        source_seq: get("Pss"),
    };
    let (table, diagnostics) = match props.get("Prt") {
        Some(raw) => {
            let (t, d) = parse_route_table(raw);
            (Some(t), d)
        }
        None => (None, Vec::new()),
    };
    AodvProps {
        packet,
        table,
        diagnostics,
    }
}

/// Parses `(a,b,c,d)(a,b,c,d)...`. Malformed tuples are skipped and
/// reported; for repeated destinations the last tuple wins.
pub fn parse_route_table(raw: &str) -> (Vec<AodvRouteEntry>, Vec<String>) {
    let mut entries: Vec<AodvRouteEntry> = Vec::new();
    let mut diags = Vec::new();
    let mut rest = raw;
    while !rest.is_empty() {
        let Some(open) = rest.find('(') else {
            diags.push(format!("trailing text `{rest}`"));
            break;
        };
        if open > 0 {
            diags.push(format!("unexpected text `{}`", &rest[..open]));
        }
        let Some(close) = rest[open..].find(')').map(|c| c + open) else {
            diags.push(format!("unterminated tuple `{}`", &rest[open..]));
            break;
        };
        let inner = &rest[open + 1..close];
        match parse_tuple(inner) {
            Some(e) => match entries.iter_mut().find(|x| x.destination == e.destination) {
                Some(existing) => *existing = e,
                None => entries.push(e),
            },
            None => diags.push(format!("malformed tuple `({inner})`")),
        }
        rest = &rest[close + 1..];
    }
    (entries, diags)
}

fn parse_tuple(inner: &str) -> Option<AodvRouteEntry> {
    let mut it = inner.split(',').map(str::trim);
    let e = AodvRouteEntry {
        destination: it.next()?.parse().ok()?,
        sequence_number: it.next()?.parse().ok()?,
        hop_count: it.next()?.parse().ok()?,
        next_hop: it.next()?.parse().ok()?,
    };
    it.next().is_none().then_some(e)
}

/// AODV payload of a node.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AodvNode {
    pub routing_table: Vec<AodvRouteEntry>,
}

impl NodePayload for AodvNode {
    fn clone_payload(&self) -> Box<dyn NodePayload> {
        Box::new(self.clone())
    }

    fn eq_payload(&self, other: &dyn NodePayload) -> bool {
        other.as_any().downcast_ref::<Self>() == Some(self)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AodvExtension;

impl ProtocolExtension for AodvExtension {
    fn name(&self) -> &str {
        "aodv"
    }

    fn create_node(
        &self,
        node_id: NodeId,
        address: Option<Address>,
        x: f64,
        y: f64,
        _props: Option<&ProtocolProps>,
    ) -> Result<MobileNode, ExtensionError> {
        Ok(MobileNode::new(node_id, address, x, y).with_payload(Box::new(AodvNode::default())))
    }

    fn update_node(&self, node: &mut MobileNode, props: Option<&ProtocolProps>, _event_index: u64) {
        let Some(props) = props.filter(|p| p.is("aodv")) else {
            return;
        };
        let Some(table) = props.get("Prt").map(|raw| parse_route_table(raw).0) else {
            return;
        };
        // The trace repeats the whole table, so it replaces what we had.
        match node.payload_as_mut::<AodvNode>() {
            Some(p) => p.routing_table = table,
            None => node.set_payload(Some(Box::new(AodvNode { routing_table: table }))),
        }
    }

    fn copy_node(&self, node: &MobileNode) -> MobileNode {
        node.copy_with(|p| match p.as_any().downcast_ref::<AodvNode>() {
            Some(a) => Box::new(AodvNode {
                routing_table: a.routing_table.clone(),
            }),
            None => p.clone_payload(),
        })
    }

    fn notify_event(&self, vis: &mut Visualizer<'_>) {
        let ve = *vis.visual_event();
        let focus = vis.focus_node();
        vis.panel_mut().title = "AODV".into();

        let packet = vis
            .current_event()
            .filter(|ev| ve.kind != VisualEventKind::NodeClicked || Some(ev.node_id) == focus)
            .and_then(|ev| ev.proto.as_ref())
            .filter(|p| p.is("aodv"))
            .map(|p| parse_props(p).packet);
        if let Some(pkt) = packet {
            let panel = vis.panel_mut();
            for (label, v) in [
                ("Packet type", &pkt.type_label),
                ("Type code", &pkt.type_code),
                ("Hop count", &pkt.hop_count),
                ("Broadcast id", &pkt.broadcast_id),
                ("Destination", &pkt.destination),
                ("Destination seq", &pkt.destination_seq),
                ("Source", &pkt.source),
                ("Source seq", &pkt.source_seq),
            ] {
                if let Some(v) = v {
                    panel.push(label, v);
                }
            }
        }

        let table: Vec<AodvRouteEntry> = focus
            .and_then(|id| vis.node(id))
            .and_then(|n| n.payload_as::<AodvNode>())
            .map(|a| a.routing_table.clone())
            .unwrap_or_default();
        for e in table {
            vis.panel_mut().push("Route", e);
        }
    }
}
