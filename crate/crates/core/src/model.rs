//! Vocabulary shared by every stage: actions, layers, addresses and the
//! parsed form of one trace line.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub type NodeId = u32;

/// What happened to the packet on the traced node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Send,
    Receive,
    Forward,
    Drop,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Send, Action::Receive, Action::Forward, Action::Drop];

    pub fn from_token(tok: &str) -> Option<Action> {
        match tok {
            "s" => Some(Action::Send),
            "r" => Some(Action::Receive),
            "f" => Some(Action::Forward),
            "d" => Some(Action::Drop),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Action::Send => 's',
            Action::Receive => 'r',
            Action::Forward => 'f',
            Action::Drop => 'd',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Send => "send",
            Action::Receive => "receive",
            Action::Forward => "forward",
            Action::Drop => "drop",
        }
    }
}

/// Trace level tag (`-Nl`). Unknown tags are kept verbatim.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layer {
    Agt,
    Rtr,
    Mac,
    Ifq,
    Other(String),
}

impl Layer {
    pub fn parse(tag: &str) -> Layer {
        match tag {
            "AGT" => Layer::Agt,
            "RTR" => Layer::Rtr,
            "MAC" => Layer::Mac,
            "IFQ" => Layer::Ifq,
            other => Layer::Other(other.to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Layer::Agt => "AGT",
            Layer::Rtr => "RTR",
            Layer::Mac => "MAC",
            Layer::Ifq => "IFQ",
            Layer::Other(s) => s,
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An `a.b` IP-level address as written in `-Is` / `-Id`.
///
/// Node parts below zero (`-1`, `-2`) denote broadcast or an undetermined
/// destination.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Address {
    pub node: i32,
    pub port: i32,
}

impl Address {
    pub fn is_broadcast(&self) -> bool {
        self.node < 0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.node, self.port)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid address `{0}`")]
pub struct AddressParseError(pub String);

impl FromStr for Address {
    type Err = AddressParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || AddressParseError(s.to_string());
        let (node, port) = s.split_once('.').ok_or_else(err)?;
        let node: i32 = node.parse().map_err(|_| err())?;
        let port: i32 = port.parse().map_err(|_| err())?;
        if node < -2 || port < 0 {
            return Err(err());
        }
        Ok(Address { node, port })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Planar distance; altitude is ignored.
    pub fn distance_2d(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// The four raw MAC tokens (`-Ma -Md -Ms -Mt`), never decoded.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacFields {
    pub duration: Option<String>,
    pub dst: Option<String>,
    pub src: Option<String>,
    pub ether_type: Option<String>,
}

/// The protocol tail of a line: `-P <name>` followed by `-P<suffix> <value>`
/// pairs. Keys keep their `P` prefix (`Pt`, `Prt`, ...).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolProps {
    pub name: String,
    pub entries: Vec<(String, String)>,
}

impl ProtocolProps {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn is(&self, name: &str) -> bool {
        self.name.eq_ignore_ascii_case(name)
    }
}

/// One parsed event line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Ordinal over event lines only.
    pub event_index: u64,
    /// Ordinal over all lines of the file.
    pub line_no: u64,
    pub action: Action,
    pub time: f64,
    pub hop_src: Option<i64>,
    /// Negative values mean broadcast or an undetermined next hop.
    pub hop_dst: Option<i64>,
    pub node_id: NodeId,
    pub pos: Option<Position>,
    pub energy: Option<f64>,
    pub layer: Option<Layer>,
    pub drop_reason: Option<String>,
    pub mac: MacFields,
    pub ip_src: Option<Address>,
    pub ip_dst: Option<Address>,
    pub pkt_type: Option<String>,
    pub pkt_size: Option<u64>,
    pub flow_id: Option<i64>,
    pub unique_id: Option<i64>,
    pub hop_count: Option<i64>,
    /// Unrecognized tags outside the protocol tail, keyed without the dash.
    pub extras: Vec<(String, String)>,
    pub proto: Option<ProtocolProps>,
}

impl TraceEvent {
    /// A bare event with only the mandatory fields set.
    pub fn new(event_index: u64, line_no: u64, action: Action, time: f64, node_id: NodeId) -> Self {
        Self {
            event_index,
            line_no,
            action,
            time,
            hop_src: None,
            hop_dst: None,
            node_id,
            pos: None,
            energy: None,
            layer: None,
            drop_reason: None,
            mac: MacFields::default(),
            ip_src: None,
            ip_dst: None,
            pkt_type: None,
            pkt_size: None,
            flow_id: None,
            unique_id: None,
            hop_count: None,
            extras: Vec::new(),
            proto: None,
        }
    }

    pub fn is_broadcast(&self) -> bool {
        self.hop_dst.is_some_and(|h| h < 0) || self.ip_dst.is_some_and(|a| a.is_broadcast())
    }

    pub fn agent_class(&self) -> AgentClass {
        classify_agent_packet(self.pkt_type.as_deref().unwrap_or(""))
    }

    /// Renders the event back to trace syntax. Absent fields are omitted,
    /// so the text reparses to an equal field set (whitespace and float
    /// formatting may differ from the original line).
    pub fn to_line(&self) -> String {
        use fmt::Write;
        let mut s = String::with_capacity(200);
        let _ = write!(s, "{} -t {}", self.action.letter(), self.time);
        let tag = |s: &mut String, t: &str, v: Option<String>| {
            if let Some(v) = v {
                let _ = write!(s, " -{t} {v}");
            }
        };
        tag(&mut s, "Hs", self.hop_src.map(|v| v.to_string()));
        tag(&mut s, "Hd", self.hop_dst.map(|v| v.to_string()));
        tag(&mut s, "Ni", Some(self.node_id.to_string()));
        if let Some(p) = self.pos {
            tag(&mut s, "Nx", Some(p.x.to_string()));
            tag(&mut s, "Ny", Some(p.y.to_string()));
            tag(&mut s, "Nz", Some(p.z.to_string()));
        }
        tag(&mut s, "Ne", self.energy.map(|v| v.to_string()));
        tag(&mut s, "Nl", self.layer.as_ref().map(|l| l.to_string()));
        tag(&mut s, "Nw", self.drop_reason.clone());
        tag(&mut s, "Ma", self.mac.duration.clone());
        tag(&mut s, "Md", self.mac.dst.clone());
        tag(&mut s, "Ms", self.mac.src.clone());
        tag(&mut s, "Mt", self.mac.ether_type.clone());
        tag(&mut s, "Is", self.ip_src.map(|a| a.to_string()));
        tag(&mut s, "Id", self.ip_dst.map(|a| a.to_string()));
        tag(&mut s, "It", self.pkt_type.clone());
        tag(&mut s, "Il", self.pkt_size.map(|v| v.to_string()));
        tag(&mut s, "If", self.flow_id.map(|v| v.to_string()));
        tag(&mut s, "Ii", self.unique_id.map(|v| v.to_string()));
        tag(&mut s, "Ih", self.hop_count.map(|v| v.to_string()));
        for (k, v) in &self.extras {
            tag(&mut s, k, Some(v.clone()));
        }
        if let Some(p) = &self.proto {
            tag(&mut s, "P", Some(p.name.clone()));
            for (k, v) in &p.entries {
                tag(&mut s, k, Some(v.clone()));
            }
        }
        s
    }
}

/// Agent-layer traffic split used in the network statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentClass {
    Cbr,
    TcpAck,
    Other,
}

pub fn classify_agent_packet(pkt_type: &str) -> AgentClass {
    if pkt_type.eq_ignore_ascii_case("cbr") {
        AgentClass::Cbr
    } else if pkt_type.eq_ignore_ascii_case("tcp") || pkt_type.eq_ignore_ascii_case("ack") {
        AgentClass::TcpAck
    } else {
        AgentClass::Other
    }
}
