//! Line parser for the flag-tagged wireless trace format.
//!
//! A line is an action letter followed by whitespace-separated
//! `-<Tag> <value>` pairs. `-P <name>` opens the protocol tail; every later
//! `-P<suffix> <value>` pair belongs to it. Values never contain whitespace.

use std::fmt;

use crate::model::{Action, Address, Layer, ProtocolProps, TraceEvent};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SkipReason {
    Blank,
    Comment,
    /// Pre-newtrace syntax, e.g. `M` movement lines or `s 1.0 _3_ ...`.
    OldFormat,
    InvalidUtf8,
    UnknownLeader(String),
    /// Starts like an event but a mandatory field is missing or broken.
    Malformed(String),
}

impl SkipReason {
    /// Whether the line looked like an event but could not be parsed.
    pub fn is_event_error(&self) -> bool {
        matches!(self, SkipReason::Malformed(_))
    }
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::Blank => f.write_str("blank"),
            SkipReason::Comment => f.write_str("comment"),
            SkipReason::OldFormat => f.write_str("old-format"),
            SkipReason::InvalidUtf8 => f.write_str("invalid utf-8"),
            SkipReason::UnknownLeader(t) => write!(f, "unrecognized leading token `{t}`"),
            SkipReason::Malformed(m) => write!(f, "malformed event: {m}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ParsedLine {
    Event(TraceEvent),
    Skipped(SkipReason),
}

impl ParsedLine {
    pub fn event(self) -> Option<TraceEvent> {
        match self {
            ParsedLine::Event(e) => Some(e),
            ParsedLine::Skipped(_) => None,
        }
    }
}

/// Parses raw bytes; invalid UTF-8 is skipped rather than rejected.
pub fn parse_line_bytes(raw: &[u8], line_no: u64, next_event_index: u64) -> ParsedLine {
    match std::str::from_utf8(raw) {
        Ok(s) => parse_line(s, line_no, next_event_index),
        Err(_) => ParsedLine::Skipped(SkipReason::InvalidUtf8),
    }
}

pub fn parse_line(raw: &str, line_no: u64, next_event_index: u64) -> ParsedLine {
    let raw = raw.strip_suffix('\n').unwrap_or(raw);
    let raw = raw.strip_suffix('\r').unwrap_or(raw);
    let mut tokens = raw.split_ascii_whitespace();
    let Some(lead) = tokens.next() else {
        return ParsedLine::Skipped(SkipReason::Blank);
    };
    if lead.starts_with('#') {
        return ParsedLine::Skipped(SkipReason::Comment);
    }
    let Some(action) = Action::from_token(lead) else {
        return ParsedLine::Skipped(if lead == "M" {
            SkipReason::OldFormat
        } else {
            SkipReason::UnknownLeader(lead.chars().take(16).collect())
        });
    };
    match parse_tags(action, tokens, line_no, next_event_index) {
        Ok(ev) => ParsedLine::Event(ev),
        Err(reason) => ParsedLine::Skipped(reason),
    }
}

fn malformed(msg: impl Into<String>) -> SkipReason {
    SkipReason::Malformed(msg.into())
}

fn parse_tags<'a>(
    action: Action,
    mut tokens: impl Iterator<Item = &'a str>,
    line_no: u64,
    event_index: u64,
) -> Result<TraceEvent, SkipReason> {
    let mut ev = TraceEvent::new(event_index, line_no, action, f64::NAN, 0);
    let mut time = None;
    let mut node = None;
    let mut xy = (None, None);
    let mut z = None;
    let mut first = true;

    while let Some(tag_tok) = tokens.next() {
        let Some(tag) = tag_tok.strip_prefix('-').filter(|t| !t.is_empty()) else {
            // Old wireless lines put the time right after the action letter.
            if first && tag_tok.parse::<f64>().is_ok() {
                return Err(SkipReason::OldFormat);
            }
            return Err(malformed(format!("expected a tag, found `{}`", clip(tag_tok))));
        };
        first = false;
        let Some(value) = tokens.next() else {
            return Err(malformed(format!("tag -{tag} has no value")));
        };

        if ev.proto.is_some() && tag.starts_with('P') && tag != "P" {
            ev.proto.as_mut().unwrap().entries.push((tag.to_string(), value.to_string()));
            continue;
        }

        // Optional fields that fail to parse are kept verbatim in `extras`.
        let mut keep = false;
        match tag {
            "t" => match value.parse::<f64>() {
                Ok(t) if t.is_finite() && t >= 0.0 => time = Some(t),
                _ => return Err(malformed(format!("bad time `{}`", clip(value)))),
            },
            "Ni" => match value.parse::<u32>() {
                Ok(n) => node = Some(n),
                Err(_) => return Err(malformed(format!("bad node id `{}`", clip(value)))),
            },
            "Hs" => keep = set(&mut ev.hop_src, value.parse().ok()),
            "Hd" => keep = set(&mut ev.hop_dst, value.parse().ok()),
            "Nx" => keep = set(&mut xy.0, finite(value)),
            "Ny" => keep = set(&mut xy.1, finite(value)),
            "Nz" => keep = set(&mut z, finite(value)),
            "Ne" => keep = set(&mut ev.energy, finite(value)),
            "Nl" => ev.layer = Some(Layer::parse(value)),
            "Nw" => ev.drop_reason = (value != "---").then(|| value.to_string()),
            "Ma" => ev.mac.duration = Some(value.to_string()),
            "Md" => ev.mac.dst = Some(value.to_string()),
            "Ms" => ev.mac.src = Some(value.to_string()),
            "Mt" => ev.mac.ether_type = Some(value.to_string()),
            "Is" => keep = set(&mut ev.ip_src, value.parse::<Address>().ok()),
            "Id" => keep = set(&mut ev.ip_dst, value.parse::<Address>().ok()),
            "It" => ev.pkt_type = Some(value.to_string()),
            "Il" => keep = set(&mut ev.pkt_size, value.parse().ok()),
            "If" => keep = set(&mut ev.flow_id, value.parse().ok()),
            "Ii" => keep = set(&mut ev.unique_id, value.parse().ok()),
            "Ih" => keep = set(&mut ev.hop_count, value.parse().ok()),
            "P" if ev.proto.is_none() => {
                ev.proto = Some(ProtocolProps {
                    name: value.to_string(),
                    entries: Vec::new(),
                });
            }
            _ => keep = true,
        }
        if keep {
            ev.extras.push((tag.to_string(), value.to_string()));
        }
    }

    ev.time = time.ok_or_else(|| malformed("missing -t"))?;
    ev.node_id = node.ok_or_else(|| malformed("missing -Ni"))?;
    match xy {
        (Some(x), Some(y)) => ev.pos = Some(crate::model::Position::new(x, y, z.unwrap_or(0.0))),
        (x, y) => {
            // Half a position is not a position; keep the raw halves.
            for (tag, v) in [("Nx", x), ("Ny", y), ("Nz", z)] {
                if let Some(v) = v {
                    ev.extras.push((tag.to_string(), v.to_string()));
                }
            }
        }
    }
    Ok(ev)
}

/// Stores `parsed` and reports whether the raw value must be kept instead.
fn set<T>(slot: &mut Option<T>, parsed: Option<T>) -> bool {
    match parsed {
        Some(v) => {
            *slot = Some(v);
            false
        }
        None => true,
    }
}

fn finite(v: &str) -> Option<f64> {
    v.parse::<f64>().ok().filter(|f| f.is_finite())
}

fn clip(s: &str) -> String {
    s.chars().take(24).collect()
}

/// Name of the routing protocol: the first `-P` name on a routing-layer
/// event, lowercased.
pub fn detect_protocol<'a>(events: impl IntoIterator<Item = &'a TraceEvent>) -> Option<String> {
    events
        .into_iter()
        .filter(|e| e.layer == Some(Layer::Rtr))
        .find_map(|e| e.proto.as_ref().map(|p| p.name.to_ascii_lowercase()))
}
