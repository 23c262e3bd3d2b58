//! Synthetic trace writer for NS-2 "new wireless trace" files.
//!
//! This crate deliberately shares no code with the parser it is used to
//! check. It owns its own record type, formats lines with plain `write!`
//! calls and keeps every value it writes, so tests can compare parsed
//! results against the writer's inputs field by field.
//!
//! The generated workload mirrors a small ad-hoc network: nodes follow a
//! random-waypoint walk on a rectangular terrain, exchange CBR and TCP agent
//! traffic, and emit AODV control packets whose protocol tail carries the
//! sender's routing table in a `-Prt (dst,seq,hops,next)...` tag.

use std::fmt::Write as _;
use std::io::{self, Write};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// One trace line as the writer produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub action: char,
    pub time: f64,
    pub hop_src: i64,
    pub hop_dst: i64,
    pub node: u32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub energy: f64,
    pub layer: String,
    pub drop_reason: Option<String>,
    pub mac: [String; 4],
    pub ip_src: (i64, i64),
    pub ip_dst: (i64, i64),
    pub pkt_type: String,
    pub size: u64,
    pub flow: i64,
    pub uid: i64,
    pub hops: i64,
    /// Tags written after the fixed fields and before the protocol tail.
    pub extras: Vec<(String, String)>,
    /// `-P <name>` followed by `-P<suffix> <value>` pairs. Keys carry the
    /// `P` prefix, e.g. `("Pt", "0x2")`.
    pub tail: Option<(String, Vec<(String, String)>)>,
}

/// Round a value the way the writer prints it, so recorded inputs equal
/// what a reader recovers from the text.
fn fixed(v: f64, decimals: usize) -> f64 {
    format!("{v:.decimals$}").parse().expect("formatted float parses")
}

impl Record {
    /// Formats the record as one trace line without terminator.
    pub fn to_line(&self) -> String {
        let mut s = String::with_capacity(256);
        write!(
            s,
            "{} -t {:.9} -Hs {} -Hd {} -Ni {} -Nx {:.2} -Ny {:.2} -Nz {:.2} -Ne {:.6} -Nl {} -Nw {}",
            self.action,
            self.time,
            self.hop_src,
            self.hop_dst,
            self.node,
            self.x,
            self.y,
            self.z,
            self.energy,
            self.layer,
            self.drop_reason.as_deref().unwrap_or("---"),
        )
        .unwrap();
        write!(
            s,
            " -Ma {} -Md {} -Ms {} -Mt {} -Is {}.{} -Id {}.{} -It {} -Il {} -If {} -Ii {} -Ih {}",
            self.mac[0],
            self.mac[1],
            self.mac[2],
            self.mac[3],
            self.ip_src.0,
            self.ip_src.1,
            self.ip_dst.0,
            self.ip_dst.1,
            self.pkt_type,
            self.size,
            self.flow,
            self.uid,
            self.hops,
        )
        .unwrap();
        for (k, v) in &self.extras {
            write!(s, " -{k} {v}").unwrap();
        }
        if let Some((name, entries)) = &self.tail {
            write!(s, " -P {name}").unwrap();
            for (k, v) in entries {
                write!(s, " -{k} {v}").unwrap();
            }
        }
        s
    }

    /// The `(destination, seq, hops, next hop)` tuples this record's `-Prt`
    /// tag carries, if any.
    pub fn routing_table(&self) -> Option<Vec<[u64; 4]>> {
        let (_, entries) = self.tail.as_ref()?;
        let raw = entries.iter().find(|(k, _)| k == "Prt").map(|(_, v)| v)?;
        Some(
            raw.split(')')
                .filter(|t| !t.is_empty())
                .map(|t| {
                    let mut it = t.trim_start_matches('(').split(',').map(|n| n.parse().unwrap());
                    [it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
                })
                .collect(),
        )
    }
}

/// Workload knobs.
#[derive(Clone, Debug)]
pub struct GenConfig {
    pub seed: u64,
    pub nodes: u32,
    pub terrain: (f64, f64),
    /// Number of records to emit; `None` means unbounded.
    pub events: Option<usize>,
    /// Name written after `-P` on routing-layer lines, e.g. `aodv` or `AODV`.
    pub routing_protocol: String,
    /// Emit `-Prt` routing tables on routing-layer lines.
    pub routing_tables: bool,
    /// Largest routing table a node keeps.
    pub max_table: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            nodes: 40,
            terrain: (1000.0, 1000.0),
            events: Some(10_000),
            routing_protocol: "aodv".into(),
            routing_tables: true,
            max_table: 8,
        }
    }
}

#[derive(Clone, Debug)]
struct Walker {
    pos: (f64, f64),
    target: (f64, f64),
    speed: f64,
    table: Vec<[u64; 4]>,
    seq: u64,
}

/// Iterator over generated records.
pub struct Generator {
    cfg: GenConfig,
    rng: StdRng,
    walkers: Vec<Walker>,
    time: f64,
    uid: i64,
    emitted: usize,
    bcast_id: u64,
}

const AODV_TYPES: [(&str, &str); 4] = [
    ("0x2", "REQUEST"),
    ("0x4", "REPLY"),
    ("0x8", "ERROR"),
    ("0x10", "HELLO"),
];

impl Generator {
    pub fn new(cfg: GenConfig) -> Self {
        let mut rng = StdRng::seed_from_u64(cfg.seed);
        let walkers = (0..cfg.nodes)
            .map(|_| Walker {
                pos: (
                    rng.gen_range(0.0..cfg.terrain.0),
                    rng.gen_range(0.0..cfg.terrain.1),
                ),
                target: (
                    rng.gen_range(0.0..cfg.terrain.0),
                    rng.gen_range(0.0..cfg.terrain.1),
                ),
                speed: rng.gen_range(1.0..20.0),
                table: Vec::new(),
                seq: rng.gen_range(1..10),
            })
            .collect();
        Self {
            cfg,
            rng,
            walkers,
            time: 0.0,
            uid: 0,
            emitted: 0,
            bcast_id: 0,
        }
    }

    fn step_mobility(&mut self, dt: f64) {
        let (w, h) = self.cfg.terrain;
        for walker in &mut self.walkers {
            let dx = walker.target.0 - walker.pos.0;
            let dy = walker.target.1 - walker.pos.1;
            let dist = (dx * dx + dy * dy).sqrt();
            let travel = walker.speed * dt;
            if dist <= travel {
                walker.pos = walker.target;
                walker.target = (self.rng.gen_range(0.0..w), self.rng.gen_range(0.0..h));
                walker.speed = self.rng.gen_range(1.0..20.0);
            } else {
                walker.pos.0 += dx / dist * travel;
                walker.pos.1 += dy / dist * travel;
            }
        }
    }

    fn other_node(&mut self, node: u32) -> u32 {
        if self.cfg.nodes < 2 {
            return node;
        }
        loop {
            let n = self.rng.gen_range(0..self.cfg.nodes);
            if n != node {
                return n;
            }
        }
    }

    fn mutate_table(&mut self, node: u32) {
        let max = self.cfg.max_table;
        let dst = self.other_node(node) as u64;
        let next = self.other_node(node) as u64;
        let seq = self.rng.gen_range(0..64);
        let hops = if self.rng.gen_bool(0.1) {
            255
        } else {
            self.rng.gen_range(1..8)
        };
        let table = &mut self.walkers[node as usize].table;
        if let Some(e) = table.iter_mut().find(|e| e[0] == dst) {
            *e = [dst, seq, hops, next];
        } else if table.len() < max {
            table.push([dst, seq, hops, next]);
        } else if !table.is_empty() {
            table.remove(0);
        }
    }

    fn base(&mut self, action: char, node: u32, layer: &str) -> Record {
        let w = &self.walkers[node as usize];
        let (x, y) = (fixed(w.pos.0, 2), fixed(w.pos.1, 2));
        let uid = self.uid;
        self.uid += 1;
        Record {
            action,
            time: fixed(self.time, 9),
            hop_src: node as i64,
            hop_dst: -2,
            node,
            x,
            y,
            z: 0.0,
            energy: -1.0,
            layer: layer.to_string(),
            drop_reason: None,
            mac: ["0".into(), "0".into(), "0".into(), "0".into()],
            ip_src: (node as i64, 255),
            ip_dst: (-1, 255),
            pkt_type: String::new(),
            size: 0,
            flow: 0,
            uid,
            hops: 0,
            extras: vec![("Iv".into(), "32".into())],
            tail: None,
        }
    }

    fn routing_event(&mut self, node: u32) -> Record {
        let action = ['s', 'r', 'f', 'd'][pick(&mut self.rng, &[40, 40, 15, 5])];
        self.mutate_table(node);
        let mut rec = self.base(action, node, "RTR");
        let peer = self.other_node(node);
        let (code, label) = AODV_TYPES[pick(&mut self.rng, &[45, 30, 10, 15])];
        rec.pkt_type = "AODV".into();
        rec.size = match label {
            "REQUEST" => 48,
            "REPLY" => 44,
            "ERROR" => 32,
            _ => 44,
        };
        match action {
            'r' => {
                rec.hop_src = peer as i64;
                rec.hop_dst = node as i64;
                rec.ip_src = (peer as i64, 255);
            }
            'd' => {
                rec.drop_reason = Some(["NRTE", "TTL", "LOOP"][self.rng.gen_range(0..3)].into());
            }
            _ => {}
        }
        let broadcast = label == "REQUEST" || label == "HELLO";
        if broadcast {
            if action != 'r' {
                rec.hop_dst = -1;
            }
            rec.ip_dst = (-1, 255);
        } else {
            if action != 'r' {
                rec.hop_dst = peer as i64;
            }
            rec.ip_dst = (peer as i64, 255);
        }
        rec.hops = self.rng.gen_range(1..6);
        let mut entries: Vec<(String, String)> = vec![("Pt".into(), code.into())];
        let src = rec.ip_src.0;
        let hop_count = self.rng.gen_range(1..6).to_string();
        let dst = self.other_node(node).to_string();
        match label {
            "REQUEST" => {
                self.bcast_id += 1;
                let sseq = self.walkers[src as usize].seq;
                entries.extend([
                    ("Ph".into(), hop_count),
                    ("Pb".into(), self.bcast_id.to_string()),
                    ("Pd".into(), dst),
                    ("Pds".into(), self.rng.gen_range(0..10u32).to_string()),
                    ("Ps".into(), src.to_string()),
                    ("Pss".into(), sseq.to_string()),
                ]);
            }
            "REPLY" => {
                entries.extend([
                    ("Ph".into(), hop_count),
                    ("Pd".into(), dst),
                    ("Pds".into(), self.rng.gen_range(0..10u32).to_string()),
                    ("Pl".into(), "10.000000".into()),
                ]);
            }
            "ERROR" => {
                entries.push(("Pdc".into(), "1".into()));
            }
            _ => {
                entries.push(("Ph".into(), "1".into()));
            }
        }
        entries.push(("Pc".into(), label.into()));
        if self.cfg.routing_tables {
            let table: String = self.walkers[node as usize]
                .table
                .iter()
                .map(|e| format!("({},{},{},{})", e[0], e[1], e[2], e[3]))
                .collect();
            if !table.is_empty() {
                entries.push(("Prt".into(), table));
            }
        }
        self.walkers[node as usize].seq += 2;
        rec.tail = Some((self.cfg.routing_protocol.clone(), entries));
        rec
    }

    fn agent_event(&mut self, node: u32) -> Record {
        let action = ['s', 'r', 'f', 'd'][pick(&mut self.rng, &[45, 40, 5, 10])];
        let mut rec = self.base(action, node, "AGT");
        let peer = self.other_node(node);
        let kind = pick(&mut self.rng, &[60, 25, 15]);
        let (ty, size) = [("cbr", 512), ("tcp", 1040), ("ack", 40)][kind];
        rec.pkt_type = ty.into();
        rec.size = size;
        rec.flow = (node % 5) as i64;
        if action == 'r' {
            rec.hop_src = peer as i64;
            rec.hop_dst = node as i64;
            rec.ip_src = (peer as i64, 0);
            rec.ip_dst = (node as i64, 0);
        } else {
            rec.ip_src = (node as i64, 0);
            rec.ip_dst = (peer as i64, 0);
        }
        if action == 'd' {
            rec.drop_reason = Some("CBK".into());
        }
        rec.hops = self.rng.gen_range(1..8);
        let seq = self.rng.gen_range(0..1000u32).to_string();
        rec.tail = Some(match ty {
            "cbr" => (
                "cbr".into(),
                vec![
                    ("Pi".into(), seq),
                    ("Pf".into(), "0".into()),
                    ("Po".into(), "0".into()),
                ],
            ),
            _ => (
                "tcp".into(),
                vec![
                    ("Ps".into(), seq),
                    ("Pa".into(), "-1".into()),
                    ("Pf".into(), "0".into()),
                    ("Po".into(), "0".into()),
                ],
            ),
        });
        rec
    }

    fn link_event(&mut self, node: u32) -> Record {
        let layer = if self.rng.gen_bool(0.8) { "MAC" } else { "IFQ" };
        let action = ['s', 'r', 'd'][pick(&mut self.rng, &[45, 45, 10])];
        let mut rec = self.base(action, node, layer);
        let peer = self.other_node(node);
        rec.pkt_type = if self.rng.gen_bool(0.5) { "AODV" } else { "cbr" }.into();
        rec.size = if rec.pkt_type == "cbr" { 532 } else { 106 };
        rec.hop_dst = peer as i64;
        rec.mac = [
            "13a".into(),
            format!("{peer:x}"),
            format!("{node:x}"),
            "800".into(),
        ];
        if action == 'd' {
            rec.drop_reason = Some(if layer == "IFQ" { "IFQ" } else { "COL" }.into());
        }
        if self.rng.gen_bool(0.05) {
            rec.tail = Some((
                "arp".into(),
                vec![
                    ("Po".into(), "REQUEST".into()),
                    ("Pms".into(), node.to_string()),
                    ("Ps".into(), node.to_string()),
                    ("Pmd".into(), "0".into()),
                    ("Pd".into(), peer.to_string()),
                ],
            ));
        }
        rec
    }

    fn next_record(&mut self) -> Record {
        let dt = self.rng.gen_range(0.0..0.05);
        self.time += dt;
        self.step_mobility(dt);
        let node = self.rng.gen_range(0..self.cfg.nodes);
        match pick(&mut self.rng, &[35, 35, 30]) {
            0 => self.routing_event(node),
            1 => self.agent_event(node),
            _ => self.link_event(node),
        }
    }
}

fn pick(rng: &mut StdRng, weights: &[u32]) -> usize {
    let total: u32 = weights.iter().sum();
    let mut roll = rng.gen_range(0..total);
    for (i, w) in weights.iter().enumerate() {
        if roll < *w {
            return i;
        }
        roll -= w;
    }
    weights.len() - 1
}

impl Iterator for Generator {
    type Item = Record;

    fn next(&mut self) -> Option<Record> {
        if self.cfg.events.is_some_and(|n| self.emitted >= n) || self.cfg.nodes == 0 {
            return None;
        }
        self.emitted += 1;
        Some(self.next_record())
    }
}

/// Generates the configured workload in memory.
pub fn generate(cfg: GenConfig) -> Vec<Record> {
    Generator::new(cfg).collect()
}

/// Writes records as LF-terminated lines and returns the byte count.
pub fn write_records<'a, W: Write>(
    out: &mut W,
    records: impl IntoIterator<Item = &'a Record>,
) -> io::Result<u64> {
    let mut bytes = 0u64;
    for r in records {
        let line = r.to_line();
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
        bytes += line.len() as u64 + 1;
    }
    Ok(bytes)
}

/// Streams an unbounded workload into `out` until at least `target_bytes`
/// have been written. Nothing is retained in memory. Returns
/// `(lines, bytes)`.
pub fn write_until<W: Write>(out: &mut W, mut cfg: GenConfig, target_bytes: u64) -> io::Result<(u64, u64)> {
    cfg.events = None;
    let mut lines = 0u64;
    let mut bytes = 0u64;
    for r in Generator::new(cfg) {
        if bytes >= target_bytes {
            break;
        }
        let line = r.to_line();
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
        bytes += line.len() as u64 + 1;
        lines += 1;
    }
    Ok((lines, bytes))
}

/// The exact protocol tail shown for an AODV route request after the
/// routing-table instrumentation was added to the simulator's tracer.
pub const AODV_REQUEST_TAIL_WITH_TABLE: &str =
    "-P aodv -Pt 0x2 -Ph 1 -Pb 1 -Pd 8 -Pds 0 -Ps 7 -Pss 4 -Pc REQUEST -Prt (8,0,255,0)(1,5,255,0)";

/// The same tail as the unmodified simulator writes it.
pub const AODV_REQUEST_TAIL: &str = "-P aodv -Pt 0x2 -Ph 1 -Pb 1 -Pd 8 -Pds 0 -Ps 7 -Pss 4 -Pc REQUEST";
