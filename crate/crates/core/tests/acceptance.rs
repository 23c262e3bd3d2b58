//! Acceptance suite. Runs every criterion in order inside one test so the
//! timings are not disturbed by other tests, prints one PASS/FAIL line per
//! criterion, then fails if any criterion failed.
//!
//! Oracles here are written against the generator's records or the raw
//! bytes of the file and share no logic with the engine under test.

use std::alloc::{GlobalAlloc, Layout, System};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use tracegen::{GenConfig, Record};
use tracescope_core::ext::{aodv_parse_props, AodvExtension, AodvNode, DummyExtension, ProtocolExtension};
use tracescope_core::index::{build_indexes, FirstSeen, PreScan, TraceIndex, TraceReader, DEFAULT_BUFFER_SIZE};
use tracescope_core::parser::parse_line;
use tracescope_core::partition::{compute_partitions, RadioRange};
use tracescope_core::prefs::{from_xml_str, to_xml_string, Colors, Filters, Preferences, Rgb, Terrain};
use tracescope_core::render::{encode_png, render_frame, FrameSpec, Viewport};
use tracescope_core::snapshot::{CacheConfig, Replayer};
use tracescope_core::state::NetworkState;

// --- heap accounting --------------------------------------------------------

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            if new_size >= layout.size() {
                let now = LIVE.fetch_add(new_size - layout.size(), Ordering::Relaxed) + new_size - layout.size();
                PEAK.fetch_max(now, Ordering::Relaxed);
            } else {
                LIVE.fetch_sub(layout.size() - new_size, Ordering::Relaxed);
            }
        }
        p
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

fn reset_peak() -> usize {
    let now = LIVE.load(Ordering::Relaxed);
    PEAK.store(now, Ordering::Relaxed);
    now
}

// --- harness ----------------------------------------------------------------

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Report {
    lines: Vec<String>,
    failed: usize,
}

impl Report {
    fn run(&mut self, id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let res = match (res, limit) {
            (Ok(_), Some(l)) if elapsed > l => Err(format!("took {:.2?}, limit {:.0?}", elapsed, l)),
            (r, _) => r,
        };
        let limit_txt = limit.map(|l| format!(" limit {:.0?}", l)).unwrap_or_default();
        let line = match &res {
            Ok(detail) => format!("criterion {id} {name}: PASS ({elapsed:.2?}{limit_txt}) {detail}"),
            Err(why) => {
                self.failed += 1;
                format!("criterion {id} {name}: FAIL ({elapsed:.2?}{limit_txt}) {why}")
            }
        };
        println!("{line}");
        self.lines.push(line);
    }
}

#[test]
fn acceptance_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let reference = Reference::write(dir.path());
    let mut report = Report { lines: Vec::new(), failed: 0 };
    let secs = Duration::from_secs;

    report.run(1, "parser golden tail", Some(secs(1)), parser_golden);
    report.run(2, "replay oracle", Some(secs(30)), || replay_oracle(&reference));
    report.run(3, "counter conservation", Some(secs(10)), || counter_conservation(&reference));
    report.run(4, "partition oracle", Some(secs(10)), partition_oracle);
    report.run(5, "index correctness and memory bound", Some(secs(60)), || index_and_memory(dir.path()));
    report.run(6, "jump-work bound", Some(secs(10)), || jump_work(&reference));
    report.run(7, "extension isolation", Some(secs(20)), || extension_isolation(&reference));
    report.run(8, "renderer determinism", None, renderer_determinism);
    report.run(9, "preferences round trip", None, prefs_round_trip);

    println!("acceptance: {} of {} criteria passed", report.lines.len() - report.failed, report.lines.len());
    assert_eq!(report.failed, 0, "failed criteria:\n{}", report.lines.join("\n"));
}

// --- reference workload -----------------------------------------------------

/// The desk-scale workload: 40 nodes on 1000 x 1000 m, 10 000 events.
struct Reference {
    path: PathBuf,
    records: Vec<Record>,
    index: Arc<TraceIndex>,
}

impl Reference {
    fn write(dir: &Path) -> Self {
        let records = tracegen::generate(GenConfig::default());
        let path = dir.join("reference.tr");
        let mut out = BufWriter::new(File::create(&path).unwrap());
        tracegen::write_records(&mut out, &records).unwrap();
        out.flush().unwrap();
        drop(out);
        let index = Arc::new(build_indexes(&path, DEFAULT_BUFFER_SIZE).unwrap());
        assert_eq!(index.total_events(), records.len() as u64);
        Self { path, records, index }
    }

    fn replayer(&self, ext: Arc<dyn ProtocolExtension>, cfg: CacheConfig) -> Replayer<TraceReader> {
        let (initial, _) = NetworkState::initial(&self.index.prescan, ext.as_ref());
        let reader = TraceReader::open(&self.path, self.index.clone(), DEFAULT_BUFFER_SIZE).unwrap();
        Replayer::new(reader, ext, initial, cfg)
    }
}

// --- 1 ----------------------------------------------------------------------

fn parser_golden() -> Outcome {
    let line = format!(
        "s -t 1.000000000 -Hs 7 -Hd -1 -Ni 7 -Nx 10.00 -Ny 20.00 -Nz 0.00 -Ne -1.000000 -Nl RTR -Nw --- \
         -Ma 0 -Md 0 -Ms 0 -Mt 0 -Is 7.255 -Id -1.255 -It AODV -Il 48 -If 0 -Ii 0 -Ih 1 -Iv 32 {}",
        tracegen::AODV_REQUEST_TAIL_WITH_TABLE
    );
    let ev = parse_line(&line, 0, 0).event().ok_or("line did not parse as an event")?;
    let props = ev.proto.as_ref().ok_or("no protocol tail")?;

    // oracle: split the tail text into its tag/value pairs by hand
    let toks: Vec<&str> = tracegen::AODV_REQUEST_TAIL_WITH_TABLE.split(' ').collect();
    ensure!(toks[0] == "-P", "tail oracle broken");
    let expected: Vec<(String, String)> =
        toks[2..].chunks(2).map(|c| (c[0].trim_start_matches('-').to_string(), c[1].to_string())).collect();
    ensure!(expected.len() == 9, "oracle sees {} fields", expected.len());
    ensure!(props.name == toks[1], "name {}", props.name);
    ensure!(props.entries == expected, "entries {:?} != {:?}", props.entries, expected);

    let parsed = aodv_parse_props(props);
    let table: Vec<[u64; 4]> = parsed
        .table
        .ok_or("no routing table")?
        .iter()
        .map(|e| [e.destination as u64, e.sequence_number, e.hop_count as u64, e.next_hop as u64])
        .collect();
    ensure!(table == vec![[8, 0, 255, 0], [1, 5, 255, 0]], "table {table:?}");
    ensure!(parsed.diagnostics.is_empty(), "diagnostics {:?}", parsed.diagnostics);
    let p = &parsed.packet;
    ensure!(p.type_code.as_deref() == Some("0x2") && p.type_label.as_deref() == Some("REQUEST"), "packet {p:?}");
    ensure!(p.destination.as_deref() == Some("8") && p.source.as_deref() == Some("7"), "packet {p:?}");
    Ok("9 fields, 2 tuples".into())
}

// --- record-level oracle ----------------------------------------------------

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Counts {
    s: u64,
    r: u64,
    f: u64,
    d: u64,
}

impl Counts {
    fn add(&mut self, action: char, bytes: u64) {
        match action {
            's' => self.s += bytes,
            'r' => self.r += bytes,
            'f' => self.f += bytes,
            'd' => self.d += bytes,
            _ => {}
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct OracleNode {
    x: f64,
    y: f64,
    settled: bool,
    routing: Counts,
    agent: Counts,
    table: Vec<[u64; 4]>,
}

/// Applies generator records directly: early position from the first
/// record of each node, then last-seen position, byte counts per layer.
struct RecordOracle {
    nodes: BTreeMap<u32, OracleNode>,
}

impl RecordOracle {
    fn new(records: &[Record]) -> Self {
        let mut nodes = BTreeMap::new();
        for r in records {
            nodes.entry(r.node).or_insert(OracleNode { x: r.x, y: r.y, ..Default::default() });
        }
        Self { nodes }
    }

    fn apply(&mut self, r: &Record) {
        let n = self.nodes.get_mut(&r.node).unwrap();
        n.x = r.x;
        n.y = r.y;
        n.settled = true;
        match r.layer.as_str() {
            "AGT" => n.agent.add(r.action, r.size),
            "RTR" => n.routing.add(r.action, r.size),
            _ => {}
        }
        if r.tail.as_ref().is_some_and(|(name, _)| name.eq_ignore_ascii_case("aodv")) {
            if let Some(t) = r.routing_table() {
                let mut dedup: Vec<[u64; 4]> = Vec::new();
                for e in t {
                    match dedup.iter_mut().find(|d| d[0] == e[0]) {
                        Some(d) => *d = e,
                        None => dedup.push(e),
                    }
                }
                n.table = dedup;
            }
        }
    }

    fn matches(&self, s: &NetworkState) -> Result<(), String> {
        ensure!(s.len() == self.nodes.len(), "node count {} vs {}", s.len(), self.nodes.len());
        for (&id, o) in &self.nodes {
            let n = s.node(id).ok_or(format!("node {id} missing"))?;
            let rc = n.routing();
            let ac = n.agent();
            let got = OracleNode {
                x: n.pos().x,
                y: n.pos().y,
                settled: n.settled(),
                routing: Counts { s: rc.sent, r: rc.received, f: rc.forwarded, d: rc.dropped },
                agent: Counts { s: ac.sent, r: ac.received, f: ac.forwarded, d: ac.dropped },
                table: n
                    .payload_as::<AodvNode>()
                    .map(|p| {
                        p.routing_table
                            .iter()
                            .map(|e| [e.destination as u64, e.sequence_number, e.hop_count as u64, e.next_hop as u64])
                            .collect()
                    })
                    .unwrap_or_default(),
            };
            ensure!(&got == o, "node {id} at event {}: {got:?} != {o:?}", s.event_index());
        }
        Ok(())
    }
}

// --- 2 ----------------------------------------------------------------------

fn replay_oracle(r: &Reference) -> Outcome {
    let total = r.records.len() as i64;
    let mut rng = StdRng::seed_from_u64(0x5eed_0002);
    // small cache and uneven stride so jumps exercise eviction and floors
    let mut rep = r.replayer(Arc::new(AodvExtension), CacheConfig { capacity: 6, stride: 333 });
    let mut wanted: Vec<i64> = (0..100).map(|_| rng.gen_range(-1..total)).collect();
    wanted.push(total - 1);
    let mut got = BTreeMap::new();
    for &k in &wanted {
        // unrelated jumps in between shape the cache history
        for _ in 0..rng.gen_range(0..3) {
            rep.state_at(rng.gen_range(-1..total)).map_err(|e| e.to_string())?;
        }
        got.insert(k, rep.state_at(k).map_err(|e| e.to_string())?);
    }

    // oracle 1: one from-scratch sequential pass over freshly read events
    let ext = AodvExtension;
    let (mut seq, _) = NetworkState::initial(&r.index.prescan, &ext);
    let mut reader = TraceReader::open(&r.path, r.index.clone(), DEFAULT_BUFFER_SIZE).unwrap();
    // oracle 2: generator records applied by the record-level model
    let mut model = RecordOracle::new(&r.records);
    let mut checked = 0;
    if let Some(s) = got.get(&-1) {
        ensure!(**s == seq, "initial state differs");
        model.matches(s)?;
        checked += 1;
    }
    for k in 0..total {
        let ev = reader.event(k as u64).map_err(|e| e.to_string())?;
        seq.apply(&ev, &ext).map_err(|e| e.to_string())?;
        model.apply(&r.records[k as usize]);
        if let Some(s) = got.get(&k) {
            ensure!(**s == seq, "state_at({k}) differs from sequential replay");
            model.matches(s)?;
            checked += 1;
        }
    }
    Ok(format!("{checked} distinct indexes, {} cache misses", rep.probe().misses))
}

// --- 3 ----------------------------------------------------------------------

/// Byte sums from raw text, keyed by (node, layer, action, agent class).
fn brute_force_bytes(path: &Path) -> Vec<BTreeMap<(u32, String, char, String), u64>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut acc = BTreeMap::new();
    let mut per_event = Vec::new();
    for line in text.lines() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let action = toks[0].chars().next().unwrap();
        let field = |tag: &str| toks.windows(2).find(|w| w[0] == tag).map(|w| w[1]);
        let node: u32 = field("-Ni").unwrap().parse().unwrap();
        let layer = field("-Nl").unwrap_or("").to_string();
        let size: u64 = field("-Il").map(|v| v.parse().unwrap()).unwrap_or(0);
        let class = match field("-It").unwrap_or("").to_ascii_lowercase().as_str() {
            "cbr" => "cbr",
            "tcp" | "ack" => "tcp_ack",
            _ => "other",
        }
        .to_string();
        *acc.entry((node, layer, action, class)).or_insert(0) += size;
        per_event.push(acc.clone());
    }
    per_event
}

fn counter_conservation(r: &Reference) -> Outcome {
    let sums = brute_force_bytes(&r.path);
    let mut rep = r.replayer(Arc::new(AodvExtension), CacheConfig::default());
    let mut checks = 0;
    for k in (0..r.records.len()).step_by(100) {
        let s = rep.state_at(k as i64).map_err(|e| e.to_string())?;
        let (mut rt, mut ag) = (Counts::default(), Counts::default());
        let mut per_node: BTreeMap<(u32, &str, char), u64> = BTreeMap::new();
        for n in s.nodes() {
            for (layer, c, acc) in [("RTR", n.routing(), &mut rt), ("AGT", n.agent(), &mut ag)] {
                for (a, v) in [('s', c.sent), ('r', c.received), ('f', c.forwarded), ('d', c.dropped)] {
                    acc.add(a, v);
                    per_node.insert((n.node_id(), layer, a), v);
                }
            }
        }
        let net = |c: &tracescope_core::state::CounterSet| Counts { s: c.sent, r: c.received, f: c.forwarded, d: c.dropped };
        ensure!(net(s.network_routing()) == rt, "routing totals at {k}");
        ensure!(net(s.network_agent()) == ag, "agent totals at {k}");

        let oracle = &sums[k];
        let mut want: BTreeMap<(u32, &str, char), u64> = BTreeMap::new();
        let mut classes: BTreeMap<&str, u64> = BTreeMap::new();
        for ((node, layer, action, class), v) in oracle {
            if layer == "RTR" || layer == "AGT" {
                *want.entry((*node, layer.as_str(), *action)).or_insert(0) += v;
            }
            if layer == "AGT" {
                *classes.entry(class.as_str()).or_insert(0) += v;
            }
        }
        for (key, v) in &per_node {
            let w = want.get(key).copied().unwrap_or(0);
            ensure!(*v == w, "event {k} node counter {key:?}: {v} != {w}");
        }
        ensure!(want.keys().all(|key| per_node.contains_key(key)), "oracle has counters for unknown nodes");
        let b = s.network_agent_breakdown();
        let get = |c| classes.get(c).copied().unwrap_or(0);
        ensure!(b.cbr == get("cbr") && b.tcp_ack == get("tcp_ack") && b.other == get("other"), "breakdown at {k}: {b:?}");
        checks += 1;
    }
    Ok(format!("{checks} checkpoints"))
}

// --- 4 ----------------------------------------------------------------------

fn state_from_positions(settled: &[(u32, f64, f64)], unsettled: &[u32]) -> NetworkState {
    let mut pre = PreScan::default();
    for &(id, x, y) in settled {
        pre.nodes.insert(id, FirstSeen { first_event_index: 0, x, y });
    }
    for &id in unsettled {
        pre.nodes.insert(id, FirstSeen { first_event_index: 0, x: 0.0, y: 0.0 });
    }
    let (mut s, _) = NetworkState::initial(&pre, &DummyExtension);
    for (k, &(id, x, y)) in settled.iter().enumerate() {
        let ev = parse_line(&format!("s -t 0 -Ni {id} -Nx {x:?} -Ny {y:?}"), k as u64, k as u64).event().unwrap();
        s.apply(&ev, &DummyExtension).unwrap();
    }
    s
}

fn bfs_components(pts: &[(u32, f64, f64)], r: f64) -> BTreeSet<BTreeSet<u32>> {
    let n = pts.len();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| (pts[i].1 - pts[j].1).hypot(pts[i].2 - pts[j].2) <= r).collect())
        .collect();
    let mut seen = vec![false; n];
    let mut out = BTreeSet::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut q = VecDeque::from([s]);
        seen[s] = true;
        while let Some(i) = q.pop_front() {
            comp.insert(pts[i].0);
            for j in 0..n {
                if adj[i][j] && !seen[j] {
                    seen[j] = true;
                    q.push_back(j);
                }
            }
        }
        out.insert(comp);
    }
    out
}

fn partition_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed_0004);
    let random_instance = |rng: &mut StdRng| {
        let n = rng.gen_range(1..=50u32);
        let mut ids: Vec<u32> = (0..200).collect();
        let mut pts = Vec::new();
        let mut unsettled = Vec::new();
        for _ in 0..n {
            let id = ids.swap_remove(rng.gen_range(0..ids.len()));
            if rng.gen_bool(0.1) {
                unsettled.push(id);
            } else {
                pts.push((id, rng.gen_range(0.0..1000.0), rng.gen_range(0.0..1000.0)));
            }
        }
        (pts, unsettled)
    };
    for i in 0..200 {
        let (pts, unsettled) = random_instance(&mut rng);
        let r = rng.gen_range(0.0..400.0);
        let s = state_from_positions(&pts, &unsettled);
        let p = compute_partitions(&s, RadioRange::new(r).unwrap());
        let got: BTreeSet<BTreeSet<u32>> = p.components.iter().map(|c| c.iter().copied().collect()).collect();
        ensure!(got == bfs_components(&pts, r), "instance {i} (n={}, r={r}) differs", pts.len());
        let keys: Vec<u32> = p.components.iter().map(|c| *c.iter().min().unwrap()).collect();
        ensure!(p.color_keys == keys, "instance {i} color keys");
    }
    for i in 0..50 {
        let (pts, unsettled) = random_instance(&mut rng);
        let r1 = rng.gen_range(0.0..300.0);
        let r2 = r1 + rng.gen_range(1e-6..200.0);
        let s = state_from_positions(&pts, &unsettled);
        let fine = compute_partitions(&s, RadioRange::new(r1).unwrap());
        let coarse = compute_partitions(&s, RadioRange::new(r2).unwrap());
        for c in &fine.components {
            let home = coarse.component_of(c[0]).ok_or("node lost at larger range")?;
            ensure!(
                c.iter().all(|id| coarse.component_of(*id) == Some(home)),
                "pair {i}: component {c:?} split at larger range"
            );
        }
    }
    Ok("200 instances, 50 range pairs".into())
}

// --- 5 ----------------------------------------------------------------------

const BIG_TRACE_BYTES: u64 = 100 * 1024 * 1024;

/// Line start offsets by scanning raw bytes in fixed chunks.
fn oracle_offsets(path: &Path) -> Vec<u64> {
    let mut f = File::open(path).unwrap();
    let mut buf = vec![0u8; 1 << 20];
    let mut offsets = vec![];
    let mut pos = 0u64;
    let mut at_line_start = true;
    loop {
        let n = f.read(&mut buf).unwrap();
        if n == 0 {
            break;
        }
        for &b in &buf[..n] {
            if at_line_start {
                offsets.push(pos);
                at_line_start = false;
            }
            if b == b'\n' {
                at_line_start = true;
            }
            pos += 1;
        }
    }
    offsets
}

fn oracle_line(f: &mut File, start: u64) -> String {
    f.seek(SeekFrom::Start(start)).unwrap();
    let mut out = Vec::new();
    let mut byte = [0u8; 1];
    while f.read(&mut byte).unwrap() == 1 && byte[0] != b'\n' {
        out.push(byte[0]);
    }
    String::from_utf8(out).unwrap()
}

fn index_and_memory(dir: &Path) -> Outcome {
    let path = dir.join("big.tr");
    let mut out = BufWriter::with_capacity(1 << 20, File::create(&path).unwrap());
    let (lines, bytes) = tracegen::write_until(&mut out, GenConfig { seed: 99, ..Default::default() }, BIG_TRACE_BYTES)
        .map_err(|e| e.to_string())?;
    out.flush().unwrap();
    drop(out);
    ensure!(bytes >= BIG_TRACE_BYTES, "trace only {bytes} bytes");

    let before = reset_peak();
    let index = build_indexes(&path, DEFAULT_BUFFER_SIZE).map_err(|e| e.to_string())?;
    let peak_delta = PEAK.load(Ordering::Relaxed) - before;
    let live_delta = LIVE.load(Ordering::Relaxed) - before;
    let index_bytes = (index.lines.offsets().len() + index.events.lines().len()) * 8;
    ensure!(index.total_lines() == lines && index.total_events() == lines, "line/event counts");
    // index arrays may carry growth slack up to 2x, plus prescan and buffers
    let allowance = 2 * index_bytes + 2 * DEFAULT_BUFFER_SIZE + (1 << 20);
    ensure!(
        peak_delta <= allowance && (peak_delta as u64) < bytes / 4,
        "indexing peak heap {peak_delta} B exceeds {allowance} B (file {bytes} B)"
    );

    let oracle = oracle_offsets(&path);
    ensure!(index.lines.offsets() == oracle.as_slice(), "line offsets differ from byte scan");
    drop(oracle);

    let index = Arc::new(index);
    let before_fetch = reset_peak();
    let mut reader = TraceReader::open(&path, index.clone(), DEFAULT_BUFFER_SIZE).map_err(|e| e.to_string())?;
    let mut raw = File::open(&path).unwrap();
    let mut rng = StdRng::seed_from_u64(0x5eed_0005);
    for _ in 0..1000 {
        let k = rng.gen_range(0..index.total_events());
        let reads = reader.segment_reads();
        let got = reader.fetch_event_line(k).map_err(|e| e.to_string())?;
        ensure!(reader.segment_reads() - reads <= 1, "fetch of event {k} read more than one segment");
        // every generated line is an event, so event k lives on line k
        let want = oracle_line(&mut raw, index.lines.offsets()[k as usize]);
        ensure!(got == want, "event {k} line differs");
    }
    let fetch_peak = PEAK.load(Ordering::Relaxed) - before_fetch;
    ensure!(
        fetch_peak <= 2 * DEFAULT_BUFFER_SIZE + (1 << 16),
        "random fetches held {fetch_peak} B beyond the index"
    );
    Ok(format!(
        "{:.0} MB, {lines} lines, index {:.1} MB, indexing peak {:.1} MB, live {:.1} MB",
        bytes as f64 / 1048576.0,
        index_bytes as f64 / 1048576.0,
        peak_delta as f64 / 1048576.0,
        live_delta as f64 / 1048576.0
    ))
}

// --- 6 ----------------------------------------------------------------------

fn jump_work(r: &Reference) -> Outcome {
    let total = r.records.len() as i64;
    let cfg = CacheConfig { capacity: 64, stride: 500 };
    let mut rep = r.replayer(Arc::new(AodvExtension), cfg);
    rep.play_through(total - 1).map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(0x5eed_0006);
    let mut worst = 0;
    for _ in 0..2000 {
        let k = rng.gen_range(-1..total);
        rep.state_at(k).map_err(|e| e.to_string())?;
        let n = rep.probe().last_replayed;
        ensure!(n <= 500, "jump to {k} replayed {n} events");
        worst = worst.max(n);
    }
    Ok(format!("2000 jumps, worst {worst} events"))
}

// --- 7 ----------------------------------------------------------------------

fn extension_isolation(r: &Reference) -> Outcome {
    let (mut a, _) = NetworkState::initial(&r.index.prescan, &AodvExtension);
    let (mut d, _) = NetworkState::initial(&r.index.prescan, &DummyExtension);
    let mut reader = TraceReader::open(&r.path, r.index.clone(), DEFAULT_BUFFER_SIZE).unwrap();
    let mut tables = 0;
    for k in 0..r.index.total_events() {
        let ev = reader.event(k).map_err(|e| e.to_string())?;
        a.apply(&ev, &AodvExtension).map_err(|e| e.to_string())?;
        d.apply(&ev, &DummyExtension).map_err(|e| e.to_string())?;
        ensure!(a.network_routing() == d.network_routing(), "routing totals diverge at {k}");
        ensure!(a.network_agent() == d.network_agent(), "agent totals diverge at {k}");
        ensure!(a.network_agent_breakdown() == d.network_agent_breakdown(), "breakdown diverges at {k}");
        let n = ev.node_id;
        let (na, nd) = (a.node(n).unwrap(), d.node(n).unwrap());
        ensure!(na.core_eq(nd), "node {n} core state diverges at {k}");
    }
    for (na, nd) in a.nodes().zip(d.nodes()) {
        ensure!(na.core_eq(nd), "node {} differs at end", na.node_id());
        ensure!(na.pos() == nd.pos() && na.routing() == nd.routing() && na.agent() == nd.agent(), "fields");
        tables += na.payload_as::<AodvNode>().map_or(0, |p| p.routing_table.len());
    }
    ensure!(tables > 0, "AODV side never built a routing table; isolation check is vacuous");
    Ok(format!("{} events, {tables} route entries on the AODV side", r.index.total_events()))
}

// --- 8 ----------------------------------------------------------------------

fn renderer_determinism() -> Outcome {
    let prefs = Preferences::default();
    let vp = Viewport::fit(prefs.terrain, 320, 240);
    let three = state_from_positions(&[(0, 100.0, 100.0), (1, 150.0, 120.0), (5, 800.0, 700.0)], &[9]);
    let arrow = parse_line("s -t 1 -Hs 0 -Hd 1 -Ni 0 -Nl AGT -Il 512 -It cbr", 3, 3).event().unwrap();
    let ring = parse_line("s -t 1 -Hs 5 -Hd -1 -Ni 5 -Nl RTR -Il 48", 3, 3).event().unwrap();
    let part = compute_partitions(&three, RadioRange::new(100.0).unwrap());
    let specs = [
        FrameSpec { state: &three, event: None, partitions: None, prefs: &prefs, viewport: vp },
        FrameSpec { state: &three, event: Some(&arrow), partitions: Some(&part), prefs: &prefs, viewport: vp },
        FrameSpec { state: &three, event: Some(&ring), partitions: Some(&part), prefs: &prefs, viewport: vp },
    ];
    for (i, spec) in specs.iter().enumerate() {
        let a = encode_png(&render_frame(spec)).map_err(|e| e.to_string())?;
        let b = encode_png(&render_frame(spec)).map_err(|e| e.to_string())?;
        ensure!(a == b, "frame {i} PNG bytes differ between renders");
        let decoded = image::load_from_memory(&a).map_err(|e| e.to_string())?.to_rgba8();
        ensure!(decoded == render_frame(spec), "frame {i} PNG does not decode to the raster");
    }

    // node color probe at the pixel computed from the viewport mapping
    let center = state_from_positions(&[(3, 500.0, 500.0)], &[]);
    let img = render_frame(&FrameSpec { state: &center, event: None, partitions: None, prefs: &prefs, viewport: vp });
    let px = ((500.0 - vp.origin_x) * vp.scale).floor() as u32;
    let py = (vp.height as f64 - (500.0 - vp.origin_y) * vp.scale).floor() as u32;
    let c = prefs.colors.node_default;
    ensure!(img.get_pixel(px, py).0 == [c.r, c.g, c.b, 255], "node pixel {:?}", img.get_pixel(px, py));

    // forced two-component layout: census of tinted pixels per disk
    let two = state_from_positions(&[(2, 200.0, 200.0), (4, 260.0, 200.0), (7, 800.0, 800.0)], &[]);
    let p = compute_partitions(&two, RadioRange::new(100.0).unwrap());
    ensure!(p.components == vec![vec![2, 4], vec![7]], "layout did not split in two: {:?}", p.components);
    let img = render_frame(&FrameSpec { state: &two, event: None, partitions: Some(&p), prefs: &prefs, viewport: vp });
    let bg = prefs.colors.background;
    let mut census: BTreeMap<[u8; 4], (u32, u32)> = BTreeMap::new();
    for (x, y, pix) in img.enumerate_pixels() {
        let wx = (x as f64 + 0.5) / vp.scale + vp.origin_x;
        let wy = (vp.height as f64 - (y as f64 + 0.5)) / vp.scale + vp.origin_y;
        let near = |cx: f64, cy: f64| (wx - cx).hypot(wy - cy) < 80.0 && (wx - cx).hypot(wy - cy) > 20.0;
        let e = census.entry(pix.0).or_default();
        if near(200.0, 200.0) || near(260.0, 200.0) {
            e.0 += 1;
        } else if near(800.0, 800.0) {
            e.1 += 1;
        }
    }
    let dominant = |pick: fn(&(u32, u32)) -> u32| {
        census.iter().filter(|(c, _)| **c != [bg.r, bg.g, bg.b, 255]).max_by_key(|(_, n)| pick(n)).map(|(c, _)| *c)
    };
    let a = dominant(|n| n.0).ok_or("no tint near first component")?;
    let b = dominant(|n| n.1).ok_or("no tint near second component")?;
    ensure!(a != b, "both components share color {a:?}");
    ensure!(census[&a].1 == 0 && census[&b].0 == 0, "component colors bleed into each other");
    Ok("3 frames byte-stable, node probe ok, 2 partition colors".into())
}

// --- 9 ----------------------------------------------------------------------

fn random_prefs(rng: &mut StdRng) -> Preferences {
    let color = |rng: &mut StdRng| Rgb::new(rng.gen(), rng.gen(), rng.gen());
    let meters = |rng: &mut StdRng| match rng.gen_range(0..4) {
        0 => 0.0,
        1 => rng.gen_range(0..5000) as f64,
        _ => rng.gen::<f64>() * 10f64.powi(rng.gen_range(-3..7)),
    };
    const CHARS: &[char] = &['a', 'Z', '0', '/', '_', '-', '.', ' ', '&', '<', '>', '"', '\'', 'é', '日'];
    let dir: String = (0..rng.gen_range(1..24)).map(|_| CHARS[rng.gen_range(0..CHARS.len())]).collect();
    Preferences {
        colors: Colors {
            send: color(rng),
            receive: color(rng),
            forward: color(rng),
            drop: color(rng),
            broadcast: color(rng),
            node_default: color(rng),
            node_grayed: color(rng),
            background: color(rng),
            palette: (0..rng.gen_range(1..12)).map(|_| color(rng)).collect(),
        },
        terrain: Terrain { width: meters(rng), height: meters(rng) },
        radio_range: meters(rng),
        filters: Filters { show_routing: rng.gen(), show_agent: rng.gen() },
        screenshot_dir: PathBuf::from(format!("x{dir}x")),
        playback_speed: rng.gen_range(0.01..64.0),
    }
}

fn prefs_round_trip() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed_0009);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for i in 0..100 {
        let p = random_prefs(&mut rng);
        let path = dir.path().join(format!("p{i}.xml"));
        tracescope_core::prefs::save_prefs(&p, &path).map_err(|e| e.to_string())?;
        let back = tracescope_core::prefs::load_prefs(&path).map_err(|e| format!("value {i}: {e}"))?;
        ensure!(back.prefs == p, "value {i} differs after round trip:\n{:?}\n{:?}", p, back.prefs);
        ensure!(back.warnings.is_empty(), "value {i} produced warnings");
        // the in-memory form must agree with the file form
        ensure!(from_xml_str(&to_xml_string(&p)).unwrap().prefs == p, "value {i} string round trip");
    }
    Ok("100 values".into())
}
