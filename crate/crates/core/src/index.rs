//! File indexes for random access into large traces.
//!
//! One sequential pass produces a line → byte offset index, an event → line
//! index and the early-positioning pre-scan. Afterwards any event line can
//! be fetched with two lookups and a single positioned read, without ever
//! holding the file in memory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::UNIX_EPOCH;

use serde::Serialize;

use crate::model::{Layer, NodeId, TraceEvent};
use crate::parser::{parse_line_bytes, ParsedLine};

pub const DEFAULT_BUFFER_SIZE: usize = 64 * 1024;

/// Keep at most this many malformed-line diagnostics in a pre-scan.
const MAX_DIAGNOSTICS: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("event {index} out of range (total {total})")]
    EventOutOfRange { index: u64, total: u64 },
    #[error("line {index} out of range (total {total})")]
    LineOutOfRange { index: u64, total: u64 },
    #[error("event {index} no longer parses: {reason}")]
    StaleEvent { index: u64, reason: String },
    #[error("sidecar index: {0}")]
    Sidecar(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IndexError + '_ {
    move |source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `offsets[i]` is the byte offset at which line `i` starts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LineOffsetIndex {
    offsets: Vec<u64>,
    file_length: u64,
}

impl LineOffsetIndex {
    pub fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    pub fn total_lines(&self) -> u64 {
        self.offsets.len() as u64
    }

    pub fn file_length(&self) -> u64 {
        self.file_length
    }

    /// Byte span of line `i`, terminator included.
    pub fn span(&self, i: u64) -> Option<(u64, u64)> {
        let i = usize::try_from(i).ok()?;
        let start = *self.offsets.get(i)?;
        let end = self.offsets.get(i + 1).copied().unwrap_or(self.file_length);
        Some((start, end))
    }
}

/// `lines[k]` is the line number of event `k`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventLineIndex {
    lines: Vec<u64>,
}

impl EventLineIndex {
    pub fn lines(&self) -> &[u64] {
        &self.lines
    }

    pub fn total_events(&self) -> u64 {
        self.lines.len() as u64
    }

    pub fn line_of(&self, event: u64) -> Option<u64> {
        self.lines.get(usize::try_from(event).ok()?).copied()
    }

    /// The event on `line`, or the closest event before it.
    pub fn event_at_or_before_line(&self, line: u64) -> Option<u64> {
        match self.lines.binary_search(&line) {
            Ok(k) => Some(k as u64),
            Err(0) => None,
            Err(k) => Some(k as u64 - 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FirstSeen {
    pub first_event_index: u64,
    pub x: f64,
    pub y: f64,
}

/// Everything learned about the trace in the indexing pass.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PreScan {
    pub nodes: BTreeMap<NodeId, FirstSeen>,
    /// Distinct `-P` names on routing-layer events, lowercased, in order seen.
    pub protocols: Vec<String>,
    pub skipped_lines: u64,
    pub old_format_lines: u64,
    pub event_errors: u64,
    /// `(line_no, reason)` for the first malformed event lines.
    pub diagnostics: Vec<(u64, String)>,
    pub time_range: Option<(f64, f64)>,
    /// Events whose time is lower than the one before them.
    pub time_regressions: u64,
}

impl PreScan {
    /// The first routing protocol seen, which selects the extension.
    pub fn protocol(&self) -> Option<&str> {
        self.protocols.first().map(String::as_str)
    }
}

#[derive(Default)]
struct PreScanBuilder {
    scan: PreScan,
    last_time: Option<f64>,
    // Nodes whose first event carried no position yet.
    unplaced: std::collections::BTreeSet<NodeId>,
}

impl PreScanBuilder {
    fn event(&mut self, ev: &TraceEvent) {
        let scan = &mut self.scan;
        match scan.nodes.entry(ev.node_id) {
            std::collections::btree_map::Entry::Vacant(v) => {
                let (x, y) = ev.pos.map(|p| (p.x, p.y)).unwrap_or((0.0, 0.0));
                v.insert(FirstSeen {
                    first_event_index: ev.event_index,
                    x,
                    y,
                });
                if ev.pos.is_none() {
                    self.unplaced.insert(ev.node_id);
                }
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                if let Some(p) = ev.pos.filter(|_| self.unplaced.remove(&ev.node_id)) {
                    let first = o.get_mut();
                    first.x = p.x;
                    first.y = p.y;
                }
            }
        }
        if ev.layer == Some(Layer::Rtr) {
            if let Some(p) = &ev.proto {
                let name = p.name.to_ascii_lowercase();
                if !scan.protocols.contains(&name) {
                    scan.protocols.push(name);
                }
            }
        }
        if let Some(prev) = self.last_time {
            if ev.time < prev {
                scan.time_regressions += 1;
            }
        }
        self.last_time = Some(ev.time);
        scan.time_range = Some(match scan.time_range {
            None => (ev.time, ev.time),
            Some((lo, hi)) => (lo.min(ev.time), hi.max(ev.time)),
        });
    }

    fn skipped(&mut self, line_no: u64, reason: &crate::parser::SkipReason) {
        use crate::parser::SkipReason;
        let scan = &mut self.scan;
        match reason {
            SkipReason::Blank | SkipReason::Comment => return,
            SkipReason::OldFormat => scan.old_format_lines += 1,
            r if r.is_event_error() => {
                scan.event_errors += 1;
                if scan.diagnostics.len() < MAX_DIAGNOSTICS {
                    scan.diagnostics.push((line_no, r.to_string()));
                }
            }
            _ => {}
        }
        scan.skipped_lines += 1;
    }
}

/// The three products of an indexing pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceIndex {
    pub lines: LineOffsetIndex,
    pub events: EventLineIndex,
    pub prescan: PreScan,
}

impl TraceIndex {
    pub fn total_events(&self) -> u64 {
        self.events.total_events()
    }

    pub fn total_lines(&self) -> u64 {
        self.lines.total_lines()
    }

    /// Byte span of event `k`'s line, terminator included.
    pub fn event_span(&self, k: u64) -> Result<(u64, u64), IndexError> {
        let line = self.events.line_of(k).ok_or(IndexError::EventOutOfRange {
            index: k,
            total: self.total_events(),
        })?;
        self.lines.span(line).ok_or(IndexError::LineOutOfRange {
            index: line,
            total: self.total_lines(),
        })
    }
}

/// Builds all indexes from any buffered reader in one pass.
pub fn build_indexes_from_reader<R: BufRead>(mut reader: R) -> io::Result<TraceIndex> {
    let mut offsets = Vec::new();
    let mut event_lines = Vec::new();
    let mut pre = PreScanBuilder::default();
    let mut line = Vec::with_capacity(512);
    let mut pos = 0u64;
    loop {
        line.clear();
        let n = reader.read_until(b'\n', &mut line)?;
        if n == 0 {
            break;
        }
        let line_no = offsets.len() as u64;
        offsets.push(pos);
        pos += n as u64;
        match parse_line_bytes(trim_terminator(&line), line_no, event_lines.len() as u64) {
            ParsedLine::Event(ev) => {
                pre.event(&ev);
                event_lines.push(line_no);
            }
            ParsedLine::Skipped(reason) => pre.skipped(line_no, &reason),
        }
    }
    Ok(TraceIndex {
        lines: LineOffsetIndex {
            offsets,
            file_length: pos,
        },
        events: EventLineIndex { lines: event_lines },
        prescan: pre.scan,
    })
}

/// Builds all indexes for the file at `path` using a fixed-size read buffer.
pub fn build_indexes(path: &Path, buffer_size: usize) -> Result<TraceIndex, IndexError> {
    let file = File::open(path).map_err(io_err(path))?;
    build_indexes_from_reader(BufReader::with_capacity(buffer_size.max(1), file)).map_err(io_err(path))
}

fn trim_terminator(line: &[u8]) -> &[u8] {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    line.strip_suffix(b"\r").unwrap_or(line)
}

/// Random access to event lines through a private read buffer.
///
/// Each reader owns its file handle and buffer; create one per thread.
pub struct TraceReader {
    path: PathBuf,
    file: File,
    index: Arc<TraceIndex>,
    buffer_size: usize,
    buf: Vec<u8>,
    buf_start: u64,
    segment_reads: u64,
}

impl TraceReader {
    pub fn open(path: &Path, index: Arc<TraceIndex>, buffer_size: usize) -> Result<Self, IndexError> {
        let file = File::open(path).map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            index,
            buffer_size: buffer_size.max(1),
            buf: Vec::new(),
            buf_start: 0,
            segment_reads: 0,
        })
    }

    pub fn index(&self) -> &Arc<TraceIndex> {
        &self.index
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Number of file segments read so far.
    pub fn segment_reads(&self) -> u64 {
        self.segment_reads
    }

    pub fn buffer_size(&self) -> usize {
        self.buffer_size
    }

    fn span_bytes(&mut self, start: u64, end: u64) -> Result<&[u8], IndexError> {
        let buf_end = self.buf_start + self.buf.len() as u64;
        if start < self.buf_start || end > buf_end {
            let want = (end - start).max(self.buffer_size as u64);
            let len = want.min(self.index.lines.file_length() - start) as usize;
            self.buf.resize(len, 0);
            let path = self.path.clone();
            self.file.seek(SeekFrom::Start(start)).map_err(io_err(&path))?;
            self.file.read_exact(&mut self.buf).map_err(io_err(&path))?;
            self.buf_start = start;
            self.segment_reads += 1;
        }
        let from = (start - self.buf_start) as usize;
        let to = (end - self.buf_start) as usize;
        Ok(trim_terminator(&self.buf[from..to]))
    }

    /// Raw bytes of line `i`, terminator stripped.
    pub fn fetch_line(&mut self, i: u64) -> Result<Vec<u8>, IndexError> {
        let (start, end) = self.index.lines.span(i).ok_or(IndexError::LineOutOfRange {
            index: i,
            total: self.index.total_lines(),
        })?;
        Ok(self.span_bytes(start, end)?.to_vec())
    }

    /// Text of event `k`'s line, terminator stripped.
    pub fn fetch_event_line(&mut self, k: u64) -> Result<String, IndexError> {
        let (start, end) = self.index.event_span(k)?;
        let bytes = self.span_bytes(start, end)?;
        Ok(String::from_utf8_lossy(bytes).into_owned())
    }

    /// Fetches and parses event `k`.
    pub fn event(&mut self, k: u64) -> Result<TraceEvent, IndexError> {
        let (start, end) = self.index.event_span(k)?;
        let line_no = self.index.events.line_of(k).unwrap_or_default();
        match parse_line_bytes(self.span_bytes(start, end)?, line_no, k) {
            ParsedLine::Event(ev) => Ok(ev),
            ParsedLine::Skipped(r) => Err(IndexError::StaleEvent {
                index: k,
                reason: r.to_string(),
            }),
        }
    }
}

// --- sidecar -------------------------------------------------------------

const SIDECAR_MAGIC: &[u8; 8] = b"EXIDX\0\r\n";
const SIDECAR_VERSION: u32 = 1;

/// `<trace>.exidx`
pub fn sidecar_path(trace: &Path) -> PathBuf {
    let mut s = trace.as_os_str().to_owned();
    s.push(".exidx");
    PathBuf::from(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Stamp {
    len: u64,
    secs: u64,
    nanos: u32,
}

fn stamp(path: &Path) -> Result<Stamp, IndexError> {
    let meta = std::fs::metadata(path).map_err(io_err(path))?;
    let mtime = meta
        .modified()
        .ok()
        .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
        .unwrap_or_default();
    Ok(Stamp {
        len: meta.len(),
        secs: mtime.as_secs(),
        nanos: mtime.subsec_nanos(),
    })
}

struct Out<W: Write>(W);

impl<W: Write> Out<W> {
    fn u8(&mut self, v: u8) -> io::Result<()> {
        self.0.write_all(&[v])
    }
    fn u32(&mut self, v: u32) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> io::Result<()> {
        self.u64(v.to_bits())
    }
    fn str(&mut self, s: &str) -> io::Result<()> {
        self.u32(s.len() as u32)?;
        self.0.write_all(s.as_bytes())
    }
}

struct In<R: Read>(R);

impl<R: Read> In<R> {
    fn bytes<const N: usize>(&mut self) -> io::Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b)?;
        Ok(b)
    }
    fn u8(&mut self) -> io::Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> io::Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> io::Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> io::Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn str(&mut self) -> io::Result<String> {
        let n = self.u32()? as usize;
        let mut v = vec![0u8; n];
        self.0.read_exact(&mut v)?;
        String::from_utf8(v).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
    fn vec_u64(&mut self, n: u64) -> io::Result<Vec<u64>> {
        (0..n).map(|_| self.u64()).collect()
    }
}

/// Persists `index` next to `trace` so the next open can skip the scan.
pub fn write_sidecar(trace: &Path, index: &TraceIndex) -> Result<PathBuf, IndexError> {
    let st = stamp(trace)?;
    let path = sidecar_path(trace);
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut o = Out(io::BufWriter::new(file));
    let res: io::Result<()> = (|| {
        o.0.write_all(SIDECAR_MAGIC)?;
        o.u32(SIDECAR_VERSION)?;
        o.u64(st.len)?;
        o.u64(st.secs)?;
        o.u32(st.nanos)?;
        o.u64(index.lines.file_length)?;
        o.u64(index.total_lines())?;
        o.u64(index.total_events())?;
        for v in &index.lines.offsets {
            o.u64(*v)?;
        }
        for v in &index.events.lines {
            o.u64(*v)?;
        }
        let p = &index.prescan;
        o.u64(p.nodes.len() as u64)?;
        for (id, f) in &p.nodes {
            o.u32(*id)?;
            o.u64(f.first_event_index)?;
            o.f64(f.x)?;
            o.f64(f.y)?;
        }
        o.u32(p.protocols.len() as u32)?;
        for name in &p.protocols {
            o.str(name)?;
        }
        o.u64(p.skipped_lines)?;
        o.u64(p.old_format_lines)?;
        o.u64(p.event_errors)?;
        o.u64(p.time_regressions)?;
        match p.time_range {
            Some((lo, hi)) => {
                o.u8(1)?;
                o.f64(lo)?;
                o.f64(hi)?;
            }
            None => o.u8(0)?,
        }
        o.u32(p.diagnostics.len() as u32)?;
        for (line, msg) in &p.diagnostics {
            o.u64(*line)?;
            o.str(msg)?;
        }
        o.0.flush()
    })();
    res.map_err(io_err(&path))?;
    Ok(path)
}

/// Loads the sidecar for `trace` if it exists and still matches the trace's
/// size and modification time. `Ok(None)` means "absent or stale".
pub fn read_sidecar(trace: &Path) -> Result<Option<TraceIndex>, IndexError> {
    let path = sidecar_path(trace);
    let file = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io_err(&path)(e)),
    };
    let st = stamp(trace)?;
    let mut i = In(BufReader::new(file));
    let bad = |e: io::Error| IndexError::Sidecar(format!("{}: {e}", path.display()));
    if &i.bytes::<8>().map_err(bad)? != SIDECAR_MAGIC {
        return Err(IndexError::Sidecar(format!("{}: bad magic", path.display())));
    }
    let version = i.u32().map_err(bad)?;
    if version != SIDECAR_VERSION {
        return Ok(None);
    }
    let recorded = Stamp {
        len: i.u64().map_err(bad)?,
        secs: i.u64().map_err(bad)?,
        nanos: i.u32().map_err(bad)?,
    };
    if recorded != st {
        return Ok(None);
    }
    let res: io::Result<TraceIndex> = (|| {
        let file_length = i.u64()?;
        let total_lines = i.u64()?;
        let total_events = i.u64()?;
        let offsets = i.vec_u64(total_lines)?;
        let lines = i.vec_u64(total_events)?;
        let mut p = PreScan::default();
        for _ in 0..i.u64()? {
            let id = i.u32()?;
            let first_event_index = i.u64()?;
            let x = i.f64()?;
            let y = i.f64()?;
            p.nodes.insert(id, FirstSeen { first_event_index, x, y });
        }
        for _ in 0..i.u32()? {
            p.protocols.push(i.str()?);
        }
        p.skipped_lines = i.u64()?;
        p.old_format_lines = i.u64()?;
        p.event_errors = i.u64()?;
        p.time_regressions = i.u64()?;
        if i.u8()? == 1 {
            p.time_range = Some((i.f64()?, i.f64()?));
        }
        for _ in 0..i.u32()? {
            let line = i.u64()?;
            p.diagnostics.push((line, i.str()?));
        }
        Ok(TraceIndex {
            lines: LineOffsetIndex { offsets, file_length },
            events: EventLineIndex { lines },
            prescan: p,
        })
    })();
    res.map(Some).map_err(bad)
}

/// Loads a fresh sidecar or rebuilds the indexes from the file.
pub fn load_or_build(path: &Path, buffer_size: usize) -> Result<(TraceIndex, bool), IndexError> {
    match read_sidecar(path) {
        Ok(Some(idx)) => return Ok((idx, true)),
        Ok(None) | Err(IndexError::Sidecar(_)) => {}
        Err(e) => return Err(e),
    }
    Ok((build_indexes(path, buffer_size)?, false))
}
